#include "semkit/checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace semkit {

namespace {

constexpr char kMagic[4] = {'S', 'E', 'M', 'K'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}
void write_u64(std::ostream& os, uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), 8);
}
uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

void write_record(std::ostream& os, const std::string& name, const Shape& shape,
                  const std::vector<double>& vals) {
  write_u32(os, static_cast<uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u32(os, static_cast<uint32_t>(shape.size()));
  for (int64_t d : shape) write_u64(os, static_cast<uint64_t>(d));
  write_u64(os, vals.size());
  os.write(reinterpret_cast<const char*>(vals.data()),
           static_cast<std::streamsize>(vals.size() * sizeof(double)));
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::map<std::string, std::vector<double>>& extra) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for write: " + path);
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u64(os, params.all().size() + extra.size());
  for (const auto& [name, t] : params.all())
    write_record(os, name, t.shape(), t.values());
  for (const auto& [name, vals] : extra)
    write_record(os, "__aux__" + name, {static_cast<int64_t>(vals.size())},
                 vals);
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

std::map<std::string, std::vector<double>> load_checkpoint(
    const std::string& path, ParamStore& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != std::string(kMagic, 4))
    throw std::runtime_error("not a checkpoint file: " + path);
  const uint32_t ver = read_u32(is);
  if (ver != kVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(ver));
  const uint64_t count = read_u64(is);
  std::map<std::string, std::vector<double>> aux;
  size_t loaded = 0;
  for (uint64_t r = 0; r < count; ++r) {
    const uint32_t nlen = read_u32(is);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    const uint32_t rank = read_u32(is);
    Shape shape(rank);
    for (uint32_t i = 0; i < rank; ++i)
      shape[i] = static_cast<int64_t>(read_u64(is));
    const uint64_t n = read_u64(is);
    std::vector<double> vals(n);
    is.read(reinterpret_cast<char*>(vals.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    if (name.rfind("__aux__", 0) == 0) {
      aux[name.substr(7)] = std::move(vals);
      continue;
    }
    if (!params.has(name))
      throw std::runtime_error("checkpoint record '" + name +
                               "' has no matching parameter");
    Tensor& t = params.get(name);
    if (t.shape() != shape)
      throw std::runtime_error("checkpoint shape mismatch for '" + name +
                               "': file " + shape_str(shape) + " vs model " +
                               shape_str(t.shape()));
    t.values() = std::move(vals);
    ++loaded;
  }
  if (loaded != params.all().size())
    throw std::runtime_error("checkpoint missing " +
                             std::to_string(params.all().size() - loaded) +
                             " parameter(s)");
  return aux;
}

}  // namespace semkit
