#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

namespace semkit {

// Deterministic RNG. One root seed fans out to named streams via fork(),
// so every consumer (initializers, data sampling, diffusion noise, eval)
// gets an independent, reproducible engine.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), eng_(seed) {}

  uint64_t seed() const { return seed_; }

  uint64_t u64() { return eng_(); }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller (no cached second value, so the engine
  // state alone determines the stream)
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  int64_t randint(int64_t n) {  // [0, n)
    return static_cast<int64_t>(u64() % static_cast<uint64_t>(n));
  }

  Rng fork(std::string_view label) const {
    uint64_t h = 1469598103934665603ull ^ seed_;
    for (char c : label) {
      h ^= static_cast<uint64_t>(static_cast<unsigned char>(c));
      h *= 1099511628211ull;
    }
    return Rng(h);
  }

  std::string save_state() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }

  void load_state(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
  }

 private:
  uint64_t seed_;
  std::mt19937_64 eng_;
};

}  // namespace semkit
