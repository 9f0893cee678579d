#pragma once

#include <map>
#include <string>
#include <vector>

#include "semkit/nn.hpp"

namespace semkit {

// Single-file checkpoint: magic + version, then name -> (shape, little-endian
// f64 values) records. Loading fails loudly on unknown names or shape
// mismatch against the receiving store.
void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::map<std::string, std::vector<double>>& extra =
                         {});
// Overwrites values of matching parameters in `params`; every record must
// match an existing parameter unless it is in the extra-record namespace
// ("__aux__..."), which is returned to the caller.
std::map<std::string, std::vector<double>> load_checkpoint(
    const std::string& path, ParamStore& params);

}  // namespace semkit
