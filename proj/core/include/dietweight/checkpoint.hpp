// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dietweight/autodiff.hpp"

namespace dietweight {

/// One line per parameter: {"name":...,"shape":[...],"values":[...]}.
/// Values are written in shortest round-trip form, so load(save(p)) is bit-exact.
void save_parameters(std::ostream& out, const std::vector<const Parameter*>& params);

/// Name -> tensor for every parameter line. Lines that are not parameter
/// records (no "name" key) are skipped so a manifest line may precede them.
std::map<std::string, Tensor> load_parameters(std::istream& in);

/// Copies stored values into `params` by name. Missing names or shape
/// mismatches throw IngestError.
void assign_parameters(const std::map<std::string, Tensor>& stored,
                       const std::vector<Parameter*>& params);

/// Checkpoint file: first line {"manifest":{...}}, then parameter lines.
struct Checkpoint {
  nlohmann::json manifest;
  std::map<std::string, Tensor> parameters;
};

void write_checkpoint(const std::string& path, const nlohmann::json& manifest,
                      const std::vector<const Parameter*>& params);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace dietweight
