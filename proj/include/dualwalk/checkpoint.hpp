#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualwalk/matrix.hpp"

namespace dualwalk {

struct NamedTensor {
  std::string name;
  Matrix<float> value;
};

/// Named float32 tensors plus a JSON manifest of hyperparameters.
///
/// Layout (little-endian): magic "DWCKPT\0\0", u32 version, u64 manifest
/// length, manifest bytes (UTF-8 JSON), u32 tensor count, then per tensor
/// u32 name length, name, u32 rows, u32 cols, rows*cols float32.
struct Checkpoint {
  nlohmann::json manifest = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const Matrix<float>& at(const std::string& name) const;  // throws ArtifactError
  bool contains(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, std::ostream& out);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dualwalk
