#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace dualwalk {

inline constexpr std::string_view kVersion = "0.1.0";

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Creates `<base>/<YYYYmmdd-HHMMSS>-<hash8>` (with a numeric suffix if taken).
std::filesystem::path make_run_dir(const std::filesystem::path& base, const std::string& hash8);

/// A stage manifest records the configuration snapshot, seed, and the
/// hashes of every input and output artifact.
struct Manifest {
  std::string stage;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  nlohmann::json inputs = nlohmann::json::object();   // name -> {path, sha256}
  nlohmann::json outputs = nlohmann::json::object();  // name -> {path, sha256}
  nlohmann::json extra = nlohmann::json::object();

  void add_input(const std::string& name, const std::filesystem::path& path);
  void add_output(const std::string& name, const std::filesystem::path& path);
  /// Re-hashes every input; throws ArtifactError naming the first mismatch.
  void verify_inputs() const;

  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& j);
  void write(const std::filesystem::path& path) const;
  static Manifest read(const std::filesystem::path& path);
};

}  // namespace dualwalk
