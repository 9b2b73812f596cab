#pragma once

// Run configuration: flat `key = value` files, one entry per line, `#`
// comments. Every key is registered with a type and default; unknown keys
// and malformed values raise ConfigError. Resolution order is explicit value
// (flag or file), then the dataset preset, then the built-in default.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualwalk/cluster.hpp"
#include "dualwalk/embed.hpp"
#include "dualwalk/eval.hpp"
#include "dualwalk/kg.hpp"
#include "dualwalk/longpath.hpp"
#include "dualwalk/trainer.hpp"

namespace dualwalk {

enum class KeyType { kInt, kFloat, kBool, kString, kSizeList };

struct KeySpec {
  std::string name;
  KeyType type;
  std::string default_value;
  std::string help;
};

// Seed streams derived from the base seed.
enum class SeedStream : std::uint64_t { kEmbed = 1, kCluster = 2, kTrain = 3, kEval = 4, kLongPath = 5 };

class Config {
 public:
  static const std::vector<KeySpec>& keys();

  /// Throws ConfigError for unknown keys or values that do not parse.
  void set(const std::string& key, const std::string& value);
  /// Parses `key = value` lines; later lines win.
  void merge_file(const std::filesystem::path& path);
  void merge_text(const std::string& text, const std::string& origin = "<text>");

  std::string get(const std::string& key) const;
  bool is_explicit(const std::string& key) const { return values_.count(key) > 0; }
  long long get_int(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::size_t> get_sizes(const std::string& key) const;

  std::uint64_t seed() const;
  std::uint64_t seed(SeedStream stream) const;

  /// Every key with its resolved value.
  nlohmann::json to_json() const;
  /// Restores explicit values from to_json() output.
  static Config from_json(const nlohmann::json& j);
  /// The resolved configuration as `key = value` text (round-trips through merge_text).
  std::string to_text() const;
  /// Only the explicitly set entries, same format.
  std::string explicit_text() const;
  /// First 8 hex digits of the SHA-256 of to_text().
  std::string hash8() const;

  AugmentOptions augment() const;
  SplitPaths splits() const;
  TransEConfig transe() const;
  KMeansConfig kmeans() const;
  std::size_t num_clusters() const { return get_size("cluster.count"); }
  /// The task relation (when set) is resolved against `kg`.
  TrainConfig train(const KnowledgeGraph& kg) const;
  EvalOptions eval() const;
  ShortPathConfig short_paths() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace dualwalk
