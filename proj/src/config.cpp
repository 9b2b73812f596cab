#include "dualwalk/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "dualwalk/artifact.hpp"
#include "dualwalk/error.hpp"
#include "dualwalk/random.hpp"

namespace dualwalk {

namespace {

// Per-dataset settings: (cluster count, T, entropy weight, baseline decay).
struct Preset {
  const char* name;
  const char* clusters;
  const char* horizon;
  const char* beta;
  const char* lambda;
};
constexpr Preset kPresets[] = {
    {"fb15k-237", "50", "3", "0.2", "0.2"},
    {"wn18rr", "75", "3", "0.06", "0.0"},
    {"nell-995", "75", "3", "0.07", "0.07"},
};

const Preset* find_preset(const std::string& name) {
  for (const auto& p : kPresets) {
    if (name == p.name) return &p;
  }
  return nullptr;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

const KeySpec* find_key(const std::string& name) {
  for (const auto& k : Config::keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

bool parse_int(const std::string& v, long long& out) {
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  return ec == std::errc() && p == end;
}

bool parse_double(const std::string& v, double& out) {
  if (v.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == v.size();
}

bool parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") {
    out = true;
    return true;
  }
  if (v == "false" || v == "0" || v == "no" || v == "off") {
    out = false;
    return true;
  }
  return false;
}

void validate(const KeySpec& key, const std::string& value) {
  bool ok = true;
  switch (key.type) {
    case KeyType::kInt: {
      long long v;
      ok = parse_int(value, v) && v >= 0;
      break;
    }
    case KeyType::kFloat: {
      double v;
      ok = parse_double(value, v);
      break;
    }
    case KeyType::kBool: {
      bool v;
      ok = parse_bool(value, v);
      break;
    }
    case KeyType::kSizeList: {
      std::stringstream ss(value);
      std::string item;
      while (ok && std::getline(ss, item, ',')) {
        long long v;
        ok = parse_int(trim(item), v) && v > 0;
      }
      break;
    }
    case KeyType::kString:
      break;
  }
  if (key.name == "preset" && !value.empty() && !find_preset(value)) {
    throw ConfigError(fmt::format("unknown preset '{}' (expected fb15k-237, wn18rr or nell-995)", value));
  }
  if (!ok) throw ConfigError(fmt::format("invalid value '{}' for '{}'", value, key.name));
}

}  // namespace

const std::vector<KeySpec>& Config::keys() {
  static const std::vector<KeySpec> specs = {
      {"seed", KeyType::kInt, "1", "base seed; every random stream derives from it"},
      {"threads", KeyType::kInt, "0", "worker threads (0 = OpenMP default)"},
      {"preset", KeyType::kString, "", "dataset preset: fb15k-237, wn18rr or nell-995"},
      {"dataset.name", KeyType::kString, "dataset", "label written to results"},
      {"dataset.dir", KeyType::kString, "", "directory holding train.txt, dev.txt, test.txt"},
      {"dataset.train", KeyType::kString, "", "train split (overrides dataset.dir)"},
      {"dataset.dev", KeyType::kString, "", "dev split (overrides dataset.dir)"},
      {"dataset.test", KeyType::kString, "", "test split (overrides dataset.dir)"},
      {"dataset.inverse_edges", KeyType::kBool, "true", "add r_inv for every relation"},
      {"dataset.self_loops", KeyType::kBool, "true", "add the NO_OP self-loop"},
      {"dataset.max_out_degree", KeyType::kInt, "200", "action list cap per entity"},
      {"dataset.remove_task_edges", KeyType::kBool, "false", "hide every train edge of train.task"},
      {"embed.dim", KeyType::kInt, "50", "entity/relation embedding size d"},
      {"embed.margin", KeyType::kFloat, "1.0", "TransE margin"},
      {"embed.learning_rate", KeyType::kFloat, "0.01", "TransE SGD step"},
      {"embed.epochs", KeyType::kInt, "500", "TransE epochs"},
      {"embed.negatives", KeyType::kInt, "1", "corrupted triples per positive"},
      {"cluster.count", KeyType::kInt, "75", "number of clusters N"},
      {"cluster.max_iterations", KeyType::kInt, "100", "Lloyd iterations cap"},
      {"cluster.tolerance", KeyType::kFloat, "1e-4", "relative centroid shift to stop at"},
      {"cluster.init", KeyType::kString, "kmeans++", "kmeans++ or random"},
      {"model.hidden", KeyType::kInt, "200", "LSTM hidden size H"},
      {"train.T", KeyType::kInt, "3", "path length"},
      {"train.epochs", KeyType::kInt, "100", "passes over the training queries"},
      {"train.rollouts", KeyType::kInt, "20", "rollouts per query"},
      {"train.batch_size", KeyType::kInt, "128", "queries per update"},
      {"train.learning_rate", KeyType::kFloat, "0.001", "Adam step size"},
      {"train.beta", KeyType::kFloat, "0.07", "entropy weight"},
      {"train.lambda", KeyType::kFloat, "0.07", "baseline decay"},
      {"train.grad_clip", KeyType::kFloat, "5.0", "global gradient norm cap"},
      {"train.beam", KeyType::kInt, "50", "beam width for dev evaluation"},
      {"train.eval_every", KeyType::kInt, "1", "epochs between dev evaluations (0 = never)"},
      {"train.return_to_go", KeyType::kBool, "false", "weight step t by rewards from t on"},
      {"train.dual", KeyType::kBool, "true", "false trains the DWARF-only ablation"},
      {"train.mask_query_edge", KeyType::kBool, "true", "hide the query's own edge during training"},
      {"train.task", KeyType::kString, "", "restrict queries to this relation token"},
      {"eval.beam", KeyType::kInt, "50", "beam width"},
      {"eval.ranker", KeyType::kString, "beam", "beam, sampled or random_walk"},
      {"eval.test_rollouts", KeyType::kInt, "100", "rollouts per query for the sampled ranker"},
      {"eval.filtered", KeyType::kBool, "true", "filtered ranking"},
      {"eval.ties", KeyType::kString, "optimistic", "optimistic or ordinal"},
      {"eval.split", KeyType::kString, "test", "dev or test"},
      {"eval.facts", KeyType::kString, "", "fact-prediction candidates (source, relation, target, +/-)"},
      {"longpath.repetitions", KeyType::kInt, "50", "intermediate samples per triple"},
      {"longpath.max_length", KeyType::kInt, "2", "longest path removed"},
      {"longpath.min_frequency", KeyType::kInt, "1", "remove paths seen at least this often"},
      {"longpath.lengths", KeyType::kSizeList, "3,4,5", "path lengths T to evaluate"},
      {"longpath.mode", KeyType::kString, "ablate", "ablate or recover (keep the graph)"},
  };
  return specs;
}

void Config::set(const std::string& key, const std::string& value) {
  const auto* spec = find_key(key);
  if (!spec) throw ConfigError(fmt::format("unknown configuration key '{}'", key));
  validate(*spec, value);
  values_[key] = value;
}

void Config::merge_text(const std::string& text, const std::string& origin) {
  std::stringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("{}:{}: expected key = value", origin, lineno));
    try {
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("{}:{}: {}", origin, lineno, e.what()));
    }
  }
}

void Config::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  merge_text(buf.str(), path.string());
}

std::string Config::get(const std::string& key) const {
  const auto* spec = find_key(key);
  if (!spec) throw ConfigError(fmt::format("unknown configuration key '{}'", key));
  if (const auto it = values_.find(key); it != values_.end()) return it->second;
  if (const auto it = values_.find("preset"); it != values_.end()) {
    if (const auto* p = find_preset(it->second)) {
      if (key == "cluster.count") return p->clusters;
      if (key == "train.T") return p->horizon;
      if (key == "train.beta") return p->beta;
      if (key == "train.lambda") return p->lambda;
    }
  }
  return spec->default_value;
}

long long Config::get_int(const std::string& key) const {
  long long v = 0;
  if (!parse_int(get(key), v)) throw ConfigError(fmt::format("'{}' is not an integer", key));
  return v;
}

std::size_t Config::get_size(const std::string& key) const { return static_cast<std::size_t>(get_int(key)); }

double Config::get_double(const std::string& key) const {
  double v = 0;
  if (!parse_double(get(key), v)) throw ConfigError(fmt::format("'{}' is not a number", key));
  return v;
}

bool Config::get_bool(const std::string& key) const {
  bool v = false;
  if (!parse_bool(get(key), v)) throw ConfigError(fmt::format("'{}' is not a boolean", key));
  return v;
}

std::vector<std::size_t> Config::get_sizes(const std::string& key) const {
  std::vector<std::size_t> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    long long v = 0;
    if (!parse_int(trim(item), v)) throw ConfigError(fmt::format("'{}' is not a list of integers", key));
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::uint64_t Config::seed() const { return static_cast<std::uint64_t>(get_int("seed")); }

std::uint64_t Config::seed(SeedStream stream) const {
  return derive_seed(seed(), {static_cast<std::uint64_t>(stream)});
}

nlohmann::json Config::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& k : keys()) j[k.name] = get(k.name);
  return j;
}

Config Config::from_json(const nlohmann::json& j) {
  Config c;
  if (!j.is_object()) throw ConfigError("configuration snapshot must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!value.is_string()) throw ConfigError(fmt::format("configuration value for '{}' must be a string", key));
    c.set(key, value.get<std::string>());
  }
  return c;
}

std::string Config::to_text() const {
  std::string out;
  for (const auto& k : keys()) out += fmt::format("{} = {}\n", k.name, get(k.name));
  return out;
}

std::string Config::explicit_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += fmt::format("{} = {}\n", k, v);
  return out;
}

std::string Config::hash8() const { return sha256_hex(to_text()).substr(0, 8); }

AugmentOptions Config::augment() const {
  AugmentOptions a;
  a.inverse_edges = get_bool("dataset.inverse_edges");
  a.self_loops = get_bool("dataset.self_loops");
  a.max_out_degree = get_size("dataset.max_out_degree");
  return a;
}

SplitPaths Config::splits() const {
  SplitPaths p;
  const std::filesystem::path dir = get("dataset.dir");
  auto pick = [&](const char* key, const char* file) -> std::filesystem::path {
    const auto v = get(key);
    if (!v.empty()) return v;
    if (dir.empty()) return {};
    const auto candidate = dir / file;
    return std::filesystem::exists(candidate) ? candidate : std::filesystem::path{};
  };
  p.train = pick("dataset.train", "train.txt");
  p.dev = pick("dataset.dev", "dev.txt");
  p.test = pick("dataset.test", "test.txt");
  if (p.train.empty()) throw ConfigError("no train split: set dataset.dir or dataset.train");
  return p;
}

TransEConfig Config::transe() const {
  TransEConfig c;
  c.dim = get_size("embed.dim");
  c.margin = get_double("embed.margin");
  c.learning_rate = get_double("embed.learning_rate");
  c.epochs = get_size("embed.epochs");
  c.negatives = get_size("embed.negatives");
  c.seed = seed(SeedStream::kEmbed);
  return c;
}

KMeansConfig Config::kmeans() const {
  KMeansConfig c;
  c.max_iterations = get_size("cluster.max_iterations");
  c.tolerance = get_double("cluster.tolerance");
  c.seed = seed(SeedStream::kCluster);
  const auto init = get("cluster.init");
  if (init == "kmeans++") {
    c.init = KMeansInit::kPlusPlus;
  } else if (init == "random") {
    c.init = KMeansInit::kRandom;
  } else {
    throw ConfigError(fmt::format("cluster.init must be kmeans++ or random, not '{}'", init));
  }
  return c;
}

TrainConfig Config::train(const KnowledgeGraph& kg) const {
  TrainConfig c;
  c.horizon = get_size("train.T");
  c.epochs = get_size("train.epochs");
  c.rollouts = get_size("train.rollouts");
  c.batch_size = get_size("train.batch_size");
  c.learning_rate = get_double("train.learning_rate");
  c.entropy_beta = get_double("train.beta");
  c.baseline_lambda = get_double("train.lambda");
  c.grad_clip = get_double("train.grad_clip");
  c.seed = seed(SeedStream::kTrain);
  c.embed_dim = get_size("embed.dim");
  c.hidden = get_size("model.hidden");
  c.beam = get_size("train.beam");
  c.eval_every = get_size("train.eval_every");
  c.return_to_go = get_bool("train.return_to_go");
  c.dual = get_bool("train.dual");
  c.mask_query_edge = get_bool("train.mask_query_edge");
  const auto task = get("train.task");
  if (!task.empty()) {
    if (!kg.relations().contains(task)) throw ConfigError(fmt::format("train.task '{}' is not a relation of the graph", task));
    c.task_relation = kg.relations().id(task);
  }
  return c;
}

EvalOptions Config::eval() const {
  EvalOptions o;
  o.beam.width = get_size("eval.beam");
  o.sampled_rollouts = get_size("eval.test_rollouts");
  o.rank.filtered = get_bool("eval.filtered");
  o.seed = seed(SeedStream::kEval);
  const auto ranker = get("eval.ranker");
  if (ranker == "beam") {
    o.ranker = Ranker::kBeam;
  } else if (ranker == "sampled") {
    o.ranker = Ranker::kSampled;
  } else if (ranker == "random_walk") {
    o.ranker = Ranker::kRandomWalk;
  } else {
    throw ConfigError(fmt::format("eval.ranker must be beam, sampled or random_walk, not '{}'", ranker));
  }
  const auto ties = get("eval.ties");
  if (ties == "optimistic") {
    o.rank.ties = TieMode::kOptimistic;
  } else if (ties == "ordinal") {
    o.rank.ties = TieMode::kOrdinal;
  } else {
    throw ConfigError(fmt::format("eval.ties must be optimistic or ordinal, not '{}'", ties));
  }
  return o;
}

ShortPathConfig Config::short_paths() const {
  ShortPathConfig c;
  c.repetitions = get_size("longpath.repetitions");
  c.max_length = get_size("longpath.max_length");
  c.seed = seed(SeedStream::kLongPath);
  return c;
}

}  // namespace dualwalk
