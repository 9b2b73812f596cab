#include "dualwalk/kg.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>

#include <fmt/format.h>

#include "dualwalk/error.hpp"

namespace dualwalk {

namespace {

constexpr std::string_view kInverseSuffix = "_inv";
constexpr std::string_view kNoOpToken = "NO_OP";

struct RawLine {
  std::string_view source, relation, target;
};

// Exactly two TABs; trailing CR tolerated.
bool split_line(std::string_view line, RawLine& out) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto first = line.find('\t');
  if (first == std::string_view::npos) return false;
  const auto second = line.find('\t', first + 1);
  if (second == std::string_view::npos) return false;
  if (line.find('\t', second + 1) != std::string_view::npos) return false;
  out.source = line.substr(0, first);
  out.relation = line.substr(first + 1, second - first - 1);
  out.target = line.substr(second + 1);
  return !out.source.empty() && !out.relation.empty() && !out.target.empty();
}

template <typename Resolve>
std::vector<Triple> parse_file(const std::filesystem::path& path, Resolve resolve) {
  std::ifstream in(path);
  if (!in) throw ArtifactError(fmt::format("cannot open triple file '{}'", path.string()));
  std::vector<Triple> triples;
  std::set<Triple> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    RawLine raw;
    if (!split_line(line, raw)) {
      throw ArtifactError(fmt::format("{}:{}: expected 'source<TAB>relation<TAB>target'",
                                      path.string(), line_no));
    }
    const Triple t = resolve(raw, line_no);
    if (seen.insert(t).second) triples.push_back(t);
  }
  return triples;
}

}  // namespace

std::int32_t Vocabulary::add(std::string_view token) {
  auto it = index_.find(std::string(token));
  if (it != index_.end()) return it->second;
  const auto id = static_cast<std::int32_t>(tokens_.size());
  tokens_.emplace_back(token);
  index_.emplace(tokens_.back(), id);
  return id;
}

std::int32_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) throw ArtifactError(fmt::format("unknown token '{}'", token));
  return it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

void Vocabulary::write(std::ostream& out) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
}

std::vector<Triple> read_triples(const std::filesystem::path& path, Vocabulary& entities,
                                 Vocabulary& relations) {
  return parse_file(path, [&](const RawLine& raw, std::size_t) {
    Triple t;
    t.source = entities.add(raw.source);
    t.relation = relations.add(raw.relation);
    t.target = entities.add(raw.target);
    return t;
  });
}

std::vector<Triple> read_triples_fixed(const std::filesystem::path& path, const Vocabulary& entities,
                                       const Vocabulary& relations) {
  return parse_file(path, [&](const RawLine& raw, std::size_t line_no) {
    try {
      return Triple{entities.id(raw.source), relations.id(raw.relation), entities.id(raw.target)};
    } catch (const ArtifactError& e) {
      throw ArtifactError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  });
}

void write_triples(std::ostream& out, std::span<const Triple> triples, const KnowledgeGraph& kg) {
  for (const auto& t : triples) {
    out << kg.entities().token(t.source) << '\t' << kg.relations().token(t.relation) << '\t'
        << kg.entities().token(t.target) << '\n';
  }
}

void write_triples(const std::filesystem::path& path, std::span<const Triple> triples,
                   const KnowledgeGraph& kg) {
  std::ofstream out(path);
  if (!out) throw ArtifactError(fmt::format("cannot write '{}'", path.string()));
  write_triples(out, triples, kg);
}

KnowledgeGraph KnowledgeGraph::load(const SplitPaths& paths, const AugmentOptions& options) {
  Vocabulary entities;
  Vocabulary relations;
  auto train = read_triples(paths.train, entities, relations);
  std::vector<Triple> dev;
  std::vector<Triple> test;
  if (!paths.dev.empty()) dev = read_triples(paths.dev, entities, relations);
  if (!paths.test.empty()) test = read_triples(paths.test, entities, relations);
  return from_triples(std::move(entities), std::move(relations), std::move(train), std::move(dev),
                      std::move(test), options);
}

KnowledgeGraph KnowledgeGraph::from_triples(Vocabulary entities, Vocabulary relations,
                                            std::vector<Triple> train, std::vector<Triple> dev,
                                            std::vector<Triple> test, const AugmentOptions& options) {
  if (train.empty()) throw ArtifactError("train split is empty");
  if (options.max_out_degree == 0) throw ConfigError("max_out_degree must be positive");

  KnowledgeGraph kg;
  kg.entities_ = std::move(entities);
  kg.num_raw_relations_ = relations.size();
  kg.options_ = options;

  const std::vector<std::string> raw(relations.tokens().begin(), relations.tokens().end());
  kg.relations_ = std::move(relations);
  if (options.inverse_edges) {
    for (const auto& token : raw) {
      const auto inverse = token + std::string(kInverseSuffix);
      if (kg.relations_.contains(inverse)) {
        throw ArtifactError(fmt::format("relation '{}' collides with the inverse of '{}'", inverse, token));
      }
      kg.relations_.add(inverse);
    }
  }
  if (options.self_loops) {
    if (kg.relations_.contains(kNoOpToken)) throw ArtifactError("relation token NO_OP is reserved");
    kg.relations_.add(kNoOpToken);
  }

  auto dedup = [&](std::vector<Triple>& split) {
    std::set<Triple> seen;
    std::vector<Triple> kept;
    kept.reserve(split.size());
    for (const auto& t : split) {
      if (!kg.valid_entity(t.source) || !kg.valid_entity(t.target) || t.relation < 0 ||
          static_cast<std::size_t>(t.relation) >= kg.num_raw_relations_) {
        throw ArtifactError(fmt::format("triple ({}, {}, {}) references an unknown id", t.source,
                                        t.relation, t.target));
      }
      if (seen.insert(t).second) kept.push_back(t);
    }
    split = std::move(kept);
  };
  dedup(train);
  dedup(dev);
  dedup(test);
  kg.splits_[0] = std::move(train);
  kg.splits_[1] = std::move(dev);
  kg.splits_[2] = std::move(test);
  kg.build_index();
  return kg;
}

void KnowledgeGraph::build_index() {
  const auto n = num_entities();
  base_adjacency_.assign(n, {});
  for (const auto& t : splits_[0]) {
    base_adjacency_[static_cast<std::size_t>(t.source)].push_back({t.relation, t.target});
    if (options_.inverse_edges) {
      base_adjacency_[static_cast<std::size_t>(t.target)].push_back({inverse(t.relation), t.source});
    }
  }
  base_edge_count_ = 0;
  for (std::size_t e = 0; e < n; ++e) {
    auto& list = base_adjacency_[e];
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    if (options_.self_loops) list.insert(list.begin(), Edge{no_op(), static_cast<EntityId>(e)});
    base_edge_count_ += list.size();
  }
  adjacency_ = base_adjacency_;
  edge_count_ = base_edge_count_;
  removed_.clear();
}

std::span<const Triple> KnowledgeGraph::triples(Split split) const {
  return splits_[static_cast<int>(split)];
}

RelationId KnowledgeGraph::inverse(RelationId relation) const {
  if (!options_.inverse_edges) throw ConfigError("graph was loaded without inverse edges");
  const auto raw = static_cast<RelationId>(num_raw_relations_);
  if (relation < 0 || relation >= 2 * raw) {
    throw ConfigError(fmt::format("relation {} has no inverse", relation));
  }
  return relation < raw ? relation + raw : relation - raw;
}

bool KnowledgeGraph::is_inverse(RelationId relation) const {
  const auto raw = static_cast<RelationId>(num_raw_relations_);
  return options_.inverse_edges && relation >= raw && relation < 2 * raw;
}

RelationId KnowledgeGraph::no_op() const {
  if (!options_.self_loops) throw ConfigError("graph was loaded without self-loops");
  return static_cast<RelationId>(num_relations() - 1);
}

std::span<const Edge> KnowledgeGraph::outgoing(EntityId entity) const {
  const auto& list = adjacency_.at(static_cast<std::size_t>(entity));
  return {list.data(), std::min(list.size(), options_.max_out_degree)};
}

std::span<const Edge> KnowledgeGraph::adjacency(EntityId entity) const {
  return adjacency_.at(static_cast<std::size_t>(entity));
}

bool KnowledgeGraph::has_edge(const Triple& edge) const {
  if (!valid_entity(edge.source)) return false;
  const auto& list = adjacency_[static_cast<std::size_t>(edge.source)];
  return std::find(list.begin(), list.end(), Edge{edge.relation, edge.target}) != list.end();
}

Triple KnowledgeGraph::canonical(const Triple& edge) const {
  if (is_inverse(edge.relation)) return {edge.target, inverse(edge.relation), edge.source};
  return edge;
}

bool KnowledgeGraph::erase_from_adjacency(const Triple& edge) {
  auto& list = adjacency_[static_cast<std::size_t>(edge.source)];
  auto it = std::find(list.begin(), list.end(), Edge{edge.relation, edge.target});
  if (it == list.end()) return false;
  list.erase(it);
  --edge_count_;
  return true;
}

bool KnowledgeGraph::remove_edge(const Triple& edge) {
  const bool self_loop = options_.self_loops && edge.relation == no_op();
  if (self_loop || !has_edge(edge)) {
    ++removal_warnings_;
    return false;
  }
  erase_from_adjacency(edge);
  if (options_.inverse_edges) erase_from_adjacency({edge.target, inverse(edge.relation), edge.source});
  removed_.insert(canonical(edge));
  return true;
}

void KnowledgeGraph::restore_all() {
  adjacency_ = base_adjacency_;
  edge_count_ = base_edge_count_;
  removed_.clear();
}

DegreeStats KnowledgeGraph::degree_stats() const {
  std::vector<double> degrees(num_entities(), 0.0);
  for (std::size_t e = 0; e < num_entities(); ++e) {
    for (const auto& edge : adjacency_[e]) {
      if (static_cast<std::size_t>(edge.relation) < num_raw_relations_) degrees[e] += 1.0;
    }
  }
  DegreeStats stats;
  if (degrees.empty()) return stats;
  double sum = 0.0;
  for (double d : degrees) sum += d;
  stats.mean = sum / static_cast<double>(degrees.size());
  std::sort(degrees.begin(), degrees.end());
  const auto mid = degrees.size() / 2;
  stats.median = degrees.size() % 2 == 1 ? degrees[mid] : 0.5 * (degrees[mid - 1] + degrees[mid]);
  return stats;
}

}  // namespace dualwalk
