#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dualwalk {

// Dense, 0-based identifiers. -1 is used as padding in index matrices.
using EntityId = std::int32_t;
using RelationId = std::int32_t;
using ClusterId = std::int32_t;

struct Triple {
  EntityId source = 0;
  RelationId relation = 0;
  EntityId target = 0;

  auto operator<=>(const Triple&) const = default;
};

/// One outgoing action of an entity: follow `relation` to `target`.
struct Edge {
  RelationId relation = 0;
  EntityId target = 0;

  auto operator<=>(const Edge&) const = default;
};

enum class Split { kTrain, kDev, kTest };

/// Bijective token <-> id table. Ids are assigned in insertion order.
class Vocabulary {
 public:
  std::int32_t add(std::string_view token);
  std::int32_t id(std::string_view token) const;  // throws ArtifactError when absent
  bool contains(std::string_view token) const;
  const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  std::span<const std::string> tokens() const { return tokens_; }

  void write(std::ostream& out) const;  // token<TAB>id per line

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

struct AugmentOptions {
  bool inverse_edges = true;
  bool self_loops = true;
  // Cap on the action list handed to the policy; the self-loop is always kept.
  std::size_t max_out_degree = 200;
};

struct SplitPaths {
  std::filesystem::path train;
  std::filesystem::path dev;   // optional
  std::filesystem::path test;  // optional
};

struct DegreeStats {
  double mean = 0.0;
  double median = 0.0;
};

/// Triple store with an adjacency index over the train split.
///
/// Relation ids are laid out as: raw relations [0, R), inverse relations
/// [R, 2R) when inverse augmentation is on (inverse(r) = r + R), followed by
/// the shared NO_OP self-loop relation when self-loops are on. Each entity's
/// action list starts with its self-loop and is otherwise sorted by
/// (relation, target).
///
/// Immutable after construction except for remove_edge / restore_all, which
/// must not run concurrently with readers.
class KnowledgeGraph {
 public:
  static KnowledgeGraph load(const SplitPaths& paths, const AugmentOptions& options = {});

  /// Builds a graph from already-tokenised splits. `entities` and `relations`
  /// must cover every id used; `relations` holds raw relations only.
  static KnowledgeGraph from_triples(Vocabulary entities, Vocabulary relations,
                                     std::vector<Triple> train, std::vector<Triple> dev,
                                     std::vector<Triple> test, const AugmentOptions& options = {});

  const Vocabulary& entities() const { return entities_; }
  const Vocabulary& relations() const { return relations_; }
  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_relations() const { return relations_.size(); }
  std::size_t num_raw_relations() const { return num_raw_relations_; }
  const AugmentOptions& options() const { return options_; }

  std::span<const Triple> triples(Split split) const;

  bool has_inverse_edges() const { return options_.inverse_edges; }
  bool has_self_loops() const { return options_.self_loops; }
  RelationId inverse(RelationId relation) const;
  bool is_inverse(RelationId relation) const;
  RelationId no_op() const;  // throws if self-loops are off

  /// Action list of `entity` after removals and truncation.
  std::span<const Edge> outgoing(EntityId entity) const;
  /// Untruncated active adjacency of `entity`.
  std::span<const Edge> adjacency(EntityId entity) const;
  bool has_edge(const Triple& edge) const;

  /// Total number of indexed edges (self-loops and inverse twins included).
  std::size_t edge_count() const { return edge_count_; }

  /// Hides `edge` and, under inverse augmentation, its twin. Returns false and
  /// bumps removal_warnings() when the edge is not currently indexed.
  bool remove_edge(const Triple& edge);
  void restore_all();
  /// Removed edges in canonical (raw relation) orientation.
  const std::set<Triple>& removed_edges() const { return removed_; }
  std::size_t removal_warnings() const { return removal_warnings_; }

  /// Out-degree over raw train edges (no inverses, no self-loops).
  DegreeStats degree_stats() const;

  bool valid_entity(EntityId e) const { return e >= 0 && static_cast<std::size_t>(e) < num_entities(); }
  bool valid_relation(RelationId r) const { return r >= 0 && static_cast<std::size_t>(r) < num_relations(); }

 private:
  KnowledgeGraph() = default;
  void build_index();
  Triple canonical(const Triple& edge) const;
  bool erase_from_adjacency(const Triple& edge);

  Vocabulary entities_;
  Vocabulary relations_;
  std::size_t num_raw_relations_ = 0;
  AugmentOptions options_;
  std::vector<Triple> splits_[3];

  std::vector<std::vector<Edge>> base_adjacency_;
  std::vector<std::vector<Edge>> adjacency_;
  std::size_t base_edge_count_ = 0;
  std::size_t edge_count_ = 0;
  std::set<Triple> removed_;
  std::size_t removal_warnings_ = 0;
};

/// Parses one split file. Tokens are interned into the vocabularies.
std::vector<Triple> read_triples(const std::filesystem::path& path, Vocabulary& entities,
                                 Vocabulary& relations);
/// Parses a split file against fixed vocabularies (unknown tokens are errors).
std::vector<Triple> read_triples_fixed(const std::filesystem::path& path, const Vocabulary& entities,
                                       const Vocabulary& relations);
void write_triples(std::ostream& out, std::span<const Triple> triples, const KnowledgeGraph& kg);
void write_triples(const std::filesystem::path& path, std::span<const Triple> triples,
                   const KnowledgeGraph& kg);

}  // namespace dualwalk
