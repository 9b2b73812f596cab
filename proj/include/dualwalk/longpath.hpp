#pragma once

// Short-path discovery and removal for the long-path experiments.
//
// For a task triple (s, r, o) each repetition samples an intermediate e_i
// uniformly over all entities and BFS-checks s -> e_i and e_i -> o. When the
// two legs together are at most `max_length` edges long, every concrete walk
// through e_i of that length is recorded. Direct s -> o edges are short paths
// on their own and are recorded on every repetition. Removing the union of
// the recorded edges leaves only paths of length > max_length between the
// sampled pairs.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "dualwalk/kg.hpp"

namespace dualwalk {

struct ShortPathConfig {
  std::size_t repetitions = 50;
  std::size_t max_length = 2;  // paths shorter than 3 edges
  std::uint64_t seed = 1;
};

struct FoundPath {
  std::vector<Triple> edges;  // in walking order, relations as walked (inverses included)
  std::size_t frequency = 0;

  auto operator<=>(const FoundPath&) const = default;
};

struct ShortPathResult {
  std::vector<FoundPath> paths;                       // sorted by edge sequence
  std::vector<std::vector<EntityId>> intermediates;   // sampled e_i per task triple
};

/// Hop distance from `from` to `to` over real edges (no self-loops), or -1
/// when it exceeds `limit`.
int bfs_distance(const KnowledgeGraph& kg, EntityId from, EntityId to, std::size_t limit);

ShortPathResult find_short_paths(const KnowledgeGraph& kg, std::span<const Triple> tasks, const ShortPathConfig& config);

/// Distinct edges (as walked) of paths seen at least
/// `min_frequency` times.
std::vector<Triple> traversed_edges(std::span<const FoundPath> paths, std::size_t min_frequency = 1);

struct AblationReport {
  std::vector<Triple> removed;      // canonical raw orientation
  std::size_t edges_before = 0;
  std::size_t edges_after = 0;
  std::size_t isolated_sources = 0;  // task sources left with only their self-loop
};

/// Removes every traversed edge (and its inverse twin) from the graph.
AblationReport ablate(KnowledgeGraph& kg, std::span<const FoundPath> paths, std::span<const Triple> tasks,
                      std::size_t min_frequency = 1);

/// Removes every train edge of `relation` (ground-truth relation removal).
std::size_t remove_relation(KnowledgeGraph& kg, RelationId relation);

struct LengthMetric {
  std::size_t horizon = 0;
  double value = 0.0;
};

/// Runs `measure(T)` for every T; the graph is restored before returning.
std::vector<LengthMetric> length_sweep(KnowledgeGraph& kg, std::span<const std::size_t> horizons,
                                       const std::function<double(std::size_t)>& measure);

/// CSV: T, metric.
void write_length_csv(std::ostream& out, std::span<const LengthMetric> rows, const char* metric_name);

}  // namespace dualwalk
