#pragma once

// The coupled walk: GIANT moves over the cluster graph (STOP stays), DWARF
// moves over entity edges (the NO_OP self-loop stays). Both act once per step
// for exactly T steps.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "dualwalk/cluster.hpp"
#include "dualwalk/kg.hpp"
#include "dualwalk/policy.hpp"

namespace dualwalk {

struct Query {
  EntityId source = 0;
  RelationId relation = 0;
  EntityId answer = -1;  // the triple's target, -1 when unknown
};

struct DualState {
  Query query;
  ClusterId source_cluster = 0;
  EntityId entity = 0;
  ClusterId cluster = 0;
  std::size_t t = 0;
  bool terminal = false;
};

struct LegalActions {
  std::span<const ClusterId> giant;  // STOP first
  std::vector<Edge> dwarf;           // self-loop first
};

class Environment {
 public:
  /// mask_query_edge hides (r_q, answer) at the source, so training queries
  /// cannot be answered by the very edge they were built from.
  Environment(const KnowledgeGraph& kg, const ClusterMap& clusters, std::size_t horizon,
              bool mask_query_edge = false);

  const KnowledgeGraph& graph() const { return *kg_; }
  const ClusterMap& clusters() const { return *clusters_; }
  std::size_t horizon() const { return horizon_; }
  bool masks_query_edge() const { return mask_query_edge_; }

  DualState reset(const Query& query) const;
  LegalActions legal_actions(const DualState& state) const;
  /// Indices refer to the lists returned by legal_actions().
  DualState step(const DualState& state, std::size_t giant_index, std::size_t dwarf_index) const;

  /// DWARF candidates at `entity` for `query` (the query mask applied).
  std::vector<Edge> dwarf_actions(EntityId entity, const Query& query) const;

 private:
  const KnowledgeGraph* kg_;
  const ClusterMap* clusters_;
  std::size_t horizon_;
  bool mask_query_edge_;
};

enum class ActionMode { kSample, kGreedy, kForced };

/// Both agents' candidate distributions at one step (rows are rollouts).
struct StepDistributions {
  std::size_t step = 0;  // 0-based
  const diffnet::IndexMatrix& giant_candidates;
  const diffnet::Mask& giant_mask;
  const Matrix<float>& giant_logp;
  const diffnet::IndexMatrix& dwarf_relations;
  const diffnet::IndexMatrix& dwarf_entities;
  const diffnet::Mask& dwarf_mask;
  const Matrix<float>& dwarf_logp;
};

struct RolloutSpec {
  ActionMode giant = ActionMode::kSample;
  ActionMode dwarf = ActionMode::kSample;
  std::uint64_t seed = 1;  // row b draws from derive_seed(seed, {b})
  // Action indices (B x T) for kForced.
  const Matrix<std::int32_t>* forced_giant = nullptr;
  const Matrix<std::int32_t>* forced_dwarf = nullptr;
  std::function<void(const StepDistributions&)> on_step;
};

/// Rollouts of one batch. Step k (0-based) moves from column k to k + 1 of
/// the position matrices.
struct EpisodeBatch {
  std::size_t size = 0;
  std::size_t horizon = 0;
  std::vector<Query> queries;
  Matrix<EntityId> entities;         // B x (T + 1)
  Matrix<ClusterId> clusters;        // B x (T + 1)
  Matrix<RelationId> relations;      // B x T, relation of each DWARF edge
  Matrix<std::int32_t> giant_actions;  // B x T, index into the legal list
  Matrix<std::int32_t> dwarf_actions;  // B x T
  Matrix<double> giant_logp, dwarf_logp;        // B x T
  Matrix<double> giant_entropy, dwarf_entropy;  // B x T
  // Tape nodes (B x 1 each) for the policy-gradient loss.
  std::vector<diffnet::Var<float>> giant_logp_nodes, dwarf_logp_nodes;
  std::vector<diffnet::Var<float>> giant_entropy_nodes, dwarf_entropy_nodes;

  EntityId final_entity(std::size_t b) const { return entities(b, horizon); }
  ClusterId final_cluster(std::size_t b) const { return clusters(b, horizon); }
};

/// Runs reset -> T x (score, choose, step, advance histories) for every query.
EpisodeBatch rollout(const Environment& env, const PolicyGraph<float>& policy, std::span<const Query> queries,
                     const RolloutSpec& spec);

/// Draws an index from a row of log-probabilities (masked slots are skipped).
std::size_t sample_index(std::span<const float> log_probs, std::span<const std::uint8_t> mask, double u);
std::size_t argmax_index(std::span<const float> log_probs, std::span<const std::uint8_t> mask);

/// CSV: query, step, giant_cluster, giant_logp, dwarf_relation, dwarf_entity, dwarf_logp.
void write_trajectories_csv(std::ostream& out, const EpisodeBatch& batch, const KnowledgeGraph& kg,
                            bool header = true);

}  // namespace dualwalk
