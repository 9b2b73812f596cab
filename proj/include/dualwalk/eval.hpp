#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dualwalk/env.hpp"
#include "dualwalk/policy.hpp"
#include "dualwalk/reward.hpp"

namespace dualwalk {

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

struct ScoredEntity {
  EntityId entity = 0;
  double log_prob = 0.0;
};

struct Trajectory {
  std::vector<ClusterId> clusters;    // T + 1 positions
  std::vector<EntityId> entities;     // T + 1 positions
  std::vector<RelationId> relations;  // T edges
  std::vector<std::int32_t> dwarf_actions;
  double log_prob = 0.0;
};

/// Final entities ordered by descending best-trajectory log-probability,
/// ties by entity id. Each entity appears once.
struct RankedAnswers {
  Query query;
  std::vector<ScoredEntity> ranking;
  std::vector<Trajectory> beams;  // surviving beams, best first (when requested)
};

struct BeamOptions {
  std::size_t width = 50;
  bool keep_paths = false;
};

/// Beam search over DWARF's edges. Each beam carries a GIANT history that
/// follows GIANT's argmax choice. Candidates are ranked by cumulative
/// log-probability, ties by (parent beam, action index).
RankedAnswers beam_search(const Environment& env, const PolicyParameters<float>& params, const Query& query,
                          const BeamOptions& options);

/// Ranks entities by the log-probability of landing on them after T uniform
/// random steps over the action lists (computed exactly, no sampling).
RankedAnswers random_walk_ranking(const KnowledgeGraph& kg, EntityId source, std::size_t horizon);

/// Ranks entities by their best log-probability among `rollouts` sampled walks.
RankedAnswers sampled_ranking(const Environment& env, const PolicyParameters<float>& params, const Query& query,
                              std::size_t rollouts, std::uint64_t seed);

enum class TieMode {
  kOptimistic,  // 1 + number of strictly better candidates
  kOrdinal,     // position after ordering ties by entity id
};

struct RankOptions {
  bool filtered = true;
  TieMode ties = TieMode::kOptimistic;
};

/// Rank of `gold` (kUnreachable if absent). When filtered, entities in
/// `known` other than gold are skipped.
double rank_of(std::span<const ScoredEntity> ranking, EntityId gold, const std::set<EntityId>& known,
               const RankOptions& options);

struct LinkMetrics {
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  double mrr = 0.0;
  std::size_t queries = 0;
};

LinkMetrics link_prediction_metrics(std::span<const double> ranks);

/// Precision averaged over the positive positions of a ranked label list.
/// Returns 0 when there is no positive.
double average_precision(std::span<const std::uint8_t> labels);

enum class Ranker { kBeam, kSampled, kRandomWalk };

struct EvalOptions {
  Ranker ranker = Ranker::kBeam;
  BeamOptions beam;
  std::size_t sampled_rollouts = 100;
  RankOptions rank;
  std::uint64_t seed = 1;
};

struct QueryRank {
  Triple triple;
  double rank = kUnreachable;
};

struct LinkEvaluation {
  LinkMetrics metrics;
  std::vector<QueryRank> per_query;
};

/// Ranks the target of every triple; `known` holds the true answers used for
/// filtering (normally all splits). Queries run in parallel.
LinkEvaluation evaluate_link_prediction(const Environment& env, const PolicyParameters<float>& params,
                                        std::span<const Triple> queries, const AnswerIndex& known,
                                        const EvalOptions& options);

struct FactCandidate {
  Triple triple;
  bool positive = false;
};

/// Orders candidate targets: reached ones by descending score (ties by
/// entity id), then unreached ones in a permutation seeded by `seed`.
/// Returns indices into `targets`.
std::vector<std::size_t> order_candidates(std::span<const EntityId> targets, std::span<const ScoredEntity> ranking,
                                          std::uint64_t seed);

struct FactEvaluation {
  double map = 0.0;
  std::vector<double> average_precisions;  // one per (source, relation) group with a positive
};

/// Groups candidates by (source, relation), ranks each group with one search
/// from the source and averages the per-group AP.
FactEvaluation fact_prediction_map(const Environment& env, const PolicyParameters<float>& params,
                                   std::span<const FactCandidate> candidates, const EvalOptions& options);

/// Reads `source<TAB>relation<TAB>target<TAB>+|-` lines.
std::vector<FactCandidate> read_fact_candidates(const std::filesystem::path& path, const KnowledgeGraph& kg);

struct ResultRow {
  std::string dataset;
  std::string task;
  std::string metric;
  double value = 0.0;
  std::size_t beam = 0;
  std::size_t horizon = 0;
  std::uint64_t seed = 0;
};

/// CSV: dataset, task, metric, value, beam, T, seed.
void write_results_csv(std::ostream& out, std::span<const ResultRow> rows);

}  // namespace dualwalk
