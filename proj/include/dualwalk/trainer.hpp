#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dualwalk/cluster.hpp"
#include "dualwalk/embed.hpp"
#include "dualwalk/env.hpp"
#include "dualwalk/eval.hpp"
#include "dualwalk/kg.hpp"
#include "dualwalk/policy.hpp"
#include "dualwalk/reward.hpp"

namespace dualwalk {

struct TrainConfig {
  std::size_t horizon = 3;           // T
  std::size_t epochs = 100;          // passes over the training queries
  std::size_t rollouts = 20;         // L per query
  std::size_t batch_size = 128;      // queries per update
  double learning_rate = 1e-3;
  double entropy_beta = 0.2;
  double baseline_lambda = 0.2;
  double grad_clip = 5.0;
  std::uint64_t seed = 1;
  std::size_t embed_dim = 50;
  std::size_t hidden = 200;
  std::size_t beam = 50;             // width for the per-epoch dev evaluation
  std::size_t eval_every = 1;        // 0 disables dev evaluation
  bool return_to_go = false;         // weight step t by the rewards from t on
  bool dual = true;                  // false: DWARF-only ablation
  bool mask_query_edge = true;
  std::optional<RelationId> task_relation;  // restrict queries to one relation
};

/// Per-agent moving averages of the summed episode reward.
struct BaselineState {
  double giant = 0.0;
  double dwarf = 0.0;
  bool initialised = false;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss_giant = 0.0;
  double loss_dwarf = 0.0;
  double positive_reward_rate = 0.0;
  double dev_hits1 = 0.0;
  double dev_mrr = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  PolicyParameters<float> best;
  PolicyParameters<float> last;
  std::size_t best_epoch = 0;
  std::vector<EpochMetrics> history;
  BaselineState baseline;
};

struct TrainHooks {
  std::function<void(const EpochMetrics&)> on_epoch;
};

/// Weights for the log-probabilities of one agent (B x T): step t of rollout
/// b gets reward_t - b/T (or, with return_to_go, the reward sum from t on
/// minus the matching share of b).
Matrix<double> advantages(std::span<const std::vector<double>> rewards, double baseline, bool return_to_go);

/// One REINFORCE update on a batch of queries. Returns (loss_c, loss_e,
/// positive reward rate). Mutates params, optimiser and baseline.
struct StepOutcome {
  double loss_giant = 0.0;
  double loss_dwarf = 0.0;
  double positive_reward_rate = 0.0;
  std::size_t rollouts = 0;
  std::size_t positive = 0;
};

class Trainer {
 public:
  Trainer(const KnowledgeGraph& kg, const ClusterMap& clusters, const EmbeddingStore& store, TrainConfig config);

  const TrainConfig& config() const { return config_; }
  const Environment& environment() const { return env_; }
  const AnswerIndex& train_answers() const { return train_answers_; }
  const AnswerIndex& all_answers() const { return all_answers_; }

  /// Training queries (train triples, optionally one relation only).
  std::vector<Triple> train_queries() const;
  std::vector<Triple> queries(Split split) const;

  /// Warm-started initial parameters for this graph.
  PolicyParameters<float> initial_parameters() const;

  StepOutcome update(PolicyParameters<float>& params, diffnet::Adam<float>& optimiser, BaselineState& baseline,
                     std::span<const Triple> batch, std::uint64_t seed) const;

  TrainResult train(PolicyParameters<float> params, const TrainHooks& hooks = {}) const;

  LinkMetrics evaluate(const PolicyParameters<float>& params, Split split, std::size_t beam) const;

 private:
  const KnowledgeGraph* kg_;
  const ClusterMap* clusters_;
  const EmbeddingStore* store_;
  TrainConfig config_;
  Environment env_;
  Environment eval_env_;
  AnswerIndex train_answers_;
  AnswerIndex all_answers_;
};

/// CSV: epoch, loss_c, loss_e, positive_reward_rate, dev_hits1, dev_mrr.
/// Wall-clock time goes to a separate file so this one is reproducible.
void write_metrics_csv(std::ostream& out, std::span<const EpochMetrics> history);
void write_metrics_row(std::ostream& out, const EpochMetrics& m);
void write_timing_csv(std::ostream& out, std::span<const EpochMetrics> history);

}  // namespace dualwalk
