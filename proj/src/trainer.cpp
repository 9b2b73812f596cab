#include "dualwalk/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>

#include "dualwalk/error.hpp"
#include "dualwalk/random.hpp"

namespace dualwalk {

Matrix<double> advantages(std::span<const std::vector<double>> rewards, double baseline, bool return_to_go) {
  const std::size_t B = rewards.size();
  const std::size_t T = B ? rewards[0].size() : 0;
  Matrix<double> out(B, T);
  const double share = T ? baseline / static_cast<double>(T) : 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    double tail = 0.0;
    for (std::size_t k = T; k-- > 0;) {
      tail += rewards[b][k];
      out(b, k) = return_to_go ? tail - share * static_cast<double>(T - k) : rewards[b][k] - share;
    }
  }
  return out;
}

Trainer::Trainer(const KnowledgeGraph& kg, const ClusterMap& clusters, const EmbeddingStore& store, TrainConfig config)
    : kg_(&kg),
      clusters_(&clusters),
      store_(&store),
      config_(std::move(config)),
      env_(kg, clusters, config_.horizon, config_.mask_query_edge),
      eval_env_(kg, clusters, config_.horizon, false),
      train_answers_(kg.triples(Split::kTrain)) {
  if (config_.rollouts == 0 || config_.batch_size == 0) throw ConfigError("rollouts and batch size must be positive");
  if (!(config_.baseline_lambda >= 0.0 && config_.baseline_lambda < 1.0)) throw ConfigError("baseline decay must lie in [0, 1)");
  if (config_.entropy_beta < 0.0) throw ConfigError("entropy weight must be non-negative");
  if (!(config_.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  for (auto split : {Split::kTrain, Split::kDev, Split::kTest}) all_answers_.add(kg.triples(split));
  store.check_compatible(kg);
}

std::vector<Triple> Trainer::queries(Split split) const {
  std::vector<Triple> out;
  for (const auto& t : kg_->triples(split)) {
    if (!config_.task_relation || t.relation == *config_.task_relation) out.push_back(t);
  }
  return out;
}

std::vector<Triple> Trainer::train_queries() const { return queries(Split::kTrain); }

PolicyParameters<float> Trainer::initial_parameters() const {
  PolicyParameters<float> p(policy_dims(*kg_, *clusters_, config_.embed_dim, config_.hidden));
  p.init_random(config_.seed);
  p.warm_start(*store_, *clusters_);
  if (!config_.dual) p.isolate_agents();
  return p;
}

StepOutcome Trainer::update(PolicyParameters<float>& params, diffnet::Adam<float>& optimiser, BaselineState& baseline,
                            std::span<const Triple> batch, std::uint64_t seed) const {
  std::vector<Query> rows;
  rows.reserve(batch.size() * config_.rollouts);
  for (const auto& t : batch) {
    for (std::size_t l = 0; l < config_.rollouts; ++l) rows.push_back({t.source, t.relation, t.target});
  }
  const std::size_t B = rows.size();
  const std::size_t T = config_.horizon;

  diffnet::Tape<float> tape(true);
  const auto g = bind(tape, params);
  RolloutSpec spec;
  spec.seed = seed;
  const auto ep = rollout(env_, g, rows, spec);
  const auto rewards = compute_rewards(ep, train_answers_, *clusters_, *store_, config_.dual);

  std::vector<std::vector<double>> rc(B), re(B);
  double sum_c = 0.0, sum_e = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    rc[b] = rewards[b].giant;
    re[b] = rewards[b].dwarf;
    for (double v : rc[b]) sum_c += v;
    for (double v : re[b]) sum_e += v;
  }
  const double lambda = config_.baseline_lambda;
  baseline.giant = lambda * baseline.giant + (1.0 - lambda) * sum_c / static_cast<double>(B);
  baseline.dwarf = lambda * baseline.dwarf + (1.0 - lambda) * sum_e / static_cast<double>(B);
  baseline.initialised = true;
  const auto adv_c = advantages(rc, baseline.giant, config_.return_to_go);
  const auto adv_e = advantages(re, baseline.dwarf, config_.return_to_go);

  const double inv_b = 1.0 / static_cast<double>(B);
  const Matrix<float> entropy_w(B, 1, static_cast<float>(-config_.entropy_beta * inv_b / static_cast<double>(T)));
  auto agent_loss = [&](const std::vector<diffnet::Var<float>>& logp, const std::vector<diffnet::Var<float>>& ent,
                        const Matrix<double>& adv) {
    std::optional<diffnet::Var<float>> total;
    for (std::size_t k = 0; k < T; ++k) {
      Matrix<float> w(B, 1);
      for (std::size_t b = 0; b < B; ++b) w(b, 0) = static_cast<float>(-adv(b, k) * inv_b);
      auto term = diffnet::add(diffnet::weighted_sum(logp[k], w), diffnet::weighted_sum(ent[k], entropy_w));
      total = total ? diffnet::add(*total, term) : term;
    }
    return *total;
  };
  const auto loss_c = agent_loss(ep.giant_logp_nodes, ep.giant_entropy_nodes, adv_c);
  const auto loss_e = agent_loss(ep.dwarf_logp_nodes, ep.dwarf_entropy_nodes, adv_e);
  const auto loss = diffnet::add(loss_c, loss_e);

  StepOutcome out;
  out.loss_giant = loss_c.value().data[0];
  out.loss_dwarf = loss_e.value().data[0];
  out.rollouts = B;
  for (const auto& r : rewards) {
    if (r.dwarf.back() > 0.0) ++out.positive;
  }
  out.positive_reward_rate = static_cast<double>(out.positive) * inv_b;
  if (!std::isfinite(out.loss_giant) || !std::isfinite(out.loss_dwarf)) {
    std::string sample;
    for (std::size_t i = 0; i < std::min<std::size_t>(batch.size(), 5); ++i) {
      sample += fmt::format(" ({}, {}, {})", kg_->entities().token(batch[i].source),
                            kg_->relations().token(batch[i].relation), kg_->entities().token(batch[i].target));
    }
    throw NumericError(fmt::format("non-finite loss (giant {}, dwarf {}); batch starts with{}", out.loss_giant,
                                   out.loss_dwarf, sample));
  }

  tape.backward(loss);
  if (!config_.dual) params.zero_partner_grads();
  auto all = params.all();
  diffnet::clip_grad_norm<float>(std::span<diffnet::Parameter<float>* const>(all), config_.grad_clip);
  optimiser.step();
  return out;
}

LinkMetrics Trainer::evaluate(const PolicyParameters<float>& params, Split split, std::size_t beam) const {
  const auto qs = queries(split);
  EvalOptions opts;
  opts.beam.width = beam;
  opts.seed = config_.seed;
  return evaluate_link_prediction(eval_env_, params, qs, all_answers_, opts).metrics;
}

TrainResult Trainer::train(PolicyParameters<float> params, const TrainHooks& hooks) const {
  if (!config_.dual) params.isolate_agents();
  auto queries_all = train_queries();
  if (queries_all.empty()) throw ArtifactError("no training queries (check the task relation)");
  const bool have_dev = !queries(Split::kDev).empty();

  diffnet::AdamConfig adam;
  adam.learning_rate = config_.learning_rate;
  diffnet::Adam<float> optimiser(params.all(), adam);

  TrainResult result;
  result.best = params;
  double best_mrr = -1.0;
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 1; epoch <= config_.epochs; ++epoch) {
    Rng rng(derive_seed(config_.seed, {0x65706f6368ULL, epoch}));
    rng.shuffle(queries_all.begin(), queries_all.end());
    EpochMetrics m;
    m.epoch = epoch;
    std::size_t rollouts = 0, positive = 0, batches = 0;
    for (std::size_t first = 0; first < queries_all.size(); first += config_.batch_size) {
      const std::size_t count = std::min(config_.batch_size, queries_all.size() - first);
      const std::span<const Triple> batch(queries_all.data() + first, count);
      const auto o = update(params, optimiser, result.baseline, batch, derive_seed(config_.seed, {epoch, batches}));
      m.loss_giant += o.loss_giant;
      m.loss_dwarf += o.loss_dwarf;
      rollouts += o.rollouts;
      positive += o.positive;
      ++batches;
    }
    m.loss_giant /= static_cast<double>(batches);
    m.loss_dwarf /= static_cast<double>(batches);
    m.positive_reward_rate = static_cast<double>(positive) / static_cast<double>(rollouts);
    if (have_dev && config_.eval_every && epoch % config_.eval_every == 0) {
      const auto dev = evaluate(params, Split::kDev, config_.beam);
      m.dev_hits1 = dev.hits1;
      m.dev_mrr = dev.mrr;
      if (dev.mrr > best_mrr) {
        best_mrr = dev.mrr;
        result.best = params;
        result.best_epoch = epoch;
      }
    } else {
      m.dev_hits1 = m.dev_mrr = std::numeric_limits<double>::quiet_NaN();
    }
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(m);
    if (hooks.on_epoch) hooks.on_epoch(m);
  }
  if (best_mrr < 0.0) {
    result.best = params;
    result.best_epoch = config_.epochs;
  }
  result.last = std::move(params);
  return result;
}

void write_metrics_row(std::ostream& out, const EpochMetrics& m) {
  out << fmt::format("{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}\n", m.epoch, m.loss_giant, m.loss_dwarf,
                     m.positive_reward_rate, m.dev_hits1, m.dev_mrr);
}

void write_metrics_csv(std::ostream& out, std::span<const EpochMetrics> history) {
  out << "epoch,loss_c,loss_e,positive_reward_rate,dev_hits1,dev_mrr\n";
  for (const auto& m : history) write_metrics_row(out, m);
}

void write_timing_csv(std::ostream& out, std::span<const EpochMetrics> history) {
  out << "epoch,wall_time\n";
  for (const auto& m : history) out << fmt::format("{},{:.3f}\n", m.epoch, m.wall_seconds);
}

}  // namespace dualwalk
