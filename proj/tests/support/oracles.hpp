#pragma once
// Independent reference implementations the tests compare against.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "dualwalk/diffnet.hpp"
#include "dualwalk/env.hpp"
#include "dualwalk/eval.hpp"
#include "dualwalk/policy.hpp"
#include "dualwalk/random.hpp"

namespace dualwalk::testing {

using diffnet::Parameter;
using diffnet::Tape;
using diffnet::Var;

// ---- finite differences ----------------------------------------------------

using LossBuilder = std::function<Var<double>(Tape<double>&)>;

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
};

/// Relative error with a small floor so that entries whose true gradient is
/// zero are judged on absolute error.
inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

/// Central differences over every parameter entry (or `max_entries` of them
/// per parameter, picked by `seed`).
inline GradCheck check_gradients(const std::vector<Parameter<double>*>& params, const LossBuilder& build,
                                 double eps = 1e-4, std::size_t max_entries = 0, std::uint64_t seed = 1) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<double> tape(true);
    tape.backward(build(tape));
  }
  auto eval = [&] {
    Tape<double> tape(false);
    return build(tape).value().data[0];
  };
  GradCheck out;
  Rng rng(seed);
  for (auto* p : params) {
    std::vector<std::size_t> idx(p->value.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (max_entries && idx.size() > max_entries) {
      rng.shuffle(idx.begin(), idx.end());
      idx.resize(max_entries);
    }
    for (auto i : idx) {
      const double keep = p->value.data[i];
      p->value.data[i] = keep + eps;
      const double up = eval();
      p->value.data[i] = keep - eps;
      const double down = eval();
      p->value.data[i] = keep;
      const double numeric = (up - down) / (2.0 * eps);
      out.max_rel_error = std::max(out.max_rel_error, rel_error(p->grad.data[i], numeric));
      ++out.entries;
    }
  }
  return out;
}

inline void fill_uniform(Matrix<double>& m, Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (auto& v : m.data) v = rng.uniform(lo, hi);
}

// ---- ranking metrics -------------------------------------------------------

/// Rank straight from the definition: 1 + number of non-filtered entities
/// scoring strictly higher than gold (optimistic) or also tying with a
/// smaller id (ordinal).
inline double brute_rank(const std::map<EntityId, double>& scores, EntityId gold, const std::set<EntityId>& known,
                         bool filtered, bool ordinal) {
  const auto it = scores.find(gold);
  if (it == scores.end()) return kUnreachable;
  double rank = 1.0;
  for (const auto& [e, s] : scores) {
    if (e == gold) continue;
    if (filtered && known.count(e)) continue;
    if (s > it->second || (ordinal && s == it->second && e < gold)) rank += 1.0;
  }
  return rank;
}

struct BruteMetrics {
  double hits1 = 0, hits3 = 0, hits10 = 0, mrr = 0;
};

inline BruteMetrics brute_metrics(const std::vector<double>& ranks) {
  BruteMetrics m;
  if (ranks.empty()) return m;
  for (double r : ranks) {
    m.hits1 += r <= 1 ? 1 : 0;
    m.hits3 += r <= 3 ? 1 : 0;
    m.hits10 += r <= 10 ? 1 : 0;
    m.mrr += std::isinf(r) ? 0.0 : 1.0 / r;
  }
  const double n = static_cast<double>(ranks.size());
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  m.mrr /= n;
  return m;
}

/// AP as the mean over positives of (positives up to k) / k.
inline double brute_average_precision(const std::vector<std::uint8_t>& labels) {
  double sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (!labels[k]) continue;
    ++positives;
    std::size_t above = 0;
    for (std::size_t j = 0; j <= k; ++j) above += labels[j] ? 1 : 0;
    sum += static_cast<double>(above) / static_cast<double>(k + 1);
  }
  return positives ? sum / static_cast<double>(positives) : 0.0;
}

/// A ranking over a random subset of `universe` entities with many tied
/// scores, ordered like RankedAnswers (score desc, id asc).
inline std::vector<ScoredEntity> random_ranking(Rng& rng, std::size_t universe) {
  std::vector<ScoredEntity> out;
  for (std::size_t e = 0; e < universe; ++e) {
    if (rng.below(4) == 0) continue;
    out.push_back({static_cast<EntityId>(e), -static_cast<double>(rng.below(6)) * 0.5});
  }
  std::sort(out.begin(), out.end(), [](const ScoredEntity& a, const ScoredEntity& b) {
    return a.log_prob != b.log_prob ? a.log_prob > b.log_prob : a.entity < b.entity;
  });
  return out;
}

// ---- exhaustive search -----------------------------------------------------

/// Every DWARF action sequence of length T, scored by replaying it through
/// the rollout with GIANT acting greedily. The result holds, per reachable
/// entity, the best total log-probability, ordered like RankedAnswers.
inline std::vector<ScoredEntity> enumerate_paths(const Environment& env, PolicyParameters<float>& params,
                                                 const Query& query) {
  const std::size_t T = env.horizon();
  std::vector<std::vector<std::int32_t>> seqs;
  std::vector<std::int32_t> prefix;
  std::function<void(EntityId)> walk = [&](EntityId at) {
    if (prefix.size() == T) {
      seqs.push_back(prefix);
      return;
    }
    const auto actions = env.dwarf_actions(at, query);
    for (std::size_t a = 0; a < actions.size(); ++a) {
      prefix.push_back(static_cast<std::int32_t>(a));
      walk(actions[a].target);
      prefix.pop_back();
    }
  };
  walk(query.source);

  Matrix<std::int32_t> forced(seqs.size(), T);
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    for (std::size_t k = 0; k < T; ++k) forced(b, k) = seqs[b][k];
  }
  std::vector<Query> rows(seqs.size(), query);
  RolloutSpec spec;
  spec.giant = ActionMode::kGreedy;
  spec.dwarf = ActionMode::kForced;
  spec.forced_dwarf = &forced;
  Tape<float> tape(false);
  const auto ep = rollout(env, bind(tape, params), rows, spec);

  std::map<EntityId, double> best;
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    double lp = 0.0;
    for (std::size_t k = 0; k < T; ++k) lp += ep.dwarf_logp(b, k);
    const auto e = ep.final_entity(b);
    const auto it = best.find(e);
    if (it == best.end() || lp > it->second) best[e] = lp;
  }
  std::vector<ScoredEntity> out;
  for (const auto& [e, lp] : best) out.push_back({e, lp});
  std::stable_sort(out.begin(), out.end(), [](const ScoredEntity& a, const ScoredEntity& b) {
    return a.log_prob > b.log_prob;
  });
  return out;
}

/// Number of DWARF action sequences of length T from the query source.
inline std::size_t count_paths(const Environment& env, const Query& query) {
  std::function<std::size_t(EntityId, std::size_t)> count = [&](EntityId at, std::size_t left) -> std::size_t {
    if (left == 0) return 1;
    std::size_t n = 0;
    for (const auto& e : env.dwarf_actions(at, query)) n += count(e.target, left - 1);
    return n;
  };
  return count(query.source, env.horizon());
}

}  // namespace dualwalk::testing
