#include "dualwalk/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "dualwalk/error.hpp"
#include "dualwalk/random.hpp"

namespace dualwalk {

namespace {

// Beam search never records a graph, so the parameters are only read.
PolicyParameters<float>& readonly(const PolicyParameters<float>& params) {
  return const_cast<PolicyParameters<float>&>(params);
}

std::vector<ScoredEntity> collapse(std::vector<ScoredEntity> scored) {
  std::sort(scored.begin(), scored.end(), [](const ScoredEntity& a, const ScoredEntity& b) {
    return a.entity != b.entity ? a.entity < b.entity : a.log_prob > b.log_prob;
  });
  std::vector<ScoredEntity> best;
  for (const auto& s : scored) {
    if (best.empty() || best.back().entity != s.entity) best.push_back(s);
  }
  std::sort(best.begin(), best.end(), [](const ScoredEntity& a, const ScoredEntity& b) {
    return a.log_prob != b.log_prob ? a.log_prob > b.log_prob : a.entity < b.entity;
  });
  return best;
}

}  // namespace

RankedAnswers beam_search(const Environment& env, const PolicyParameters<float>& params, const Query& query,
                          const BeamOptions& options) {
  if (options.width == 0) throw ConfigError("beam width must be positive");
  const auto& clusters = env.clusters();
  const std::size_t T = env.horizon();
  const auto start = env.reset(query);

  diffnet::Tape<float> tape(false);
  const auto g = bind(tape, readonly(params));

  struct Beam {
    EntityId entity;
    ClusterId cluster;
    double log_prob;
    Trajectory path;
  };
  std::vector<Beam> beams{{start.entity, start.cluster, 0.0, {}}};
  beams[0].path.entities.push_back(start.entity);
  beams[0].path.clusters.push_back(start.cluster);

  const ClusterId c0[] = {start.cluster};
  const EntityId e0[] = {start.entity};
  auto hist = init_histories(g, std::span<const ClusterId>(c0), std::span<const EntityId>(e0));

  for (std::size_t k = 0; k < T; ++k) {
    const std::size_t n = beams.size();
    std::vector<ClusterId> cur_c(n);
    std::vector<EntityId> cur_e(n);
    std::vector<RelationId> rq(n, query.relation);
    std::vector<std::vector<Edge>> lists(n);
    std::size_t wc = 1, we = 1;
    for (std::size_t i = 0; i < n; ++i) {
      cur_c[i] = beams[i].cluster;
      cur_e[i] = beams[i].entity;
      lists[i] = env.dwarf_actions(cur_e[i], query);
      wc = std::max(wc, clusters.actions(cur_c[i]).size());
      we = std::max(we, lists[i].size());
    }
    diffnet::IndexMatrix gcand(n, wc, -1), rcand(n, we, -1), ecand(n, we, -1);
    diffnet::Mask gmask(n, wc, 0), emask(n, we, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto acts = clusters.actions(cur_c[i]);
      for (std::size_t a = 0; a < acts.size(); ++a) {
        gcand(i, a) = acts[a];
        gmask(i, a) = 1;
      }
      for (std::size_t a = 0; a < lists[i].size(); ++a) {
        rcand(i, a) = lists[i][a].relation;
        ecand(i, a) = lists[i][a].target;
        emask(i, a) = 1;
      }
    }
    const auto lp_c = score_giant(g, std::span<const ClusterId>(cur_c), hist.giant.hidden, gcand, gmask);
    const auto lp_e = score_dwarf(g, std::span<const EntityId>(cur_e), std::span<const RelationId>(rq),
                                  hist.dwarf.hidden, rcand, ecand, emask);

    std::vector<ClusterId> giant_move(n);
    for (std::size_t i = 0; i < n; ++i) giant_move[i] = gcand(i, argmax_index(lp_c.value().row(i), gmask.row(i)));

    struct Expansion {
      double score;
      std::size_t parent;
      std::size_t action;
    };
    std::vector<Expansion> cand;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t a = 0; a < lists[i].size(); ++a) {
        cand.push_back({beams[i].log_prob + static_cast<double>(lp_e.value()(i, a)), i, a});
      }
    }
    // Expansions are generated in (parent, action) order, so a stable sort keeps that tie order.
    std::stable_sort(cand.begin(), cand.end(), [](const Expansion& a, const Expansion& b) { return a.score > b.score; });
    if (cand.size() > options.width) cand.resize(options.width);

    std::vector<Beam> next;
    next.reserve(cand.size());
    std::vector<std::int32_t> parents(cand.size());
    std::vector<ClusterId> move_c(cand.size());
    std::vector<RelationId> move_r(cand.size());
    std::vector<EntityId> move_e(cand.size());
    for (std::size_t j = 0; j < cand.size(); ++j) {
      const auto& x = cand[j];
      const auto& parent = beams[x.parent];
      const Edge edge = lists[x.parent][x.action];
      Beam b{edge.target, parent.cluster, x.score, {}};
      if (giant_move[x.parent] != clusters.stop()) b.cluster = giant_move[x.parent];
      if (options.keep_paths || k + 1 == T) {
        b.path = parent.path;
        b.path.entities.push_back(b.entity);
        b.path.clusters.push_back(b.cluster);
        b.path.relations.push_back(edge.relation);
        b.path.dwarf_actions.push_back(static_cast<std::int32_t>(x.action));
        b.path.log_prob = x.score;
      }
      parents[j] = static_cast<std::int32_t>(x.parent);
      move_c[j] = giant_move[x.parent];
      move_r[j] = edge.relation;
      move_e[j] = edge.target;
      next.push_back(std::move(b));
    }
    beams = std::move(next);
    if (k + 1 < T) {
      const std::span<const std::int32_t> idx(parents);
      AgentHistories<float> gathered;
      gathered.giant = {diffnet::gather_rows(hist.giant.hidden, idx), diffnet::gather_rows(hist.giant.cell, idx)};
      gathered.dwarf = {diffnet::gather_rows(hist.dwarf.hidden, idx), diffnet::gather_rows(hist.dwarf.cell, idx)};
      gathered.t = hist.t;
      hist = step_histories(g, gathered, std::span<const ClusterId>(move_c), std::span<const RelationId>(move_r),
                            std::span<const EntityId>(move_e));
    }
  }

  RankedAnswers out;
  out.query = query;
  std::vector<ScoredEntity> scored;
  scored.reserve(beams.size());
  for (const auto& b : beams) scored.push_back({b.entity, b.log_prob});
  out.ranking = collapse(std::move(scored));
  if (options.keep_paths) {
    for (auto& b : beams) out.beams.push_back(std::move(b.path));
  }
  return out;
}

RankedAnswers random_walk_ranking(const KnowledgeGraph& kg, EntityId source, std::size_t horizon) {
  std::vector<double> p(kg.num_entities(), 0.0), next(kg.num_entities(), 0.0);
  p[static_cast<std::size_t>(source)] = 1.0;
  for (std::size_t k = 0; k < horizon; ++k) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t e = 0; e < p.size(); ++e) {
      if (p[e] == 0.0) continue;
      const auto out = kg.outgoing(static_cast<EntityId>(e));
      if (out.empty()) {
        next[e] += p[e];
        continue;
      }
      const double share = p[e] / static_cast<double>(out.size());
      for (const auto& edge : out) next[static_cast<std::size_t>(edge.target)] += share;
    }
    std::swap(p, next);
  }
  RankedAnswers r;
  r.query.source = source;
  std::vector<ScoredEntity> scored;
  for (std::size_t e = 0; e < p.size(); ++e) {
    if (p[e] > 0.0) scored.push_back({static_cast<EntityId>(e), std::log(p[e])});
  }
  r.ranking = collapse(std::move(scored));
  return r;
}

RankedAnswers sampled_ranking(const Environment& env, const PolicyParameters<float>& params, const Query& query,
                              std::size_t rollouts, std::uint64_t seed) {
  diffnet::Tape<float> tape(false);
  const auto g = bind(tape, readonly(params));
  const std::vector<Query> queries(rollouts, query);
  RolloutSpec spec;
  spec.seed = seed;
  const auto ep = rollout(env, g, queries, spec);
  std::vector<ScoredEntity> scored;
  for (std::size_t b = 0; b < ep.size; ++b) {
    double lp = 0.0;
    for (std::size_t k = 0; k < ep.horizon; ++k) lp += ep.dwarf_logp(b, k);
    scored.push_back({ep.final_entity(b), lp});
  }
  RankedAnswers r;
  r.query = query;
  r.ranking = collapse(std::move(scored));
  return r;
}

double rank_of(std::span<const ScoredEntity> ranking, EntityId gold, const std::set<EntityId>& known,
               const RankOptions& options) {
  const auto it = std::find_if(ranking.begin(), ranking.end(), [&](const ScoredEntity& s) { return s.entity == gold; });
  if (it == ranking.end()) return kUnreachable;
  const double gold_score = it->log_prob;
  std::size_t ahead = 0;
  for (const auto& s : ranking) {
    if (s.entity == gold) {
      if (options.ties == TieMode::kOrdinal) break;
      continue;
    }
    if (options.filtered && known.count(s.entity)) continue;
    if (options.ties == TieMode::kOptimistic) {
      if (s.log_prob > gold_score) ++ahead;
    } else {
      ++ahead;  // everything before gold in (score desc, id asc) order
    }
  }
  return static_cast<double>(ahead + 1);
}

LinkMetrics link_prediction_metrics(std::span<const double> ranks) {
  LinkMetrics m;
  m.queries = ranks.size();
  if (ranks.empty()) return m;
  for (double r : ranks) {
    if (r <= 1.0) m.hits1 += 1.0;
    if (r <= 3.0) m.hits3 += 1.0;
    if (r <= 10.0) m.hits10 += 1.0;
    if (std::isfinite(r)) m.mrr += 1.0 / r;
  }
  const double n = static_cast<double>(ranks.size());
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  m.mrr /= n;
  return m;
}

double average_precision(std::span<const std::uint8_t> labels) {
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return hits ? sum / static_cast<double>(hits) : 0.0;
}

namespace {

RankedAnswers rank_query(const Environment& env, const PolicyParameters<float>& params, const Query& q,
                         const EvalOptions& options, std::uint64_t seed) {
  switch (options.ranker) {
    case Ranker::kBeam:
      return beam_search(env, params, q, options.beam);
    case Ranker::kSampled:
      return sampled_ranking(env, params, q, options.sampled_rollouts, seed);
    case Ranker::kRandomWalk: {
      auto r = random_walk_ranking(env.graph(), q.source, env.horizon());
      r.query = q;
      return r;
    }
  }
  return {};
}

}  // namespace

LinkEvaluation evaluate_link_prediction(const Environment& env, const PolicyParameters<float>& params,
                                        std::span<const Triple> queries, const AnswerIndex& known,
                                        const EvalOptions& options) {
  LinkEvaluation out;
  out.per_query.resize(queries.size());
  const auto n = static_cast<std::ptrdiff_t>(queries.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto& t = queries[static_cast<std::size_t>(i)];
      const Query q{t.source, t.relation, t.target};
      const auto ranked = rank_query(env, params, q, options, derive_seed(options.seed, {static_cast<std::uint64_t>(i)}));
      out.per_query[static_cast<std::size_t>(i)] = {t, rank_of(ranked.ranking, t.target, known.answers(t.source, t.relation), options.rank)};
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<double> ranks;
  ranks.reserve(out.per_query.size());
  for (const auto& q : out.per_query) ranks.push_back(q.rank);
  out.metrics = link_prediction_metrics(ranks);
  return out;
}

std::vector<std::size_t> order_candidates(std::span<const EntityId> targets, std::span<const ScoredEntity> ranking,
                                          std::uint64_t seed) {
  std::map<EntityId, double> score;
  for (const auto& s : ranking) score.emplace(s.entity, s.log_prob);
  std::vector<std::size_t> reached, unreached;
  for (std::size_t i = 0; i < targets.size(); ++i) (score.count(targets[i]) ? reached : unreached).push_back(i);
  std::stable_sort(reached.begin(), reached.end(), [&](std::size_t a, std::size_t b) {
    const double sa = score.at(targets[a]), sb = score.at(targets[b]);
    return sa != sb ? sa > sb : targets[a] < targets[b];
  });
  std::stable_sort(unreached.begin(), unreached.end(), [&](std::size_t a, std::size_t b) { return targets[a] < targets[b]; });
  Rng rng(seed);
  rng.shuffle(unreached.begin(), unreached.end());
  reached.insert(reached.end(), unreached.begin(), unreached.end());
  return reached;
}

FactEvaluation fact_prediction_map(const Environment& env, const PolicyParameters<float>& params,
                                   std::span<const FactCandidate> candidates, const EvalOptions& options) {
  std::map<std::pair<EntityId, RelationId>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    groups[{candidates[i].triple.source, candidates[i].triple.relation}].push_back(i);
  }
  std::vector<std::pair<std::pair<EntityId, RelationId>, std::vector<std::size_t>>> list(groups.begin(), groups.end());
  std::vector<double> ap(list.size(), -1.0);
  const auto n = static_cast<std::ptrdiff_t>(list.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t gi = 0; gi < n; ++gi) {
    try {
      const auto& [key, members] = list[static_cast<std::size_t>(gi)];
      bool any_positive = false;
      for (auto m : members) any_positive = any_positive || candidates[m].positive;
      if (!any_positive) continue;
      const Query q{key.first, key.second, -1};
      const auto seed = derive_seed(options.seed, {static_cast<std::uint64_t>(gi)});
      const auto ranked = rank_query(env, params, q, options, seed);
      std::vector<EntityId> targets;
      for (auto m : members) targets.push_back(candidates[m].triple.target);
      const auto order = order_candidates(targets, ranked.ranking, derive_seed(seed, {1}));
      std::vector<std::uint8_t> labels;
      for (auto o : order) labels.push_back(candidates[members[o]].positive ? 1 : 0);
      ap[static_cast<std::size_t>(gi)] = average_precision(labels);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  FactEvaluation out;
  for (double v : ap) {
    if (v >= 0.0) out.average_precisions.push_back(v);
  }
  if (!out.average_precisions.empty()) {
    out.map = std::accumulate(out.average_precisions.begin(), out.average_precisions.end(), 0.0) /
              static_cast<double>(out.average_precisions.size());
  }
  return out;
}

std::vector<FactCandidate> read_fact_candidates(const std::filesystem::path& path, const KnowledgeGraph& kg) {
  std::ifstream in(path);
  if (!in) throw ArtifactError(fmt::format("cannot open '{}'", path.string()));
  std::vector<FactCandidate> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (fields.size() != 4 || (fields[3] != "+" && fields[3] != "-")) {
      throw ArtifactError(fmt::format("{}:{}: expected source, relation, target and +/-", path.string(), lineno));
    }
    FactCandidate c;
    try {
      c.triple = {kg.entities().id(fields[0]), kg.relations().id(fields[1]), kg.entities().id(fields[2])};
    } catch (const ArtifactError& e) {
      throw ArtifactError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
    c.positive = fields[3] == "+";
    out.push_back(c);
  }
  return out;
}

void write_results_csv(std::ostream& out, std::span<const ResultRow> rows) {
  out << "dataset,task,metric,value,beam,T,seed\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{:.17g},{},{},{}\n", r.dataset, r.task, r.metric, r.value, r.beam, r.horizon, r.seed);
  }
}

}  // namespace dualwalk
