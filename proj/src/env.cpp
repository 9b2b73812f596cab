#include "dualwalk/env.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "dualwalk/error.hpp"
#include "dualwalk/random.hpp"

namespace dualwalk {

Environment::Environment(const KnowledgeGraph& kg, const ClusterMap& clusters, std::size_t horizon,
                         bool mask_query_edge)
    : kg_(&kg), clusters_(&clusters), horizon_(horizon), mask_query_edge_(mask_query_edge) {
  if (horizon == 0) throw ConfigError("path length T must be positive");
  if (clusters.assignment().size() != kg.num_entities()) {
    throw ArtifactError("cluster assignment does not cover the graph's entities");
  }
  if (!kg.has_self_loops()) throw ConfigError("the walk needs self-loop augmentation");
}

DualState Environment::reset(const Query& query) const {
  if (!kg_->valid_entity(query.source)) throw ConfigError(fmt::format("unknown source entity {}", query.source));
  if (!kg_->valid_relation(query.relation)) throw ConfigError(fmt::format("unknown query relation {}", query.relation));
  DualState s;
  s.query = query;
  s.source_cluster = clusters_->cluster_of(query.source);
  s.entity = query.source;
  s.cluster = s.source_cluster;
  return s;
}

std::vector<Edge> Environment::dwarf_actions(EntityId entity, const Query& query) const {
  const auto out = kg_->outgoing(entity);
  std::vector<Edge> actions(out.begin(), out.end());
  if (mask_query_edge_ && entity == query.source && query.answer >= 0) {
    const Edge hidden{query.relation, query.answer};
    actions.erase(std::remove(actions.begin(), actions.end(), hidden), actions.end());
  }
  return actions;
}

LegalActions Environment::legal_actions(const DualState& state) const {
  if (state.terminal) throw ConfigError("no actions in a terminal state");
  return {clusters_->actions(state.cluster), dwarf_actions(state.entity, state.query)};
}

DualState Environment::step(const DualState& state, std::size_t giant_index, std::size_t dwarf_index) const {
  const auto legal = legal_actions(state);
  if (giant_index >= legal.giant.size() || dwarf_index >= legal.dwarf.size()) {
    throw ConfigError(fmt::format("illegal action pair ({}, {}) at t={}", giant_index, dwarf_index, state.t));
  }
  DualState next = state;
  const ClusterId c = legal.giant[giant_index];
  if (c != clusters_->stop()) next.cluster = c;
  next.entity = legal.dwarf[dwarf_index].target;
  next.t = state.t + 1;
  next.terminal = next.t == horizon_;
  return next;
}

std::size_t sample_index(std::span<const float> log_probs, std::span<const std::uint8_t> mask, double u) {
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < log_probs.size(); ++i) {
    if (!mask[i]) continue;
    last = i;
    acc += std::exp(static_cast<double>(log_probs[i]));
    if (u < acc) return i;
  }
  return last;
}

std::size_t argmax_index(std::span<const float> log_probs, std::span<const std::uint8_t> mask) {
  std::size_t best = log_probs.size();
  for (std::size_t i = 0; i < log_probs.size(); ++i) {
    if (mask[i] && (best == log_probs.size() || log_probs[i] > log_probs[best])) best = i;
  }
  return best;
}

namespace {

struct Candidates {
  diffnet::IndexMatrix first;   // clusters, or relations for DWARF
  diffnet::IndexMatrix second;  // entities for DWARF
  diffnet::Mask mask;
};

Candidates giant_candidates(const ClusterMap& clusters, std::span<const ClusterId> current) {
  std::size_t width = 1;
  for (auto c : current) width = std::max(width, clusters.actions(c).size());
  Candidates out{diffnet::IndexMatrix(current.size(), width, -1), {}, diffnet::Mask(current.size(), width, 0)};
  for (std::size_t b = 0; b < current.size(); ++b) {
    const auto acts = clusters.actions(current[b]);
    for (std::size_t a = 0; a < acts.size(); ++a) {
      out.first(b, a) = acts[a];
      out.mask(b, a) = 1;
    }
  }
  return out;
}

Candidates dwarf_candidates(const std::vector<std::vector<Edge>>& lists) {
  std::size_t width = 1;
  for (const auto& l : lists) width = std::max(width, l.size());
  const std::size_t rows = lists.size();
  Candidates out{diffnet::IndexMatrix(rows, width, -1), diffnet::IndexMatrix(rows, width, -1),
                 diffnet::Mask(rows, width, 0)};
  for (std::size_t b = 0; b < rows; ++b) {
    if (lists[b].empty()) throw ArtifactError("an entity has no outgoing action");
    for (std::size_t a = 0; a < lists[b].size(); ++a) {
      out.first(b, a) = lists[b][a].relation;
      out.second(b, a) = lists[b][a].target;
      out.mask(b, a) = 1;
    }
  }
  return out;
}

std::size_t choose(ActionMode mode, std::span<const float> lp, std::span<const std::uint8_t> mask, Rng& rng,
                   const Matrix<std::int32_t>* forced, std::size_t b, std::size_t k) {
  switch (mode) {
    case ActionMode::kSample:
      return sample_index(lp, mask, rng.uniform());
    case ActionMode::kGreedy:
      return argmax_index(lp, mask);
    case ActionMode::kForced: {
      if (!forced) throw ConfigError("forced rollout without an action matrix");
      const auto a = (*forced)(b, k);
      if (a < 0 || static_cast<std::size_t>(a) >= mask.size() || !mask[static_cast<std::size_t>(a)]) {
        throw ConfigError(fmt::format("forced action {} is illegal (row {}, step {})", a, b, k));
      }
      return static_cast<std::size_t>(a);
    }
  }
  return 0;
}

}  // namespace

EpisodeBatch rollout(const Environment& env, const PolicyGraph<float>& policy, std::span<const Query> queries,
                     const RolloutSpec& spec) {
  const std::size_t B = queries.size();
  const std::size_t T = env.horizon();
  const auto& clusters = env.clusters();
  EpisodeBatch ep;
  ep.size = B;
  ep.horizon = T;
  ep.queries.assign(queries.begin(), queries.end());
  ep.entities = Matrix<EntityId>(B, T + 1);
  ep.clusters = Matrix<ClusterId>(B, T + 1);
  ep.relations = Matrix<RelationId>(B, T);
  ep.giant_actions = Matrix<std::int32_t>(B, T);
  ep.dwarf_actions = Matrix<std::int32_t>(B, T);
  ep.giant_logp = Matrix<double>(B, T);
  ep.dwarf_logp = Matrix<double>(B, T);
  ep.giant_entropy = Matrix<double>(B, T);
  ep.dwarf_entropy = Matrix<double>(B, T);
  if (B == 0) return ep;

  std::vector<Rng> rngs;
  rngs.reserve(B);
  std::vector<EntityId> entity(B), sources(B);
  std::vector<ClusterId> cluster(B);
  std::vector<RelationId> query_rel(B);
  for (std::size_t b = 0; b < B; ++b) {
    const auto s = env.reset(queries[b]);
    entity[b] = sources[b] = s.entity;
    cluster[b] = s.cluster;
    query_rel[b] = queries[b].relation;
    ep.entities(b, 0) = entity[b];
    ep.clusters(b, 0) = cluster[b];
    rngs.emplace_back(derive_seed(spec.seed, {b}));
  }

  auto hist = init_histories(policy, std::span<const ClusterId>(cluster), std::span<const EntityId>(sources));
  std::vector<std::int32_t> pick_c(B), pick_e(B);
  std::vector<ClusterId> move_c(B);
  std::vector<RelationId> move_r(B);
  std::vector<EntityId> move_e(B);
  std::vector<std::vector<Edge>> lists(B);

  for (std::size_t k = 0; k < T; ++k) {
    const auto gc = giant_candidates(clusters, cluster);
    for (std::size_t b = 0; b < B; ++b) lists[b] = env.dwarf_actions(entity[b], queries[b]);
    const auto dc = dwarf_candidates(lists);

    const auto lp_c = score_giant(policy, std::span<const ClusterId>(cluster), hist.giant.hidden, gc.first, gc.mask);
    const auto lp_e = score_dwarf(policy, std::span<const EntityId>(entity), std::span<const RelationId>(query_rel),
                                  hist.dwarf.hidden, dc.first, dc.second, dc.mask);
    const auto& lpc = lp_c.value();
    const auto& lpe = lp_e.value();
    if (spec.on_step) spec.on_step({k, gc.first, gc.mask, lpc, dc.first, dc.second, dc.mask, lpe});
    for (std::size_t b = 0; b < B; ++b) {
      const auto ic = choose(spec.giant, lpc.row(b), gc.mask.row(b), rngs[b], spec.forced_giant, b, k);
      const auto ie = choose(spec.dwarf, lpe.row(b), dc.mask.row(b), rngs[b], spec.forced_dwarf, b, k);
      pick_c[b] = static_cast<std::int32_t>(ic);
      pick_e[b] = static_cast<std::int32_t>(ie);
      move_c[b] = gc.first(b, ic);
      move_r[b] = dc.first(b, ie);
      move_e[b] = dc.second(b, ie);
    }

    const auto chosen_c = diffnet::pick(lp_c, std::span<const std::int32_t>(pick_c));
    const auto chosen_e = diffnet::pick(lp_e, std::span<const std::int32_t>(pick_e));
    const auto ent_c = diffnet::entropy(lp_c, gc.mask);
    const auto ent_e = diffnet::entropy(lp_e, dc.mask);
    ep.giant_logp_nodes.push_back(chosen_c);
    ep.dwarf_logp_nodes.push_back(chosen_e);
    ep.giant_entropy_nodes.push_back(ent_c);
    ep.dwarf_entropy_nodes.push_back(ent_e);

    for (std::size_t b = 0; b < B; ++b) {
      ep.giant_actions(b, k) = pick_c[b];
      ep.dwarf_actions(b, k) = pick_e[b];
      ep.relations(b, k) = move_r[b];
      ep.giant_logp(b, k) = chosen_c.value()(b, 0);
      ep.dwarf_logp(b, k) = chosen_e.value()(b, 0);
      ep.giant_entropy(b, k) = ent_c.value()(b, 0);
      ep.dwarf_entropy(b, k) = ent_e.value()(b, 0);
      if (move_c[b] != clusters.stop()) cluster[b] = move_c[b];
      entity[b] = move_e[b];
      ep.entities(b, k + 1) = entity[b];
      ep.clusters(b, k + 1) = cluster[b];
    }
    if (k + 1 < T) {
      hist = step_histories(policy, hist, std::span<const ClusterId>(move_c), std::span<const RelationId>(move_r),
                            std::span<const EntityId>(move_e));
    }
  }
  return ep;
}

void write_trajectories_csv(std::ostream& out, const EpisodeBatch& batch, const KnowledgeGraph& kg, bool header) {
  if (header) out << "query,step,giant_cluster,giant_logp,dwarf_relation,dwarf_entity,dwarf_logp\n";
  for (std::size_t b = 0; b < batch.size; ++b) {
    const auto& q = batch.queries[b];
    const std::string query = fmt::format("{}|{}", kg.entities().token(q.source), kg.relations().token(q.relation));
    for (std::size_t k = 0; k < batch.horizon; ++k) {
      out << fmt::format("{},{},{},{:.9g},{},{},{:.9g}\n", query, k + 1, batch.clusters(b, k + 1), batch.giant_logp(b, k),
                         kg.relations().token(batch.relations(b, k)), kg.entities().token(batch.entities(b, k + 1)),
                         batch.dwarf_logp(b, k));
    }
  }
}

}  // namespace dualwalk
