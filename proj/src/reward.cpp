#include "dualwalk/reward.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

namespace dualwalk {

void AnswerIndex::add(std::span<const Triple> triples) {
  for (const auto& t : triples) index_[{t.source, t.relation}].insert(t.target);
}

const std::set<EntityId>& AnswerIndex::answers(EntityId source, RelationId relation) const {
  static const std::set<EntityId> kEmpty;
  const auto it = index_.find({source, relation});
  return it == index_.end() ? kEmpty : it->second;
}

bool AnswerIndex::contains(EntityId source, RelationId relation, EntityId target) const {
  return answers(source, relation).count(target) > 0;
}

TerminalRewards default_rewards(EntityId final_entity, ClusterId final_cluster, const std::set<EntityId>& answers,
                                const ClusterMap& clusters) {
  TerminalRewards r;
  r.entity = answers.count(final_entity) ? 1 : 0;
  for (auto a : answers) {
    if (clusters.cluster_of(a) == final_cluster) {
      r.cluster = 1;
      break;
    }
  }
  return r;
}

double phi(const ClusterMap& clusters, ClusterId c, const EmbeddingStore& store, EntityId e, std::size_t* degenerate) {
  const auto cv = clusters.mean_embedding(c);
  const auto ev = store.entity(e);
  double dot = 0.0, nc = 0.0, ne = 0.0;
  for (std::size_t k = 0; k < cv.size(); ++k) {
    dot += static_cast<double>(cv[k]) * ev[k];
    nc += static_cast<double>(cv[k]) * cv[k];
    ne += static_cast<double>(ev[k]) * ev[k];
  }
  if (nc == 0.0 || ne == 0.0) {
    if (degenerate) ++*degenerate;
    return 0.0;
  }
  const double cosine = dot / (std::sqrt(nc) * std::sqrt(ne));
  return std::clamp(cosine, -1.0, 1.0);
}

RewardVector mutual_rewards(TerminalRewards terminal, std::span<const double> phi_values) {
  RewardVector out;
  out.terminal = terminal;
  out.phi.assign(phi_values.begin(), phi_values.end());
  out.giant.resize(phi_values.size());
  out.dwarf.resize(phi_values.size());
  for (std::size_t t = 0; t < phi_values.size(); ++t) {
    out.giant[t] = terminal.cluster + phi_values[t] * terminal.entity;
    out.dwarf[t] = terminal.entity + phi_values[t] * terminal.cluster;
  }
  return out;
}

std::vector<RewardVector> compute_rewards(const EpisodeBatch& batch, const AnswerIndex& answers,
                                          const ClusterMap& clusters, const EmbeddingStore& store, bool use_phi,
                                          std::size_t* degenerate) {
  std::vector<RewardVector> out;
  out.reserve(batch.size);
  std::vector<double> phis(batch.horizon);
  for (std::size_t b = 0; b < batch.size; ++b) {
    const auto& q = batch.queries[b];
    const auto terminal = default_rewards(batch.final_entity(b), batch.final_cluster(b),
                                          answers.answers(q.source, q.relation), clusters);
    for (std::size_t t = 0; t < batch.horizon; ++t) {
      phis[t] = use_phi ? phi(clusters, batch.clusters(b, t + 1), store, batch.entities(b, t + 1), degenerate) : 0.0;
    }
    out.push_back(mutual_rewards(terminal, phis));
  }
  return out;
}

double positive_reward_rate(std::span<const RewardVector> rewards) {
  if (rewards.empty()) return 0.0;
  std::size_t positive = 0;
  for (const auto& r : rewards) {
    if (!r.dwarf.empty() && r.dwarf.back() > 0.0) ++positive;
  }
  return static_cast<double>(positive) / static_cast<double>(rewards.size());
}

void write_rewards_csv(std::ostream& out, std::span<const RewardVector> rewards, bool header) {
  if (header) out << "rollout,t,phi,reward_giant,reward_dwarf\n";
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    for (std::size_t t = 0; t < rewards[i].phi.size(); ++t) {
      out << fmt::format("{},{},{:.9g},{:.9g},{:.9g}\n", i, t + 1, rewards[i].phi[t], rewards[i].giant[t],
                         rewards[i].dwarf[t]);
    }
  }
}

}  // namespace dualwalk
