#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "dualwalk/cluster.hpp"
#include "dualwalk/embed.hpp"
#include "dualwalk/env.hpp"
#include "dualwalk/kg.hpp"

namespace dualwalk {

/// Known answers per (source, relation).
class AnswerIndex {
 public:
  AnswerIndex() = default;
  explicit AnswerIndex(std::span<const Triple> triples) { add(triples); }
  void add(std::span<const Triple> triples);

  const std::set<EntityId>& answers(EntityId source, RelationId relation) const;
  bool contains(EntityId source, RelationId relation, EntityId target) const;

 private:
  std::map<std::pair<EntityId, RelationId>, std::set<EntityId>> index_;
};

struct TerminalRewards {
  int cluster = 0;  // r_c
  int entity = 0;   // r_e
};

/// r_e = 1 iff the final entity answers the query; r_c = 1 iff the final
/// cluster holds any answer.
TerminalRewards default_rewards(EntityId final_entity, ClusterId final_cluster, const std::set<EntityId>& answers,
                                const ClusterMap& clusters);

/// Cosine between a cluster's d-dim mean and an entity's pretrained vector.
/// Zero-norm inputs give 0 and bump `degenerate` when supplied.
double phi(const ClusterMap& clusters, ClusterId c, const EmbeddingStore& store, EntityId e,
           std::size_t* degenerate = nullptr);

/// Per-step rewards of one rollout for steps t = 1..T.
struct RewardVector {
  TerminalRewards terminal;
  std::vector<double> phi;
  std::vector<double> giant;  // R_c,t
  std::vector<double> dwarf;  // R_e,t
};

/// R_c,t = r_c + phi_t * r_e and R_e,t = r_e + phi_t * r_c.
RewardVector mutual_rewards(TerminalRewards terminal, std::span<const double> phi);

/// Rewards for every rollout of a batch; phi is taken at the (cluster, entity)
/// pair visited after each step. With `use_phi` false every phi_t is 0.
std::vector<RewardVector> compute_rewards(const EpisodeBatch& batch, const AnswerIndex& answers,
                                          const ClusterMap& clusters, const EmbeddingStore& store, bool use_phi,
                                          std::size_t* degenerate = nullptr);

/// Fraction of rollouts whose final DWARF reward is positive.
double positive_reward_rate(std::span<const RewardVector> rewards);

/// CSV rows (rollout, t, phi, R_c, R_e).
void write_rewards_csv(std::ostream& out, std::span<const RewardVector> rewards, bool header = true);

}  // namespace dualwalk
