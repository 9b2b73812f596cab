#pragma once

// Collaborative policy networks for the two agents.
//
// GIANT walks clusters, DWARF walks entities. Each owns an LSTM over its own
// past actions; before every update the previous hidden state is replaced by
// W [own hidden; partner hidden] (W is H x 2H), so each agent conditions on
// the other. Cell states stay private.
//
// Scoring heads (rows are rollouts):
//   GIANT  q = P_c W2 relu(W1 [c_t; h^c]),  score(c') = q . emb(c')
//   DWARF  q = P_e W2 relu(W1 [e_t; r_q; h^e]), score(r', e') = q . [rel(r'); ent(e')]
// where P projects the (2d + H)-wide MLP output onto the 2d action space.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "dualwalk/checkpoint.hpp"
#include "dualwalk/cluster.hpp"
#include "dualwalk/diffnet.hpp"
#include "dualwalk/embed.hpp"
#include "dualwalk/kg.hpp"

namespace dualwalk {

struct PolicyDims {
  std::size_t embed_dim = 50;   // d
  std::size_t hidden = 200;     // H
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;  // augmented relation count (a reserved r_0 row is added)
  std::size_t num_clusters = 0;   // a STOP row is added

  std::size_t head_width() const { return 2 * embed_dim + hidden; }
  bool operator==(const PolicyDims&) const = default;
};

template <typename T>
struct PolicyParameters {
  using Param = diffnet::Parameter<T>;

  PolicyDims dims;
  Param entity;     // |E| x d
  Param relation;   // (|R| + 1) x d, last row is r_0
  Param cluster;    // (N + 1) x 2d, last row is STOP
  Param lstm_c_w, lstm_c_b;
  Param lstm_e_w, lstm_e_b;
  Param share_c, share_e;  // H x 2H: [own | partner]
  Param giant_w1, giant_w2, giant_out;
  Param dwarf_w1, dwarf_w2, dwarf_out;

  PolicyParameters() = default;
  explicit PolicyParameters(const PolicyDims& dims);

  std::vector<Param*> all();
  std::vector<const Param*> all() const;

  RelationId dummy_relation() const { return static_cast<RelationId>(dims.num_relations); }
  ClusterId stop() const { return static_cast<ClusterId>(dims.num_clusters); }

  /// Xavier-uniform matrices and tables, zero biases, forget-gate bias 1.
  void init_random(std::uint64_t seed);
  /// Copies pretrained entity/relation vectors and lifted cluster means into
  /// the policy tables (r_0 and STOP keep their random rows).
  void warm_start(const EmbeddingStore& store, const ClusterMap& clusters);

  /// Zeros the partner half of both sharing projections.
  void isolate_agents();
  void zero_partner_grads();

  template <typename U>
  PolicyParameters<U> cast() const;
};

/// Shape for a given graph, clustering and model size.
PolicyDims policy_dims(const KnowledgeGraph& kg, const ClusterMap& clusters, std::size_t embed_dim,
                       std::size_t hidden);

/// Parameters bound to one tape.
template <typename T>
struct PolicyGraph {
  using V = diffnet::Var<T>;

  diffnet::Tape<T>* tape = nullptr;
  PolicyDims dims;
  V entity, relation, cluster;
  V lstm_c_w, lstm_c_b, lstm_e_w, lstm_e_b;
  V share_c, share_e;
  V giant_w1, giant_w2, giant_out;
  V dwarf_w1, dwarf_w2, dwarf_out;
};

template <typename T>
PolicyGraph<T> bind(diffnet::Tape<T>& tape, PolicyParameters<T>& params);

template <typename T>
struct AgentHistories {
  diffnet::LstmState<T> giant;
  diffnet::LstmState<T> dwarf;
  std::size_t t = 0;
};

/// h_0: GIANT reads its start cluster, DWARF reads [r_0; e_s], both from a zero state.
template <typename T>
AgentHistories<T> init_histories(const PolicyGraph<T>& g, std::span<const ClusterId> start_clusters,
                                 std::span<const EntityId> sources);

/// Advances both agents by their last actions (a_c: cluster id or STOP,
/// a_e: relation/entity of the edge taken).
template <typename T>
AgentHistories<T> step_histories(const PolicyGraph<T>& g, const AgentHistories<T>& prev,
                                 std::span<const ClusterId> giant_actions, std::span<const RelationId> dwarf_relations,
                                 std::span<const EntityId> dwarf_entities);

/// Log-probabilities over padded candidate clusters (B x A); mask marks real slots.
template <typename T>
diffnet::Var<T> score_giant(const PolicyGraph<T>& g, std::span<const ClusterId> current,
                            diffnet::Var<T> hidden, const diffnet::IndexMatrix& candidates,
                            const diffnet::Mask& mask);

/// Log-probabilities over padded candidate edges (B x A).
template <typename T>
diffnet::Var<T> score_dwarf(const PolicyGraph<T>& g, std::span<const EntityId> current,
                            std::span<const RelationId> query_relations, diffnet::Var<T> hidden,
                            const diffnet::IndexMatrix& candidate_relations,
                            const diffnet::IndexMatrix& candidate_entities, const diffnet::Mask& mask);

// ---- persistence -----------------------------------------------------------

Checkpoint to_checkpoint(const PolicyParameters<float>& params, nlohmann::json manifest = nlohmann::json::object());
PolicyParameters<float> from_checkpoint(const Checkpoint& ckpt);
void save_policy(const PolicyParameters<float>& params, const std::filesystem::path& path,
                 nlohmann::json manifest = nlohmann::json::object());
PolicyParameters<float> load_policy(const std::filesystem::path& path, nlohmann::json* manifest = nullptr);

}  // namespace dualwalk
