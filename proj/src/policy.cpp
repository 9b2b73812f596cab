#include "dualwalk/policy.hpp"

#include <array>
#include <cmath>

#include <fmt/format.h>

#include "dualwalk/error.hpp"
#include "dualwalk/random.hpp"

namespace dualwalk {

using diffnet::IndexMatrix;
using diffnet::LstmState;
using diffnet::Mask;
using diffnet::Var;

template <typename T>
PolicyParameters<T>::PolicyParameters(const PolicyDims& d) : dims(d) {
  if (d.embed_dim == 0 || d.hidden == 0) throw ConfigError("policy dimensions must be positive");
  const std::size_t e = d.embed_dim, h = d.hidden, w = d.head_width();
  entity = Param("entity", d.num_entities, e);
  relation = Param("relation", d.num_relations + 1, e);
  cluster = Param("cluster", d.num_clusters + 1, 2 * e);
  lstm_c_w = Param("lstm_c.weight", 4 * h, 2 * e + h);
  lstm_c_b = Param("lstm_c.bias", 1, 4 * h);
  lstm_e_w = Param("lstm_e.weight", 4 * h, 2 * e + h);
  lstm_e_b = Param("lstm_e.bias", 1, 4 * h);
  share_c = Param("share_c", h, 2 * h);
  share_e = Param("share_e", h, 2 * h);
  giant_w1 = Param("giant.w1", w, w);
  giant_w2 = Param("giant.w2", w, w);
  giant_out = Param("giant.out", 2 * e, w);
  dwarf_w1 = Param("dwarf.w1", w, w);
  dwarf_w2 = Param("dwarf.w2", w, w);
  dwarf_out = Param("dwarf.out", 2 * e, w);
}

template <typename T>
std::vector<diffnet::Parameter<T>*> PolicyParameters<T>::all() {
  return {&entity,  &relation, &cluster,  &lstm_c_w, &lstm_c_b,  &lstm_e_w, &lstm_e_b, &share_c,
          &share_e, &giant_w1, &giant_w2, &giant_out, &dwarf_w1, &dwarf_w2, &dwarf_out};
}

template <typename T>
std::vector<const diffnet::Parameter<T>*> PolicyParameters<T>::all() const {
  auto* self = const_cast<PolicyParameters*>(this);
  std::vector<const Param*> out;
  for (auto* p : self->all()) out.push_back(p);
  return out;
}

template <typename T>
void PolicyParameters<T>::init_random(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x706f6c6963ULL}));
  for (auto* p : all()) {
    auto& m = p->value;
    if (m.rows == 1) {
      std::fill(m.data.begin(), m.data.end(), T(0));
      continue;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(m.rows + m.cols));
    for (auto& v : m.data) v = static_cast<T>(rng.uniform(-bound, bound));
  }
  for (auto* b : {&lstm_c_b, &lstm_e_b}) {
    for (std::size_t j = dims.hidden; j < 2 * dims.hidden; ++j) b->value.data[j] = T(1);
  }
  for (auto* p : all()) p->zero_grad();
}

template <typename T>
void PolicyParameters<T>::warm_start(const EmbeddingStore& store, const ClusterMap& clusters) {
  if (store.dim != dims.embed_dim) {
    throw ConfigError(fmt::format("pretrained d={} does not match policy d={}", store.dim, dims.embed_dim));
  }
  if (store.entities.rows != dims.num_entities || store.relations.rows != dims.num_relations ||
      clusters.num_clusters() != dims.num_clusters) {
    throw ArtifactError("pretrained artifacts do not match the policy shape");
  }
  for (std::size_t i = 0; i < store.entities.size(); ++i) entity.value.data[i] = static_cast<T>(store.entities.data[i]);
  for (std::size_t i = 0; i < store.relations.size(); ++i) relation.value.data[i] = static_cast<T>(store.relations.data[i]);
  for (std::size_t c = 0; c < dims.num_clusters; ++c) {
    const auto lifted = clusters.cluster_embedding(static_cast<ClusterId>(c));
    auto row = cluster.value.row(c);
    for (std::size_t k = 0; k < row.size(); ++k) row[k] = static_cast<T>(lifted[k]);
  }
}

template <typename T>
void PolicyParameters<T>::isolate_agents() {
  for (auto* p : {&share_c, &share_e}) {
    for (std::size_t r = 0; r < dims.hidden; ++r) {
      for (std::size_t c = dims.hidden; c < 2 * dims.hidden; ++c) p->value(r, c) = T(0);
    }
  }
}

template <typename T>
void PolicyParameters<T>::zero_partner_grads() {
  for (auto* p : {&share_c, &share_e}) {
    for (std::size_t r = 0; r < dims.hidden; ++r) {
      for (std::size_t c = dims.hidden; c < 2 * dims.hidden; ++c) p->grad(r, c) = T(0);
    }
  }
}

template <typename T>
template <typename U>
PolicyParameters<U> PolicyParameters<T>::cast() const {
  PolicyParameters<U> out(dims);
  const auto src = all();
  const auto dst = out.all();
  for (std::size_t i = 0; i < src.size(); ++i) {
    for (std::size_t k = 0; k < src[i]->value.size(); ++k) dst[i]->value.data[k] = static_cast<U>(src[i]->value.data[k]);
  }
  return out;
}

PolicyDims policy_dims(const KnowledgeGraph& kg, const ClusterMap& clusters, std::size_t embed_dim,
                       std::size_t hidden) {
  PolicyDims d;
  d.embed_dim = embed_dim;
  d.hidden = hidden;
  d.num_entities = kg.num_entities();
  d.num_relations = kg.num_relations();
  d.num_clusters = clusters.num_clusters();
  return d;
}

template <typename T>
PolicyGraph<T> bind(diffnet::Tape<T>& tape, PolicyParameters<T>& p) {
  PolicyGraph<T> g;
  g.tape = &tape;
  g.dims = p.dims;
  g.entity = tape.parameter(p.entity);
  g.relation = tape.parameter(p.relation);
  g.cluster = tape.parameter(p.cluster);
  g.lstm_c_w = tape.parameter(p.lstm_c_w);
  g.lstm_c_b = tape.parameter(p.lstm_c_b);
  g.lstm_e_w = tape.parameter(p.lstm_e_w);
  g.lstm_e_b = tape.parameter(p.lstm_e_b);
  g.share_c = tape.parameter(p.share_c);
  g.share_e = tape.parameter(p.share_e);
  g.giant_w1 = tape.parameter(p.giant_w1);
  g.giant_w2 = tape.parameter(p.giant_w2);
  g.giant_out = tape.parameter(p.giant_out);
  g.dwarf_w1 = tape.parameter(p.dwarf_w1);
  g.dwarf_w2 = tape.parameter(p.dwarf_w2);
  g.dwarf_out = tape.parameter(p.dwarf_out);
  return g;
}

namespace {

template <typename T>
Var<T> concat(std::initializer_list<Var<T>> parts) {
  return diffnet::concat_cols<T>(std::span<const Var<T>>(parts.begin(), parts.size()));
}

template <typename T>
LstmState<T> zero_state(diffnet::Tape<T>& tape, std::size_t batch, std::size_t hidden) {
  return {tape.constant(Matrix<T>(batch, hidden)), tape.constant(Matrix<T>(batch, hidden))};
}

}  // namespace

template <typename T>
AgentHistories<T> init_histories(const PolicyGraph<T>& g, std::span<const ClusterId> start_clusters,
                                 std::span<const EntityId> sources) {
  if (start_clusters.size() != sources.size()) throw_shape_error("init_histories", "batch sizes differ");
  auto& tape = *g.tape;
  const std::size_t batch = sources.size();
  const std::vector<RelationId> dummy(batch, static_cast<RelationId>(g.dims.num_relations));

  AgentHistories<T> h;
  const auto c_in = diffnet::gather_rows(g.cluster, start_clusters);
  h.giant = diffnet::lstm_cell(c_in, zero_state(tape, batch, g.dims.hidden), g.lstm_c_w, g.lstm_c_b);
  const auto e_in = concat<T>({diffnet::gather_rows(g.relation, std::span<const std::int32_t>(dummy)),
                               diffnet::gather_rows(g.entity, sources)});
  h.dwarf = diffnet::lstm_cell(e_in, zero_state(tape, batch, g.dims.hidden), g.lstm_e_w, g.lstm_e_b);
  h.t = 0;
  return h;
}

template <typename T>
AgentHistories<T> step_histories(const PolicyGraph<T>& g, const AgentHistories<T>& prev,
                                 std::span<const ClusterId> giant_actions, std::span<const RelationId> dwarf_relations,
                                 std::span<const EntityId> dwarf_entities) {
  const auto shared_c = diffnet::linear(concat<T>({prev.giant.hidden, prev.dwarf.hidden}), g.share_c);
  const auto shared_e = diffnet::linear(concat<T>({prev.dwarf.hidden, prev.giant.hidden}), g.share_e);

  AgentHistories<T> next;
  const auto a_c = diffnet::gather_rows(g.cluster, giant_actions);
  next.giant = diffnet::lstm_cell(a_c, LstmState<T>{shared_c, prev.giant.cell}, g.lstm_c_w, g.lstm_c_b);
  const auto a_e = concat<T>({diffnet::gather_rows(g.relation, dwarf_relations), diffnet::gather_rows(g.entity, dwarf_entities)});
  next.dwarf = diffnet::lstm_cell(a_e, LstmState<T>{shared_e, prev.dwarf.cell}, g.lstm_e_w, g.lstm_e_b);
  next.t = prev.t + 1;
  return next;
}

template <typename T>
Var<T> score_giant(const PolicyGraph<T>& g, std::span<const ClusterId> current, Var<T> hidden,
                   const IndexMatrix& candidates, const Mask& mask) {
  const auto x = concat<T>({diffnet::gather_rows(g.cluster, current), hidden});
  const auto q = diffnet::linear(diffnet::mlp2_relu(x, g.giant_w1, g.giant_w2), g.giant_out);
  const auto scores = diffnet::dot_gather(q, 0, g.cluster, candidates);
  return diffnet::masked_log_softmax(scores, mask);
}

template <typename T>
Var<T> score_dwarf(const PolicyGraph<T>& g, std::span<const EntityId> current, std::span<const RelationId> query_relations,
                   Var<T> hidden, const IndexMatrix& candidate_relations, const IndexMatrix& candidate_entities,
                   const Mask& mask) {
  const auto x = concat<T>({diffnet::gather_rows(g.entity, current), diffnet::gather_rows(g.relation, query_relations), hidden});
  const auto q = diffnet::linear(diffnet::mlp2_relu(x, g.dwarf_w1, g.dwarf_w2), g.dwarf_out);
  const auto scores = diffnet::add(diffnet::dot_gather(q, 0, g.relation, candidate_relations),
                                   diffnet::dot_gather(q, g.dims.embed_dim, g.entity, candidate_entities));
  return diffnet::masked_log_softmax(scores, mask);
}

// ---- persistence -----------------------------------------------------------

Checkpoint to_checkpoint(const PolicyParameters<float>& params, nlohmann::json manifest) {
  Checkpoint ckpt;
  manifest["policy"] = {{"embed_dim", params.dims.embed_dim},
                        {"hidden", params.dims.hidden},
                        {"num_entities", params.dims.num_entities},
                        {"num_relations", params.dims.num_relations},
                        {"num_clusters", params.dims.num_clusters}};
  ckpt.manifest = std::move(manifest);
  for (const auto* p : params.all()) ckpt.tensors.push_back({p->name, p->value});
  return ckpt;
}

PolicyParameters<float> from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.manifest.contains("policy")) throw ArtifactError("checkpoint manifest lacks the policy shape");
  const auto& m = ckpt.manifest.at("policy");
  PolicyDims d;
  try {
    d.embed_dim = m.at("embed_dim").get<std::size_t>();
    d.hidden = m.at("hidden").get<std::size_t>();
    d.num_entities = m.at("num_entities").get<std::size_t>();
    d.num_relations = m.at("num_relations").get<std::size_t>();
    d.num_clusters = m.at("num_clusters").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(fmt::format("checkpoint policy shape is malformed: {}", e.what()));
  }
  PolicyParameters<float> params(d);
  for (auto* p : params.all()) {
    const auto& value = ckpt.at(p->name);
    if (!value.same_shape(p->value)) {
      throw ArtifactError(fmt::format("checkpoint tensor '{}' is {}x{}, expected {}x{}", p->name, value.rows,
                                      value.cols, p->value.rows, p->value.cols));
    }
    p->value = value;
  }
  return params;
}

void save_policy(const PolicyParameters<float>& params, const std::filesystem::path& path, nlohmann::json manifest) {
  save_checkpoint(to_checkpoint(params, std::move(manifest)), path);
}

PolicyParameters<float> load_policy(const std::filesystem::path& path, nlohmann::json* manifest) {
  auto ckpt = load_checkpoint(path);
  auto params = from_checkpoint(ckpt);
  if (manifest) *manifest = std::move(ckpt.manifest);
  return params;
}

#define INSTANTIATE(T)                                                                                     \
  template struct PolicyParameters<T>;                                                                      \
  template PolicyGraph<T> bind<T>(diffnet::Tape<T>&, PolicyParameters<T>&);                                 \
  template AgentHistories<T> init_histories<T>(const PolicyGraph<T>&, std::span<const ClusterId>,           \
                                               std::span<const EntityId>);                                  \
  template AgentHistories<T> step_histories<T>(const PolicyGraph<T>&, const AgentHistories<T>&,             \
                                               std::span<const ClusterId>, std::span<const RelationId>,     \
                                               std::span<const EntityId>);                                  \
  template Var<T> score_giant<T>(const PolicyGraph<T>&, std::span<const ClusterId>, Var<T>,                 \
                                 const IndexMatrix&, const Mask&);                                          \
  template Var<T> score_dwarf<T>(const PolicyGraph<T>&, std::span<const EntityId>,                          \
                                 std::span<const RelationId>, Var<T>, const IndexMatrix&, const IndexMatrix&, \
                                 const Mask&);
INSTANTIATE(float)
INSTANTIATE(double)
#undef INSTANTIATE

template PolicyParameters<double> PolicyParameters<float>::cast<double>() const;
template PolicyParameters<float> PolicyParameters<double>::cast<float>() const;
template PolicyParameters<float> PolicyParameters<float>::cast<float>() const;
template PolicyParameters<double> PolicyParameters<double>::cast<double>() const;

}  // namespace dualwalk
