#include "dualwalk/embed.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>

#include "dualwalk/error.hpp"
#include "dualwalk/random.hpp"

namespace dualwalk {

static_assert(std::endian::native == std::endian::little, "embedding files are little-endian");

namespace {

constexpr char kMagic[8] = {'D', 'W', 'E', 'M', 'B', 'E', 'D', '\0'};
constexpr std::uint32_t kVersion = 1;

double norm(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

void project_to_unit_ball(std::span<float> v) {
  const double n = norm(v);
  if (n > 1.0) {
    for (auto& x : v) x = static_cast<float>(x / n);
  }
}

// Inverse rows mirror raw rows with opposite sign, NO_OP stays at the origin.
void derive_augmented_relations(const KnowledgeGraph& kg, Matrix<float>& relations) {
  const auto raw = kg.num_raw_relations();
  if (kg.has_inverse_edges()) {
    for (std::size_t r = 0; r < raw; ++r) {
      auto src = relations.row(r);
      auto dst = relations.row(static_cast<std::size_t>(kg.inverse(static_cast<RelationId>(r))));
      for (std::size_t k = 0; k < src.size(); ++k) dst[k] = -src[k];
    }
  }
  if (kg.has_self_loops()) {
    auto row = relations.row(static_cast<std::size_t>(kg.no_op()));
    std::fill(row.begin(), row.end(), 0.0f);
  }
}

template <typename V>
void write_pod(std::ostream& out, const V& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(V));
}

template <typename V>
V read_pod(std::istream& in) {
  V value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(V));
  if (!in) throw ArtifactError("embedding file is truncated");
  return value;
}

}  // namespace

void EmbeddingStore::refresh_norms() {
  entity_norms.resize(entities.rows);
  for (std::size_t e = 0; e < entities.rows; ++e) entity_norms[e] = norm(entities.row(e));
}

void EmbeddingStore::check_compatible(const KnowledgeGraph& kg) const {
  if (entities.rows != kg.num_entities() || relations.rows != kg.num_relations()) {
    throw ArtifactError(fmt::format(
        "embeddings cover {} entities / {} relations but the graph has {} / {}", entities.rows,
        relations.rows, kg.num_entities(), kg.num_relations()));
  }
}

double transe_distance(const EmbeddingStore& store, EntityId source, RelationId relation, EntityId target) {
  const auto s = store.entity(source);
  const auto r = store.relation(relation);
  const auto o = store.entity(target);
  double sum = 0.0;
  for (std::size_t k = 0; k < store.dim; ++k) {
    const double diff = static_cast<double>(s[k]) + r[k] - o[k];
    sum += diff * diff;
  }
  return std::sqrt(sum);
}

EmbeddingStore train_transe(const KnowledgeGraph& kg, const TransEConfig& config,
                            const TransEProgress& progress) {
  if (config.dim == 0) throw ConfigError("embedding dimension must be positive");
  const auto train = kg.triples(Split::kTrain);
  if (train.empty()) throw ArtifactError("train split is empty");

  const std::size_t d = config.dim;
  EmbeddingStore store;
  store.dim = d;
  store.seed = config.seed;
  store.entities = Matrix<float>(kg.num_entities(), d);
  store.relations = Matrix<float>(kg.num_relations(), d);

  Rng rng(config.seed);
  const double bound = 6.0 / std::sqrt(static_cast<double>(d));
  for (auto& x : store.relations.data) x = static_cast<float>(rng.uniform(-bound, bound));
  for (std::size_t r = 0; r < kg.num_raw_relations(); ++r) {
    auto row = store.relations.row(r);
    const double n = norm(row);
    if (n > 0.0) for (auto& x : row) x = static_cast<float>(x / n);
  }
  for (auto& x : store.entities.data) x = static_cast<float>(rng.uniform(-bound, bound));
  for (std::size_t e = 0; e < store.entities.rows; ++e) project_to_unit_ball(store.entities.row(e));

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto num_entities = kg.num_entities();
  const float lr = static_cast<float>(config.learning_rate);
  std::vector<double> pos_grad(d), neg_grad(d);

  auto residual = [&](EntityId s, RelationId r, EntityId o, std::vector<double>& out) {
    const auto sv = store.entity(s);
    const auto rv = store.relation(r);
    const auto ov = store.entity(o);
    double sum = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      out[k] = static_cast<double>(sv[k]) + rv[k] - ov[k];
      sum += out[k] * out[k];
    }
    return std::sqrt(sum);
  };
  auto apply = [&](EntityId s, RelationId r, EntityId o, const std::vector<double>& residual_vec,
                   double dist, float sign) {
    if (dist <= 0.0) return;
    auto sv = store.entities.row(static_cast<std::size_t>(s));
    auto rv = store.relations.row(static_cast<std::size_t>(r));
    auto ov = store.entities.row(static_cast<std::size_t>(o));
    for (std::size_t k = 0; k < d; ++k) {
      const auto g = static_cast<float>(residual_vec[k] / dist) * lr * sign;
      sv[k] -= g;
      rv[k] -= g;
      ov[k] += g;
    }
  };

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double total = 0.0;
    std::size_t count = 0;
    for (const auto idx : order) {
      const auto& pos = train[idx];
      for (std::size_t n = 0; n < config.negatives; ++n) {
        Triple neg = pos;
        const bool corrupt_head = rng.uniform() < 0.5;
        if (num_entities > 1) {
          EntityId replacement;
          const EntityId original = corrupt_head ? pos.source : pos.target;
          do {
            replacement = static_cast<EntityId>(rng.below(num_entities));
          } while (replacement == original);
          (corrupt_head ? neg.source : neg.target) = replacement;
        }
        const double dp = residual(pos.source, pos.relation, pos.target, pos_grad);
        const double dn = residual(neg.source, neg.relation, neg.target, neg_grad);
        const double loss = config.margin + dp - dn;
        if (!std::isfinite(loss)) {
          throw NumericError(fmt::format("TransE diverged at epoch {} (triple {}, loss {})", epoch, idx, loss));
        }
        ++count;
        if (loss <= 0.0) continue;
        total += loss;
        apply(pos.source, pos.relation, pos.target, pos_grad, dp, 1.0f);
        apply(neg.source, neg.relation, neg.target, neg_grad, dn, -1.0f);
      }
    }
    for (std::size_t e = 0; e < store.entities.rows; ++e) project_to_unit_ball(store.entities.row(e));
    const double mean_loss = count ? total / static_cast<double>(count) : 0.0;
    if (!std::isfinite(mean_loss)) {
      throw NumericError(fmt::format("TransE produced a non-finite loss at epoch {}", epoch));
    }
    if (progress) progress(epoch, mean_loss);
  }

  derive_augmented_relations(kg, store.relations);
  store.refresh_norms();
  return store;
}

void save_embeddings(const EmbeddingStore& store, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint32_t>(store.dim));
  write_pod(out, static_cast<std::uint32_t>(store.entities.rows));
  write_pod(out, static_cast<std::uint32_t>(store.relations.rows));
  write_pod(out, store.seed);
  out.write(reinterpret_cast<const char*>(store.entities.data.data()),
            static_cast<std::streamsize>(store.entities.size() * sizeof(float)));
  out.write(reinterpret_cast<const char*>(store.relations.data.data()),
            static_cast<std::streamsize>(store.relations.size() * sizeof(float)));
  if (!out) throw ArtifactError("failed to write embeddings");
}

void save_embeddings(const EmbeddingStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArtifactError(fmt::format("cannot write '{}'", path.string()));
  save_embeddings(store, out);
}

EmbeddingStore load_embeddings(std::istream& in, const EmbeddingExpectations& expect) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw ArtifactError("not an embedding file");
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion) throw ArtifactError(fmt::format("unsupported embedding file version {}", version));
  EmbeddingStore store;
  store.dim = read_pod<std::uint32_t>(in);
  const auto num_entities = read_pod<std::uint32_t>(in);
  const auto num_relations = read_pod<std::uint32_t>(in);
  store.seed = read_pod<std::uint64_t>(in);

  if (expect.dim && *expect.dim != store.dim) {
    throw ArtifactError(fmt::format("embedding dimension mismatch: file has d={}, expected d={}", store.dim, *expect.dim));
  }
  if (expect.num_entities && *expect.num_entities != num_entities) {
    throw ArtifactError(fmt::format("embedding file covers {} entities, expected {}", num_entities, *expect.num_entities));
  }
  if (expect.num_relations && *expect.num_relations != num_relations) {
    throw ArtifactError(fmt::format("embedding file covers {} relations, expected {}", num_relations, *expect.num_relations));
  }

  store.entities = Matrix<float>(num_entities, store.dim);
  store.relations = Matrix<float>(num_relations, store.dim);
  in.read(reinterpret_cast<char*>(store.entities.data.data()),
          static_cast<std::streamsize>(store.entities.size() * sizeof(float)));
  in.read(reinterpret_cast<char*>(store.relations.data.data()),
          static_cast<std::streamsize>(store.relations.size() * sizeof(float)));
  if (!in) throw ArtifactError("embedding file is truncated");
  for (float x : store.entities.data) {
    if (!std::isfinite(x)) throw ArtifactError("embedding file contains non-finite values");
  }
  store.refresh_norms();
  return store;
}

EmbeddingStore load_embeddings(const std::filesystem::path& path, const EmbeddingExpectations& expect) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError(fmt::format("cannot open embeddings '{}'", path.string()));
  return load_embeddings(in, expect);
}

void write_embeddings_text(const EmbeddingStore& store, const KnowledgeGraph& kg, std::ostream& out) {
  auto dump = [&](const std::string& token, std::span<const float> row) {
    out << token << '\t';
    for (std::size_t k = 0; k < row.size(); ++k) out << (k ? " " : "") << fmt::format("{}", row[k]);
    out << '\n';
  };
  for (std::size_t e = 0; e < store.entities.rows; ++e) dump(kg.entities().token(static_cast<std::int32_t>(e)), store.entities.row(e));
  for (std::size_t r = 0; r < store.relations.rows; ++r) dump(kg.relations().token(static_cast<std::int32_t>(r)), store.relations.row(r));
}

}  // namespace dualwalk
