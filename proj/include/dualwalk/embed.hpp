#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "dualwalk/kg.hpp"
#include "dualwalk/matrix.hpp"

namespace dualwalk {

/// Pretrained entity/relation vectors. Relation rows cover every relation id
/// of the graph, augmented ones included (inverse = negated raw vector,
/// NO_OP = zero vector).
struct EmbeddingStore {
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  Matrix<float> entities;   // |E| x d
  Matrix<float> relations;  // |R| x d
  std::vector<double> entity_norms;

  std::span<const float> entity(EntityId e) const { return entities.row(static_cast<std::size_t>(e)); }
  std::span<const float> relation(RelationId r) const { return relations.row(static_cast<std::size_t>(r)); }

  void refresh_norms();
  /// Throws ArtifactError if the store does not fit `kg`.
  void check_compatible(const KnowledgeGraph& kg) const;
};

struct TransEConfig {
  std::size_t dim = 50;
  double margin = 1.0;
  double learning_rate = 0.01;
  std::size_t epochs = 500;
  std::size_t negatives = 1;
  std::uint64_t seed = 1;
};

/// Called after every epoch with (epoch, mean hinge loss).
using TransEProgress = std::function<void(std::size_t, double)>;

/// Margin-ranking TransE with L2 dissimilarity, trained by plain SGD over the
/// raw train triples. Entity rows are projected onto the unit ball after every
/// epoch. Throws NumericError if the loss turns non-finite.
EmbeddingStore train_transe(const KnowledgeGraph& kg, const TransEConfig& config,
                            const TransEProgress& progress = {});

/// ||s + r - o||_2 for the stored vectors.
double transe_distance(const EmbeddingStore& store, EntityId source, RelationId relation, EntityId target);

void save_embeddings(const EmbeddingStore& store, const std::filesystem::path& path);
void save_embeddings(const EmbeddingStore& store, std::ostream& out);

struct EmbeddingExpectations {
  std::optional<std::size_t> dim;
  std::optional<std::size_t> num_entities;
  std::optional<std::size_t> num_relations;
};

EmbeddingStore load_embeddings(const std::filesystem::path& path, const EmbeddingExpectations& expect = {});
EmbeddingStore load_embeddings(std::istream& in, const EmbeddingExpectations& expect = {});

/// Human-readable dump: one `token<TAB>v1 v2 ...` line per entity, then per relation.
void write_embeddings_text(const EmbeddingStore& store, const KnowledgeGraph& kg, std::ostream& out);

}  // namespace dualwalk
