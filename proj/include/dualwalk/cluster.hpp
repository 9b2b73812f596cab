#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "dualwalk/embed.hpp"
#include "dualwalk/kg.hpp"
#include "dualwalk/matrix.hpp"

namespace dualwalk {

enum class KMeansInit { kPlusPlus, kRandom };

struct KMeansConfig {
  std::size_t max_iterations = 100;
  double tolerance = 1e-4;  // relative centroid shift
  std::uint64_t seed = 1;
  KMeansInit init = KMeansInit::kPlusPlus;
  bool parallel = true;  // use the OpenMP assignment kernel
};

struct KMeansResult {
  std::vector<ClusterId> assignment;
  Matrix<double> centroids;
  std::vector<double> wcss_history;  // within-cluster sum of squares after each iteration
  std::size_t iterations = 0;
  std::size_t repairs = 0;  // empty clusters reseeded
};

/// Lloyd's algorithm on the rows of `points`. Empty clusters are reseeded
/// with the point farthest from its centroid. Throws ConfigError unless
/// 2 <= k <= rows.
KMeansResult kmeans(const Matrix<float>& points, std::size_t k, const KMeansConfig& config);

double within_cluster_ss(const Matrix<float>& points, std::span<const ClusterId> assignment,
                         const Matrix<double>& centroids);

/// Directed cluster adjacency: c1 -> c2 iff some indexed entity edge leaves a
/// member of c1 for a member of c2 (c1 != c2). Lists are sorted.
std::vector<std::vector<ClusterId>> build_cluster_graph(const KnowledgeGraph& kg,
                                                        std::span<const ClusterId> assignment,
                                                        std::size_t num_clusters);

/// Entity -> cluster assignment plus the cluster graph and cluster vectors.
///
/// The GIANT action id STOP equals num_clusters(). Every action list starts
/// with STOP, followed by the sorted neighbour clusters.
class ClusterMap {
 public:
  ClusterMap() = default;
  ClusterMap(const KnowledgeGraph& kg, const EmbeddingStore& store, std::vector<ClusterId> assignment,
             std::size_t num_clusters);

  std::size_t num_clusters() const { return num_clusters_; }
  std::size_t embedding_dim() const { return means_.cols; }
  ClusterId stop() const { return static_cast<ClusterId>(num_clusters_); }
  ClusterId cluster_of(EntityId e) const { return assignment_.at(static_cast<std::size_t>(e)); }
  std::span<const ClusterId> assignment() const { return assignment_; }
  std::span<const EntityId> members(ClusterId c) const { return members_.at(static_cast<std::size_t>(c)); }
  std::span<const ClusterId> actions(ClusterId c) const { return actions_.at(static_cast<std::size_t>(c)); }
  bool connected(ClusterId from, ClusterId to) const;

  /// Mean of the members' pretrained embeddings (d values).
  std::span<const float> mean_embedding(ClusterId c) const { return means_.row(static_cast<std::size_t>(c)); }
  /// The mean lifted to 2d by concatenating it with itself.
  std::vector<float> cluster_embedding(ClusterId c) const;
  const Matrix<float>& means() const { return means_; }

  /// Re-derives the cluster graph from the current (possibly ablated) adjacency.
  void rebuild_graph(const KnowledgeGraph& kg);

  void write_assignment(std::ostream& out, const KnowledgeGraph& kg) const;
  void write_graph(std::ostream& out) const;
  static ClusterMap read_assignment(const std::filesystem::path& path, const KnowledgeGraph& kg,
                                    const EmbeddingStore& store);

 private:
  std::size_t num_clusters_ = 0;
  std::vector<ClusterId> assignment_;
  std::vector<std::vector<EntityId>> members_;
  std::vector<std::vector<ClusterId>> actions_;
  Matrix<float> means_;
};

/// k-means over the entity rows of `store` followed by cluster-graph construction.
ClusterMap cluster_entities(const KnowledgeGraph& kg, const EmbeddingStore& store, std::size_t num_clusters,
                            const KMeansConfig& config, KMeansResult* diagnostics = nullptr);

}  // namespace dualwalk
