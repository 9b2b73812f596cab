#include "dualwalk/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "dualwalk/error.hpp"
#include "dualwalk/kernels.hpp"
#include "dualwalk/random.hpp"

namespace dualwalk {

namespace {

double squared_distance(std::span<const float> p, std::span<const double> c) {
  double acc = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double diff = static_cast<double>(p[j]) - c[j];
    acc += diff * diff;
  }
  return acc;
}

Matrix<double> seed_centroids(const Matrix<float>& points, std::size_t k, const KMeansConfig& config) {
  const std::size_t n = points.rows;
  const std::size_t d = points.cols;
  Rng rng(config.seed);
  Matrix<double> centroids(k, d);
  std::vector<bool> chosen(n, false);
  auto take = [&](std::size_t c, std::size_t p) {
    chosen[p] = true;
    for (std::size_t j = 0; j < d; ++j) centroids(c, j) = points(p, j);
  };

  if (config.init == KMeansInit::kRandom) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    for (std::size_t c = 0; c < k; ++c) take(c, order[c]);
    return centroids;
  }

  take(0, rng.below(n));
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      d2[p] = std::min(d2[p], squared_distance(points.row(p), centroids.row(c - 1)));
      total += d2[p];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (std::size_t p = 0; p < n; ++p) {
        if (d2[p] <= 0.0) continue;
        target -= d2[p];
        pick = p;
        if (target < 0.0) break;
      }
    }
    if (pick == n) {
      // Every remaining point coincides with a centroid: fall back to an unused point.
      std::vector<std::size_t> unused;
      for (std::size_t p = 0; p < n; ++p) {
        if (!chosen[p]) unused.push_back(p);
      }
      pick = unused[rng.below(unused.size())];
    }
    take(c, pick);
  }
  return centroids;
}

}  // namespace

double within_cluster_ss(const Matrix<float>& points, std::span<const ClusterId> assignment,
                         const Matrix<double>& centroids) {
  double total = 0.0;
  for (std::size_t p = 0; p < points.rows; ++p) {
    total += squared_distance(points.row(p), centroids.row(static_cast<std::size_t>(assignment[p])));
  }
  return total;
}

KMeansResult kmeans(const Matrix<float>& points, std::size_t k, const KMeansConfig& config) {
  const std::size_t n = points.rows;
  const std::size_t d = points.cols;
  if (k < 2) throw ConfigError(fmt::format("k-means needs at least 2 clusters, got {}", k));
  if (k > n) throw ConfigError(fmt::format("cannot form {} clusters from {} points", k, n));

  KMeansResult result;
  result.centroids = seed_centroids(points, k, config);
  result.assignment.assign(n, 0);
  std::vector<double> dist2(n, 0.0);
  std::vector<std::size_t> sizes(k, 0);

  for (std::size_t it = 0; it < config.max_iterations; ++it) {
    if (config.parallel) {
      kernels::parallel::nearest_centroid(points.data, result.centroids.data, result.assignment, dist2, n, k, d);
    } else {
      kernels::serial::nearest_centroid(points.data, result.centroids.data, result.assignment, dist2, n, k, d);
    }

    std::fill(sizes.begin(), sizes.end(), 0);
    for (auto c : result.assignment) ++sizes[static_cast<std::size_t>(c)];
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] != 0) continue;
      std::size_t far = n;
      for (std::size_t p = 0; p < n; ++p) {
        if (sizes[static_cast<std::size_t>(result.assignment[p])] < 2) continue;
        if (far == n || dist2[p] > dist2[far]) far = p;
      }
      --sizes[static_cast<std::size_t>(result.assignment[far])];
      result.assignment[far] = static_cast<ClusterId>(c);
      dist2[far] = 0.0;
      sizes[c] = 1;
      ++result.repairs;
    }

    Matrix<double> updated(k, d, 0.0);
    for (std::size_t p = 0; p < n; ++p) {
      auto row = updated.row(static_cast<std::size_t>(result.assignment[p]));
      for (std::size_t j = 0; j < d; ++j) row[j] += points(p, j);
    }
    double shift = 0.0;
    double scale = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t j = 0; j < d; ++j) {
        updated(c, j) /= static_cast<double>(sizes[c]);
        const double delta = updated(c, j) - result.centroids(c, j);
        shift += delta * delta;
        scale += result.centroids(c, j) * result.centroids(c, j);
      }
    }
    result.centroids = std::move(updated);
    result.wcss_history.push_back(within_cluster_ss(points, result.assignment, result.centroids));
    result.iterations = it + 1;
    if (std::sqrt(shift) <= config.tolerance * std::max(std::sqrt(scale), 1e-12)) break;
  }
  return result;
}

std::vector<std::vector<ClusterId>> build_cluster_graph(const KnowledgeGraph& kg,
                                                        std::span<const ClusterId> assignment,
                                                        std::size_t num_clusters) {
  std::vector<std::vector<ClusterId>> graph(num_clusters);
  for (std::size_t e = 0; e < kg.num_entities(); ++e) {
    const auto from = assignment[e];
    for (const auto& edge : kg.adjacency(static_cast<EntityId>(e))) {
      const auto to = assignment[static_cast<std::size_t>(edge.target)];
      if (to != from) graph[static_cast<std::size_t>(from)].push_back(to);
    }
  }
  for (auto& list : graph) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  return graph;
}

ClusterMap::ClusterMap(const KnowledgeGraph& kg, const EmbeddingStore& store, std::vector<ClusterId> assignment,
                       std::size_t num_clusters)
    : num_clusters_(num_clusters), assignment_(std::move(assignment)) {
  if (assignment_.size() != kg.num_entities()) {
    throw ArtifactError(fmt::format("cluster assignment covers {} entities, graph has {}", assignment_.size(),
                                    kg.num_entities()));
  }
  store.check_compatible(kg);
  members_.assign(num_clusters_, {});
  for (std::size_t e = 0; e < assignment_.size(); ++e) {
    const auto c = assignment_[e];
    if (c < 0 || static_cast<std::size_t>(c) >= num_clusters_) {
      throw ArtifactError(fmt::format("entity {} assigned to invalid cluster {}", e, c));
    }
    members_[static_cast<std::size_t>(c)].push_back(static_cast<EntityId>(e));
  }
  means_ = Matrix<float>(num_clusters_, store.dim);
  for (std::size_t c = 0; c < num_clusters_; ++c) {
    if (members_[c].empty()) throw ArtifactError(fmt::format("cluster {} is empty", c));
    std::vector<double> sum(store.dim, 0.0);
    for (auto e : members_[c]) {
      const auto v = store.entity(e);
      for (std::size_t j = 0; j < store.dim; ++j) sum[j] += v[j];
    }
    for (std::size_t j = 0; j < store.dim; ++j) {
      means_(c, j) = static_cast<float>(sum[j] / static_cast<double>(members_[c].size()));
    }
  }
  rebuild_graph(kg);
}

void ClusterMap::rebuild_graph(const KnowledgeGraph& kg) {
  auto graph = build_cluster_graph(kg, assignment_, num_clusters_);
  actions_.assign(num_clusters_, {});
  for (std::size_t c = 0; c < num_clusters_; ++c) {
    actions_[c].reserve(graph[c].size() + 1);
    actions_[c].push_back(stop());
    actions_[c].insert(actions_[c].end(), graph[c].begin(), graph[c].end());
  }
}

bool ClusterMap::connected(ClusterId from, ClusterId to) const {
  const auto list = actions(from);
  return std::binary_search(list.begin() + 1, list.end(), to);
}

std::vector<float> ClusterMap::cluster_embedding(ClusterId c) const {
  const auto mean = mean_embedding(c);
  std::vector<float> lifted(mean.begin(), mean.end());
  lifted.insert(lifted.end(), mean.begin(), mean.end());
  return lifted;
}

void ClusterMap::write_assignment(std::ostream& out, const KnowledgeGraph& kg) const {
  for (std::size_t e = 0; e < assignment_.size(); ++e) {
    out << kg.entities().token(static_cast<EntityId>(e)) << '\t' << assignment_[e] << '\n';
  }
}

void ClusterMap::write_graph(std::ostream& out) const {
  for (std::size_t c = 0; c < num_clusters_; ++c) {
    for (std::size_t i = 1; i < actions_[c].size(); ++i) out << c << '\t' << actions_[c][i] << '\n';
  }
}

ClusterMap ClusterMap::read_assignment(const std::filesystem::path& path, const KnowledgeGraph& kg,
                                       const EmbeddingStore& store) {
  std::ifstream in(path);
  if (!in) throw ArtifactError(fmt::format("cannot open cluster assignment '{}'", path.string()));
  std::vector<ClusterId> assignment(kg.num_entities(), -1);
  ClusterId max_cluster = -1;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ArtifactError(fmt::format("{}:{}: expected 'entity<TAB>cluster'", path.string(), line_no));
    }
    const auto entity = kg.entities().id(line.substr(0, tab));
    ClusterId cluster = -1;
    std::istringstream(line.substr(tab + 1)) >> cluster;
    if (cluster < 0) throw ArtifactError(fmt::format("{}:{}: bad cluster id", path.string(), line_no));
    assignment[static_cast<std::size_t>(entity)] = cluster;
    max_cluster = std::max(max_cluster, cluster);
  }
  for (std::size_t e = 0; e < assignment.size(); ++e) {
    if (assignment[e] < 0) {
      throw ArtifactError(fmt::format("entity '{}' has no cluster", kg.entities().token(static_cast<EntityId>(e))));
    }
  }
  return ClusterMap(kg, store, std::move(assignment), static_cast<std::size_t>(max_cluster + 1));
}

ClusterMap cluster_entities(const KnowledgeGraph& kg, const EmbeddingStore& store, std::size_t num_clusters,
                            const KMeansConfig& config, KMeansResult* diagnostics) {
  store.check_compatible(kg);
  auto result = kmeans(store.entities, num_clusters, config);
  ClusterMap map(kg, store, result.assignment, num_clusters);
  if (diagnostics) *diagnostics = std::move(result);
  return map;
}

}  // namespace dualwalk
