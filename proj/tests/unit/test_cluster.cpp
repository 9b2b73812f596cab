#include <doctest.h>

#include <set>
#include <sstream>

#include "../support/worlds.hpp"
#include "dualwalk/cluster.hpp"
#include "dualwalk/error.hpp"
#include "tmpdir.hpp"

using namespace dualwalk;

namespace {

// Three well separated blobs of 30 points in 4 dimensions.
Matrix<float> blobs(std::uint64_t seed, std::vector<int>& truth) {
  Rng rng(seed);
  Matrix<float> pts(90, 4);
  truth.assign(90, 0);
  for (std::size_t i = 0; i < 90; ++i) {
    const int c = static_cast<int>(i % 3);
    truth[i] = c;
    for (std::size_t j = 0; j < 4; ++j) pts(i, j) = static_cast<float>(10.0 * c * (j == static_cast<std::size_t>(c) ? 1 : 0) + rng.uniform(-0.5, 0.5));
  }
  return pts;
}

}  // namespace

TEST_SUITE("cluster") {

TEST_CASE("k-means recovers separated blobs") {
  std::vector<int> truth;
  const auto pts = blobs(1, truth);
  for (auto init : {KMeansInit::kPlusPlus, KMeansInit::kRandom}) {
    KMeansConfig cfg;
    cfg.init = init;
    cfg.seed = 5;
    const auto r = kmeans(pts, 3, cfg);
    // same partition up to relabelling
    std::set<std::pair<int, ClusterId>> pairs;
    for (std::size_t i = 0; i < truth.size(); ++i) pairs.insert({truth[i], r.assignment[i]});
    if (init == KMeansInit::kPlusPlus) CHECK(pairs.size() == 3);
    CHECK(r.iterations >= 1);
  }
}

TEST_CASE("within-cluster sum of squares never increases") {
  Rng rng(7);
  Matrix<float> pts(200, 5);
  for (auto& x : pts.data) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    KMeansConfig cfg;
    cfg.seed = seed;
    cfg.tolerance = 0.0;
    cfg.max_iterations = 30;
    const auto r = kmeans(pts, 8, cfg);
    for (std::size_t i = 1; i < r.wcss_history.size(); ++i) {
      CHECK(r.wcss_history[i] <= r.wcss_history[i - 1] * (1.0 + 1e-12));
    }
    CHECK(r.wcss_history.back() == doctest::Approx(within_cluster_ss(pts, r.assignment, r.centroids)));
    std::set<ClusterId> used(r.assignment.begin(), r.assignment.end());
    CHECK(used.size() == 8);
  }
}

TEST_CASE("serial and parallel assignment agree") {
  Rng rng(3);
  Matrix<float> pts(150, 6);
  for (auto& x : pts.data) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  KMeansConfig a;
  a.seed = 4;
  auto b = a;
  b.parallel = false;
  const auto ra = kmeans(pts, 6, a);
  const auto rb = kmeans(pts, 6, b);
  CHECK(ra.assignment == rb.assignment);
  CHECK(ra.centroids == rb.centroids);
}

TEST_CASE("empty clusters are repaired") {
  // many duplicate points, random init likely picks the same point twice
  Matrix<float> pts(40, 2);
  for (std::size_t i = 0; i < 40; ++i) pts(i, 0) = i < 36 ? 0.0f : static_cast<float>(i);
  KMeansConfig cfg;
  cfg.init = KMeansInit::kRandom;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    cfg.seed = seed;
    const auto r = kmeans(pts, 4, cfg);
    std::set<ClusterId> used(r.assignment.begin(), r.assignment.end());
    CHECK(used.size() == 4);
  }
}

TEST_CASE("invalid k is rejected") {
  Matrix<float> pts(5, 2);
  CHECK_THROWS_AS(kmeans(pts, 1, {}), ConfigError);
  CHECK_THROWS_AS(kmeans(pts, 6, {}), ConfigError);
}

TEST_CASE("cluster graph links clusters bridged by an edge") {
  const auto kg = dualwalk::testing::random_graph(9, 30, 3, 60);
  Rng rng(2);
  std::vector<ClusterId> assignment(30);
  for (std::size_t e = 0; e < 30; ++e) assignment[e] = static_cast<ClusterId>(e % 4);
  const auto graph = build_cluster_graph(kg, assignment, 4);
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::size_t d = 0; d < 4; ++d) {
      bool bridged = false;
      for (std::size_t e = 0; e < 30; ++e) {
        if (assignment[e] != static_cast<ClusterId>(c)) continue;
        for (const auto& edge : kg.adjacency(static_cast<EntityId>(e))) {
          bridged = bridged || (c != d && assignment[static_cast<std::size_t>(edge.target)] == static_cast<ClusterId>(d));
        }
      }
      const bool listed = std::count(graph[c].begin(), graph[c].end(), static_cast<ClusterId>(d)) == 1;
      CHECK(listed == bridged);
    }
  }
}

TEST_CASE("cluster map: STOP first, means, lifted embedding, persistence") {
  const auto kg = dualwalk::testing::random_graph(9, 30, 3, 60);
  TransEConfig tc;
  tc.dim = 6;
  tc.epochs = 5;
  const auto store = train_transe(kg, tc);
  const auto cm = cluster_entities(kg, store, 4, {});
  CHECK(cm.num_clusters() == 4);
  CHECK(cm.stop() == 4);
  for (ClusterId c = 0; c < 4; ++c) {
    CHECK(cm.actions(c)[0] == cm.stop());
    std::vector<double> mean(6, 0.0);
    for (auto e : cm.members(c)) {
      for (std::size_t j = 0; j < 6; ++j) mean[j] += store.entity(e)[j];
    }
    const auto lifted = cm.cluster_embedding(c);
    REQUIRE(lifted.size() == 12);
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(cm.mean_embedding(c)[j] == doctest::Approx(mean[j] / static_cast<double>(cm.members(c).size())).epsilon(1e-5));
      CHECK(lifted[j] == lifted[j + 6]);
    }
  }

  dualwalk::testing::TempDir dir;
  std::ostringstream out;
  cm.write_assignment(out, kg);
  const auto back = ClusterMap::read_assignment(dir.write("c.tsv", out.str()), kg, store);
  CHECK(std::equal(back.assignment().begin(), back.assignment().end(), cm.assignment().begin(), cm.assignment().end()));
  CHECK(back.means() == cm.means());
  CHECK_THROWS_AS(ClusterMap::read_assignment(dir.write("bad.tsv", "e0\t0\n"), kg, store), ArtifactError);
}

TEST_CASE("rebuild_graph follows edge removal") {
  auto world = dualwalk::testing::chain_world(1);
  TransEConfig tc;
  tc.dim = 4;
  tc.epochs = 1;
  const auto store = train_transe(world.kg, tc);
  ClusterMap cm(world.kg, store, world.assignment, world.num_clusters);
  CHECK(cm.connected(0, 1));
  // cut every edge between level 0 and level 1, either direction
  std::vector<Triple> cut;
  for (const auto& t : world.kg.triples(Split::kTrain)) {
    const auto a = world.assignment[static_cast<std::size_t>(t.source)];
    const auto b = world.assignment[static_cast<std::size_t>(t.target)];
    if ((a == 0 && b == 1) || (a == 1 && b == 0)) cut.push_back(t);
  }
  for (const auto& t : cut) world.kg.remove_edge(t);
  cm.rebuild_graph(world.kg);
  CHECK_FALSE(cm.connected(0, 1));
  CHECK_FALSE(cm.connected(1, 0));
  world.kg.restore_all();
  cm.rebuild_graph(world.kg);
  CHECK(cm.connected(0, 1));
}

}
