#include <doctest.h>

#include <sstream>

#include "../support/worlds.hpp"
#include "dualwalk/embed.hpp"
#include "dualwalk/error.hpp"

using namespace dualwalk;

namespace {

// Margin ranking loss over every train triple against every corruption of its target.
double mean_rank_of_true_target(const KnowledgeGraph& kg, const EmbeddingStore& store) {
  double total = 0.0;
  for (const auto& t : kg.triples(Split::kTrain)) {
    const double d = transe_distance(store, t.source, t.relation, t.target);
    std::size_t better = 0;
    for (std::size_t e = 0; e < kg.num_entities(); ++e) {
      if (transe_distance(store, t.source, t.relation, static_cast<EntityId>(e)) < d) ++better;
    }
    total += static_cast<double>(better);
  }
  return total / static_cast<double>(kg.triples(Split::kTrain).size());
}

}  // namespace

TEST_SUITE("embed") {

TEST_CASE("training ranks true targets above corruptions") {
  const auto world = dualwalk::testing::composition_world(3);
  TransEConfig cfg;
  cfg.dim = 16;
  cfg.epochs = 0;
  const auto untrained = train_transe(world.kg, cfg);
  cfg.epochs = 300;
  std::vector<double> losses;
  const auto trained = train_transe(world.kg, cfg, [&](std::size_t, double loss) { losses.push_back(loss); });

  REQUIRE(losses.size() == 300);
  CHECK(losses.back() < losses.front());
  CHECK(mean_rank_of_true_target(world.kg, trained) < 0.5 * mean_rank_of_true_target(world.kg, untrained));
  for (std::size_t e = 0; e < trained.entities.rows; ++e) CHECK(trained.entity_norms[e] <= 1.0 + 1e-6);
}

TEST_CASE("inverse relations are negated and NO_OP is zero") {
  const auto kg = dualwalk::testing::random_graph(4, 10, 3, 30);
  TransEConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 5;
  const auto store = train_transe(kg, cfg);
  for (RelationId r = 0; r < static_cast<RelationId>(kg.num_raw_relations()); ++r) {
    const auto a = store.relation(r);
    const auto b = store.relation(kg.inverse(r));
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(b[k] == -a[k]);
  }
  for (float x : store.relation(kg.no_op())) CHECK(x == 0.0f);
}

TEST_CASE("same seed, same vectors") {
  const auto kg = dualwalk::testing::random_graph(4, 10, 3, 30);
  TransEConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 20;
  CHECK(train_transe(kg, cfg).entities == train_transe(kg, cfg).entities);
  auto other = cfg;
  other.seed = 99;
  CHECK_FALSE(train_transe(kg, other).entities == train_transe(kg, cfg).entities);
}

TEST_CASE("save and load round-trip bit-exactly") {
  const auto kg = dualwalk::testing::random_graph(4, 10, 3, 30);
  TransEConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 3;
  const auto store = train_transe(kg, cfg);
  std::stringstream buf;
  save_embeddings(store, buf);
  const auto back = load_embeddings(buf);
  CHECK(back.dim == store.dim);
  CHECK(back.seed == store.seed);
  CHECK(back.entities == store.entities);
  CHECK(back.relations == store.relations);
  CHECK_NOTHROW(back.check_compatible(kg));
}

TEST_CASE("loading rejects mismatched or damaged files") {
  const auto kg = dualwalk::testing::random_graph(4, 10, 3, 30);
  TransEConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 1;
  const auto store = train_transe(kg, cfg);
  std::stringstream buf;
  save_embeddings(store, buf);
  const auto bytes = buf.str();

  EmbeddingExpectations dim;
  dim.dim = 50;
  std::stringstream a(bytes);
  CHECK_THROWS_AS(load_embeddings(a, dim), ArtifactError);

  EmbeddingExpectations ents;
  ents.num_entities = 11;
  std::stringstream b(bytes);
  CHECK_THROWS_AS(load_embeddings(b, ents), ArtifactError);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(load_embeddings(truncated), ArtifactError);

  std::stringstream junk("definitely not embeddings");
  CHECK_THROWS_AS(load_embeddings(junk), ArtifactError);
}

TEST_CASE("zero dimension is a configuration error") {
  const auto kg = dualwalk::testing::random_graph(4, 10, 3, 30);
  TransEConfig cfg;
  cfg.dim = 0;
  CHECK_THROWS_AS(train_transe(kg, cfg), ConfigError);
}

}
