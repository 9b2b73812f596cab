#include <doctest.h>

#include <cmath>
#include <sstream>

#include "../support/learning.hpp"
#include "../support/oracles.hpp"
#include "dualwalk/error.hpp"
#include "dualwalk/eval.hpp"
#include "tmpdir.hpp"

using namespace dualwalk;
using namespace dualwalk::testing;

namespace {

PolicyParameters<float> random_policy(const RandomSetup& s, std::uint64_t seed) {
  PolicyParameters<float> p(policy_dims(s.kg, s.clusters, s.store.dim, 5));
  p.init_random(seed);
  return p;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("rank_of matches the definition") {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
      const auto ranking = random_ranking(rng, 12);
      std::map<EntityId, double> scores;
      for (const auto& s : ranking) scores[s.entity] = s.log_prob;
      std::set<EntityId> known;
      for (EntityId e = 0; e < 12; ++e) {
        if (rng.below(3) == 0) known.insert(e);
      }
      const auto gold = static_cast<EntityId>(rng.below(12));
      for (bool filtered : {false, true}) {
        for (auto ties : {TieMode::kOptimistic, TieMode::kOrdinal}) {
          const double want = brute_rank(scores, gold, known, filtered, ties == TieMode::kOrdinal);
          CHECK(rank_of(ranking, gold, known, {filtered, ties}) == want);
        }
      }
    }
  }

  TEST_CASE("rank examples") {
    const std::vector<ScoredEntity> r{{3, -0.1}, {1, -0.5}, {2, -0.5}, {0, -0.9}};
    CHECK(rank_of(r, 2, {}, {false, TieMode::kOptimistic}) == 2.0);
    CHECK(rank_of(r, 2, {}, {false, TieMode::kOrdinal}) == 3.0);
    CHECK(rank_of(r, 0, {3, 0}, {true, TieMode::kOptimistic}) == 3.0);
    CHECK(rank_of(r, 0, {3, 0}, {false, TieMode::kOptimistic}) == 4.0);
    CHECK(std::isinf(rank_of(r, 9, {}, {})));
  }

  TEST_CASE("link metrics and AP") {
    const std::vector<double> ranks{1, 2, 5, 11, kUnreachable};
    const auto m = link_prediction_metrics(ranks);
    CHECK(m.hits1 == doctest::Approx(0.2));
    CHECK(m.hits3 == doctest::Approx(0.4));
    CHECK(m.hits10 == doctest::Approx(0.6));
    CHECK(m.mrr == doctest::Approx((1 + 0.5 + 0.2 + 1.0 / 11) / 5));
    CHECK(m.queries == 5);
    const std::vector<std::uint8_t> labels{1, 0, 1, 0, 0, 1};
    CHECK(average_precision(labels) == doctest::Approx((1.0 + 2.0 / 3 + 3.0 / 6) / 3));
    CHECK(average_precision(std::vector<std::uint8_t>{0, 0}) == 0.0);
    Rng rng(2);
    for (int i = 0; i < 100; ++i) {
      std::vector<std::uint8_t> l(1 + rng.below(20));
      for (auto& x : l) x = rng.below(3) == 0;
      CHECK(average_precision(l) == brute_average_precision(l));
    }
  }

  TEST_CASE("candidate order puts reached targets first") {
    const std::vector<EntityId> targets{7, 2, 5, 9, 4};
    const std::vector<ScoredEntity> ranking{{5, -0.1}, {9, -0.3}, {2, -0.3}};
    const auto order = order_candidates(targets, ranking, 1);
    REQUIRE(order.size() == 5);
    CHECK(targets[order[0]] == 5);
    CHECK(targets[order[1]] == 2);
    CHECK(targets[order[2]] == 9);
    CHECK(order_candidates(targets, ranking, 1) == order);
    std::set<EntityId> tail{targets[order[3]], targets[order[4]]};
    CHECK(tail == std::set<EntityId>{4, 7});
  }

  TEST_CASE("saturated beam search equals exhaustive enumeration") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
      auto s = random_setup(seed, 6, 2, 10, 2);
      Environment env(s->kg, s->clusters, 3);
      auto p = random_policy(*s, seed);
      const auto t = s->kg.triples(Split::kTrain)[0];
      const Query q{t.source, t.relation, t.target};
      BeamOptions bo;
      bo.width = count_paths(env, q);
      const auto beam = beam_search(env, p, q, bo);
      const auto brute = enumerate_paths(env, p, q);
      REQUIRE(beam.ranking.size() == brute.size());
      for (std::size_t i = 0; i < brute.size(); ++i) {
        CHECK(beam.ranking[i].entity == brute[i].entity);
        CHECK(beam.ranking[i].log_prob == brute[i].log_prob);
      }
    }
  }

  TEST_CASE("width-1 beam follows the greedy rollout") {
    auto s = random_setup(7, 10, 3, 30, 3);
    Environment env(s->kg, s->clusters, 3);
    auto p = random_policy(*s, 3);
    for (const auto& t : s->kg.triples(Split::kTrain).first(8)) {
      const Query q{t.source, t.relation, t.target};
      BeamOptions bo;
      bo.width = 1;
      bo.keep_paths = true;
      const auto beam = beam_search(env, p, q, bo);
      RolloutSpec spec;
      spec.giant = spec.dwarf = ActionMode::kGreedy;
      diffnet::Tape<float> tape(false);
      const std::vector<Query> qs{q};
      const auto ep = rollout(env, bind(tape, p), qs, spec);
      REQUIRE(beam.ranking.size() == 1);
      CHECK(beam.ranking[0].entity == ep.final_entity(0));
      REQUIRE(beam.beams.size() == 1);
      for (std::size_t k = 0; k <= 3; ++k) {
        CHECK(beam.beams[0].entities[k] == ep.entities(0, k));
        CHECK(beam.beams[0].clusters[k] == ep.clusters(0, k));
      }
    }
    CHECK_THROWS_AS(beam_search(env, p, {0, 0, -1}, BeamOptions{0, false}), ConfigError);
  }

  TEST_CASE("random walk probabilities sum to one") {
    auto s = random_setup(8, 9, 2, 20, 2);
    for (std::size_t T = 1; T <= 4; ++T) {
      const auto r = random_walk_ranking(s->kg, 0, T);
      double total = 0.0;
      for (const auto& e : r.ranking) total += std::exp(e.log_prob);
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
    // one step: uniform over the action list
    const auto r1 = random_walk_ranking(s->kg, 2, 1);
    const auto n = double(s->kg.outgoing(2).size());
    double top = 0.0;
    for (const auto& e : r1.ranking) top = std::max(top, std::exp(e.log_prob));
    CHECK(top >= 1.0 / n - 1e-12);
  }

  TEST_CASE("link evaluation ranks every query with the chosen ranker") {
    auto s = random_setup(9, 12, 3, 40, 3);
    Environment env(s->kg, s->clusters, 2);
    auto p = random_policy(*s, 9);
    const auto qs = s->kg.triples(Split::kTrain).first(10);
    const AnswerIndex known(s->kg.triples(Split::kTrain));
    EvalOptions opts;
    opts.beam.width = 5;
    const auto ev = evaluate_link_prediction(env, p, qs, known, opts);
    REQUIRE(ev.per_query.size() == 10);
    std::vector<double> ranks;
    for (std::size_t i = 0; i < 10; ++i) {
      const auto& t = qs[i];
      const auto r = beam_search(env, p, {t.source, t.relation, t.target}, opts.beam);
      const double want = rank_of(r.ranking, t.target, known.answers(t.source, t.relation), opts.rank);
      CHECK(ev.per_query[i].rank == want);
      ranks.push_back(want);
    }
    const auto m = link_prediction_metrics(ranks);
    CHECK(ev.metrics.mrr == m.mrr);
    CHECK(ev.metrics.hits1 == m.hits1);

    opts.ranker = Ranker::kRandomWalk;
    const auto rw = evaluate_link_prediction(env, p, qs, known, opts);
    const auto t = qs[0];
    const auto r = random_walk_ranking(s->kg, t.source, 2);
    CHECK(rw.per_query[0].rank == rank_of(r.ranking, t.target, known.answers(t.source, t.relation), opts.rank));

    opts.ranker = Ranker::kSampled;
    opts.sampled_rollouts = 30;
    const auto a = evaluate_link_prediction(env, p, qs, known, opts);
    const auto b = evaluate_link_prediction(env, p, qs, known, opts);
    CHECK(a.metrics.mrr == b.metrics.mrr);
  }

  TEST_CASE("fact prediction MAP matches per-group AP") {
    auto s = random_setup(10, 12, 2, 40, 3);
    Environment env(s->kg, s->clusters, 2);
    auto p = random_policy(*s, 10);
    std::vector<FactCandidate> cands;
    Rng rng(3);
    for (EntityId src : {0, 3, 5}) {
      for (EntityId o = 0; o < 12; o += 2) cands.push_back({{src, 0, o}, rng.below(3) == 0});
      cands.push_back({{src, 0, 1}, true});
    }
    EvalOptions opts;
    opts.beam.width = 8;
    const auto fe = fact_prediction_map(env, p, cands, opts);
    REQUIRE(fe.average_precisions.size() == 3);
    double sum = 0.0;
    std::size_t g = 0;
    for (EntityId src : {0, 3, 5}) {
      std::vector<EntityId> targets;
      std::vector<std::uint8_t> pos;
      for (const auto& c : cands) {
        if (c.triple.source != src) continue;
        targets.push_back(c.triple.target);
        pos.push_back(c.positive);
      }
      const auto r = beam_search(env, p, {src, 0, -1}, opts.beam);
      const auto group_seed = derive_seed(opts.seed, {std::uint64_t(g)});
      const auto order = order_candidates(targets, r.ranking, derive_seed(group_seed, {1}));
      std::vector<std::uint8_t> labels;
      for (auto i : order) labels.push_back(pos[i]);
      CHECK(fe.average_precisions[g] == brute_average_precision(labels));
      sum += fe.average_precisions[g++];
    }
    CHECK(fe.map == doctest::Approx(sum / 3.0));
    for (double ap : fe.average_precisions) CHECK((ap > 0.0 && ap <= 1.0));
  }

  TEST_CASE("fact candidates file") {
    auto s = random_setup(11, 4, 1, 6, 2);
    TempDir dir;
    const auto f = dir.write("facts.txt", "e0\tr0\te1\t+\ne0\tr0\te2\t-\n");
    const auto c = read_fact_candidates(f, s->kg);
    REQUIRE(c.size() == 2);
    CHECK(c[0].positive);
    CHECK_FALSE(c[1].positive);
    CHECK(c[1].triple == Triple{0, 0, 2});
    const auto bad = dir.write("bad.txt", "e0\tr0\te1\n");
    CHECK_THROWS_AS(read_fact_candidates(bad, s->kg), ArtifactError);
  }

  TEST_CASE("results csv") {
    std::ostringstream out;
    const std::vector<ResultRow> rows{{"d", "all", "mrr", 0.5, 50, 3, 1}};
    write_results_csv(out, rows);
    CHECK(out.str() == "dataset,task,metric,value,beam,T,seed\nd,all,mrr,0.5,50,3,1\n");
  }
}
