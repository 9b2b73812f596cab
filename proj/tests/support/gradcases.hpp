#pragma once
// Random small instances for finite-difference checks of every operator and
// of the policy's per-step log-probabilities.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dualwalk/diffnet.hpp"
#include "dualwalk/policy.hpp"
#include "oracles.hpp"

namespace dualwalk::testing {

struct GradCase {
  std::string name;
  std::function<GradCheck(std::uint64_t seed)> run;
};

namespace detail {

using M = Matrix<double>;
using P = Parameter<double>;

inline std::unique_ptr<P> rand_param(Rng& rng, const char* name, std::size_t r, std::size_t c, double lo = -1.0,
                                     double hi = 1.0) {
  auto p = std::make_unique<P>(name, r, c);
  fill_uniform(p->value, rng, lo, hi);
  return p;
}

inline M rand_weights(Rng& rng, std::size_t r, std::size_t c) {
  M w(r, c);
  fill_uniform(w, rng);
  return w;
}

inline std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

inline diffnet::Mask rand_mask(Rng& rng, std::size_t rows, std::size_t cols) {
  diffnet::Mask m(rows, cols, 0);
  for (std::size_t b = 0; b < rows; ++b) {
    for (std::size_t a = 0; a < cols; ++a) m(b, a) = rng.below(4) != 0;
    m(b, rng.below(cols)) = 1;
  }
  return m;
}

// Loss = sum(out .* W) for a fixed random W of out's shape.
template <typename Op>
GradCheck unary_case(std::uint64_t seed, std::vector<std::unique_ptr<P>> params, Op op) {
  Rng rng(derive_seed(seed, {77}));
  std::vector<P*> raw;
  for (auto& p : params) raw.push_back(p.get());
  std::optional<M> w;
  auto build = [&](Tape<double>& tape) {
    std::vector<Var<double>> vars;
    for (auto* p : raw) vars.push_back(tape.parameter(*p));
    const auto out = op(vars);
    if (!w) w = rand_weights(rng, out.rows(), out.cols());
    return diffnet::weighted_sum(out, *w);
  };
  return check_gradients(raw, build);
}

}  // namespace detail

inline std::vector<GradCase> operator_cases() {
  using namespace detail;
  std::vector<GradCase> cases;

  cases.push_back({"linear", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const auto B = dim(rng, 1, 4), K = dim(rng, 1, 5), N = dim(rng, 1, 5);
                     std::vector<std::unique_ptr<P>> ps;
                     ps.push_back(rand_param(rng, "x", B, K));
                     ps.push_back(rand_param(rng, "w", N, K));
                     return unary_case(seed, std::move(ps), [](auto& v) { return diffnet::linear(v[0], v[1]); });
                   }});
  cases.push_back({"concat_cols", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const auto B = dim(rng, 1, 4);
                     std::vector<std::unique_ptr<P>> ps;
                     ps.push_back(rand_param(rng, "a", B, dim(rng, 1, 3)));
                     ps.push_back(rand_param(rng, "b", B, dim(rng, 1, 3)));
                     ps.push_back(rand_param(rng, "c", B, dim(rng, 1, 3)));
                     return unary_case(seed, std::move(ps), [](auto& v) {
                       return diffnet::concat_cols<double>(std::span<const Var<double>>(v));
                     });
                   }});
  cases.push_back({"slice_cols", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const auto B = dim(rng, 1, 4), C = dim(rng, 2, 6);
                     const auto off = rng.below(C - 1), width = 1 + rng.below(C - off);
                     std::vector<std::unique_ptr<P>> ps;
                     ps.push_back(rand_param(rng, "x", B, C));
                     return unary_case(seed, std::move(ps),
                                       [=](auto& v) { return diffnet::slice_cols(v[0], off, width); });
                   }});
  cases.push_back({"add", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const auto B = dim(rng, 1, 4), C = dim(rng, 1, 5);
                     std::vector<std::unique_ptr<P>> ps;
                     ps.push_back(rand_param(rng, "a", B, C));
                     ps.push_back(rand_param(rng, "b", B, C));
                     // a + a exercises accumulation into one node
                     return unary_case(seed, std::move(ps), [](auto& v) {
                       return diffnet::add(diffnet::add(v[0], v[1]), v[0]);
                     });
                   }});
  cases.push_back({"scale", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const double f = rng.uniform(-2.0, 2.0);
                     std::vector<std::unique_ptr<P>> ps;
                     ps.push_back(rand_param(rng, "x", dim(rng, 1, 4), dim(rng, 1, 5)));
                     return unary_case(seed, std::move(ps), [=](auto& v) { return diffnet::scale(v[0], f); });
                   }});
  cases.push_back({"relu", [](std::uint64_t seed) {
                     Rng rng(seed);
                     std::vector<std::unique_ptr<P>> ps;
                     ps.push_back(rand_param(rng, "x", dim(rng, 1, 4), dim(rng, 1, 6)));
                     // keep away from the kink
                     for (auto& x : ps[0]->value.data) x = (x < 0 ? -0.05 : 0.05) + x;
                     return unary_case(seed, std::move(ps), [](auto& v) { return diffnet::relu(v[0]); });
                   }});
  cases.push_back({"mlp2_relu", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const auto B = dim(rng, 1, 4), I = dim(rng, 1, 5), Hh = dim(rng, 1, 5), O = dim(rng, 1, 4);
                     std::vector<std::unique_ptr<P>> ps;
                     ps.push_back(rand_param(rng, "x", B, I));
                     ps.push_back(rand_param(rng, "w1", Hh, I));
                     ps.push_back(rand_param(rng, "w2", O, Hh));
                     return unary_case(seed, std::move(ps),
                                       [](auto& v) { return diffnet::mlp2_relu(v[0], v[1], v[2]); });
                   }});
  cases.push_back({"lstm_cell", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const auto B = dim(rng, 1, 3), I = dim(rng, 1, 4), H = dim(rng, 1, 4);
                     std::vector<std::unique_ptr<P>> ps;
                     ps.push_back(rand_param(rng, "x", B, I));
                     ps.push_back(rand_param(rng, "h", B, H));
                     ps.push_back(rand_param(rng, "c", B, H));
                     ps.push_back(rand_param(rng, "w", 4 * H, I + H));
                     ps.push_back(rand_param(rng, "b", 1, 4 * H));
                     // two chained cells so the cell-state path is checked too
                     return unary_case(seed, std::move(ps), [=](auto& v) {
                       const auto s1 = diffnet::lstm_cell(v[0], diffnet::LstmState<double>{v[1], v[2]}, v[3], v[4]);
                       const auto s2 = diffnet::lstm_cell(v[0], s1, v[3], v[4]);
                       return diffnet::add(diffnet::add(s2.hidden, s1.cell), s2.cell);
                     });
                   }});
  cases.push_back({"gather_rows", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const auto R = dim(rng, 2, 5), C = dim(rng, 1, 4), B = dim(rng, 1, 6);
                     std::vector<std::int32_t> idx(B);
                     for (auto& i : idx) i = static_cast<std::int32_t>(rng.below(R));  // repeats allowed
                     std::vector<std::unique_ptr<P>> ps;
                     ps.push_back(rand_param(rng, "table", R, C));
                     return unary_case(seed, std::move(ps), [=](auto& v) {
                       return diffnet::gather_rows(v[0], std::span<const std::int32_t>(idx));
                     });
                   }});
  cases.push_back({"dot_gather", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const auto B = dim(rng, 1, 4), R = dim(rng, 2, 5), C = dim(rng, 1, 4), A = dim(rng, 1, 4);
                     const auto off = rng.below(3);
                     diffnet::IndexMatrix idx(B, A, -1);
                     for (auto& i : idx.data) i = rng.below(5) == 0 ? -1 : static_cast<std::int32_t>(rng.below(R));
                     std::vector<std::unique_ptr<P>> ps;
                     ps.push_back(rand_param(rng, "q", B, off + C + rng.below(2)));
                     ps.push_back(rand_param(rng, "table", R, C));
                     return unary_case(seed, std::move(ps),
                                       [=](auto& v) { return diffnet::dot_gather(v[0], off, v[1], idx); });
                   }});
  cases.push_back({"masked_log_softmax", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const auto B = dim(rng, 1, 4), A = dim(rng, 1, 6);
                     const auto mask = rand_mask(rng, B, A);
                     std::vector<std::unique_ptr<P>> ps;
                     ps.push_back(rand_param(rng, "s", B, A, -3.0, 3.0));
                     Rng wr(derive_seed(seed, {6}));
                     auto w = rand_weights(wr, B, A);
                     for (std::size_t i = 0; i < w.size(); ++i) w.data[i] *= mask.data[i];
                     P* raw = ps[0].get();
                     auto build = [&](Tape<double>& tape) {
                       return diffnet::weighted_sum(diffnet::masked_log_softmax(tape.parameter(*raw), mask), w);
                     };
                     return check_gradients({raw}, build);
                   }});
  cases.push_back({"pick", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const auto B = dim(rng, 1, 5), A = dim(rng, 1, 5);
                     std::vector<std::int32_t> col(B);
                     for (auto& c : col) c = static_cast<std::int32_t>(rng.below(A));
                     std::vector<std::unique_ptr<P>> ps;
                     ps.push_back(rand_param(rng, "x", B, A));
                     return unary_case(seed, std::move(ps), [=](auto& v) {
                       return diffnet::pick(v[0], std::span<const std::int32_t>(col));
                     });
                   }});
  cases.push_back({"entropy", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const auto B = dim(rng, 1, 4), A = dim(rng, 1, 6);
                     const auto mask = rand_mask(rng, B, A);
                     std::vector<std::unique_ptr<P>> ps;
                     ps.push_back(rand_param(rng, "s", B, A, -2.0, 2.0));
                     return unary_case(seed, std::move(ps), [=](auto& v) {
                       return diffnet::entropy(diffnet::masked_log_softmax(v[0], mask), mask);
                     });
                   }});
  cases.push_back({"weighted_sum", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const auto B = dim(rng, 1, 4), A = dim(rng, 1, 4);
                     auto p = rand_param(rng, "x", B, A);
                     const auto w = rand_weights(rng, B, A);
                     P* raw = p.get();
                     return check_gradients({raw}, [&](Tape<double>& tape) {
                       return diffnet::weighted_sum(tape.parameter(*raw), w);
                     });
                   }});
  cases.push_back({"sum", [](std::uint64_t seed) {
                     Rng rng(seed);
                     auto p = rand_param(rng, "x", dim(rng, 1, 4), dim(rng, 1, 4));
                     P* raw = p.get();
                     const Matrix<double> w(raw->value.rows, raw->value.cols, 0.5);
                     return check_gradients({raw}, [&](Tape<double>& tape) {
                       const auto x = tape.parameter(*raw);
                       return diffnet::add(diffnet::sum(diffnet::scale(diffnet::add(x, x), 1.5)),
                                           diffnet::weighted_sum(x, w));
                     });
                   }});
  return cases;
}

/// The policy's per-step log-probabilities (both agents, two steps, history
/// updates in between) plus entropy terms, differentiated with respect to
/// every parameter.
inline GradCheck policy_case(std::uint64_t seed) {
  Rng rng(seed);
  PolicyDims dims;
  dims.embed_dim = 2 + rng.below(2);
  dims.hidden = 2 + rng.below(3);
  dims.num_entities = 5 + rng.below(3);
  dims.num_relations = 3 + rng.below(3);
  dims.num_clusters = 2 + rng.below(2);
  PolicyParameters<float> pf(dims);
  pf.init_random(seed);
  auto p = pf.cast<double>();
  for (auto* param : p.all()) {
    for (auto& x : param->value.data) x += rng.uniform(-0.3, 0.3);
  }

  const std::size_t B = 1 + rng.below(3), A = 2 + rng.below(3), steps = 2;
  std::vector<ClusterId> start_c(B);
  std::vector<EntityId> sources(B);
  std::vector<RelationId> rq(B);
  for (std::size_t b = 0; b < B; ++b) {
    start_c[b] = static_cast<ClusterId>(rng.below(dims.num_clusters));
    sources[b] = static_cast<EntityId>(rng.below(dims.num_entities));
    rq[b] = static_cast<RelationId>(rng.below(dims.num_relations));
  }
  struct Step {
    std::vector<ClusterId> cur_c;
    std::vector<EntityId> cur_e;
    diffnet::IndexMatrix gc, rc, ec;
    diffnet::Mask gm, em;
    std::vector<std::int32_t> pick_c, pick_e;
    std::vector<ClusterId> move_c;
    std::vector<RelationId> move_r;
    std::vector<EntityId> move_e;
    Matrix<double> wc, we, went;
  };
  std::vector<Step> plan(steps);
  for (auto& s : plan) {
    s.cur_c.resize(B);
    s.cur_e.resize(B);
    s.gc = diffnet::IndexMatrix(B, A, -1);
    s.rc = diffnet::IndexMatrix(B, A, -1);
    s.ec = diffnet::IndexMatrix(B, A, -1);
    s.gm = detail::rand_mask(rng, B, A);
    s.em = detail::rand_mask(rng, B, A);
    s.pick_c.resize(B);
    s.pick_e.resize(B);
    s.move_c.resize(B);
    s.move_r.resize(B);
    s.move_e.resize(B);
    for (std::size_t b = 0; b < B; ++b) {
      s.cur_c[b] = static_cast<ClusterId>(rng.below(dims.num_clusters));
      s.cur_e[b] = static_cast<EntityId>(rng.below(dims.num_entities));
      for (std::size_t a = 0; a < A; ++a) {
        if (s.gm(b, a)) s.gc(b, a) = static_cast<ClusterId>(rng.below(dims.num_clusters + 1));
        if (s.em(b, a)) {
          s.rc(b, a) = static_cast<RelationId>(rng.below(dims.num_relations));
          s.ec(b, a) = static_cast<EntityId>(rng.below(dims.num_entities));
        }
      }
      std::vector<std::int32_t> open_c, open_e;
      for (std::size_t a = 0; a < A; ++a) {
        if (s.gm(b, a)) open_c.push_back(static_cast<std::int32_t>(a));
        if (s.em(b, a)) open_e.push_back(static_cast<std::int32_t>(a));
      }
      s.pick_c[b] = open_c[rng.below(open_c.size())];
      s.pick_e[b] = open_e[rng.below(open_e.size())];
      s.move_c[b] = s.gc(b, static_cast<std::size_t>(s.pick_c[b]));
      s.move_r[b] = s.rc(b, static_cast<std::size_t>(s.pick_e[b]));
      s.move_e[b] = s.ec(b, static_cast<std::size_t>(s.pick_e[b]));
    }
    s.wc = detail::rand_weights(rng, B, 1);
    s.we = detail::rand_weights(rng, B, 1);
    s.went = detail::rand_weights(rng, B, 1);
  }

  auto build = [&](Tape<double>& tape) {
    const auto g = bind(tape, p);
    auto hist = init_histories(g, std::span<const ClusterId>(start_c), std::span<const EntityId>(sources));
    std::optional<Var<double>> loss;
    for (std::size_t k = 0; k < steps; ++k) {
      const auto& s = plan[k];
      const auto lc = score_giant(g, std::span<const ClusterId>(s.cur_c), hist.giant.hidden, s.gc, s.gm);
      const auto le = score_dwarf(g, std::span<const EntityId>(s.cur_e), std::span<const RelationId>(rq),
                                  hist.dwarf.hidden, s.rc, s.ec, s.em);
      auto term = diffnet::add(diffnet::weighted_sum(diffnet::pick(lc, std::span<const std::int32_t>(s.pick_c)), s.wc),
                               diffnet::weighted_sum(diffnet::pick(le, std::span<const std::int32_t>(s.pick_e)), s.we));
      term = diffnet::add(term, diffnet::weighted_sum(diffnet::entropy(le, s.em), s.went));
      loss = loss ? diffnet::add(*loss, term) : term;
      if (k + 1 < steps) {
        hist = step_histories(g, hist, std::span<const ClusterId>(s.move_c), std::span<const RelationId>(s.move_r),
                              std::span<const EntityId>(s.move_e));
      }
    }
    return *loss;
  };
  return check_gradients(p.all(), build);
}

}  // namespace dualwalk::testing
