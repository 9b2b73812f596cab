#include <doctest.h>

#include <cmath>

#include "../support/gradcases.hpp"
#include "dualwalk/error.hpp"

using namespace dualwalk;
using namespace dualwalk::testing;
using diffnet::Parameter;
using diffnet::Tape;

TEST_SUITE("diffnet") {
  TEST_CASE("operator gradients match central differences") {
    for (const auto& c : operator_cases()) {
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        CAPTURE(c.name);
        CAPTURE(seed);
        const auto r = c.run(seed);
        CHECK(r.entries > 0);
        CHECK(r.max_rel_error < 1e-4);
      }
    }
  }

  TEST_CASE("policy step gradients match central differences") {
    for (std::uint64_t seed = 1; seed <= 2; ++seed) {
      CAPTURE(seed);
      const auto r = policy_case(seed);
      CHECK(r.entries > 100);
      CHECK(r.max_rel_error < 1e-4);
    }
  }

  TEST_CASE("linear forward by hand") {
    Tape<double> tape(false);
    Matrix<double> x(1, 2), w(2, 2);
    x.data = {1, 2};
    w.data = {3, 4, 5, 6};
    const auto y = diffnet::linear(tape.constant(x), tape.constant(w));
    CHECK(y.value().data == std::vector<double>{11, 17});
  }

  TEST_CASE("masked log-softmax normalises over open slots only") {
    Tape<double> tape(false);
    Matrix<double> s(1, 3);
    s.data = {1.0, 50.0, 2.0};
    diffnet::Mask m(1, 3, 1);
    m(0, 1) = 0;
    const auto lp = diffnet::masked_log_softmax(tape.constant(s), m).value();
    CHECK(std::exp(lp(0, 0)) + std::exp(lp(0, 2)) == doctest::Approx(1.0));
    CHECK(std::exp(lp(0, 2) - lp(0, 0)) == doctest::Approx(std::exp(1.0)));
    CHECK(std::isfinite(lp(0, 1)));

    const auto p = diffnet::masked_softmax(std::vector<double>{0.0, 9.0, 0.0}, std::vector<std::uint8_t>{1, 0, 1});
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[1] == 0.0);
  }

  TEST_CASE("a fully masked row is an error") {
    Tape<double> tape(false);
    Matrix<double> s(1, 2);
    diffnet::Mask m(1, 2, 0);
    CHECK_THROWS_AS(diffnet::masked_log_softmax(tape.constant(s), m), NumericError);
  }

  TEST_CASE("entropy of a uniform distribution is log n") {
    Tape<double> tape(false);
    Matrix<double> s(2, 4, 0.0);
    diffnet::Mask m(2, 4, 1);
    m(1, 3) = 0;
    const auto h = diffnet::entropy(diffnet::masked_log_softmax(tape.constant(s), m), m).value();
    CHECK(h(0, 0) == doctest::Approx(std::log(4.0)));
    CHECK(h(1, 0) == doctest::Approx(std::log(3.0)));
  }

  TEST_CASE("backward misuse") {
    Parameter<double> p("p", 1, 1);
    p.value.data = {2.0};
    {
      Tape<double> tape(false);
      const auto v = diffnet::sum(tape.parameter(p));
      CHECK_THROWS_AS(tape.backward(v), NumericError);
    }
    {
      Tape<double> tape(true);
      const auto v = diffnet::sum(tape.parameter(p));
      tape.backward(v);
      CHECK(p.grad.data[0] == 1.0);
      CHECK_THROWS_AS(tape.backward(v), NumericError);
    }
    {
      Tape<double> tape(true);
      const auto c = diffnet::sum(tape.constant(Matrix<double>(1, 1, 1.0)));
      CHECK_THROWS_AS(tape.backward(c), NumericError);
    }
  }

  TEST_CASE("shape errors are reported") {
    Tape<double> tape(false);
    const auto a = tape.constant(Matrix<double>(2, 3));
    const auto b = tape.constant(Matrix<double>(3, 2));
    CHECK_THROWS(diffnet::add(a, b));
    CHECK_THROWS(diffnet::linear(a, a.tape->constant(Matrix<double>(2, 2))));
    CHECK_THROWS(diffnet::slice_cols(a, 2, 2));
    const std::vector<std::int32_t> bad{5};
    CHECK_THROWS(diffnet::gather_rows(a, std::span<const std::int32_t>(bad)));
  }

  TEST_CASE("Adam minimises a quadratic") {
    Parameter<double> x("x", 1, 3);
    x.value.data = {5.0, -4.0, 0.5};
    const std::vector<double> target{1.0, 2.0, -3.0};
    diffnet::AdamConfig cfg;
    cfg.learning_rate = 0.05;
    diffnet::Adam<double> opt({&x}, cfg);
    for (int it = 0; it < 2000; ++it) {
      Tape<double> tape(true);
      const auto v = tape.parameter(x);
      Matrix<double> w(1, 3);
      for (int i = 0; i < 3; ++i) w.data[i] = x.value.data[i] - 2.0 * target[i];
      tape.backward(diffnet::weighted_sum(v, w));
      // grad of |x - t|^2 is 2x - 2t; the tape gives x - 2t
      for (int i = 0; i < 3; ++i) x.grad.data[i] += x.value.data[i];
      opt.step();
    }
    for (int i = 0; i < 3; ++i) CHECK(x.value.data[i] == doctest::Approx(target[i]).epsilon(1e-3));
    CHECK(opt.steps() == 2000);
    CHECK(x.grad.data[0] == 0.0);  // cleared by step
  }

  TEST_CASE("first Adam step moves each entry by the learning rate") {
    Parameter<float> x("x", 1, 2);
    x.value.data = {1.0f, 1.0f};
    x.grad.data = {0.3f, -7.0f};
    diffnet::AdamConfig cfg;
    cfg.learning_rate = 0.01;
    diffnet::Adam<float> opt({&x}, cfg);
    opt.step();
    CHECK(x.value.data[0] == doctest::Approx(0.99).epsilon(1e-5));
    CHECK(x.value.data[1] == doctest::Approx(1.01).epsilon(1e-5));
  }

  TEST_CASE("gradient clipping") {
    Parameter<float> a("a", 1, 2), b("b", 1, 1);
    a.grad.data = {3.0f, 0.0f};
    b.grad.data = {4.0f};
    std::vector<Parameter<float>*> ps{&a, &b};
    CHECK(diffnet::global_grad_norm<float>(ps) == doctest::Approx(5.0));
    CHECK(diffnet::clip_grad_norm<float>(ps, 10.0) == doctest::Approx(5.0));
    CHECK(a.grad.data[0] == 3.0f);
    CHECK(diffnet::clip_grad_norm<float>(ps, 1.0) == doctest::Approx(5.0));
    CHECK(diffnet::global_grad_norm<float>(ps) == doctest::Approx(1.0));
    CHECK(a.grad.data[0] == doctest::Approx(0.6));
    CHECK(b.grad.data[0] == doctest::Approx(0.8));
  }
}
