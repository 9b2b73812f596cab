#include <doctest.h>

#include <vector>

#include "dualwalk/kernels.hpp"
#include "dualwalk/random.hpp"

using namespace dualwalk;

namespace {

template <typename T>
std::vector<T> random_vec(Rng& rng, std::size_t n) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-1.0, 1.0));
  return v;
}

template <typename T>
void compare_kernels(std::uint64_t seed) {
  Rng rng(seed);
  for (int trial = 0; trial < 20; ++trial) {
    const kernels::GemmShape s{1 + rng.below(40), 1 + rng.below(40), 1 + rng.below(40)};
    const auto x = random_vec<T>(rng, s.batch * s.inner);
    const auto w = random_vec<T>(rng, s.outer * s.inner);
    const auto dy = random_vec<T>(rng, s.batch * s.outer);

    std::vector<T> y1(s.batch * s.outer), y2(y1.size());
    kernels::serial::gemm_nt<T>(x, w, y1, s);
    kernels::parallel::gemm_nt<T>(x, w, y2, s);
    CHECK(y1 == y2);

    auto dx1 = random_vec<T>(rng, s.batch * s.inner);
    auto dx2 = dx1;
    kernels::serial::gemm_nn_acc<T>(dy, w, dx1, s);
    kernels::parallel::gemm_nn_acc<T>(dy, w, dx2, s);
    CHECK(dx1 == dx2);

    auto dw1 = random_vec<T>(rng, s.outer * s.inner);
    auto dw2 = dw1;
    kernels::serial::gemm_tn_acc<T>(dy, x, dw1, s);
    kernels::parallel::gemm_tn_acc<T>(dy, x, dw2, s);
    CHECK(dw1 == dw2);

    auto db1 = random_vec<T>(rng, s.outer);
    auto db2 = db1;
    kernels::serial::colsum_acc<T>(dy, db1, s.batch, s.outer);
    kernels::parallel::colsum_acc<T>(dy, db2, s.batch, s.outer);
    CHECK(db1 == db2);

    const std::size_t B = s.batch, H = 1 + rng.below(16);
    const auto z = random_vec<T>(rng, B * 4 * H);
    const auto c = random_vec<T>(rng, B * H);
    std::vector<T> g1(B * 4 * H), g2(g1.size()), c1(B * H), c2(B * H), h1(B * H), h2(B * H);
    kernels::serial::lstm_forward<T>(z, c, g1, c1, h1, B, H);
    kernels::parallel::lstm_forward<T>(z, c, g2, c2, h2, B, H);
    CHECK(g1 == g2);
    CHECK(c1 == c2);
    CHECK(h1 == h2);

    const auto dh = random_vec<T>(rng, B * H);
    const auto dc = random_vec<T>(rng, B * H);
    std::vector<T> dz1(B * 4 * H), dz2(dz1.size()), dcp1(B * H), dcp2(B * H);
    kernels::serial::lstm_backward<T>(g1, c, c1, dh, dc, dz1, dcp1, B, H);
    kernels::parallel::lstm_backward<T>(g1, c, c1, dh, dc, dz2, dcp2, B, H);
    CHECK(dz1 == dz2);
    CHECK(dcp1 == dcp2);
  }
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("parallel kernels match the serial reference bit for bit") {
  compare_kernels<float>(1);
  compare_kernels<double>(2);
}

TEST_CASE("gemm_nt against a hand-computed product") {
  // x = [[1, 2], [3, 4]], w = [[1, 0], [1, 1], [0, 2]]
  const std::vector<double> x{1, 2, 3, 4}, w{1, 0, 1, 1, 0, 2};
  std::vector<double> y(6);
  kernels::serial::gemm_nt<double>(x, w, y, {2, 2, 3});
  CHECK(y == std::vector<double>{1, 3, 4, 3, 7, 8});
}

TEST_CASE("nearest centroid picks the closest row, lowest index on ties") {
  const std::vector<float> pts{0, 0, 1, 1, 5, 5, 0.5f, 0.5f};
  const std::vector<double> cents{0, 0, 1, 1, 5, 5};
  std::vector<std::int32_t> label(4);
  std::vector<double> d2(4);
  kernels::parallel::nearest_centroid(pts, cents, label, d2, 4, 3, 2);
  CHECK(label == std::vector<std::int32_t>{0, 1, 2, 0});
  CHECK(d2[3] == doctest::Approx(0.5));
  std::vector<std::int32_t> label2(4);
  std::vector<double> d22(4);
  kernels::serial::nearest_centroid(pts, cents, label2, d22, 4, 3, 2);
  CHECK(label == label2);
  CHECK(d2 == d22);
}

TEST_CASE("thread count can be set") {
  const int before = kernels::num_threads();
  kernels::set_num_threads(1);
  CHECK(kernels::num_threads() == 1);
  kernels::set_num_threads(before);
}

}
