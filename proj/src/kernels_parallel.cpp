#include <cmath>
#include <limits>
#include <vector>

#include <omp.h>

#include "dualwalk/kernels.hpp"

namespace dualwalk::kernels {

void set_num_threads(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

int num_threads() { return omp_get_max_threads(); }

namespace parallel {

namespace {

// Below this many multiply-adds a kernel stays on the calling thread.
constexpr std::size_t kParallelWork = 1 << 15;

// Same accumulation order as the serial reference, so results match bit for bit.
template <typename T>
inline double ordered_dot(const T* a, const T* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += static_cast<double>(a[k]) * b[k];
  return s;
}

}  // namespace

template <typename T>
void gemm_nt(std::span<const T> x, std::span<const T> w, std::span<T> y, GemmShape s) {
  const auto B = static_cast<std::ptrdiff_t>(s.batch);
  const auto N = static_cast<std::ptrdiff_t>(s.outer);
  const bool big = s.batch * s.outer * s.inner >= kParallelWork;
#pragma omp parallel for collapse(2) schedule(static) if (big)
  for (std::ptrdiff_t b = 0; b < B; ++b) {
    for (std::ptrdiff_t n = 0; n < N; ++n) {
      y[static_cast<std::size_t>(b * N + n)] =
          static_cast<T>(ordered_dot(x.data() + b * static_cast<std::ptrdiff_t>(s.inner),
                                     w.data() + n * static_cast<std::ptrdiff_t>(s.inner), s.inner));
    }
  }
}

template <typename T>
void gemm_nn_acc(std::span<const T> dy, std::span<const T> w, std::span<T> dx, GemmShape s) {
  const auto B = static_cast<std::ptrdiff_t>(s.batch);
  const bool big = s.batch * s.outer * s.inner >= kParallelWork;
#pragma omp parallel if (big)
  {
    std::vector<double> acc(s.inner);
#pragma omp for schedule(static)
    for (std::ptrdiff_t b = 0; b < B; ++b) {
      std::fill(acc.begin(), acc.end(), 0.0);
      const T* g = dy.data() + static_cast<std::size_t>(b) * s.outer;
      for (std::size_t n = 0; n < s.outer; ++n) {
        const double gn = g[n];
        if (gn == 0.0) continue;
        const T* wr = w.data() + n * s.inner;
        for (std::size_t k = 0; k < s.inner; ++k) acc[k] += gn * wr[k];
      }
      T* out = dx.data() + static_cast<std::size_t>(b) * s.inner;
      for (std::size_t k = 0; k < s.inner; ++k) out[k] += static_cast<T>(acc[k]);
    }
  }
}

template <typename T>
void gemm_tn_acc(std::span<const T> dy, std::span<const T> x, std::span<T> dw, GemmShape s) {
  const auto N = static_cast<std::ptrdiff_t>(s.outer);
  const bool big = s.batch * s.outer * s.inner >= kParallelWork;
#pragma omp parallel if (big)
  {
    std::vector<double> acc(s.inner);
#pragma omp for schedule(static)
    for (std::ptrdiff_t n = 0; n < N; ++n) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t b = 0; b < s.batch; ++b) {
        const double g = dy[b * s.outer + static_cast<std::size_t>(n)];
        if (g == 0.0) continue;
        const T* xr = x.data() + b * s.inner;
        for (std::size_t k = 0; k < s.inner; ++k) acc[k] += g * xr[k];
      }
      T* out = dw.data() + static_cast<std::size_t>(n) * s.inner;
      for (std::size_t k = 0; k < s.inner; ++k) out[k] += static_cast<T>(acc[k]);
    }
  }
}

template <typename T>
void colsum_acc(std::span<const T> dy, std::span<T> db, std::size_t rows, std::size_t cols) {
  const auto C = static_cast<std::ptrdiff_t>(cols);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
  for (std::ptrdiff_t c = 0; c < C; ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < rows; ++r) acc += dy[r * cols + static_cast<std::size_t>(c)];
    db[static_cast<std::size_t>(c)] += static_cast<T>(acc);
  }
}

template <typename T>
void lstm_forward(std::span<const T> z, std::span<const T> c_prev, std::span<T> gates, std::span<T> c_next,
                  std::span<T> h_next, std::size_t batch, std::size_t hidden) {
  auto sigmoid = [](T v) { return T(1) / (T(1) + std::exp(-v)); };
  const auto B = static_cast<std::ptrdiff_t>(batch);
#pragma omp parallel for schedule(static) if (batch * hidden >= kParallelWork / 16)
  for (std::ptrdiff_t bb = 0; bb < B; ++bb) {
    const auto b = static_cast<std::size_t>(bb);
    const std::size_t zi = b * 4 * hidden;
    for (std::size_t j = 0; j < hidden; ++j) {
      const T i = sigmoid(z[zi + j]);
      const T f = sigmoid(z[zi + hidden + j]);
      const T g = std::tanh(z[zi + 2 * hidden + j]);
      const T o = sigmoid(z[zi + 3 * hidden + j]);
      gates[zi + j] = i;
      gates[zi + hidden + j] = f;
      gates[zi + 2 * hidden + j] = g;
      gates[zi + 3 * hidden + j] = o;
      const T c = f * c_prev[b * hidden + j] + i * g;
      c_next[b * hidden + j] = c;
      h_next[b * hidden + j] = o * std::tanh(c);
    }
  }
}

template <typename T>
void lstm_backward(std::span<const T> gates, std::span<const T> c_prev, std::span<const T> c_next,
                   std::span<const T> dh_next, std::span<const T> dc_next, std::span<T> dz, std::span<T> dc_prev,
                   std::size_t batch, std::size_t hidden) {
  const auto B = static_cast<std::ptrdiff_t>(batch);
#pragma omp parallel for schedule(static) if (batch * hidden >= kParallelWork / 16)
  for (std::ptrdiff_t bb = 0; bb < B; ++bb) {
    const auto b = static_cast<std::size_t>(bb);
    const std::size_t zi = b * 4 * hidden;
    for (std::size_t j = 0; j < hidden; ++j) {
      const std::size_t hi = b * hidden + j;
      const T i = gates[zi + j];
      const T f = gates[zi + hidden + j];
      const T g = gates[zi + 2 * hidden + j];
      const T o = gates[zi + 3 * hidden + j];
      const T tc = std::tanh(c_next[hi]);
      const T dh = dh_next[hi];
      const T dc = dc_next[hi] + dh * o * (T(1) - tc * tc);
      dz[zi + j] = dc * g * i * (T(1) - i);
      dz[zi + hidden + j] = dc * c_prev[hi] * f * (T(1) - f);
      dz[zi + 2 * hidden + j] = dc * i * (T(1) - g * g);
      dz[zi + 3 * hidden + j] = dh * tc * o * (T(1) - o);
      dc_prev[hi] = dc * f;
    }
  }
}

void nearest_centroid(std::span<const float> points, std::span<const double> centroids,
                      std::span<std::int32_t> label, std::span<double> dist2, std::size_t n, std::size_t k,
                      std::size_t d) {
  const auto P = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * k * d >= kParallelWork)
  for (std::ptrdiff_t pp = 0; pp < P; ++pp) {
    const auto p = static_cast<std::size_t>(pp);
    double best = std::numeric_limits<double>::infinity();
    std::int32_t best_c = 0;
    for (std::size_t c = 0; c < k; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = static_cast<double>(points[p * d + j]) - centroids[c * d + j];
        acc += diff * diff;
      }
      if (acc < best) {
        best = acc;
        best_c = static_cast<std::int32_t>(c);
      }
    }
    label[p] = best_c;
    dist2[p] = best;
  }
}

#define INSTANTIATE(T)                                                                                     \
  template void gemm_nt<T>(std::span<const T>, std::span<const T>, std::span<T>, GemmShape);                \
  template void gemm_nn_acc<T>(std::span<const T>, std::span<const T>, std::span<T>, GemmShape);            \
  template void gemm_tn_acc<T>(std::span<const T>, std::span<const T>, std::span<T>, GemmShape);            \
  template void colsum_acc<T>(std::span<const T>, std::span<T>, std::size_t, std::size_t);                  \
  template void lstm_forward<T>(std::span<const T>, std::span<const T>, std::span<T>, std::span<T>,         \
                                std::span<T>, std::size_t, std::size_t);                                    \
  template void lstm_backward<T>(std::span<const T>, std::span<const T>, std::span<const T>,                \
                                 std::span<const T>, std::span<const T>, std::span<T>, std::span<T>,        \
                                 std::size_t, std::size_t);
INSTANTIATE(float)
INSTANTIATE(double)
#undef INSTANTIATE

}  // namespace parallel
}  // namespace dualwalk::kernels
