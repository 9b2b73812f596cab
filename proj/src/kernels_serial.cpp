#include <cmath>
#include <limits>

#include "dualwalk/kernels.hpp"

namespace dualwalk::kernels::serial {

template <typename T>
void gemm_nt(std::span<const T> x, std::span<const T> w, std::span<T> y, GemmShape s) {
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t n = 0; n < s.outer; ++n) {
      double acc = 0.0;
      for (std::size_t k = 0; k < s.inner; ++k) acc += static_cast<double>(x[b * s.inner + k]) * w[n * s.inner + k];
      y[b * s.outer + n] = static_cast<T>(acc);
    }
  }
}

template <typename T>
void gemm_nn_acc(std::span<const T> dy, std::span<const T> w, std::span<T> dx, GemmShape s) {
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t k = 0; k < s.inner; ++k) {
      double acc = 0.0;
      for (std::size_t n = 0; n < s.outer; ++n) acc += static_cast<double>(dy[b * s.outer + n]) * w[n * s.inner + k];
      dx[b * s.inner + k] += static_cast<T>(acc);
    }
  }
}

template <typename T>
void gemm_tn_acc(std::span<const T> dy, std::span<const T> x, std::span<T> dw, GemmShape s) {
  for (std::size_t n = 0; n < s.outer; ++n) {
    for (std::size_t k = 0; k < s.inner; ++k) {
      double acc = 0.0;
      for (std::size_t b = 0; b < s.batch; ++b) acc += static_cast<double>(dy[b * s.outer + n]) * x[b * s.inner + k];
      dw[n * s.inner + k] += static_cast<T>(acc);
    }
  }
}

template <typename T>
void colsum_acc(std::span<const T> dy, std::span<T> db, std::size_t rows, std::size_t cols) {
  for (std::size_t c = 0; c < cols; ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < rows; ++r) acc += dy[r * cols + c];
    db[c] += static_cast<T>(acc);
  }
}

template <typename T>
void lstm_forward(std::span<const T> z, std::span<const T> c_prev, std::span<T> gates, std::span<T> c_next,
                  std::span<T> h_next, std::size_t batch, std::size_t hidden) {
  auto sigmoid = [](T v) { return T(1) / (T(1) + std::exp(-v)); };
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < hidden; ++j) {
      const std::size_t zi = b * 4 * hidden;
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
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < hidden; ++j) {
      const std::size_t zi = b * 4 * hidden;
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
  for (std::size_t p = 0; p < n; ++p) {
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

}  // namespace dualwalk::kernels::serial
