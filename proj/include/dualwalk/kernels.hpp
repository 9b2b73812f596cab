#pragma once

// Dense kernels behind the policy networks and k-means.
//
// Every kernel exists twice with the same signature: `serial` is the plain
// reference loop nest kept for testing and benchmarking, `parallel` is the
// OpenMP version used by the library. Parallel kernels split work over output
// elements only and use a fixed accumulation order per element, so results do
// not depend on the thread count. Reductions accumulate in double.
//
// Shapes (row-major):
//   gemm_nt:      y[B x N]  = x[B x K] * w[N x K]^T
//   gemm_nn_acc:  dx[B x K] += dy[B x N] * w[N x K]
//   gemm_tn_acc:  dw[N x K] += dy[B x N]^T * x[B x K]
//   colsum_acc:   db[N]     += sum_b dy[B x N]
//   lstm_*:       z[B x 4H] holds pre-activations in gate order (i, f, g, o)
//   nearest_centroid: points[n x d], centroids[k x d] -> label[n], dist2[n]

#include <cstddef>
#include <cstdint>
#include <span>

namespace dualwalk::kernels {

struct GemmShape {
  std::size_t batch = 0;  // B
  std::size_t inner = 0;  // K
  std::size_t outer = 0;  // N
};

#define DUALWALK_KERNEL_DECLS                                                                          \
  template <typename T>                                                                                \
  void gemm_nt(std::span<const T> x, std::span<const T> w, std::span<T> y, GemmShape s);              \
  template <typename T>                                                                                \
  void gemm_nn_acc(std::span<const T> dy, std::span<const T> w, std::span<T> dx, GemmShape s);        \
  template <typename T>                                                                                \
  void gemm_tn_acc(std::span<const T> dy, std::span<const T> x, std::span<T> dw, GemmShape s);        \
  template <typename T>                                                                                \
  void colsum_acc(std::span<const T> dy, std::span<T> db, std::size_t rows, std::size_t cols);         \
  template <typename T>                                                                                \
  void lstm_forward(std::span<const T> z, std::span<const T> c_prev, std::span<T> gates,              \
                    std::span<T> c_next, std::span<T> h_next, std::size_t batch, std::size_t hidden);  \
  template <typename T>                                                                                \
  void lstm_backward(std::span<const T> gates, std::span<const T> c_prev, std::span<const T> c_next,  \
                     std::span<const T> dh_next, std::span<const T> dc_next, std::span<T> dz,          \
                     std::span<T> dc_prev, std::size_t batch, std::size_t hidden);                     \
  void nearest_centroid(std::span<const float> points, std::span<const double> centroids,             \
                        std::span<std::int32_t> label, std::span<double> dist2, std::size_t n,         \
                        std::size_t k, std::size_t d);

namespace serial {
DUALWALK_KERNEL_DECLS
}  // namespace serial

namespace parallel {
DUALWALK_KERNEL_DECLS
}  // namespace parallel

#undef DUALWALK_KERNEL_DECLS

/// Worker count used by the parallel kernels (wraps omp_set_num_threads).
void set_num_threads(int threads);
int num_threads();

}  // namespace dualwalk::kernels
