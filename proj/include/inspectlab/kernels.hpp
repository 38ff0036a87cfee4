#pragma once

// Dense compute kernels. The top-level namespace holds the OpenMP versions used
// by the library; kernels::serial holds naive single-threaded references that the
// tests and the benchmark compare against.
//
// Every parallel kernel assigns each output element to exactly one thread and
// accumulates it in a fixed order, so results do not depend on the thread count.

#include <cstddef>

namespace inspectlab::kernels {

struct ConvShape {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;

  std::size_t out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
  std::size_t patch() const { return in_channels * kernel * kernel; }
  std::size_t col_size() const { return patch() * out_h() * out_w(); }
};

// Row-major. C is m×n. With accumulate=false C is overwritten.
//   gemm_nn: C (+)= A·B    A m×k, B k×n
//   gemm_tn: C (+)= Aᵀ·B   A k×m, B k×n
//   gemm_nt: C (+)= A·Bᵀ   A m×k, B n×k
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);

/// x: batch×in_c×in_h×in_w, w: out_c×patch, y: batch×out_c×out_h×out_w.
/// col (batch×col_size) receives the unfolded input, kept for the backward pass.
void conv2d_forward(const ConvShape& s, const float* x, const float* w, const float* bias, float* y, float* col);

/// Accumulates into dw and db; overwrites dx when it is non-null.
void conv2d_backward(const ConvShape& s, const float* dy, const float* w, const float* col, float* dx, float* dw,
                     float* db);

/// out[i*m + j] = ‖a_i − b_j‖² in double precision. a: n×d, b: m×d.
void pairwise_sq_dist(const float* a, std::size_t n, const float* b, std::size_t m, std::size_t d, double* out);

namespace serial {

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);

/// Direct (non-unfolded) convolution; `col` is unused and may be null.
void conv2d_forward(const ConvShape& s, const float* x, const float* w, const float* bias, float* y, float* col);
/// Direct gradient computation from x rather than the unfolded cache.
void conv2d_backward(const ConvShape& s, const float* dy, const float* w, const float* x, float* dx, float* dw,
                     float* db);

void pairwise_sq_dist(const float* a, std::size_t n, const float* b, std::size_t m, std::size_t d, double* out);

}  // namespace serial

}  // namespace inspectlab::kernels
