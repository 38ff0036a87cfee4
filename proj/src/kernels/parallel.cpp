#include <omp.h>

#include <algorithm>
#include <vector>

#include "inspectlab/kernels.hpp"

namespace inspectlab::kernels {

namespace {

constexpr std::size_t kParallelWork = 1 << 15;

// Eight independent partial sums folded in a fixed tree; vectorizes without
// reassociating across threads.
template <typename T>
T dot_lanes(const T* a, const T* b, std::size_t n) {
  T acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t p = 0;
  for (; p + 8 <= n; p += 8) {
    for (int u = 0; u < 8; ++u) acc[u] += a[p + u] * b[p + u];
  }
  for (; p < n; ++p) acc[p % 8] += a[p] * b[p];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
void gemm_nn_row(std::size_t i, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  T* row = c + i * n;
  if (!accumulate) std::fill(row, row + n, T(0));
  for (std::size_t p = 0; p < k; ++p) {
    const T av = a[i * k + p];
    const T* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
  }
}

template <typename T>
void gemm_tn_row(std::size_t i, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
                 bool accumulate) {
  T* row = c + i * n;
  if (!accumulate) std::fill(row, row + n, T(0));
  for (std::size_t p = 0; p < k; ++p) {
    const T av = a[p * m + i];
    const T* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
  }
}

void im2col(const ConvShape& s, const float* x, float* col) {
  const std::size_t oh = s.out_h(), ow = s.out_w(), kk = s.kernel;
  const std::size_t l = oh * ow;
  for (std::size_t ic = 0; ic < s.in_channels; ++ic) {
    const float* plane = x + ic * s.in_h * s.in_w;
    for (std::size_t ky = 0; ky < kk; ++ky)
      for (std::size_t kx = 0; kx < kk; ++kx) {
        float* dst = col + ((ic * kk + ky) * kk + kx) * l;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::size_t py = oy * s.stride + ky;
          const bool row_in = py >= s.pad && py - s.pad < s.in_h;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::size_t px = ox * s.stride + kx;
            dst[oy * ow + ox] = (row_in && px >= s.pad && px - s.pad < s.in_w)
                                    ? plane[(py - s.pad) * s.in_w + (px - s.pad)]
                                    : 0.0f;
          }
        }
      }
  }
}

void col2im(const ConvShape& s, const float* col, float* x) {
  const std::size_t oh = s.out_h(), ow = s.out_w(), kk = s.kernel;
  const std::size_t l = oh * ow;
  std::fill(x, x + s.in_channels * s.in_h * s.in_w, 0.0f);
  for (std::size_t ic = 0; ic < s.in_channels; ++ic) {
    float* plane = x + ic * s.in_h * s.in_w;
    for (std::size_t ky = 0; ky < kk; ++ky)
      for (std::size_t kx = 0; kx < kk; ++kx) {
        const float* src = col + ((ic * kk + ky) * kk + kx) * l;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::size_t py = oy * s.stride + ky;
          if (py < s.pad || py - s.pad >= s.in_h) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::size_t px = ox * s.stride + kx;
            if (px < s.pad || px - s.pad >= s.in_w) continue;
            plane[(py - s.pad) * s.in_w + (px - s.pad)] += src[oy * ow + ox];
          }
        }
      }
  }
}

}  // namespace

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i) gemm_nn_row(static_cast<std::size_t>(i), n, k, a, b, c, accumulate);
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i) gemm_tn_row(static_cast<std::size_t>(i), m, n, k, a, b, c, accumulate);
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < n; ++j) {
      const T s = dot_lanes(a + i * k, b + j * k, k);
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

template void gemm_nn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void gemm_nn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
template void gemm_tn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void gemm_tn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
template void gemm_nt<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void gemm_nt<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);

void conv2d_forward(const ConvShape& s, const float* x, const float* w, const float* bias, float* y, float* col) {
  const std::size_t l = s.out_h() * s.out_w();
  const std::size_t in_size = s.in_channels * s.in_h * s.in_w;
  const std::size_t patch = s.patch();
  const auto batch = static_cast<std::ptrdiff_t>(s.batch);
#pragma omp parallel for schedule(static) if (s.batch > 1 && s.batch * s.out_channels * patch * l > kParallelWork)
  for (std::ptrdiff_t bi = 0; bi < batch; ++bi) {
    const auto b = static_cast<std::size_t>(bi);
    float* cb = col + b * s.col_size();
    im2col(s, x + b * in_size, cb);
    float* yb = y + b * s.out_channels * l;
    for (std::size_t oc = 0; oc < s.out_channels; ++oc) gemm_nn_row(oc, l, patch, w, cb, yb, false);
    if (bias) {
      for (std::size_t oc = 0; oc < s.out_channels; ++oc)
        for (std::size_t j = 0; j < l; ++j) yb[oc * l + j] += bias[oc];
    }
  }
}

void conv2d_backward(const ConvShape& s, const float* dy, const float* w, const float* col, float* dx, float* dw,
                     float* db) {
  const std::size_t l = s.out_h() * s.out_w();
  const std::size_t patch = s.patch();
  const std::size_t in_size = s.in_channels * s.in_h * s.in_w;
  const bool big = s.batch * s.out_channels * patch * l > kParallelWork;
  const auto out_channels = static_cast<std::ptrdiff_t>(s.out_channels);

#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t oci = 0; oci < out_channels; ++oci) {
    const auto oc = static_cast<std::size_t>(oci);
    for (std::size_t b = 0; b < s.batch; ++b) {
      const float* g = dy + (b * s.out_channels + oc) * l;
      if (db) {
        float acc = 0.0f;
        for (std::size_t j = 0; j < l; ++j) acc += g[j];
        db[oc] += acc;
      }
      if (dw) {
        const float* cb = col + b * s.col_size();
        for (std::size_t p = 0; p < patch; ++p) dw[oc * patch + p] += dot_lanes(g, cb + p * l, l);
      }
    }
  }

  if (dx) {
    const auto batch = static_cast<std::ptrdiff_t>(s.batch);
#pragma omp parallel if (big && s.batch > 1)
    {
      std::vector<float> dcol(s.col_size());
#pragma omp for schedule(static)
      for (std::ptrdiff_t bi = 0; bi < batch; ++bi) {
        const auto b = static_cast<std::size_t>(bi);
        const float* g = dy + b * s.out_channels * l;
        for (std::size_t p = 0; p < patch; ++p) gemm_tn_row(p, patch, l, s.out_channels, w, g, dcol.data(), false);
        col2im(s, dcol.data(), dx + b * in_size);
      }
    }
  }
}

void pairwise_sq_dist(const float* a, std::size_t n, const float* b, std::size_t m, std::size_t d, double* out) {
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * m * d > kParallelWork)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < d; ++p) {
        const double diff = static_cast<double>(a[i * d + p]) - static_cast<double>(b[j * d + p]);
        s += diff * diff;
      }
      out[i * m + j] = s;
    }
  }
}

}  // namespace inspectlab::kernels
