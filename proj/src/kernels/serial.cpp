#include "inspectlab/kernels.hpp"

namespace inspectlab::kernels::serial {

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T s = accumulate ? c[i * n + j] : T(0);
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T s = accumulate ? c[i * n + j] : T(0);
      for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T s = T(0);
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
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

namespace {

// Input value at (b, c, iy, ix) with zero padding; iy/ix are padded coordinates.
float input_at(const ConvShape& s, const float* x, std::size_t b, std::size_t c, std::size_t py, std::size_t px) {
  if (py < s.pad || px < s.pad) return 0.0f;
  const std::size_t iy = py - s.pad;
  const std::size_t ix = px - s.pad;
  if (iy >= s.in_h || ix >= s.in_w) return 0.0f;
  return x[((b * s.in_channels + c) * s.in_h + iy) * s.in_w + ix];
}

}  // namespace

void conv2d_forward(const ConvShape& s, const float* x, const float* w, const float* bias, float* y, float*) {
  const std::size_t oh = s.out_h(), ow = s.out_w(), kk = s.kernel;
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t oc = 0; oc < s.out_channels; ++oc)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          float acc = 0.0f;
          for (std::size_t ic = 0; ic < s.in_channels; ++ic)
            for (std::size_t ky = 0; ky < kk; ++ky)
              for (std::size_t kx = 0; kx < kk; ++kx)
                acc += w[((oc * s.in_channels + ic) * kk + ky) * kk + kx] *
                       input_at(s, x, b, ic, oy * s.stride + ky, ox * s.stride + kx);
          y[((b * s.out_channels + oc) * oh + oy) * ow + ox] = acc + (bias ? bias[oc] : 0.0f);
        }
}

void conv2d_backward(const ConvShape& s, const float* dy, const float* w, const float* x, float* dx, float* dw,
                     float* db) {
  const std::size_t oh = s.out_h(), ow = s.out_w(), kk = s.kernel;
  if (dx) {
    for (std::size_t i = 0; i < s.batch * s.in_channels * s.in_h * s.in_w; ++i) dx[i] = 0.0f;
  }
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t oc = 0; oc < s.out_channels; ++oc)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const float g = dy[((b * s.out_channels + oc) * oh + oy) * ow + ox];
          if (db) db[oc] += g;
          for (std::size_t ic = 0; ic < s.in_channels; ++ic)
            for (std::size_t ky = 0; ky < kk; ++ky)
              for (std::size_t kx = 0; kx < kk; ++kx) {
                const std::size_t py = oy * s.stride + ky, px = ox * s.stride + kx;
                const std::size_t widx = ((oc * s.in_channels + ic) * kk + ky) * kk + kx;
                if (dw) dw[widx] += g * input_at(s, x, b, ic, py, px);
                if (dx && py >= s.pad && px >= s.pad && py - s.pad < s.in_h && px - s.pad < s.in_w) {
                  dx[((b * s.in_channels + ic) * s.in_h + (py - s.pad)) * s.in_w + (px - s.pad)] += g * w[widx];
                }
              }
        }
}

void pairwise_sq_dist(const float* a, std::size_t n, const float* b, std::size_t m, std::size_t d, double* out) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < d; ++p) {
        const double diff = static_cast<double>(a[i * d + p]) - static_cast<double>(b[j * d + p]);
        s += diff * diff;
      }
      out[i * m + j] = s;
    }
}

}  // namespace inspectlab::kernels::serial
