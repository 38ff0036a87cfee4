#include "inspectlab/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "inspectlab/core/error.hpp"

namespace inspectlab::nn {

namespace {

void uniform_fill(Tensor& t, Rng& rng, float bound) {
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(-bound, bound));
}

void normal_fill(Tensor& t, Rng& rng, float stddev) {
  for (auto& v : t.data) v = static_cast<float>(rng.normal() * stddev);
}

}  // namespace

// ---- Linear -------------------------------------------------------------

Linear::Linear(std::size_t in, std::size_t out) : in_(in), out_(out), weight_({in, out}), bias_({out}) {}

void Linear::init(Rng& rng) {
  uniform_fill(weight_.value, rng, std::sqrt(6.0f / static_cast<float>(in_)));
  bias_.value.fill(0.0f);
}

void Linear::init_normal(Rng& rng, float stddev) {
  normal_fill(weight_.value, rng, stddev);
  bias_.value.fill(0.0f);
}

Tensor Linear::forward(const Tensor& x, bool train) {
  const std::size_t n = x.batch();
  require(x.stride0() == in_, "Linear: input width mismatch");
  if (train) input_ = x;
  Tensor y({n, out_});
  for (std::size_t i = 0; i < n; ++i) std::copy(bias_.value.data.begin(), bias_.value.data.end(), y.ptr() + i * out_);
  kernels::gemm_nn(n, out_, in_, x.ptr(), weight_.value.ptr(), y.ptr(), true);
  return y;
}

Tensor Linear::backward(const Tensor& dy) {
  const std::size_t n = dy.batch();
  kernels::gemm_tn(in_, out_, n, input_.ptr(), dy.ptr(), weight_.grad.ptr(), true);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < out_; ++j) bias_.grad.data[j] += dy.data[i * out_ + j];
  Tensor dx(input_.shape);
  kernels::gemm_nt(n, in_, out_, dy.ptr(), weight_.value.ptr(), dx.ptr(), false);
  return dx;
}

void Linear::visit_state(const std::string& prefix, const StateVisitor& v) {
  v(prefix + "weight", weight_.value);
  v(prefix + "bias", bias_.value);
}

// ---- Conv2d -------------------------------------------------------------

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
               std::size_t pad, bool bias)
    : has_bias_(bias),
      weight_({out_channels, in_channels * kernel * kernel}),
      bias_(bias ? std::vector<std::size_t>{out_channels} : std::vector<std::size_t>{0}) {
  shape_.in_channels = in_channels;
  shape_.out_channels = out_channels;
  shape_.kernel = kernel;
  shape_.stride = stride;
  shape_.pad = pad;
}

void Conv2d::init(Rng& rng) {
  uniform_fill(weight_.value, rng, std::sqrt(6.0f / static_cast<float>(shape_.patch())));
  bias_.value.fill(0.0f);
}

void Conv2d::init_normal(Rng& rng, float stddev) {
  normal_fill(weight_.value, rng, stddev);
  bias_.value.fill(0.0f);
}

void Conv2d::collect(std::vector<Param*>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

void Conv2d::visit_state(const std::string& prefix, const StateVisitor& v) {
  v(prefix + "weight", weight_.value);
  if (has_bias_) v(prefix + "bias", bias_.value);
}

Tensor Conv2d::forward(const Tensor& x, bool train) {
  require(x.shape.size() == 4 && x.dim(1) == shape_.in_channels, "Conv2d: expected N×C×H×W input");
  kernels::ConvShape s = shape_;
  s.batch = x.dim(0);
  s.in_h = x.dim(2);
  s.in_w = x.dim(3);
  shape_ = s;
  in_shape_ = x.shape;
  Tensor y({s.batch, s.out_channels, s.out_h(), s.out_w()});
  std::vector<float> scratch;
  std::vector<float>& col = train ? col_ : scratch;
  col.resize(s.batch * s.col_size());
  kernels::conv2d_forward(s, x.ptr(), weight_.value.ptr(), has_bias_ ? bias_.value.ptr() : nullptr, y.ptr(),
                          col.data());
  return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
  Tensor dx(in_shape_);
  kernels::conv2d_backward(shape_, dy.ptr(), weight_.value.ptr(), col_.data(), dx.ptr(), weight_.grad.ptr(),
                           has_bias_ ? bias_.grad.ptr() : nullptr);
  return dx;
}

// ---- activations ----------------------------------------------------------

Tensor ReLU::forward(const Tensor& x, bool train) {
  if (train) input_ = x;
  Tensor y = x;
  for (auto& v : y.data) v = v > 0.0f ? v : 0.0f;
  return y;
}

Tensor ReLU::backward(const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(input_.data[i] > 0.0f)) dx.data[i] = 0.0f;
  return dx;
}

Tensor LeakyReLU::forward(const Tensor& x, bool train) {
  if (train) input_ = x;
  Tensor y = x;
  for (auto& v : y.data) v = v > 0.0f ? v : v * slope_;
  return y;
}

Tensor LeakyReLU::backward(const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(input_.data[i] > 0.0f)) dx.data[i] *= slope_;
  return dx;
}

Tensor Sigmoid::forward(const Tensor& x, bool train) {
  Tensor y = x;
  for (auto& v : y.data) v = 1.0f / (1.0f + std::exp(-v));
  if (train) output_ = y;
  return y;
}

Tensor Sigmoid::backward(const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= output_.data[i] * (1.0f - output_.data[i]);
  return dx;
}

Tensor Tanh::forward(const Tensor& x, bool train) {
  Tensor y = x;
  for (auto& v : y.data) v = std::tanh(v);
  if (train) output_ = y;
  return y;
}

Tensor Tanh::backward(const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= 1.0f - output_.data[i] * output_.data[i];
  return dx;
}

// ---- pooling / resampling -------------------------------------------------

Tensor MaxPool2::forward(const Tensor& x, bool train) {
  require(x.shape.size() == 4, "MaxPool2: expected N×C×H×W input");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor y({n, c, oh, ow});
  if (train) {
    in_shape_ = x.shape;
    argmax_.assign(y.size(), 0);
  }
  for (std::size_t p = 0; p < n * c; ++p) {
    const float* src = x.ptr() + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (2 * oy) * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (2 * oy + dy) * w + 2 * ox + dx;
            if (src[idx] > src[best]) best = idx;
          }
        const std::size_t o = p * oh * ow + oy * ow + ox;
        y.data[o] = src[best];
        if (train) argmax_[o] = p * h * w + best;
      }
  }
  return y;
}

Tensor MaxPool2::backward(const Tensor& dy) {
  Tensor dx(in_shape_);
  for (std::size_t i = 0; i < dy.size(); ++i) dx.data[argmax_[i]] += dy.data[i];
  return dx;
}

Tensor AvgPool2::forward(const Tensor& x, bool train) {
  require(x.shape.size() == 4, "AvgPool2: expected N×C×H×W input");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  if (train) in_shape_ = x.shape;
  Tensor y({n, c, oh, ow});
  for (std::size_t p = 0; p < n * c; ++p) {
    const float* src = x.ptr() + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t i = 2 * oy * w + 2 * ox;
        y.data[p * oh * ow + oy * ow + ox] = 0.25f * ((src[i] + src[i + 1]) + (src[i + w] + src[i + w + 1]));
      }
  }
  return y;
}

Tensor AvgPool2::backward(const Tensor& dy) {
  Tensor dx(in_shape_);
  const std::size_t n = in_shape_[0], c = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
  const std::size_t oh = h / 2, ow = w / 2;
  for (std::size_t p = 0; p < n * c; ++p)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const float g = 0.25f * dy.data[p * oh * ow + oy * ow + ox];
        float* dst = dx.ptr() + p * h * w + 2 * oy * w + 2 * ox;
        dst[0] += g;
        dst[1] += g;
        dst[w] += g;
        dst[w + 1] += g;
      }
  return dx;
}

Tensor Upsample2::forward(const Tensor& x, bool train) {
  require(x.shape.size() == 4, "Upsample2: expected N×C×H×W input");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (train) in_shape_ = x.shape;
  Tensor y({n, c, 2 * h, 2 * w});
  for (std::size_t p = 0; p < n * c; ++p)
    for (std::size_t oy = 0; oy < 2 * h; ++oy)
      for (std::size_t ox = 0; ox < 2 * w; ++ox)
        y.data[(p * 2 * h + oy) * 2 * w + ox] = x.data[(p * h + oy / 2) * w + ox / 2];
  return y;
}

Tensor Upsample2::backward(const Tensor& dy) {
  Tensor dx(in_shape_);
  const std::size_t n = in_shape_[0], c = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
  for (std::size_t p = 0; p < n * c; ++p)
    for (std::size_t oy = 0; oy < 2 * h; ++oy)
      for (std::size_t ox = 0; ox < 2 * w; ++ox)
        dx.data[(p * h + oy / 2) * w + ox / 2] += dy.data[(p * 2 * h + oy) * 2 * w + ox];
  return dx;
}

// ---- BatchNorm ------------------------------------------------------------

BatchNorm::BatchNorm(std::size_t channels, float momentum, float eps)
    : channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_({channels}),
      beta_({channels}),
      running_mean_({channels}, 0.0f),
      running_var_({channels}, 1.0f) {
  gamma_.value.fill(1.0f);
}

void BatchNorm::visit_state(const std::string& prefix, const StateVisitor& v) {
  v(prefix + "gamma", gamma_.value);
  v(prefix + "beta", beta_.value);
  v(prefix + "running_mean", running_mean_);
  v(prefix + "running_var", running_var_);
}

Tensor BatchNorm::forward(const Tensor& x, bool train) {
  require(x.shape.size() >= 2 && x.dim(1) == channels_, "BatchNorm: channel mismatch");
  const std::size_t n = x.dim(0);
  const std::size_t spatial = x.size() / (n * channels_);
  const std::size_t m = n * spatial;
  Tensor y(x.shape);
  last_train_ = train;
  if (train) {
    xhat_ = Tensor(x.shape);
    inv_std_.assign(channels_, 0.0f);
  }
  for (std::size_t c = 0; c < channels_; ++c) {
    float mean, inv_std;
    if (train) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < spatial; ++i) s += x.data[(b * channels_ + c) * spatial + i];
      const double mu = s / static_cast<double>(m);
      double ss = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < spatial; ++i) {
          const double d = x.data[(b * channels_ + c) * spatial + i] - mu;
          ss += d * d;
        }
      const double var = ss / static_cast<double>(m);
      mean = static_cast<float>(mu);
      inv_std = static_cast<float>(1.0 / std::sqrt(var + eps_));
      const double unbiased = m > 1 ? ss / static_cast<double>(m - 1) : var;
      running_mean_.data[c] = (1.0f - momentum_) * running_mean_.data[c] + momentum_ * mean;
      running_var_.data[c] = (1.0f - momentum_) * running_var_.data[c] + momentum_ * static_cast<float>(unbiased);
      inv_std_[c] = inv_std;
    } else {
      mean = running_mean_.data[c];
      inv_std = 1.0f / std::sqrt(running_var_.data[c] + eps_);
    }
    const float g = gamma_.value.data[c], bt = beta_.value.data[c];
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < spatial; ++i) {
        const std::size_t idx = (b * channels_ + c) * spatial + i;
        const float xh = (x.data[idx] - mean) * inv_std;
        if (train) xhat_.data[idx] = xh;
        y.data[idx] = g * xh + bt;
      }
  }
  return y;
}

Tensor BatchNorm::backward(const Tensor& dy) {
  require(last_train_, "BatchNorm: backward requires a training-mode forward pass");
  const std::size_t n = dy.dim(0);
  const std::size_t spatial = dy.size() / (n * channels_);
  const double m = static_cast<double>(n * spatial);
  Tensor dx(dy.shape);
  for (std::size_t c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < spatial; ++i) {
        const std::size_t idx = (b * channels_ + c) * spatial + i;
        sum_dy += dy.data[idx];
        sum_dy_xhat += static_cast<double>(dy.data[idx]) * xhat_.data[idx];
      }
    gamma_.grad.data[c] += static_cast<float>(sum_dy_xhat);
    beta_.grad.data[c] += static_cast<float>(sum_dy);
    const double g = gamma_.value.data[c];
    const double k = g * inv_std_[c] / m;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < spatial; ++i) {
        const std::size_t idx = (b * channels_ + c) * spatial + i;
        dx.data[idx] = static_cast<float>(k * (m * dy.data[idx] - sum_dy - xhat_.data[idx] * sum_dy_xhat));
      }
  }
  return dx;
}

// ---- Flatten / Sequential -------------------------------------------------

Tensor Flatten::forward(const Tensor& x, bool) {
  in_shape_ = x.shape;
  Tensor y;
  y.shape = {x.batch(), x.stride0()};
  y.data = x.data;
  return y;
}

Tensor Flatten::backward(const Tensor& dy) {
  Tensor dx;
  dx.shape = in_shape_;
  dx.data = dy.data;
  return dx;
}

Tensor Sequential::forward(const Tensor& x, bool train) {
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h, train);
  return h;
}

Tensor Sequential::backward(const Tensor& dy) {
  Tensor g = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

void Sequential::collect(std::vector<Param*>& out) {
  for (auto& l : layers_) l->collect(out);
}

void Sequential::visit_state(const std::string& prefix, const StateVisitor& v) {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->visit_state(prefix + std::to_string(i) + ".", v);
}

void Sequential::init(Rng& rng) {
  for (auto& l : layers_) l->init(rng);
}

// ---- losses ---------------------------------------------------------------

Tensor softmax(const Tensor& logits) {
  const std::size_t n = logits.batch(), c = logits.stride0();
  Tensor p(logits.shape);
  for (std::size_t i = 0; i < n; ++i) {
    const float* z = logits.ptr() + i * c;
    const float mx = *std::max_element(z, z + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(static_cast<double>(z[j] - mx));
    for (std::size_t j = 0; j < c; ++j)
      p.data[i * c + j] = static_cast<float>(std::exp(static_cast<double>(z[j] - mx)) / s);
  }
  return p;
}

double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, std::span<const float> weights,
                             Tensor* dlogits) {
  const std::size_t n = logits.batch(), c = logits.stride0();
  require(labels.size() == n, "softmax_cross_entropy: label count mismatch");
  require(weights.empty() || weights.size() == n, "softmax_cross_entropy: weight count mismatch");
  if (dlogits) *dlogits = Tensor(logits.shape);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const float* z = logits.ptr() + i * c;
    const double mx = *std::max_element(z, z + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(z[j] - mx);
    const double log_s = std::log(s);
    const auto y = static_cast<std::size_t>(labels[i]);
    const double w = weights.empty() ? 1.0 : static_cast<double>(weights[i]);
    total += w * (log_s - (z[y] - mx));
    if (dlogits) {
      for (std::size_t j = 0; j < c; ++j) {
        const double p = std::exp(z[j] - mx - log_s);
        dlogits->data[i * c + j] = static_cast<float>(w * (p - (j == y ? 1.0 : 0.0)) / static_cast<double>(n));
      }
    }
  }
  return total / static_cast<double>(n);
}

double bce_with_logits(const Tensor& logits, const Tensor& targets, Tensor* dlogits) {
  require(logits.size() == targets.size(), "bce_with_logits: size mismatch");
  const double n = static_cast<double>(logits.size());
  if (dlogits) *dlogits = Tensor(logits.shape);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits.data[i], t = targets.data[i];
    total += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    if (dlogits) dlogits->data[i] = static_cast<float>((1.0 / (1.0 + std::exp(-z)) - t) / n);
  }
  return total / n;
}

double mse(const Tensor& pred, const Tensor& target, Tensor* dpred) {
  require(pred.size() == target.size(), "mse: size mismatch");
  const double n = static_cast<double>(pred.size());
  if (dpred) *dpred = Tensor(pred.shape);
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - target.data[i];
    total += d * d;
    if (dpred) dpred->data[i] = static_cast<float>(2.0 * d / n);
  }
  return total / n;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require(a.shape.size() == 4 && b.shape.size() == 4 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) &&
              a.dim(3) == b.dim(3),
          "concat_channels: incompatible shapes");
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  Tensor out({n, ca + cb, a.dim(2), a.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.ptr() + i * ca * hw, ca * hw, out.ptr() + i * (ca + cb) * hw);
    std::copy_n(b.ptr() + i * cb * hw, cb * hw, out.ptr() + i * (ca + cb) * hw + ca * hw);
  }
  return out;
}

void split_channels(const Tensor& g, std::size_t ca, Tensor& ga, Tensor& gb) {
  const std::size_t n = g.dim(0), c = g.dim(1), hw = g.dim(2) * g.dim(3);
  ga = Tensor({n, ca, g.dim(2), g.dim(3)});
  gb = Tensor({n, c - ca, g.dim(2), g.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(g.ptr() + i * c * hw, ca * hw, ga.ptr() + i * ca * hw);
    std::copy_n(g.ptr() + i * c * hw + ca * hw, (c - ca) * hw, gb.ptr() + i * (c - ca) * hw);
  }
}

}  // namespace inspectlab::nn
