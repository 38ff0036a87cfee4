#include <algorithm>
#include <cmath>
#include <numeric>

#include "inspectlab/classify.hpp"
#include "inspectlab/core/error.hpp"
#include "inspectlab/kernels.hpp"
#include "internal.hpp"

namespace inspectlab::classify {

template <typename T>
Mlp<T>::Mlp(std::size_t inputs, std::size_t hidden1, std::size_t hidden2, std::size_t outputs)
    : dims_{inputs, hidden1, hidden2, outputs} {
  for (int l = 0; l < 3; ++l) {
    params.emplace_back(dims_[l] * dims_[l + 1], T(0));
    params.emplace_back(dims_[l + 1], T(0));
  }
}

template <typename T>
void Mlp<T>::init(Rng& rng) {
  for (int l = 0; l < 3; ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(dims_[l]));
    for (auto& w : params[2 * l]) w = static_cast<T>(rng.uniform(-bound, bound));
    std::fill(params[2 * l + 1].begin(), params[2 * l + 1].end(), T(0));
  }
}

namespace {

template <typename T>
void add_bias(std::vector<T>& y, const std::vector<T>& b, std::size_t n) {
  const std::size_t m = b.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) y[i * m + j] += b[j];
}

template <typename T>
void column_sums(const std::vector<T>& d, std::size_t n, std::vector<T>& out) {
  const std::size_t m = out.size();
  std::fill(out.begin(), out.end(), T(0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j] += d[i * m + j];
}

}  // namespace

template <typename T>
std::vector<T> Mlp<T>::logits(const T* x, std::size_t n) const {
  std::vector<T> h1(n * dims_[1]), h2(n * dims_[2]), z(n * dims_[3]);
  kernels::gemm_nn(n, dims_[1], dims_[0], x, params[0].data(), h1.data(), false);
  add_bias(h1, params[1], n);
  for (auto& v : h1) v = std::max(v, T(0));
  kernels::gemm_nn(n, dims_[2], dims_[1], h1.data(), params[2].data(), h2.data(), false);
  add_bias(h2, params[3], n);
  kernels::gemm_nn(n, dims_[3], dims_[2], h2.data(), params[4].data(), z.data(), false);
  add_bias(z, params[5], n);
  return z;
}

template <typename T>
double Mlp<T>::loss(const T* x, std::size_t n, std::span<const int> y, std::vector<std::vector<T>>* grads) const {
  require(y.size() == n && n > 0, "Mlp::loss: label count mismatch");
  const std::size_t C = dims_[3];
  std::vector<T> h1(n * dims_[1]), h2(n * dims_[2]), z(n * C);
  kernels::gemm_nn(n, dims_[1], dims_[0], x, params[0].data(), h1.data(), false);
  add_bias(h1, params[1], n);
  for (auto& v : h1) v = std::max(v, T(0));
  kernels::gemm_nn(n, dims_[2], dims_[1], h1.data(), params[2].data(), h2.data(), false);
  add_bias(h2, params[3], n);
  kernels::gemm_nn(n, C, dims_[2], h2.data(), params[4].data(), z.data(), false);
  add_bias(z, params[5], n);

  double total = 0.0;
  std::vector<T> dz(n * C);
  for (std::size_t i = 0; i < n; ++i) {
    const T* zi = z.data() + i * C;
    const T mx = *std::max_element(zi, zi + C);
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += std::exp(static_cast<double>(zi[c] - mx));
    const double log_s = std::log(s);
    total += log_s - static_cast<double>(zi[y[i]] - mx);
    for (std::size_t c = 0; c < C; ++c) {
      const double p = std::exp(static_cast<double>(zi[c] - mx) - log_s);
      dz[i * C + c] = static_cast<T>((p - (static_cast<int>(c) == y[i] ? 1.0 : 0.0)) / static_cast<double>(n));
    }
  }
  if (grads == nullptr) return total / static_cast<double>(n);

  grads->resize(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) (*grads)[p].assign(params[p].size(), T(0));
  auto& g = *grads;
  kernels::gemm_tn(dims_[2], C, n, h2.data(), dz.data(), g[4].data(), false);
  column_sums(dz, n, g[5]);
  std::vector<T> dh2(n * dims_[2]);
  kernels::gemm_nt(n, dims_[2], C, dz.data(), params[4].data(), dh2.data(), false);
  kernels::gemm_tn(dims_[1], dims_[2], n, h1.data(), dh2.data(), g[2].data(), false);
  column_sums(dh2, n, g[3]);
  std::vector<T> dh1(n * dims_[1]);
  kernels::gemm_nt(n, dims_[1], dims_[2], dh2.data(), params[2].data(), dh1.data(), false);
  for (std::size_t i = 0; i < dh1.size(); ++i)
    if (h1[i] <= T(0)) dh1[i] = T(0);
  kernels::gemm_tn(dims_[0], dims_[1], n, x, dh1.data(), g[0].data(), false);
  column_sums(dh1, n, g[1]);
  return total / static_cast<double>(n);
}

template class Mlp<float>;
template class Mlp<double>;

std::vector<int> detail::encode_labels(std::span<const int> y, std::vector<int>& classes) {
  classes.assign(y.begin(), y.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) fail(ErrorKind::invalid_argument, "training labels cover fewer than two classes");
  std::vector<int> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    out[i] = static_cast<int>(std::lower_bound(classes.begin(), classes.end(), y[i]) - classes.begin());
  return out;
}

TrainedModel train_mlp(const FeatureMatrix& X, std::span<const int> y, const MlpConfig& config) {
  if (X.rows == 0) fail(ErrorKind::invalid_argument, "train_mlp: empty training set");
  require(y.size() == X.rows, "train_mlp: label count mismatch");
  require(config.epochs >= 1 && config.batch_size >= 1, "train_mlp: epochs and batch_size must be positive");
  TrainedModel model;
  model.kind = ModelKind::mlp;
  model.config = to_json(config);
  const auto cols = detail::encode_labels(y, model.classes);
  const std::size_t n = X.rows, d = X.cols;
  model.input_dim = d;

  model.feature_mean.assign(d, 0.0f);
  model.feature_scale.assign(d, 1.0f);
  for (std::size_t j = 0; j < d; ++j) {
    double s = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += X.at(i, j);
    const double mean = s / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) ss += (X.at(i, j) - mean) * (X.at(i, j) - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    model.feature_mean[j] = static_cast<float>(mean);
    model.feature_scale[j] = sd > 1e-12 ? static_cast<float>(1.0 / sd) : 1.0f;
  }
  std::vector<float> Z(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) Z[i * d + j] = (X.at(i, j) - model.feature_mean[j]) * model.feature_scale[j];

  auto net = std::make_shared<Mlp<float>>(d, config.hidden1, config.hidden2, model.classes.size());
  Rng init_rng(derive_seed(config.seed, "init"));
  net->init(init_rng);

  const float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
  std::vector<std::vector<float>> m, v, grads;
  for (const auto& p : net->params) {
    m.emplace_back(p.size(), 0.0f);
    v.emplace_back(p.size(), 0.0f);
  }
  std::size_t t = 0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  std::vector<float> xb;
  std::vector<int> yb;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, "epoch", static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t nb = std::min(bs, n - start);
      xb.resize(nb * d);
      yb.resize(nb);
      for (std::size_t i = 0; i < nb; ++i) {
        std::copy_n(Z.begin() + static_cast<std::ptrdiff_t>(order[start + i] * d), d,
                    xb.begin() + static_cast<std::ptrdiff_t>(i * d));
        yb[i] = cols[order[start + i]];
      }
      const double l = net->loss(xb.data(), nb, yb, &grads);
      if (!std::isfinite(l)) fail(ErrorKind::numerical, "train_mlp: non-finite loss at epoch " + std::to_string(epoch));
      epoch_loss += l * static_cast<double>(nb);
      ++t;
      const double bc1 = 1.0 - std::pow(static_cast<double>(b1), static_cast<double>(t));
      const double bc2 = 1.0 - std::pow(static_cast<double>(b2), static_cast<double>(t));
      const float step = static_cast<float>(config.learning_rate * std::sqrt(bc2) / bc1);
      for (std::size_t p = 0; p < net->params.size(); ++p) {
        auto& w = net->params[p];
        for (std::size_t j = 0; j < w.size(); ++j) {
          const float g = grads[p][j];
          m[p][j] = b1 * m[p][j] + (1.0f - b1) * g;
          v[p][j] = b2 * v[p][j] + (1.0f - b2) * g * g;
          w[j] -= step * m[p][j] / (std::sqrt(v[p][j]) + eps);
        }
      }
    }
    model.history.push_back(epoch_loss / static_cast<double>(n));
  }
  model.mlp = std::move(net);
  return model;
}

}  // namespace inspectlab::classify
