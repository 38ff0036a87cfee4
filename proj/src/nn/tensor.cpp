#include "inspectlab/nn/tensor.hpp"

#include <cmath>

#include "inspectlab/core/error.hpp"

namespace inspectlab::nn {

Bytes save_state(const std::function<void(const StateVisitor&)>& walk) {
  ByteWriter body;
  std::uint32_t count = 0;
  walk([&](const std::string& name, Tensor& t) {
    body.str(name);
    body.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) body.u64(d);
    body.floats(t.data);
    ++count;
  });
  ByteWriter out;
  out.u32(count);
  out.raw(body.bytes());
  return out.take();
}

void load_state(std::span<const std::uint8_t> bytes, const std::function<void(const StateVisitor&)>& walk) {
  ByteReader r(bytes);
  const auto count = r.u32();
  std::uint32_t seen = 0;
  walk([&](const std::string& name, Tensor& t) {
    if (seen++ >= count) fail(ErrorKind::format, "weights blob has fewer tensors than the model");
    const auto stored = r.str();
    if (stored != name) fail(ErrorKind::format, "weights blob tensor '" + stored + "' where '" + name + "' expected");
    const auto ndim = r.u32();
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = r.u64();
    if (shape != t.shape) fail(ErrorKind::format, "shape mismatch for tensor '" + name + "'");
    t.data = r.floats();
    if (t.data.size() != Tensor::count(t.shape)) fail(ErrorKind::format, "size mismatch for tensor '" + name + "'");
  });
  if (seen != count) fail(ErrorKind::format, "weights blob has more tensors than the model");
}

void Adam::step(const std::vector<Param*>& params) {
  if (m_.size() != params.size()) {
    m_.assign(params.size(), {});
    v_.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i]->value.size(), 0.0f);
      v_[i].assign(params[i]->value.size(), 0.0f);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), static_cast<double>(t_));
  const float step = static_cast<float>(lr_ * std::sqrt(bc2) / bc1);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i]->value.data;
    const auto& g = params[i]->grad.data;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0f - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0f - beta2_) * g[j] * g[j];
      w[j] -= step * m[j] / (std::sqrt(v[j]) + eps_);
    }
  }
}

void Adam::zero_grad(const std::vector<Param*>& params) {
  for (auto* p : params) p->grad.fill(0.0f);
}

Bytes Adam::save() const {
  ByteWriter w;
  w.u64(t_);
  w.u64(m_.size());
  for (std::size_t i = 0; i < m_.size(); ++i) {
    w.floats(m_[i]);
    w.floats(v_[i]);
  }
  return w.take();
}

void Adam::load(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  t_ = r.u64();
  const auto n = r.u64();
  m_.assign(n, {});
  v_.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    m_[i] = r.floats();
    v_[i] = r.floats();
  }
}

}  // namespace inspectlab::nn
