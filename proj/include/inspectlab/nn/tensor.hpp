#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "inspectlab/core/container.hpp"
#include "inspectlab/core/rng.hpp"

namespace inspectlab::nn {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, float fill = 0.0f)
      : shape(std::move(s)), data(count(shape), fill) {}

  static std::size_t count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }
  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t batch() const { return shape.empty() ? 0 : shape[0]; }
  /// Elements per batch item.
  std::size_t stride0() const { return shape.empty() || shape[0] == 0 ? 0 : data.size() / shape[0]; }
  float* ptr() { return data.data(); }
  const float* ptr() const { return data.data(); }
  void fill(float v) { std::fill(data.begin(), data.end(), v); }
};

struct Param {
  Tensor value;
  Tensor grad;

  explicit Param(std::vector<std::size_t> shape = {}) : value(shape), grad(shape) {}
};

/// Visitor over every persistent tensor (parameters and running buffers) of a model.
using StateVisitor = std::function<void(const std::string& name, Tensor& tensor)>;

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool train) = 0;
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual void collect(std::vector<Param*>&) {}
  virtual void visit_state(const std::string&, const StateVisitor&) {}
  virtual void init(Rng&) {}
};

/// Serialize named tensors (name, shape, data) in visit order.
Bytes save_state(const std::function<void(const StateVisitor&)>& walk);
/// Load into tensors visited in the same order; names and shapes must match.
void load_state(std::span<const std::uint8_t> bytes, const std::function<void(const StateVisitor&)>& walk);

class Adam {
 public:
  Adam(float lr = 1e-3f, float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Param*>& params);
  static void zero_grad(const std::vector<Param*>& params);

  Bytes save() const;
  void load(std::span<const std::uint8_t> bytes);
  std::size_t steps() const { return t_; }
  float learning_rate() const { return lr_; }

 private:
  float lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

}  // namespace inspectlab::nn
