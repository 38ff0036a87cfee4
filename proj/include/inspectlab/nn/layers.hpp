#pragma once

#include <memory>
#include <span>
#include <vector>

#include "inspectlab/kernels.hpp"
#include "inspectlab/nn/tensor.hpp"

namespace inspectlab::nn {

/// y = x·W + b with W stored in×out. Input is flattened past the batch dimension.
class Linear : public Layer {
 public:
  Linear(std::size_t in, std::size_t out);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect(std::vector<Param*>& out) override { out.insert(out.end(), {&weight_, &bias_}); }
  void visit_state(const std::string& prefix, const StateVisitor& v) override;
  void init(Rng& rng) override;
  void init_normal(Rng& rng, float stddev);
  Param& weight() { return weight_; }

 private:
  std::size_t in_, out_;
  Param weight_, bias_;
  Tensor input_;
};

class Conv2d : public Layer {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride = 1,
         std::size_t pad = 0, bool bias = true);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect(std::vector<Param*>& out) override;
  void visit_state(const std::string& prefix, const StateVisitor& v) override;
  void init(Rng& rng) override;
  void init_normal(Rng& rng, float stddev);

 private:
  kernels::ConvShape shape_;
  bool has_bias_;
  Param weight_, bias_;
  std::vector<float> col_;
  std::vector<std::size_t> in_shape_;
};

class ReLU : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;

 private:
  Tensor input_;
};

class LeakyReLU : public Layer {
 public:
  explicit LeakyReLU(float slope = 0.2f) : slope_(slope) {}
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;

 private:
  float slope_;
  Tensor input_;
};

class Sigmoid : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;

 private:
  Tensor output_;
};

class Tanh : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;

 private:
  Tensor output_;
};

/// 2×2 max pooling, stride 2 (odd trailing rows/cols dropped).
class MaxPool2 : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;

 private:
  std::vector<std::size_t> in_shape_;
  std::vector<std::size_t> argmax_;
};

/// 2×2 average pooling, stride 2.
class AvgPool2 : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;

 private:
  std::vector<std::size_t> in_shape_;
};

/// Nearest-neighbour 2× upsampling.
class Upsample2 : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;

 private:
  std::vector<std::size_t> in_shape_;
};

/// Batch normalization over (N, H, W) per channel; accepts N×C or N×C×H×W.
class BatchNorm : public Layer {
 public:
  explicit BatchNorm(std::size_t channels, float momentum = 0.1f, float eps = 1e-5f);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect(std::vector<Param*>& out) override { out.insert(out.end(), {&gamma_, &beta_}); }
  void visit_state(const std::string& prefix, const StateVisitor& v) override;

 private:
  std::size_t channels_;
  float momentum_, eps_;
  Param gamma_, beta_;
  Tensor running_mean_, running_var_;
  Tensor xhat_;
  std::vector<float> inv_std_;
  bool last_train_ = false;
};

class Flatten : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;

 private:
  std::vector<std::size_t> in_shape_;
};

class Sequential : public Layer {
 public:
  Sequential() = default;
  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto p = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *p;
    layers_.push_back(std::move(p));
    return ref;
  }
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect(std::vector<Param*>& out) override;
  void visit_state(const std::string& prefix, const StateVisitor& v) override;
  void init(Rng& rng) override;
  std::size_t size() const { return layers_.size(); }
  Layer& operator[](std::size_t i) { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Mean over the batch of w_i · CE(softmax(logits_i), y_i). Writes d(loss)/d(logits).
/// `weights` may be empty (all ones). Loss accumulated in double.
double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, std::span<const float> weights,
                             Tensor* dlogits);

/// Row-wise softmax of an N×C tensor.
Tensor softmax(const Tensor& logits);

/// Mean binary cross-entropy with logits against targets in [0, 1].
double bce_with_logits(const Tensor& logits, const Tensor& targets, Tensor* dlogits);

/// Mean squared error.
double mse(const Tensor& pred, const Tensor& target, Tensor* dpred);

/// Channel concatenation of two N×C×H×W tensors, and its inverse for gradients.
Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& g, std::size_t ca, Tensor& ga, Tensor& gb);

}  // namespace inspectlab::nn
