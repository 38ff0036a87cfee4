#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "inspectlab/core/image.hpp"
#include "inspectlab/core/rng.hpp"
#include "inspectlab/features.hpp"
#include "inspectlab/nn/layers.hpp"

namespace inspectlab::classify {

using features::FeatureMatrix;

/// Row-major probability matrix; column j belongs to TrainedModel::classes[j].
struct ProbMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
};

// ---------------------------------------------------------------- MLP

struct MlpConfig {
  std::size_t hidden1 = 512;
  std::size_t hidden2 = 100;
  double learning_rate = 1e-3;
  int epochs = 50;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

/// input → dense(hidden1) → ReLU → dense(hidden2) → dense(classes) logits.
/// Parameters are W1, b1, W2, b2, W3, b3 with W stored in×out.
template <typename T>
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t inputs, std::size_t hidden1, std::size_t hidden2, std::size_t outputs);

  void init(Rng& rng);
  std::vector<T> logits(const T* x, std::size_t n) const;
  /// Mean cross-entropy over the n rows. When `grads` is non-null it is overwritten with the gradient.
  double loss(const T* x, std::size_t n, std::span<const int> y, std::vector<std::vector<T>>* grads) const;

  std::size_t inputs() const { return dims_[0]; }
  std::size_t outputs() const { return dims_[3]; }
  std::vector<std::vector<T>> params;

 private:
  std::size_t dims_[4] = {0, 0, 0, 0};
};

// ---------------------------------------------------------------- GBT

struct GbtConfig {
  int max_depth = 10;
  int iterations = 60;
  double learning_rate = 0.1;
  double lambda = 1.0;            // L2 penalty on leaf values
  double min_child_weight = 1.0;  // minimum hessian sum per child
  std::uint64_t seed = 0;         // recorded; tree growth is deterministic
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;
  double predict(std::span<const float> x) const;
  int depth() const;
};

// ---------------------------------------------------------------- CNN

struct CnnConfig {
  std::vector<std::size_t> channels{16, 32, 64};  // one 3×3 conv + ReLU + 2×2 max pool per entry
  std::size_t dense = 64;
  double learning_rate = 1e-3;
  int epochs = 10;
  int batch_size = 32;
  /// Per-label loss weight; absent means unweighted.
  std::optional<std::map<int, double>> class_weights;
  std::uint64_t seed = 0;
};

/// w_c = N / (C · n_c); the mean weight over samples is 1.
std::map<int, double> inverse_frequency_weights(std::span<const int> labels);

class Cnn {
 public:
  Cnn(const CnnConfig& config, std::size_t image_size, std::size_t classes);
  void init(Rng& rng);
  nn::Tensor forward(const nn::Tensor& x, bool train) { return net_.forward(x, train); }
  nn::Tensor backward(const nn::Tensor& dy) { return net_.backward(dy); }
  std::vector<nn::Param*> params();
  Bytes save();
  void load(std::span<const std::uint8_t> bytes);
  std::size_t image_size() const { return image_size_; }

 private:
  std::size_t image_size_;
  nn::Sequential net_;
};

/// N×1×S×S tensor with pixels scaled to [0, 1].
nn::Tensor images_to_tensor(std::span<const GrayImage> images, std::span<const std::size_t> order = {});

// ---------------------------------------------------------------- models

enum class ModelKind { mlp, gbt, cnn };
std::string_view to_string(ModelKind k);

struct TrainedModel {
  ModelKind kind = ModelKind::mlp;
  nlohmann::json config;
  std::vector<int> classes;       // probability column order
  std::vector<double> history;    // training loss per epoch (mlp, cnn) or per round (gbt)

  // mlp
  std::vector<float> feature_mean, feature_scale;
  std::shared_ptr<Mlp<float>> mlp;
  // gbt: trees[round * classes + c]
  std::vector<Tree> trees;
  double gbt_learning_rate = 0.1;
  std::size_t input_dim = 0;
  // cnn
  std::shared_ptr<Cnn> cnn;
  CnnConfig cnn_config;

  Bytes weights_blob() const;
};

TrainedModel train_mlp(const FeatureMatrix& X, std::span<const int> y, const MlpConfig& config);
TrainedModel train_gbt(const FeatureMatrix& X, std::span<const int> y, const GbtConfig& config);
TrainedModel train_cnn(std::span<const GrayImage> images, std::span<const int> y, const CnnConfig& config);

ProbMatrix predict_proba(const TrainedModel& model, const FeatureMatrix& X);
ProbMatrix predict_proba(const TrainedModel& model, std::span<const GrayImage> images);

/// Container "CLSF1": KIND, CONF (json), CLSS, PAYL.
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

nlohmann::json to_json(const MlpConfig& c);
nlohmann::json to_json(const GbtConfig& c);
nlohmann::json to_json(const CnnConfig& c);

}  // namespace inspectlab::classify
