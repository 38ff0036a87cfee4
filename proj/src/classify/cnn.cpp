#include <algorithm>
#include <cmath>
#include <numeric>

#include "inspectlab/classify.hpp"
#include "inspectlab/core/error.hpp"
#include "internal.hpp"

namespace inspectlab::classify {

std::map<int, double> inverse_frequency_weights(std::span<const int> labels) {
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  std::map<int, double> w;
  const double N = static_cast<double>(labels.size()), C = static_cast<double>(counts.size());
  for (const auto& [l, n] : counts) w[l] = N / (C * static_cast<double>(n));
  return w;
}

Cnn::Cnn(const CnnConfig& config, std::size_t image_size, std::size_t classes) : image_size_(image_size) {
  require(!config.channels.empty(), "Cnn: at least one conv block is required");
  std::size_t in = 1, side = image_size;
  for (auto ch : config.channels) {
    require(side % 2 == 0, "Cnn: image size must be divisible by 2 per conv block");
    net_.add<nn::Conv2d>(in, ch, 3, 1, 1);
    net_.add<nn::ReLU>();
    net_.add<nn::MaxPool2>();
    in = ch;
    side /= 2;
  }
  net_.add<nn::Flatten>();
  net_.add<nn::Linear>(in * side * side, config.dense);
  net_.add<nn::ReLU>();
  net_.add<nn::Linear>(config.dense, classes);
}

void Cnn::init(Rng& rng) { net_.init(rng); }

std::vector<nn::Param*> Cnn::params() {
  std::vector<nn::Param*> out;
  net_.collect(out);
  return out;
}

Bytes Cnn::save() {
  return nn::save_state([&](const nn::StateVisitor& v) { net_.visit_state("cnn", v); });
}

void Cnn::load(std::span<const std::uint8_t> bytes) {
  nn::load_state(bytes, [&](const nn::StateVisitor& v) { net_.visit_state("cnn", v); });
}

nn::Tensor images_to_tensor(std::span<const GrayImage> images, std::span<const std::size_t> order) {
  const std::size_t n = order.empty() ? images.size() : order.size();
  require(n > 0, "images_to_tensor: no images");
  const auto& first = images[order.empty() ? 0 : order[0]];
  const std::size_t h = static_cast<std::size_t>(first.height), w = static_cast<std::size_t>(first.width);
  nn::Tensor t({n, 1, h, w});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& img = images[order.empty() ? i : order[i]];
    if (static_cast<std::size_t>(img.width) != w || static_cast<std::size_t>(img.height) != h)
      fail(ErrorKind::invalid_argument, "images must all have the same size");
    for (std::size_t p = 0; p < h * w; ++p) t.data[i * h * w + p] = img.pixels[p] / 255.0f;
  }
  return t;
}

TrainedModel train_cnn(std::span<const GrayImage> images, std::span<const int> y, const CnnConfig& config) {
  if (images.empty()) fail(ErrorKind::invalid_argument, "train_cnn: empty training set");
  require(y.size() == images.size(), "train_cnn: label count mismatch");
  require(config.epochs >= 1 && config.batch_size >= 1, "train_cnn: epochs and batch_size must be positive");
  const int side = images[0].width;
  for (const auto& im : images)
    if (im.width != side || im.height != side)
      fail(ErrorKind::invalid_argument, "train_cnn: images must be square and of uniform size");
  if (config.class_weights)
    for (const auto& [label, w] : *config.class_weights)
      if (!(std::isfinite(w) && w > 0.0))
        fail(ErrorKind::config, "train_cnn: class weight for label " + std::to_string(label) + " must be positive");

  TrainedModel model;
  model.kind = ModelKind::cnn;
  model.config = to_json(config);
  model.cnn_config = config;
  const auto cols = detail::encode_labels(y, model.classes);
  std::vector<float> sample_weight;
  if (config.class_weights) {
    sample_weight.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      auto it = config.class_weights->find(y[i]);
      if (it == config.class_weights->end())
        fail(ErrorKind::config, "train_cnn: no class weight for label " + std::to_string(y[i]));
      sample_weight[i] = static_cast<float>(it->second);
    }
  }

  auto net = std::make_shared<Cnn>(config, static_cast<std::size_t>(side), model.classes.size());
  Rng init_rng(derive_seed(config.seed, "init"));
  net->init(init_rng);
  nn::Adam adam(static_cast<float>(config.learning_rate));
  const auto params = net->params();

  const std::size_t n = images.size(), bs = static_cast<std::size_t>(config.batch_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> yb;
  std::vector<float> wb;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, "epoch", static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t nb = std::min(bs, n - start);
      std::span<const std::size_t> idx(order.data() + start, nb);
      const auto x = images_to_tensor(images, idx);
      yb.resize(nb);
      wb.clear();
      for (std::size_t i = 0; i < nb; ++i) {
        yb[i] = cols[idx[i]];
        if (!sample_weight.empty()) wb.push_back(sample_weight[idx[i]]);
      }
      nn::Adam::zero_grad(params);
      nn::Tensor dlogits;
      const double l = nn::softmax_cross_entropy(net->forward(x, true), yb, wb, &dlogits);
      if (!std::isfinite(l)) fail(ErrorKind::numerical, "train_cnn: non-finite loss at epoch " + std::to_string(epoch));
      net->backward(dlogits);
      adam.step(params);
      epoch_loss += l * static_cast<double>(nb);
    }
    model.history.push_back(epoch_loss / static_cast<double>(n));
  }
  model.cnn = std::move(net);
  return model;
}

}  // namespace inspectlab::classify
