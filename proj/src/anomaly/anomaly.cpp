#include "inspectlab/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "inspectlab/core/error.hpp"
#include "inspectlab/metrics.hpp"
#include "inspectlab/nn/layers.hpp"

namespace inspectlab::anomaly {

using nn::Tensor;

void AnomalyConfig::validate() const {
  if (epochs < 1) fail(ErrorKind::config, "anomaly.epochs must be at least 1");
  if (batch_size < 1) fail(ErrorKind::config, "anomaly.batch_size must be at least 1");
  if (!(learning_rate > 0.0)) fail(ErrorKind::config, "anomaly.learning_rate must be positive");
  if (channels.empty()) fail(ErrorKind::config, "anomaly.channels must not be empty");
  if (!(corruption_probability >= 0.0 && corruption_probability <= 1.0))
    fail(ErrorKind::config, "anomaly.corruption_probability must lie in [0, 1]");
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) fail(ErrorKind::config, "anomaly.top_fraction must lie in (0, 1]");
}

nlohmann::json to_json(const AnomalyConfig& c) {
  const auto& d = c.defects;
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"channels", c.channels},
          {"head_channels", c.head_channels},
          {"corruption_probability", c.corruption_probability},
          {"defects",
           {{"double_print_offset", {d.double_print_offset.lo, d.double_print_offset.hi}},
            {"double_print_opacity", {d.double_print_opacity.lo, d.double_print_opacity.hi}},
            {"interrupt_band_count", {d.interrupt_band_count.lo, d.interrupt_band_count.hi}},
            {"interrupt_band_width", {d.interrupt_band_width.lo, d.interrupt_band_width.hi}}}},
          {"aggregation", c.aggregation == Aggregation::max ? "max" : "top_percent"},
          {"top_fraction", c.top_fraction},
          {"seed", c.seed}};
}

AnomalyConfig anomaly_config_from_json(const nlohmann::json& j) {
  AnomalyConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "epochs") c.epochs = v;
    else if (key == "batch_size") c.batch_size = v;
    else if (key == "learning_rate") c.learning_rate = v;
    else if (key == "channels") c.channels = v.get<std::vector<std::size_t>>();
    else if (key == "head_channels") c.head_channels = v;
    else if (key == "corruption_probability") c.corruption_probability = v;
    else if (key == "defects") {
      for (const auto& [dk, dv] : v.items()) {
        if (dk == "double_print_offset") c.defects.double_print_offset = {dv.at(0), dv.at(1)};
        else if (dk == "double_print_opacity") c.defects.double_print_opacity = {dv.at(0), dv.at(1)};
        else if (dk == "interrupt_band_count") c.defects.interrupt_band_count = {dv.at(0), dv.at(1)};
        else if (dk == "interrupt_band_width") c.defects.interrupt_band_width = {dv.at(0), dv.at(1)};
        else fail(ErrorKind::config, "unknown anomaly config key 'defects." + dk + "'");
      }
    } else if (key == "aggregation") {
      const auto s = v.get<std::string>();
      if (s == "max") c.aggregation = Aggregation::max;
      else if (s == "top_percent") c.aggregation = Aggregation::top_percent;
      else fail(ErrorKind::config, "anomaly.aggregation must be 'top_percent' or 'max'");
    } else if (key == "top_fraction") c.top_fraction = v;
    else if (key == "seed") c.seed = v;
    else fail(ErrorKind::config, "unknown anomaly config key '" + key + "'");
  }
  return c;
}

struct AnomalyModel::Impl {
  nn::Sequential reconstructor;
  nn::Sequential head;

  Impl(const AnomalyConfig& c) {
    std::size_t in = 1;
    for (auto ch : c.channels) {
      reconstructor.add<nn::Conv2d>(in, ch, 3, 1, 1);
      reconstructor.add<nn::ReLU>();
      reconstructor.add<nn::MaxPool2>();
      in = ch;
    }
    for (std::size_t l = c.channels.size(); l-- > 0;) {
      const std::size_t out = l > 0 ? c.channels[l - 1] : c.channels[0];
      reconstructor.add<nn::Upsample2>();
      reconstructor.add<nn::Conv2d>(in, out, 3, 1, 1);
      reconstructor.add<nn::ReLU>();
      in = out;
    }
    reconstructor.add<nn::Conv2d>(in, 1, 3, 1, 1);
    reconstructor.add<nn::Sigmoid>();

    head.add<nn::Conv2d>(2, c.head_channels, 3, 1, 1);
    head.add<nn::ReLU>();
    head.add<nn::Conv2d>(c.head_channels, c.head_channels, 3, 1, 1);
    head.add<nn::ReLU>();
    head.add<nn::Conv2d>(c.head_channels, 1, 3, 1, 1);
  }

  void visit(const nn::StateVisitor& v) {
    reconstructor.visit_state("rec.", v);
    head.visit_state("head.", v);
  }
};

AnomalyModel::AnomalyModel(const AnomalyConfig& config, int image_size)
    : config_(config), image_size_(image_size), impl_(std::make_unique<Impl>(config)) {
  const int factor = 1 << config.channels.size();
  if (image_size % factor != 0)
    fail(ErrorKind::config, "anomaly: image size must be divisible by 2^(number of reconstructor levels)");
}
AnomalyModel::~AnomalyModel() = default;
AnomalyModel::AnomalyModel(AnomalyModel&&) noexcept = default;
AnomalyModel& AnomalyModel::operator=(AnomalyModel&&) noexcept = default;

Bytes AnomalyModel::weights_blob() const {
  return nn::save_state([&](const nn::StateVisitor& v) { impl_->visit(v); });
}

corpus::Corruption random_corruption(const GrayImage& image, const corpus::DefectParams& d, Rng& rng) {
  const double f = image.width / 64.0;
  if (rng.uniform() < 0.5) {
    const double r = rng.uniform(d.double_print_offset.lo, d.double_print_offset.hi) * f;
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double opacity = rng.uniform(d.double_print_opacity.lo, d.double_print_opacity.hi);
    return corpus::overlay_double_print(image, r * std::cos(phi), r * std::sin(phi), opacity);
  }
  std::vector<corpus::Band> bands;
  const int n = rng.integer(d.interrupt_band_count.lo, d.interrupt_band_count.hi);
  for (int i = 0; i < n; ++i) {
    corpus::Band b;
    b.position = image.width * rng.uniform(0.15, 0.85);
    b.angle = rng.uniform(-25.0, 25.0);
    b.width = rng.uniform(d.interrupt_band_width.lo, d.interrupt_band_width.hi) * f;
    bands.push_back(b);
  }
  return corpus::erase_bands(image, bands);
}

namespace {

Tensor to_tensor(std::span<const GrayImage> images) {
  const std::size_t s = static_cast<std::size_t>(images[0].width);
  Tensor t({images.size(), 1, s, s});
  for (std::size_t i = 0; i < images.size(); ++i)
    for (std::size_t p = 0; p < s * s; ++p) t.data[i * s * s + p] = images[i].pixels[p] / 255.0f;
  return t;
}

double aggregate(std::vector<float> map, const AnomalyConfig& c) {
  if (c.aggregation == Aggregation::max) return *std::max_element(map.begin(), map.end());
  const std::size_t k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(c.top_fraction * static_cast<double>(map.size()) - 1e-9)));
  std::nth_element(map.begin(), map.begin() + static_cast<std::ptrdiff_t>(k - 1), map.end(), std::greater<>());
  std::sort(map.begin(), map.begin() + static_cast<std::ptrdiff_t>(k), std::greater<>());
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += map[i];
  return s / static_cast<double>(k);
}

}  // namespace

AnomalyModel train_unsupervised(std::span<const GrayImage> good_images, std::span<const corpus::LabelClass> labels,
                                const AnomalyConfig& config) {
  config.validate();
  require(labels.size() == good_images.size(), "train_unsupervised: label count mismatch");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != corpus::LabelClass::good)
      fail(ErrorKind::label_guard, "train_unsupervised: training image " + std::to_string(i) + " is labeled '" +
                                       std::string(corpus::to_string(labels[i])) + "'; only Good images are allowed");
  if (good_images.size() < 50)
    fail(ErrorKind::invalid_argument,
         "train_unsupervised: need at least 50 Good images, got " + std::to_string(good_images.size()));
  const int size = good_images[0].width;
  for (const auto& im : good_images)
    if (im.width != size || im.height != size)
      fail(ErrorKind::invalid_argument, "train_unsupervised: images must be square and of uniform size");

  AnomalyModel model(config, size);
  auto& impl = *model.impl_;
  Rng init(derive_seed(config.seed, "init"));
  impl.reconstructor.init(init);
  impl.head.init(init);
  std::vector<nn::Param*> rp, hp;
  impl.reconstructor.collect(rp);
  impl.head.collect(hp);
  nn::Adam ropt(static_cast<float>(config.learning_rate)), hopt(static_cast<float>(config.learning_rate));

  const std::size_t n = good_images.size(), bs = static_cast<std::size_t>(config.batch_size);
  const std::size_t px = static_cast<std::size_t>(size) * static_cast<std::size_t>(size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, "epoch", static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());
    double rec_sum = 0.0, head_sum = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t nb = std::min(bs, n - start);
      std::vector<GrayImage> clean, input;
      Tensor mask({nb, 1, static_cast<std::size_t>(size), static_cast<std::size_t>(size)});
      for (std::size_t i = 0; i < nb; ++i) {
        const auto& im = good_images[order[start + i]];
        clean.push_back(im);
        if (rng.uniform() < config.corruption_probability) {
          auto c = random_corruption(im, config.defects, rng);
          std::copy(c.mask.begin(), c.mask.end(), mask.data.begin() + static_cast<std::ptrdiff_t>(i * px));
          input.push_back(std::move(c.image));
        } else {
          input.push_back(im);
        }
      }
      const Tensor x = to_tensor(input), target = to_tensor(clean);

      nn::Adam::zero_grad(rp);
      const Tensor rec = impl.reconstructor.forward(x, true);
      Tensor drec;
      const double lrec = nn::mse(rec, target, &drec);
      impl.reconstructor.backward(drec);
      ropt.step(rp);

      nn::Adam::zero_grad(hp);
      const Tensor logits = impl.head.forward(nn::concat_channels(x, rec), true);
      Tensor dlogits;
      const double lhead = nn::bce_with_logits(logits, mask, &dlogits);
      impl.head.backward(dlogits);
      hopt.step(hp);

      if (!std::isfinite(lrec) || !std::isfinite(lhead))
        fail(ErrorKind::numerical, "train_unsupervised: non-finite loss at epoch " + std::to_string(epoch));
      rec_sum += lrec * static_cast<double>(nb);
      head_sum += lhead * static_cast<double>(nb);
    }
    model.recon_history_.push_back(rec_sum / static_cast<double>(n));
    model.head_history_.push_back(head_sum / static_cast<double>(n));
  }
  return model;
}

AnomalyResult score(const AnomalyModel& model, const GrayImage& image) {
  if (image.width != model.image_size_ || image.height != model.image_size_)
    fail(ErrorKind::invalid_argument, "score: image is " + std::to_string(image.width) + "×" +
                                          std::to_string(image.height) + ", model expects " +
                                          std::to_string(model.image_size_));
  // Layers cache activations, so scoring works on a private copy of the networks.
  AnomalyModel::Impl net(model.config_);
  auto src = model.weights_blob();
  nn::load_state(src, [&](const nn::StateVisitor& v) { net.visit(v); });
  const GrayImage one[1] = {image};
  const Tensor x = to_tensor(one);
  const Tensor rec = net.reconstructor.forward(x, false);
  const Tensor logits = net.head.forward(nn::concat_channels(x, rec), false);
  AnomalyResult r;
  r.width = image.width;
  r.height = image.height;
  r.map.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) r.map[i] = 1.0f / (1.0f + std::exp(-logits.data[i]));
  r.score = aggregate(r.map, model.config_);
  return r;
}

std::vector<double> score_all(const AnomalyModel& model, std::span<const GrayImage> images) {
  std::vector<double> out(images.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < images.size(); ++i) out[i] = score(model, images[i]).score;
  return out;
}

double evaluate_anomaly_auc(const AnomalyModel& model, std::span<const GrayImage> images,
                            std::span<const corpus::LabelClass> labels) {
  require(images.size() == labels.size(), "evaluate_anomaly_auc: label count mismatch");
  const auto s = score_all(model, images);
  std::vector<int> y(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) y[i] = corpus::is_defective(labels[i]);
  return evaluate::auc_binary(s, y);
}

void save_anomaly_model(const AnomalyModel& model, const std::filesystem::path& path) {
  Container c("ANOM1");
  const auto conf = to_json(model.config()).dump();
  c.put("CONF", Bytes(conf.begin(), conf.end()));
  ByteWriter size;
  size.u32(static_cast<std::uint32_t>(model.image_size()));
  c.put("SIZE", size.take());
  c.put("WGTS", model.weights_blob());
  ByteWriter hist;
  hist.u64(model.reconstruction_history().size());
  for (double v : model.reconstruction_history()) hist.f64(v);
  for (double v : model.head_history()) hist.f64(v);
  c.put("HIST", hist.take());
  c.save(path);
}

AnomalyModel load_anomaly_model(const std::filesystem::path& path) {
  const auto c = Container::load(path, "ANOM1");
  const auto& conf = c.get("CONF");
  const auto config = anomaly_config_from_json(nlohmann::json::parse(std::string(conf.begin(), conf.end())));
  ByteReader size(c.get("SIZE"));
  AnomalyModel m(config, static_cast<int>(size.u32()));
  nn::load_state(c.get("WGTS"), [&](const nn::StateVisitor& v) { m.impl_->visit(v); });
  if (const auto* h = c.find("HIST")) {
    ByteReader r(*h);
    const auto n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) m.recon_history_.push_back(r.f64());
    for (std::uint64_t i = 0; i < n; ++i) m.head_history_.push_back(r.f64());
  }
  return m;
}

RgbImage heatmap(const AnomalyResult& result) {
  RgbImage out(result.width, result.height);
  for (int y = 0; y < result.height; ++y)
    for (int x = 0; x < result.width; ++x) {
      const float v = std::clamp(result.map[static_cast<std::size_t>(y * result.width + x)], 0.0f, 1.0f);
      out.set(x, y, static_cast<std::uint8_t>(std::lround(255 * v)),
              static_cast<std::uint8_t>(std::lround(255 * (1.0f - std::fabs(2.0f * v - 1.0f)))),
              static_cast<std::uint8_t>(std::lround(255 * (1.0f - v))));
    }
  return out;
}

}  // namespace inspectlab::anomaly
