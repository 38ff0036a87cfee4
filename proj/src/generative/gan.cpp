#include <algorithm>
#include <cmath>
#include <memory>

#include "inspectlab/core/error.hpp"
#include "inspectlab/core/rng.hpp"
#include "inspectlab/generative.hpp"
#include "inspectlab/nn/layers.hpp"

namespace inspectlab::generative {

using nn::Tensor;

void GanConfig::validate() const {
  if (image_size != 32 && image_size != 64 && image_size != 128)
    fail(ErrorKind::config, "gan.image_size must be 32, 64 or 128");
  if (iterations < 1) fail(ErrorKind::config, "gan.iterations must be at least 1");
  if (latent_dim < 1) fail(ErrorKind::config, "gan.latent_dim must be at least 1");
  if (batch_size < 2) fail(ErrorKind::config, "gan.batch_size must be at least 2");
  if (!(learning_rate > 0.0)) fail(ErrorKind::config, "gan.learning_rate must be positive");
  if (generator_width < 8 || discriminator_width < 8) fail(ErrorKind::config, "gan widths must be at least 8");
  if (fid_interval < 0) fail(ErrorKind::config, "gan.fid_interval must be non-negative");
  if (fid_samples < 2) fail(ErrorKind::config, "gan.fid_samples must be at least 2");
}

nlohmann::json to_json(const GanConfig& c) {
  return {{"image_size", c.image_size},
          {"latent_dim", c.latent_dim},
          {"iterations", c.iterations},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"generator_width", c.generator_width},
          {"discriminator_width", c.discriminator_width},
          {"reconstruction_weight", c.reconstruction_weight},
          {"fid_interval", c.fid_interval},
          {"fid_samples", c.fid_samples},
          {"fid_seed", c.fid_seed},
          {"fid_backend", features::to_string(c.fid_backend)},
          {"fid_weights", c.fid_weights.string()},
          {"seed", c.seed},
          {"label", corpus::to_string(c.label)}};
}

GanConfig gan_config_from_json(const nlohmann::json& j) {
  GanConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "image_size") c.image_size = v;
    else if (key == "latent_dim") c.latent_dim = v;
    else if (key == "iterations") c.iterations = v;
    else if (key == "batch_size") c.batch_size = v;
    else if (key == "learning_rate") c.learning_rate = v;
    else if (key == "beta1") c.beta1 = v;
    else if (key == "beta2") c.beta2 = v;
    else if (key == "generator_width") c.generator_width = v;
    else if (key == "discriminator_width") c.discriminator_width = v;
    else if (key == "reconstruction_weight") c.reconstruction_weight = v;
    else if (key == "fid_interval") c.fid_interval = v;
    else if (key == "fid_samples") c.fid_samples = v;
    else if (key == "fid_seed") c.fid_seed = v;
    else if (key == "fid_backend") c.fid_backend = features::backend_from_string(v.get<std::string>());
    else if (key == "fid_weights") c.fid_weights = v.get<std::string>();
    else if (key == "seed") c.seed = v;
    else if (key == "label") c.label = corpus::label_from_string(v.get<std::string>());
    else fail(ErrorKind::config, "unknown gan config key '" + key + "'");
  }
  return c;
}

namespace {

int log2i(int v) {
  int l = 0;
  while ((1 << (l + 1)) <= v) ++l;
  return l;
}

Tensor multiply_channels(const Tensor& f, const Tensor& s) {
  Tensor y = f;
  const std::size_t n = f.dim(0), c = f.dim(1), hw = f.size() / (n * c);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t k = 0; k < c; ++k) {
      const float g = s.data[b * c + k];
      for (std::size_t i = 0; i < hw; ++i) y.data[(b * c + k) * hw + i] *= g;
    }
  return y;
}

// Skip-layer excitation: a low-resolution feature map gates the channels of a high-resolution one.
struct Excitation {
  int source = 0, target = 0;  // level indices
  nn::Sequential net;
};

// Lightweight generator: dense → 4×4, (upsample, conv3×3, BN, LReLU) per level, excitation
// from level l to level l+2, conv3×3 + tanh output.
class Generator {
 public:
  explicit Generator(const GanConfig& c) : latent_(static_cast<std::size_t>(c.latent_dim)) {
    const int levels = log2i(c.image_size) - 2;  // 4×4 is level 0
    for (int l = 0; l <= levels; ++l) channels_.push_back(static_cast<std::size_t>(std::max(8, c.generator_width >> l)));
    stem_.add<nn::Linear>(latent_, channels_[0] * 16);
    stem_.add<nn::BatchNorm>(channels_[0] * 16);
    stem_.add<nn::LeakyReLU>(0.2f);
    for (int l = 1; l <= levels; ++l) {
      auto& s = up_.emplace_back(std::make_unique<nn::Sequential>());
      s->add<nn::Upsample2>();
      s->add<nn::Conv2d>(channels_[l - 1], channels_[l], 3, 1, 1, false);
      s->add<nn::BatchNorm>(channels_[l]);
      s->add<nn::LeakyReLU>(0.2f);
    }
    for (int l = 0; l + 2 <= levels && l <= 2; ++l) {
      auto& e = sle_.emplace_back(std::make_unique<Excitation>());
      e->source = l;
      e->target = l + 2;
      for (int p = 0; p < l; ++p) e->net.add<nn::AvgPool2>();
      e->net.add<nn::Conv2d>(channels_[l], channels_[l + 2], 4, 1, 0);
      e->net.add<nn::LeakyReLU>(0.1f);
      e->net.add<nn::Conv2d>(channels_[l + 2], channels_[l + 2], 1, 1, 0);
      e->net.add<nn::Sigmoid>();
    }
    out_.add<nn::Conv2d>(channels_.back(), 1, 3, 1, 1);
    out_.add<nn::Tanh>();
  }

  void init(Rng& rng) {
    stem_.init(rng);
    for (auto& u : up_) u->init(rng);
    for (auto& e : sle_) e->net.init(rng);
    out_.init(rng);
  }

  void collect(std::vector<nn::Param*>& p) {
    stem_.collect(p);
    for (auto& u : up_) u->collect(p);
    for (auto& e : sle_) e->net.collect(p);
    out_.collect(p);
  }

  void visit_state(const nn::StateVisitor& v) {
    stem_.visit_state("g.stem.", v);
    for (std::size_t i = 0; i < up_.size(); ++i) up_[i]->visit_state("g.up" + std::to_string(i) + ".", v);
    for (std::size_t i = 0; i < sle_.size(); ++i) sle_[i]->net.visit_state("g.sle" + std::to_string(i) + ".", v);
    out_.visit_state("g.out.", v);
  }

  Tensor forward(const Tensor& z, bool train) {
    const std::size_t n = z.dim(0);
    feats_.assign(up_.size() + 1, {});
    pre_.assign(up_.size() + 1, {});
    gates_.assign(sle_.size(), {});
    Tensor f = stem_.forward(z, train);
    f.shape = {n, channels_[0], 4, 4};
    feats_[0] = f;
    for (std::size_t l = 1; l <= up_.size(); ++l) {
      Tensor h = up_[l - 1]->forward(feats_[l - 1], train);
      pre_[l] = h;
      for (std::size_t e = 0; e < sle_.size(); ++e)
        if (static_cast<std::size_t>(sle_[e]->target) == l) {
          gates_[e] = sle_[e]->net.forward(feats_[sle_[e]->source], train);
          h = multiply_channels(h, gates_[e]);
        }
      feats_[l] = std::move(h);
    }
    return out_.forward(feats_.back(), train);
  }

  void backward(const Tensor& dy) {
    std::vector<Tensor> grads(feats_.size());
    grads.back() = out_.backward(dy);
    for (std::size_t l = up_.size(); l >= 1; --l) {
      Tensor d = grads[l];
      for (std::size_t e = 0; e < sle_.size(); ++e) {
        if (static_cast<std::size_t>(sle_[e]->target) != l) continue;
        // d/dgate = Σ_spatial d·pre; d/dpre = d·gate.
        const std::size_t n = d.dim(0), c = d.dim(1), hw = d.size() / (n * c);
        Tensor dgate(gates_[e].shape);
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t k = 0; k < c; ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i < hw; ++i)
              s += static_cast<double>(d.data[(b * c + k) * hw + i]) * pre_[l].data[(b * c + k) * hw + i];
            dgate.data[b * c + k] = static_cast<float>(s);
          }
        d = multiply_channels(d, gates_[e]);
        Tensor dsrc = sle_[e]->net.backward(dgate);
        auto& acc = grads[static_cast<std::size_t>(sle_[e]->source)];
        if (acc.data.empty()) acc = std::move(dsrc);
        else
          for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += dsrc.data[i];
      }
      Tensor dprev = up_[l - 1]->backward(d);
      auto& acc = grads[l - 1];
      if (acc.data.empty()) acc = std::move(dprev);
      else
        for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += dprev.data[i];
    }
    Tensor d0 = grads[0];
    d0.shape = {d0.dim(0), channels_[0] * 16};
    stem_.backward(d0);
  }

 private:
  std::size_t latent_;
  std::vector<std::size_t> channels_;
  nn::Sequential stem_, out_;
  std::vector<std::unique_ptr<nn::Sequential>> up_;
  std::vector<std::unique_ptr<Excitation>> sle_;
  std::vector<Tensor> feats_, pre_, gates_;
};

// Strided-conv discriminator with a decoder on its 8×8 features that must reconstruct a
// 16×16 view of real inputs (self-supervised auxiliary objective).
class Discriminator {
 public:
  explicit Discriminator(const GanConfig& c) {
    const int downs = log2i(c.image_size) - 2;  // to 4×4
    std::vector<std::size_t> ch;
    for (int d = 0; d < downs; ++d)
      ch.push_back(static_cast<std::size_t>(std::max(8, c.discriminator_width >> (downs - 1 - d))));
    std::size_t in = 1;
    for (int d = 0; d < downs; ++d) {
      auto& s = d < downs - 1 ? to8_ : tail_;
      s.add<nn::Conv2d>(in, ch[d], 4, 2, 1);
      s.add<nn::LeakyReLU>(0.2f);
      in = ch[d];
    }
    tail_.add<nn::Conv2d>(in, 1, 4, 1, 0);
    tail_.add<nn::Flatten>();
    const std::size_t c8 = ch[static_cast<std::size_t>(downs - 2)];
    decoder_.add<nn::Upsample2>();
    decoder_.add<nn::Conv2d>(c8, std::max<std::size_t>(8, c8 / 2), 3, 1, 1);
    decoder_.add<nn::LeakyReLU>(0.2f);
    decoder_.add<nn::Conv2d>(std::max<std::size_t>(8, c8 / 2), 1, 3, 1, 1);
    decoder_.add<nn::Tanh>();
    pool_to16_ = log2i(c.image_size) - 4;
  }

  void init(Rng& rng) {
    to8_.init(rng);
    tail_.init(rng);
    decoder_.init(rng);
  }

  void collect(std::vector<nn::Param*>& p) {
    to8_.collect(p);
    tail_.collect(p);
    decoder_.collect(p);
  }

  void visit_state(const nn::StateVisitor& v) {
    to8_.visit_state("d.to8.", v);
    tail_.visit_state("d.tail.", v);
    decoder_.visit_state("d.dec.", v);
  }

  /// Logits (N×1); also the reconstruction when `recon` is non-null.
  Tensor forward(const Tensor& x, Tensor* recon) {
    f8_ = to8_.forward(x, true);
    if (recon) *recon = decoder_.forward(f8_, true);
    return tail_.forward(f8_, true);
  }

  /// Gradient with respect to the input. `drecon` may be null.
  Tensor backward(const Tensor& dlogit, const Tensor* drecon) {
    Tensor d = tail_.backward(dlogit);
    if (drecon) {
      const Tensor dr = decoder_.backward(*drecon);
      for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += dr.data[i];
    }
    return to8_.backward(d);
  }

  Tensor reconstruction_target(const Tensor& x) const {
    Tensor t = x;
    nn::AvgPool2 pool;
    for (int i = 0; i < pool_to16_; ++i) t = pool.forward(t, false);
    return t;
  }

 private:
  nn::Sequential to8_, tail_, decoder_;
  Tensor f8_;
  int pool_to16_ = 0;
};

struct Models {
  Generator g;
  Discriminator d;
  std::vector<nn::Param*> gp, dp;
  nn::Adam gopt, dopt;

  explicit Models(const GanConfig& c)
      : g(c),
        d(c),
        gopt(static_cast<float>(c.learning_rate), static_cast<float>(c.beta1), static_cast<float>(c.beta2)),
        dopt(static_cast<float>(c.learning_rate), static_cast<float>(c.beta1), static_cast<float>(c.beta2)) {
    g.collect(gp);
    d.collect(dp);
  }

  Bytes save_g() {
    return nn::save_state([&](const nn::StateVisitor& v) { g.visit_state(v); });
  }
  Bytes save_d() {
    return nn::save_state([&](const nn::StateVisitor& v) { d.visit_state(v); });
  }
  void load(const GeneratorCheckpoint& c) {
    nn::load_state(c.generator, [&](const nn::StateVisitor& v) { g.visit_state(v); });
    if (!c.discriminator.empty()) nn::load_state(c.discriminator, [&](const nn::StateVisitor& v) { d.visit_state(v); });
    if (!c.generator_opt.empty()) gopt.load(c.generator_opt);
    if (!c.discriminator_opt.empty()) dopt.load(c.discriminator_opt);
  }
};

Tensor latent_batch(std::size_t n, std::size_t dim, std::uint64_t seed, std::size_t first_index) {
  Tensor z({n, dim});
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, "latent", first_index + i));
    for (std::size_t j = 0; j < dim; ++j) z.data[i * dim + j] = static_cast<float>(rng.normal());
  }
  return z;
}

std::vector<GrayImage> to_images(const Tensor& y) {
  const std::size_t n = y.dim(0), h = y.dim(2), w = y.dim(3);
  std::vector<GrayImage> out;
  std::vector<float> unit(h * w);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < h * w; ++i) unit[i] = 0.5f * (y.data[b * h * w + i] + 1.0f);
    out.push_back(quantize_unit(unit, static_cast<int>(w), static_cast<int>(h)));
  }
  return out;
}

std::vector<GrayImage> generate(Generator& g, const GanConfig& c, std::size_t n, std::uint64_t seed) {
  std::vector<GrayImage> out;
  constexpr std::size_t kChunk = 32;
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t m = std::min(kChunk, n - start);
    auto imgs = to_images(g.forward(latent_batch(m, static_cast<std::size_t>(c.latent_dim), seed, start), false));
    for (auto& im : imgs) out.push_back(std::move(im));
  }
  return out;
}

features::FeatureMatrix embed(std::span<const GrayImage> images, const GanConfig& c) {
  std::vector<std::string> ids(images.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = std::to_string(i);
  features::ExtractOptions o;
  o.backend = c.fid_backend;
  o.weights_path = c.fid_weights;
  return features::extract_embeddings(images, ids, o);
}

double hinge(const Tensor& logits, float sign, Tensor& dlogits) {
  // mean(relu(1 + sign·x))
  const std::size_t n = logits.size();
  dlogits = Tensor(logits.shape);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const float v = 1.0f + sign * logits.data[i];
    if (v > 0.0f) {
      s += v;
      dlogits.data[i] = sign / static_cast<float>(n);
    }
  }
  return s / static_cast<double>(n);
}

}  // namespace

GeneratorCheckpoint train_gan(std::span<const GrayImage> images, const GanConfig& config,
                              const GeneratorCheckpoint* resume, const TrainHooks& hooks) {
  config.validate();
  if (images.size() < 20)
    fail(ErrorKind::invalid_argument, "train_gan: need at least 20 training images, got " + std::to_string(images.size()));
  for (const auto& im : images)
    if (im.width != config.image_size || im.height != config.image_size)
      fail(ErrorKind::invalid_argument, "train_gan: image size differs from gan.image_size");

  Models m(config);
  GeneratorCheckpoint ck;
  ck.config = config;
  if (resume) {
    auto a = to_json(resume->config), b = to_json(config);
    a.erase("iterations");
    b.erase("iterations");
    if (a != b) fail(ErrorKind::config, "train_gan: resume checkpoint was trained with a different config");
    m.load(*resume);
    ck.iteration = resume->iteration;
    ck.fid_history = resume->fid_history;
    ck.log = resume->log;
  } else {
    Rng init(derive_seed(config.seed, "init"));
    m.g.init(init);
    m.d.init(init);
  }

  Tensor real_all = [&] {
    Tensor t({images.size(), 1, static_cast<std::size_t>(config.image_size), static_cast<std::size_t>(config.image_size)});
    for (std::size_t i = 0; i < images.size(); ++i)
      for (std::size_t p = 0; p < images[i].pixels.size(); ++p)
        t.data[i * images[i].pixels.size() + p] = images[i].pixels[p] / 127.5f - 1.0f;
    return t;
  }();
  const auto real_features = embed(images, config);

  auto record_fid = [&](int iteration) {
    auto synth = generate(m.g, config, static_cast<std::size_t>(config.fid_samples), config.fid_seed);
    const double fid = compute_fid(real_features, embed(synth, config), config.fid_backend).value;
    ck.fid_history.emplace_back(iteration, fid);
    if (!hooks.checkpoint_path.empty()) {
      ck.generator = m.save_g();
      ck.discriminator = m.save_d();
      ck.generator_opt = m.gopt.save();
      ck.discriminator_opt = m.dopt.save();
      save_checkpoint(ck, hooks.checkpoint_path);
    }
  };
  if (ck.fid_history.empty()) record_fid(0);

  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  const std::size_t px = images[0].pixels.size();
  for (int it = ck.iteration; it < config.iterations; ++it) {
    Rng rng(derive_seed(config.seed, "iteration", static_cast<std::uint64_t>(it)));
    Tensor real({bs, 1, static_cast<std::size_t>(config.image_size), static_cast<std::size_t>(config.image_size)});
    for (std::size_t b = 0; b < bs; ++b) {
      const std::size_t src = rng.index(images.size());
      std::copy_n(real_all.data.begin() + static_cast<std::ptrdiff_t>(src * px), px,
                  real.data.begin() + static_cast<std::ptrdiff_t>(b * px));
    }
    const std::uint64_t zseed = derive_seed(config.seed, "z", static_cast<std::uint64_t>(it));
    StepLog log;
    log.iteration = it + 1;

    // Discriminator: hinge on real and fake, plus reconstruction of real inputs.
    nn::Adam::zero_grad(m.dp);
    Tensor recon, dlogit;
    Tensor logit = m.d.forward(real, &recon);
    log.d_loss = hinge(logit, -1.0f, dlogit);
    Tensor drecon;
    log.recon_loss = nn::mse(recon, m.d.reconstruction_target(real), &drecon);
    for (auto& v : drecon.data) v *= static_cast<float>(config.reconstruction_weight);
    m.d.backward(dlogit, &drecon);
    Tensor fake = m.g.forward(latent_batch(bs, static_cast<std::size_t>(config.latent_dim), zseed, 0), true);
    logit = m.d.forward(fake, nullptr);
    log.d_loss += hinge(logit, 1.0f, dlogit);
    m.d.backward(dlogit, nullptr);
    m.dopt.step(m.dp);

    // Generator: maximize the discriminator's logit on fresh samples.
    nn::Adam::zero_grad(m.gp);
    fake = m.g.forward(latent_batch(bs, static_cast<std::size_t>(config.latent_dim), zseed, bs), true);
    logit = m.d.forward(fake, nullptr);
    dlogit = Tensor(logit.shape, -1.0f / static_cast<float>(logit.size()));
    double g = 0.0;
    for (float v : logit.data) g -= v;
    log.g_loss = g / static_cast<double>(logit.size());
    m.g.backward(m.d.backward(dlogit, nullptr));
    m.gopt.step(m.gp);

    if (!std::isfinite(log.d_loss) || !std::isfinite(log.g_loss) || !std::isfinite(log.recon_loss))
      fail(ErrorKind::numerical, "train_gan: non-finite loss at iteration " + std::to_string(it + 1) +
                                     " (d=" + std::to_string(log.d_loss) + ", g=" + std::to_string(log.g_loss) + ")");
    ck.log.push_back(log);
    ck.iteration = it + 1;
    if (hooks.on_step) hooks.on_step(log);
    const bool last = it + 1 == config.iterations;
    if (last || (config.fid_interval > 0 && (it + 1) % config.fid_interval == 0)) record_fid(it + 1);
  }

  ck.config = config;
  ck.generator = m.save_g();
  ck.discriminator = m.save_d();
  ck.generator_opt = m.gopt.save();
  ck.discriminator_opt = m.dopt.save();
  return ck;
}

std::vector<GrayImage> sample(const GeneratorCheckpoint& checkpoint, std::size_t n, std::uint64_t seed) {
  require(n >= 1, "sample: n must be at least 1");
  Generator g(checkpoint.config);
  nn::load_state(checkpoint.generator, [&](const nn::StateVisitor& v) { g.visit_state(v); });
  return generate(g, checkpoint.config, n, seed);
}

void save_checkpoint(const GeneratorCheckpoint& c, const std::filesystem::path& path) {
  Container out("LGAN1");
  const auto conf = to_json(c.config).dump();
  out.put("CONF", Bytes(conf.begin(), conf.end()));
  ByteWriter it;
  it.u64(static_cast<std::uint64_t>(c.iteration));
  out.put("ITER", it.take());
  ByteWriter fid;
  fid.u64(c.fid_history.size());
  for (const auto& [i, v] : c.fid_history) {
    fid.u64(static_cast<std::uint64_t>(i));
    fid.f64(v);
  }
  out.put("FIDH", fid.take());
  ByteWriter logs;
  logs.u64(c.log.size());
  for (const auto& l : c.log) {
    logs.u64(static_cast<std::uint64_t>(l.iteration));
    logs.f64(l.d_loss);
    logs.f64(l.g_loss);
    logs.f64(l.recon_loss);
  }
  out.put("LOGS", logs.take());
  out.put("GENW", c.generator);
  out.put("DISW", c.discriminator);
  out.put("OPTG", c.generator_opt);
  out.put("OPTD", c.discriminator_opt);
  auto tmp = path;
  tmp += ".tmp";
  out.save(tmp);
  std::filesystem::rename(tmp, path);
}

GeneratorCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const auto in = Container::load(path, "LGAN1");
  GeneratorCheckpoint c;
  const auto& conf = in.get("CONF");
  c.config = gan_config_from_json(nlohmann::json::parse(std::string(conf.begin(), conf.end())));
  ByteReader it(in.get("ITER"));
  c.iteration = static_cast<int>(it.u64());
  ByteReader fid(in.get("FIDH"));
  for (auto n = fid.u64(); n > 0; --n) {
    const int i = static_cast<int>(fid.u64());
    c.fid_history.emplace_back(i, fid.f64());
  }
  if (const auto* logs = in.find("LOGS")) {
    ByteReader r(*logs);
    for (auto n = r.u64(); n > 0; --n) {
      StepLog l;
      l.iteration = static_cast<int>(r.u64());
      l.d_loss = r.f64();
      l.g_loss = r.f64();
      l.recon_loss = r.f64();
      c.log.push_back(l);
    }
  }
  c.generator = in.get("GENW");
  if (const auto* d = in.find("DISW")) c.discriminator = *d;
  if (const auto* o = in.find("OPTG")) c.generator_opt = *o;
  if (const auto* o = in.find("OPTD")) c.discriminator_opt = *o;
  return c;
}

}  // namespace inspectlab::generative
