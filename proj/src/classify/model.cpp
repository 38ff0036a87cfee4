#include <algorithm>
#include <cmath>

#include "inspectlab/classify.hpp"
#include "inspectlab/core/container.hpp"
#include "inspectlab/core/error.hpp"

namespace inspectlab::classify {

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::mlp: return "mlp";
    case ModelKind::gbt: return "gbt";
    case ModelKind::cnn: return "cnn";
  }
  return "?";
}

nlohmann::json to_json(const MlpConfig& c) {
  return {{"hidden1", c.hidden1}, {"hidden2", c.hidden2}, {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},   {"batch_size", c.batch_size}, {"seed", c.seed}};
}

nlohmann::json to_json(const GbtConfig& c) {
  return {{"max_depth", c.max_depth}, {"iterations", c.iterations}, {"learning_rate", c.learning_rate},
          {"lambda", c.lambda}, {"min_child_weight", c.min_child_weight}, {"seed", c.seed}};
}

nlohmann::json to_json(const CnnConfig& c) {
  nlohmann::json j{{"channels", c.channels}, {"dense", c.dense}, {"learning_rate", c.learning_rate},
                   {"epochs", c.epochs}, {"batch_size", c.batch_size}, {"seed", c.seed}};
  if (c.class_weights) {
    nlohmann::json w = nlohmann::json::object();
    for (const auto& [l, v] : *c.class_weights) w[std::to_string(l)] = v;
    j["class_weights"] = w;
  } else {
    j["class_weights"] = nullptr;
  }
  return j;
}

namespace {

CnnConfig cnn_config_from_json(const nlohmann::json& j) {
  CnnConfig c;
  c.channels = j.at("channels").get<std::vector<std::size_t>>();
  c.dense = j.at("dense");
  c.learning_rate = j.at("learning_rate");
  c.epochs = j.at("epochs");
  c.batch_size = j.at("batch_size");
  c.seed = j.at("seed");
  if (!j.at("class_weights").is_null()) {
    std::map<int, double> w;
    for (const auto& [k, v] : j.at("class_weights").items()) w[std::stoi(k)] = v.get<double>();
    c.class_weights = w;
  }
  return c;
}

void softmax_into(const float* z, std::size_t C, double* out) {
  double mx = z[0];
  for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, static_cast<double>(z[c]));
  double s = 0.0;
  for (std::size_t c = 0; c < C; ++c) s += (out[c] = std::exp(static_cast<double>(z[c]) - mx));
  for (std::size_t c = 0; c < C; ++c) out[c] /= s;
}

void write_trees(ByteWriter& w, const std::vector<Tree>& trees) {
  w.u64(trees.size());
  for (const auto& t : trees) {
    w.u64(t.nodes.size());
    for (const auto& n : t.nodes) {
      w.u32(static_cast<std::uint32_t>(n.feature));
      w.f64(n.threshold);
      w.u32(static_cast<std::uint32_t>(n.left));
      w.u32(static_cast<std::uint32_t>(n.right));
      w.f64(n.value);
    }
  }
}

std::vector<Tree> read_trees(ByteReader& r) {
  std::vector<Tree> trees(r.u64());
  for (auto& t : trees) {
    t.nodes.resize(r.u64());
    for (auto& n : t.nodes) {
      n.feature = static_cast<int>(r.u32());
      n.threshold = r.f64();
      n.left = static_cast<int>(r.u32());
      n.right = static_cast<int>(r.u32());
      n.value = r.f64();
    }
  }
  return trees;
}

}  // namespace

Bytes TrainedModel::weights_blob() const {
  ByteWriter w;
  switch (kind) {
    case ModelKind::mlp:
      w.floats(feature_mean);
      w.floats(feature_scale);
      w.u64(mlp->inputs());
      w.u64(mlp->params[1].size());
      w.u64(mlp->params[3].size());
      w.u64(mlp->outputs());
      for (const auto& p : mlp->params) w.floats(p);
      break;
    case ModelKind::gbt:
      w.u64(input_dim);
      write_trees(w, trees);
      break;
    case ModelKind::cnn:
      w.u64(cnn->image_size());
      w.raw(cnn->save());
      break;
  }
  return w.take();
}

ProbMatrix predict_proba(const TrainedModel& model, const FeatureMatrix& X) {
  const std::size_t C = model.classes.size(), n = X.rows;
  ProbMatrix P{n, C, std::vector<double>(n * C)};
  if (model.kind == ModelKind::mlp) {
    require(X.cols == model.feature_mean.size(), "predict_proba: feature dimensionality mismatch");
    std::vector<float> Z(n * X.cols);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < X.cols; ++j)
        Z[i * X.cols + j] = (X.at(i, j) - model.feature_mean[j]) * model.feature_scale[j];
    const auto z = model.mlp->logits(Z.data(), n);
    for (std::size_t i = 0; i < n; ++i) softmax_into(z.data() + i * C, C, P.values.data() + i * C);
  } else if (model.kind == ModelKind::gbt) {
    require(X.cols == model.input_dim, "predict_proba: feature dimensionality mismatch");
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> f(C, 0.0);
      for (std::size_t t = 0; t < model.trees.size(); ++t) f[t % C] += model.trees[t].predict(X.row(i));
      double mx = *std::max_element(f.begin(), f.end()), s = 0.0;
      for (std::size_t c = 0; c < C; ++c) s += (f[c] = std::exp(f[c] - mx));
      for (std::size_t c = 0; c < C; ++c) P.values[i * C + c] = f[c] / s;
    }
  } else {
    fail(ErrorKind::invalid_argument, "predict_proba: a CNN takes images, not features");
  }
  return P;
}

ProbMatrix predict_proba(const TrainedModel& model, std::span<const GrayImage> images) {
  if (model.kind != ModelKind::cnn) fail(ErrorKind::invalid_argument, "predict_proba: model takes features, not images");
  const std::size_t C = model.classes.size(), n = images.size();
  ProbMatrix P{n, C, std::vector<double>(n * C)};
  for (const auto& im : images)
    if (static_cast<std::size_t>(im.width) != model.cnn->image_size() ||
        static_cast<std::size_t>(im.height) != model.cnn->image_size())
      fail(ErrorKind::invalid_argument, "predict_proba: image size does not match the model");
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < n; start += kChunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(n, start + kChunk); ++i) idx.push_back(i);
    const auto z = model.cnn->forward(images_to_tensor(images, idx), false);
    for (std::size_t i = 0; i < idx.size(); ++i)
      softmax_into(z.ptr() + i * C, C, P.values.data() + (start + i) * C);
  }
  return P;
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  Container c("CLSF1");
  c.put("KIND", Bytes(to_string(model.kind).begin(), to_string(model.kind).end()));
  const auto conf = model.config.dump();
  c.put("CONF", Bytes(conf.begin(), conf.end()));
  ByteWriter cls;
  cls.u32(static_cast<std::uint32_t>(model.classes.size()));
  for (int l : model.classes) cls.u32(static_cast<std::uint32_t>(l));
  c.put("CLSS", cls.take());
  c.put("PAYL", model.weights_blob());
  c.save(path);
}

TrainedModel load_model(const std::filesystem::path& path) {
  const auto c = Container::load(path, "CLSF1");
  TrainedModel m;
  const auto& kind = c.get("KIND");
  const std::string k(kind.begin(), kind.end());
  if (k == "mlp") m.kind = ModelKind::mlp;
  else if (k == "gbt") m.kind = ModelKind::gbt;
  else if (k == "cnn") m.kind = ModelKind::cnn;
  else fail(ErrorKind::format, path.string() + ": unknown model kind '" + k + "'");
  const auto& conf = c.get("CONF");
  m.config = nlohmann::json::parse(std::string(conf.begin(), conf.end()));
  ByteReader cls(c.get("CLSS"));
  m.classes.resize(cls.u32());
  for (auto& l : m.classes) l = static_cast<int>(cls.u32());
  ByteReader r(c.get("PAYL"));
  switch (m.kind) {
    case ModelKind::mlp: {
      m.feature_mean = r.floats();
      m.feature_scale = r.floats();
      std::size_t d[4];
      for (auto& v : d) v = r.u64();
      m.input_dim = d[0];
      m.mlp = std::make_shared<Mlp<float>>(d[0], d[1], d[2], d[3]);
      for (auto& p : m.mlp->params) {
        auto v = r.floats();
        if (v.size() != p.size()) fail(ErrorKind::format, path.string() + ": MLP parameter size mismatch");
        p = std::move(v);
      }
      break;
    }
    case ModelKind::gbt:
      m.input_dim = r.u64();
      m.trees = read_trees(r);
      break;
    case ModelKind::cnn: {
      m.cnn_config = cnn_config_from_json(m.config);
      const std::size_t side = r.u64();
      m.cnn = std::make_shared<Cnn>(m.cnn_config, side, m.classes.size());
      m.cnn->load(r.raw(r.remaining()));
      break;
    }
  }
  return m;
}

}  // namespace inspectlab::classify
