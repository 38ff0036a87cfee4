#include "inspectlab/run_config.hpp"

#include <fstream>

#include "inspectlab/core/error.hpp"
#include "inspectlab/core/rng.hpp"

namespace inspectlab::evaluate {

using nlohmann::json;

namespace {

json rows_json(const std::vector<GridRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) out.push_back(format_grid_row(r));
  return out;
}

json common_preset() {
  return {
      {"preset", "smoke"},
      {"master_seed", 0},
      {"output_root", "runs/smoke"},
      {"workers", 1},
      {"corpus_manifest", ""},
      {"corpus",
       {{"image_size", 64},
        {"counts", {{"good", 1000}, {"double_print", 150}, {"interrupted_print", 150}}},
        {"defect_params",
         {{"double_print_offset", {2.0, 5.0}},
          {"double_print_opacity", {0.45, 0.85}},
          {"interrupt_band_count", {1, 3}},
          {"interrupt_band_width", {2.0, 4.5}}}},
        {"noise",
         {{"rotation_jitter", 4.0},
          {"translation_jitter", 3.0},
          {"background_texture_amplitude", 0.05},
          {"lighting_gradient_amplitude", 0.10}}},
        {"seed", nullptr}}},
      {"grid",
       {{"rows", rows_json(paper_grid_rows())},
        {"retentions", {1.0, 0.75, 0.5, 0.25}},
        {"tasks", {"binary", "multiclass"}}}},
      {"features", {{"backend", "hermetic"}, {"weights", ""}, {"input_size", 224}, {"mi_bins", 16}, {"selection_rows", "augmented"}}},
      {"resample", {{"k_neighbors", 5}, {"adasyn_beta", 1.0}}},
      {"evaluation", {{"folds", 10}, {"binary_mode", "collapse"}}},
      {"mlp", {{"hidden1", 512}, {"hidden2", 100}, {"learning_rate", 1e-3}, {"epochs", 50}, {"batch_size", 32}}},
      {"gbt",
       {{"max_depth", 10}, {"iterations", 60}, {"learning_rate", 0.1}, {"lambda", 1.0}, {"min_child_weight", 1.0}}},
      {"cnn", {{"channels", {16, 32, 64}}, {"dense", 64}, {"learning_rate", 1e-3}, {"epochs", 10}, {"batch_size", 32}}},
      {"gan",
       {{"latent_dim", 128},
        {"iterations", 2000},
        {"batch_size", 16},
        {"learning_rate", 1e-3},
        {"beta1", 0.5},
        {"beta2", 0.999},
        {"generator_width", 128},
        {"discriminator_width", 128},
        {"reconstruction_weight", 1.0},
        {"fid_interval", 500},
        {"fid_samples", 128},
        {"classes", {"good", "double_print", "interrupted_print"}}}},
      {"anomaly",
       {{"epochs", 10},
        {"batch_size", 16},
        {"learning_rate", 1e-3},
        {"channels", {8, 16, 32, 64}},
        {"head_channels", 8},
        {"corruption_probability", 0.5},
        {"aggregation", "top_percent"},
        {"top_fraction", 0.01}}},
  };
}

void check_schema(const json& doc, const json& schema, const std::string& path) {
  if (!doc.is_object()) fail(ErrorKind::config, "config key '" + path + "': expected an object");
  for (const auto& [key, v] : doc.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!schema.contains(key)) fail(ErrorKind::config, "unknown config key '" + where + "'");
    const auto& s = schema[key];
    if (s.is_null() || v.is_null()) continue;
    if (s.is_object()) {
      check_schema(v, s, where);
    } else if (s.is_number() && !v.is_number()) {
      fail(ErrorKind::config, "config key '" + where + "': expected a number");
    } else if (s.is_string() && !v.is_string()) {
      fail(ErrorKind::config, "config key '" + where + "': expected a string");
    } else if (s.is_array() && !v.is_array()) {
      fail(ErrorKind::config, "config key '" + where + "': expected a list");
    } else if (s.is_boolean() && !v.is_boolean()) {
      fail(ErrorKind::config, "config key '" + where + "': expected true or false");
    }
  }
}

template <typename T>
T value(const json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("config key '") + section + "." + key + "': " + e.what());
  }
}

}  // namespace

GridRow parse_grid_row(std::string_view text) {
  const auto colon = text.find(':');
  GridRow row{model_from_string(text.substr(0, colon)), Augmentation::none};
  if (colon != std::string_view::npos) row.augmentation = augmentation_from_string(text.substr(colon + 1));
  return row;
}

std::string format_grid_row(const GridRow& row) {
  std::string s(to_string(row.model));
  if (row.augmentation != Augmentation::none) s += ":" + std::string(to_string(row.augmentation));
  return s;
}

json preset_json(std::string_view name) {
  json p = common_preset();
  if (name == "paper") {
    p["preset"] = "paper";
    p["output_root"] = "runs/paper";
    // Full generator budget; the struct default of 2000 is the desk-scale one.
    p["gan"]["iterations"] = 20000;
    return p;
  }
  if (name != "smoke") fail(ErrorKind::config, "unknown preset '" + std::string(name) + "' (expected smoke or paper)");
  // Small images and budgets so the whole grid runs in minutes on one core. 90 per defect
  // class keeps at least 20 images per class in a 25%-retention training fold for the GAN.
  p["corpus"]["image_size"] = 32;
  p["corpus"]["counts"] = {{"good", 400}, {"double_print", 90}, {"interrupted_print", 90}};
  p["mlp"]["epochs"] = 20;
  p["gbt"]["iterations"] = 10;
  p["gbt"]["max_depth"] = 4;
  p["cnn"]["channels"] = {4, 8, 16};
  p["cnn"]["dense"] = 16;
  p["cnn"]["epochs"] = 2;
  p["gan"]["iterations"] = 20;
  p["gan"]["batch_size"] = 8;
  p["gan"]["latent_dim"] = 32;
  p["gan"]["generator_width"] = 32;
  p["gan"]["discriminator_width"] = 16;
  p["gan"]["fid_interval"] = 0;
  p["gan"]["fid_samples"] = 32;
  p["anomaly"]["epochs"] = 1;
  p["anomaly"]["channels"] = {4, 8, 16, 32};
  p["anomaly"]["head_channels"] = 4;
  return p;
}

RunConfig run_config_from_json(const json& input, std::optional<std::string> preset_override) {
  if (!input.is_object()) fail(ErrorKind::config, "config: expected a JSON object at the top level");
  // Written by to_json for the record; recomputed from master_seed, so a saved run config loads back.
  json doc = input;
  doc.erase("derived_seeds");
  std::string preset = "smoke";
  if (doc.contains("preset")) {
    if (!doc["preset"].is_string()) fail(ErrorKind::config, "config key 'preset': expected a string");
    preset = doc["preset"].get<std::string>();
  }
  if (preset_override) preset = *preset_override;
  json merged = preset_json(preset);
  check_schema(doc, merged, "");
  merged.merge_patch(doc);
  merged["preset"] = preset;

  RunConfig c;
  c.document = merged;
  c.preset = preset;
  try {
    c.master_seed = merged.at("master_seed").get<std::uint64_t>();
    c.output_root = merged.at("output_root").get<std::string>();
    c.workers = merged.at("workers").get<int>();
    c.corpus_manifest = merged.at("corpus_manifest").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("config: ") + e.what());
  }
  if (c.workers < 1) fail(ErrorKind::config, "config key 'workers': must be at least 1");

  json corpus = merged["corpus"];
  const bool pinned = !corpus["seed"].is_null();
  if (!pinned) corpus.erase("seed");
  c.corpus = corpus::corpus_spec_from_json(corpus);
  if (!pinned) c.corpus.seed = derive_seed(c.master_seed, "corpus");
  c.corpus.validate();

  c.grid.rows.clear();
  for (const auto& r : merged["grid"]["rows"]) {
    if (!r.is_string()) fail(ErrorKind::config, "config key 'grid.rows': expected strings like \"gbt:smote\"");
    c.grid.rows.push_back(parse_grid_row(r.get<std::string>()));
  }
  c.grid.retentions = value<std::vector<double>>(merged, "grid", "retentions");
  for (double r : c.grid.retentions)
    if (!(r > 0.0 && r <= 1.0)) fail(ErrorKind::config, "config key 'grid.retentions': values must be in (0, 1]");
  c.grid.tasks.clear();
  for (const auto& t : value<std::vector<std::string>>(merged, "grid", "tasks")) c.grid.tasks.push_back(task_from_string(t));
  for (const auto& row : c.grid.rows)
    ExperimentSpec{row.model, row.augmentation, 1.0, Task::binary, {}}.validate();

  auto& t = c.training;
  t.extract.backend = features::backend_from_string(value<std::string>(merged, "features", "backend"));
  t.extract.weights_path = value<std::string>(merged, "features", "weights");
  t.extract.backbone_input_size = value<int>(merged, "features", "input_size");
  t.extract.cache_dir = features::cache_dir_from_env();
  t.mi_bins = value<int>(merged, "features", "mi_bins");
  if (t.mi_bins < 2) fail(ErrorKind::config, "config key 'features.mi_bins': must be at least 2");
  t.selection_rows = selection_rows_from_string(value<std::string>(merged, "features", "selection_rows"));
  t.k_neighbors = value<int>(merged, "resample", "k_neighbors");
  t.adasyn_beta = value<double>(merged, "resample", "adasyn_beta");
  if (t.k_neighbors < 1) fail(ErrorKind::config, "config key 'resample.k_neighbors': must be at least 1");
  if (t.adasyn_beta < 0.0) fail(ErrorKind::config, "config key 'resample.adasyn_beta': must be non-negative");
  t.folds = value<int>(merged, "evaluation", "folds");
  if (t.folds < 2) fail(ErrorKind::config, "config key 'evaluation.folds': must be at least 2");
  t.binary_mode = binary_mode_from_string(value<std::string>(merged, "evaluation", "binary_mode"));

  t.mlp.hidden1 = value<std::size_t>(merged, "mlp", "hidden1");
  t.mlp.hidden2 = value<std::size_t>(merged, "mlp", "hidden2");
  t.mlp.learning_rate = value<double>(merged, "mlp", "learning_rate");
  t.mlp.epochs = value<int>(merged, "mlp", "epochs");
  t.mlp.batch_size = value<int>(merged, "mlp", "batch_size");
  t.gbt.max_depth = value<int>(merged, "gbt", "max_depth");
  t.gbt.iterations = value<int>(merged, "gbt", "iterations");
  t.gbt.learning_rate = value<double>(merged, "gbt", "learning_rate");
  t.gbt.lambda = value<double>(merged, "gbt", "lambda");
  t.gbt.min_child_weight = value<double>(merged, "gbt", "min_child_weight");
  t.cnn.channels = value<std::vector<std::size_t>>(merged, "cnn", "channels");
  t.cnn.dense = value<std::size_t>(merged, "cnn", "dense");
  t.cnn.learning_rate = value<double>(merged, "cnn", "learning_rate");
  t.cnn.epochs = value<int>(merged, "cnn", "epochs");
  t.cnn.batch_size = value<int>(merged, "cnn", "batch_size");
  for (auto [ok, key] : {std::pair{t.mlp.epochs > 0, "mlp.epochs"}, {t.mlp.batch_size > 0, "mlp.batch_size"},
                         {t.gbt.iterations > 0, "gbt.iterations"}, {t.gbt.max_depth > 0, "gbt.max_depth"},
                         {t.cnn.epochs > 0, "cnn.epochs"}, {t.cnn.batch_size > 0, "cnn.batch_size"},
                         {!t.cnn.channels.empty(), "cnn.channels"}})
    if (!ok) fail(ErrorKind::config, std::string("config key '") + key + "': must be positive");

  json gan = merged["gan"];
  c.gan_classes.clear();
  for (const auto& name : gan["classes"]) c.gan_classes.push_back(corpus::label_from_string(name.get<std::string>()));
  gan.erase("classes");
  gan["image_size"] = c.corpus.image_size;
  t.gan = generative::gan_config_from_json(gan);
  t.gan.fid_seed = derive_seed(c.master_seed, "fid");
  t.gan.fid_backend = t.extract.backend;
  t.gan.fid_weights = t.extract.weights_path;
  t.gan.validate();

  json anom = merged["anomaly"];
  anom["defects"] = merged["corpus"]["defect_params"];
  t.anomaly = anomaly::anomaly_config_from_json(anom);
  t.anomaly.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::string> preset_override) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::config, "cannot read config file " + path.string());
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::config, "config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(doc, std::move(preset_override));
}

json to_json(const RunConfig& c) {
  json j = c.document;
  const auto s = c.seeds();
  j["derived_seeds"] = {{"corpus", c.corpus.seed},
                        {"fold_seed", s.fold_seed},
                        {"train_seed", s.train_seed},
                        {"augment_seed", s.augment_seed},
                        {"fid_seed", c.training.gan.fid_seed}};
  return j;
}

}  // namespace inspectlab::evaluate
