// inspectlab command line: corpus generation, generator and anomaly training,
// the experiment grid and report rendering.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error, 3 refused
// to overwrite, 4 some grid cells failed.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "inspectlab/anomaly.hpp"
#include "inspectlab/core/error.hpp"
#include "inspectlab/core/rng.hpp"
#include "inspectlab/experiment.hpp"
#include "inspectlab/generative.hpp"
#include "inspectlab/run_config.hpp"

namespace fs = std::filesystem;
using namespace inspectlab;
using corpus::LabelClass;
using evaluate::RunConfig;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRefused = 3;
constexpr int kExitPartial = 4;

struct Refusal : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::string preset;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool force = false;
};

RunConfig resolve(const Common& c) {
  nlohmann::json doc = nlohmann::json::object();
  if (!c.config.empty()) {
    std::ifstream f(c.config);
    if (!f) fail(ErrorKind::config, "cannot read config file " + c.config);
    try {
      doc = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorKind::config, "config file " + c.config + " is not valid JSON: " + e.what());
    }
  }
  if (c.seed) doc["master_seed"] = *c.seed;
  if (c.workers) doc["workers"] = *c.workers;
  if (!c.out.empty()) doc["output_root"] = c.out;
  auto cfg = evaluate::run_config_from_json(doc, c.preset.empty() ? std::nullopt : std::optional(c.preset));
  // Relative corpus paths in a config file are relative to the file.
  if (!c.config.empty() && !cfg.corpus_manifest.empty() && cfg.corpus_manifest.is_relative())
    cfg.corpus_manifest = fs::path(c.config).parent_path() / cfg.corpus_manifest;
  return cfg;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot write " + p.string());
  f << text;
}

void print_counts(const corpus::Manifest& m) {
  for (const auto& [label, n] : m.class_counts()) std::printf("  %-18s %d\n", corpus::display_name(label).data(), n);
}

corpus::Manifest require_corpus(const RunConfig& cfg) {
  if (cfg.corpus_manifest.empty())
    fail(ErrorKind::config, "no corpus: set 'corpus_manifest' in the config to a manifest.json");
  if (!fs::exists(cfg.corpus_manifest))
    fail(ErrorKind::config, "corpus manifest not found: " + cfg.corpus_manifest.string());
  return corpus::load_manifest(cfg.corpus_manifest);
}

// ---------------------------------------------------------------- corpus generate

int cmd_corpus_generate(const Common& c) {
  const auto cfg = resolve(c);
  const fs::path out = c.out.empty() ? cfg.output_root / "corpus" : fs::path(c.out);
  if (fs::exists(out / corpus::kManifestFileName)) {
    if (!c.force) throw Refusal(out.string() + " already holds a corpus; pass --force to replace it");
    fs::remove_all(out / "images");
    fs::remove(out / corpus::kManifestFileName);
  }
  const auto m = corpus::generate_corpus(cfg.corpus, out);
  std::printf("wrote %zu images to %s\n", m.samples.size(), out.string().c_str());
  print_counts(m);
  return 0;
}

// ---------------------------------------------------------------- gan

int cmd_gan_train(const Common& c, bool resume) {
  const auto cfg = resolve(c);
  const auto manifest = require_corpus(cfg);
  const fs::path dir = cfg.output_root / "generators";
  fs::create_directories(dir);
  std::map<LabelClass, generative::FidReport> final_fid;
  for (auto label : cfg.gan_classes) {
    const auto path = dir / (std::string(corpus::to_string(label)) + ".lgan");
    std::optional<generative::GeneratorCheckpoint> previous;
    if (fs::exists(path)) {
      if (resume) previous = generative::load_checkpoint(path);
      else if (!c.force) throw Refusal(path.string() + " exists; pass --resume to continue or --force to retrain");
    }
    std::vector<GrayImage> images;
    for (const auto& s : manifest.samples)
      if (s.label == label) images.push_back(manifest.load_image(s));
    auto config = cfg.training.gan;
    config.label = label;
    config.image_size = manifest.corpus_spec.image_size;
    config.seed = derive_seed(cfg.master_seed, "gan:" + std::string(corpus::to_string(label)));
    std::printf("[gan %s] %zu images, %d iterations%s\n", corpus::to_string(label).data(), images.size(),
                config.iterations,
                previous ? (", resuming at " + std::to_string(previous->iteration)).c_str() : "");
    generative::TrainHooks hooks;
    hooks.checkpoint_path = path;
    const int every = std::max(1, config.iterations / 10);
    hooks.on_step = [&](const generative::StepLog& s) {
      if ((s.iteration + 1) % every == 0)
        std::printf("[gan %s] it %d  d %.4f  g %.4f  recon %.4f\n", corpus::to_string(label).data(), s.iteration + 1,
                    s.d_loss, s.g_loss, s.recon_loss);
    };
    const auto ckpt = generative::train_gan(images, config, previous ? &*previous : nullptr, hooks);
    generative::save_checkpoint(ckpt, path);
    std::printf("[gan %s] FID history:", corpus::to_string(label).data());
    for (const auto& [it, v] : ckpt.fid_history) std::printf(" %d:%.2f", it, v);
    std::printf("\n");
    generative::FidReport r;
    r.value = ckpt.fid_history.back().second;
    r.embedding_backend = config.fid_backend;
    final_fid[label] = r;
  }
  std::ostringstream os;
  os << "class,fid\n";
  for (const auto& [label, r] : final_fid) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", r.value);
    os << corpus::display_name(label) << ',' << buf << '\n';
  }
  write_file(cfg.output_root / "gan_fid.csv", os.str());
  write_png(cfg.output_root / "gan_fid.png", evaluate::plot_fid(final_fid));
  return 0;
}

int cmd_gan_sample(const Common& c, const std::string& checkpoint, std::size_t count) {
  if (!fs::exists(checkpoint)) fail(ErrorKind::config, "checkpoint not found: " + checkpoint);
  const fs::path out = c.out.empty() ? fs::path("samples") : fs::path(c.out);
  if (fs::exists(out) && !fs::is_empty(out) && !c.force)
    throw Refusal(out.string() + " is not empty; pass --force to write into it");
  const auto ckpt = generative::load_checkpoint(checkpoint);
  const auto images = generative::sample(ckpt, count, c.seed.value_or(0));
  fs::create_directories(out);
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%05zu.png", i);
    write_png(out / name, images[i]);
  }
  std::printf("wrote %zu %s samples (iteration %d) to %s\n", images.size(),
              corpus::to_string(ckpt.config.label).data(), ckpt.iteration, out.string().c_str());
  return 0;
}

// ---------------------------------------------------------------- anomaly

int cmd_anomaly_train(const Common& c) {
  const auto cfg = resolve(c);
  const auto manifest = require_corpus(cfg);
  const fs::path dir = cfg.output_root / "anomaly";
  const auto path = dir / "model.anom";
  if (fs::exists(path) && !c.force) throw Refusal(path.string() + " exists; pass --force to retrain");
  std::vector<GrayImage> good;
  std::vector<LabelClass> labels;
  std::vector<std::size_t> defective;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    const auto& s = manifest.samples[i];
    if (s.label == LabelClass::good) {
      good.push_back(manifest.load_image(s));
      labels.push_back(s.label);
    } else if (defective.size() < 4) {
      defective.push_back(i);
    }
  }
  auto config = cfg.training.anomaly;
  config.seed = derive_seed(cfg.master_seed, "anomaly");
  std::printf("[anomaly] training on %zu Good images for %d epochs\n", good.size(), config.epochs);
  const auto model = anomaly::train_unsupervised(good, labels, config);
  fs::create_directories(dir);
  anomaly::save_anomaly_model(model, path);
  for (std::size_t e = 0; e < model.reconstruction_history().size(); ++e)
    std::printf("[anomaly] epoch %zu  reconstruction %.5f  head %.5f\n", e + 1, model.reconstruction_history()[e],
                model.head_history()[e]);
  for (auto i : defective) {
    const auto& s = manifest.samples[i];
    const auto r = anomaly::score(model, manifest.load_image(s));
    auto name = s.id;
    std::replace(name.begin(), name.end(), ':', '_');
    write_png(dir / ("heatmap_" + name + ".png"), anomaly::heatmap(r));
    std::printf("[anomaly] %s score %.4f\n", s.id.c_str(), r.score);
  }
  std::printf("model written to %s\n", path.string().c_str());
  return 0;
}

// ---------------------------------------------------------------- experiment

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    for (std::string tok; std::getline(ss, tok, ',');)
      if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

corpus::Manifest corpus_for_run(const RunConfig& cfg, bool force) {
  if (!cfg.corpus_manifest.empty()) return require_corpus(cfg);
  const auto dir = cfg.output_root / "corpus";
  if (fs::exists(dir / corpus::kManifestFileName)) {
    auto m = corpus::load_manifest(dir / corpus::kManifestFileName);
    if (m.corpus_spec == cfg.corpus) return m;
    if (!force) throw Refusal(dir.string() + " holds a corpus with a different spec; pass --force to regenerate");
    fs::remove_all(dir / "images");
  }
  std::printf("generating corpus in %s\n", dir.string().c_str());
  return corpus::generate_corpus(cfg.corpus, dir);
}

int cmd_experiment_run(const Common& c, const std::string& grid, const std::vector<std::string>& only,
                       const std::vector<double>& retention) {
  auto cfg = resolve(c);
  if (grid == "paper") cfg.grid.rows = evaluate::paper_grid_rows();
  else if (!grid.empty() && grid != "config") fail(ErrorKind::config, "--grid must be 'paper' or 'config'");
  if (!only.empty()) {
    std::vector<evaluate::GridRow> rows;
    for (const auto& tok : split_list(only)) rows.push_back(evaluate::parse_grid_row(tok));
    cfg.grid.rows = rows;
  }
  if (!retention.empty()) cfg.grid.retentions = retention;
  for (double r : cfg.grid.retentions)
    if (!(r > 0.0 && r <= 1.0)) fail(ErrorKind::config, "--retention values must be in (0, 1]");

  const auto& out = cfg.output_root;
  if (fs::exists(out / "results.csv") && !c.force)
    throw Refusal(out.string() + " already holds results; pass --force to overwrite");
  fs::create_directories(out);
  auto manifest = corpus_for_run(cfg, c.force);

  const auto seeds = cfg.seeds();
  std::printf("experiment: %zu cells, %d folds, master seed %llu, %d worker(s)\n", evaluate::cell_count(cfg.grid),
              cfg.training.folds, static_cast<unsigned long long>(cfg.master_seed), cfg.workers);
  if (fs::exists(out / "work")) fs::remove_all(out / "work");
  evaluate::ExperimentContext ctx(manifest, cfg.training, seeds, out / "work");
  ctx.log = [](const std::string& line) { std::printf("%s\n", line.c_str()); };
  const auto result = evaluate::run_grid(ctx, cfg.grid, cfg.workers);

  std::optional<std::map<LabelClass, generative::FidReport>> fid;
  const bool has_gan = std::any_of(cfg.grid.rows.begin(), cfg.grid.rows.end(),
                                   [](const auto& r) { return r.augmentation == evaluate::Augmentation::gan; });
  if (has_gan) {
    try {
      fid = evaluate::class_fid(ctx);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "FID report failed: %s\n", e.what());
    }
  }
  evaluate::write_report(out, result.reports, fid ? &*fid : nullptr);

  nlohmann::json run = {{"config", to_json(cfg)},
                        {"corpus_manifest", (cfg.corpus_manifest.empty() ? out / "corpus" / corpus::kManifestFileName
                                                                          : cfg.corpus_manifest)
                                                .string()},
                        {"training", to_json(cfg.training)}};
  run["config_hash"] = fnv1a64(run["config"].dump());
  run["cells"] = nlohmann::json::array();
  for (const auto& r : result.reports) {
    auto cell = to_json(r.spec);
    cell["mean_auc"] = r.mean_auc;
    cell["hygiene_checked_folds"] = r.hygiene_checks;
    if (!r.per_class_auc.empty()) {
      nlohmann::json pc = nlohmann::json::object();
      for (const auto& [k, v] : r.per_class_auc) pc[std::string(corpus::to_string(corpus::kAllClasses[k]))] = v;
      cell["per_class_auc"] = pc;
    }
    if (r.fid) cell["fid"] = r.fid->value;
    run["cells"].push_back(cell);
  }
  run["failures"] = nlohmann::json::array();
  for (const auto& f : result.failures) run["failures"].push_back({{"cell", f.cell}, {"error", f.message}});
  write_file(out / "run.json", run.dump(2) + "\n");

  std::printf("\n%s", evaluate::render_table(result.reports).to_text().c_str());
  for (const auto& f : result.failures) std::fprintf(stderr, "cell %s failed: %s\n", f.cell.c_str(), f.message.c_str());
  return result.failures.empty() ? 0 : kExitPartial;
}

// ---------------------------------------------------------------- report

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) fail(ErrorKind::config, "cannot read " + p.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

int cmd_report_render(const Common& c) {
  if (c.out.empty()) fail(ErrorKind::config, "report render needs --out <run directory>");
  const fs::path dir = c.out;
  auto reports = evaluate::parse_results_csv(read_file(dir / "results.csv"));
  if (fs::exists(dir / "predictions.csv")) evaluate::attach_predictions(reports, read_file(dir / "predictions.csv"));
  std::map<LabelClass, generative::FidReport> fid;
  if (fs::exists(dir / "fid.csv")) {
    std::stringstream ss(read_file(dir / "fid.csv"));
    std::string line;
    std::getline(ss, line);
    while (std::getline(ss, line)) {
      const auto a = line.find(','), b = line.find(',', a + 1), d = line.find(',', b + 1);
      if (a == std::string::npos) continue;
      const auto name = line.substr(0, a);
      for (auto label : corpus::kAllClasses)
        if (corpus::display_name(label) == name) {
          generative::FidReport r;
          r.value = std::stod(line.substr(a + 1, b - a - 1));
          if (b != std::string::npos) r.n_real = std::stoul(line.substr(b + 1, d - b - 1));
          if (d != std::string::npos) r.n_synth = std::stoul(line.substr(d + 1));
          fid[label] = r;
        }
    }
  }
  evaluate::write_report(dir, reports, fid.empty() ? nullptr : &fid);
  std::printf("%s", evaluate::render_table(reports).to_text().c_str());
  return 0;
}

void add_common(CLI::App* app, Common& c, bool with_workers) {
  app->add_option("--config", c.config, "JSON run configuration");
  app->add_option("--preset", c.preset, "smoke or paper (overrides the config's preset field)");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--seed", c.seed, "master seed");
  app->add_flag("--force", c.force, "overwrite existing outputs");
  if (with_workers) app->add_option("--workers", c.workers, "concurrent cell jobs")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  std::setvbuf(stdout, nullptr, _IOLBF, 0);
  CLI::App app{"Synthetic print-defect inspection experiments"};
  app.require_subcommand(1);
  Common common;

  auto* corpus_cmd = app.add_subcommand("corpus", "synthetic corpus")->require_subcommand(1);
  auto* corpus_gen = corpus_cmd->add_subcommand("generate", "render a labeled corpus");
  add_common(corpus_gen, common, false);

  auto* gan_cmd = app.add_subcommand("gan", "per-class generators")->require_subcommand(1);
  auto* gan_train = gan_cmd->add_subcommand("train", "train one generator per class");
  add_common(gan_train, common, false);
  bool resume = false;
  gan_train->add_flag("--resume", resume, "continue from existing checkpoints");
  auto* gan_sample = gan_cmd->add_subcommand("sample", "draw images from a checkpoint");
  add_common(gan_sample, common, false);
  std::string checkpoint;
  std::size_t count = 16;
  gan_sample->add_option("--checkpoint", checkpoint, "generator checkpoint (.lgan)")->required();
  gan_sample->add_option("--count", count, "number of images")->check(CLI::PositiveNumber);

  auto* anomaly_cmd = app.add_subcommand("anomaly", "unsupervised detector")->require_subcommand(1);
  auto* anomaly_train = anomaly_cmd->add_subcommand("train", "train on the Good images of a corpus");
  add_common(anomaly_train, common, false);

  auto* exp_cmd = app.add_subcommand("experiment", "cross-validated experiment grid")->require_subcommand(1);
  auto* exp_run = exp_cmd->add_subcommand("run", "run the grid and write the report");
  add_common(exp_run, common, true);
  std::string grid;
  std::vector<std::string> only;
  std::vector<double> retention;
  exp_run->add_option("--grid", grid, "'paper' for the full table rows, 'config' (default) for the configured rows");
  exp_run->add_option("--only", only, "rows to run, e.g. baseline_mlp,gbt:smote")->delimiter(',');
  exp_run->add_option("--retention", retention, "retention levels to run")->delimiter(',');

  auto* report_cmd = app.add_subcommand("report", "reports")->require_subcommand(1);
  auto* report_render = report_cmd->add_subcommand("render", "re-render table and plots from a run directory");
  add_common(report_render, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (*corpus_gen) return cmd_corpus_generate(common);
    if (*gan_train) return cmd_gan_train(common, resume);
    if (*gan_sample) return cmd_gan_sample(common, checkpoint, count);
    if (*anomaly_train) return cmd_anomaly_train(common);
    if (*exp_run) return cmd_experiment_run(common, grid, only, retention);
    if (*report_render) return cmd_report_render(common);
  } catch (const Refusal& e) {
    std::fprintf(stderr, "refused: %s\n", e.what());
    return kExitRefused;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    switch (e.kind()) {
      case ErrorKind::config:
      case ErrorKind::invalid_argument:
      case ErrorKind::format:
      case ErrorKind::version_mismatch:
      case ErrorKind::missing_sample:
      case ErrorKind::io:
        return kExitConfig;
      case ErrorKind::refusal:
        return kExitRefused;
      default:
        return kExitRuntime;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitRuntime;
}
