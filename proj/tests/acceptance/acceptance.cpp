// Acceptance checks. Usage: acceptance <criterion>... (default: all). One line per criterion;
// exit status 1 when any of them fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "inspectlab/classify.hpp"
#include "inspectlab/core/rng.hpp"
#include "inspectlab/corpus.hpp"
#include "inspectlab/experiment.hpp"
#include "inspectlab/features.hpp"
#include "inspectlab/generative.hpp"
#include "inspectlab/metrics.hpp"
#include "inspectlab/resample.hpp"
#include "inspectlab/run_config.hpp"

namespace fs = std::filesystem;
using namespace inspectlab;
using corpus::LabelClass;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

const fs::path kWork = INSPECTLAB_ACCEPTANCE_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(INSPECTLAB_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------- oracles

// Fraction of (positive, negative) pairs ordered correctly, ties counting half.
double pair_count_auc(const std::vector<double>& s, const std::vector<int>& positive) {
  double hits = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!positive[i] || positive[j]) continue;
      pairs += 1;
      hits += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  return hits / pairs;
}

// ---------------------------------------------------------------- 1

Outcome metric_oracles() {
  Stopwatch sw;
  std::mt19937_64 g(101);
  double worst = 0;
  int binary = 0, multi = 0;
  for (int inst = 0; inst < 500; ++inst) {
    const int n = std::uniform_int_distribution<int>(4, 30)(g);
    const int C = std::uniform_int_distribution<int>(2, 4)(g);
    // A coarse score grid half of the time, to force ties.
    const bool coarse = inst % 2 == 0;
    auto draw = [&] {
      return coarse ? std::uniform_int_distribution<int>(0, 4)(g) / 4.0 : std::uniform_real_distribution<double>()(g);
    };
    std::vector<int> y(n);
    for (auto& v : y) v = std::uniform_int_distribution<int>(0, C - 1)(g);
    std::set<int> present(y.begin(), y.end());
    if (present.size() < 2) {
      y[0] = 0;
      y[1] = 1;
      present = {y.begin(), y.end()};
    }

    // binary: class 0 negative
    std::vector<double> s(n);
    for (auto& v : s) v = draw();
    std::vector<int> pos(n);
    for (int i = 0; i < n; ++i) pos[i] = y[i] != 0;
    if (std::count(pos.begin(), pos.end(), 1) > 0 && std::count(pos.begin(), pos.end(), 0) > 0) {
      worst = std::max(worst, std::fabs(evaluate::auc_binary(s, pos) - pair_count_auc(s, pos)));
      ++binary;
    }

    // multiclass: one column per class in 0..C-1, some possibly absent from y
    classify::ProbMatrix p;
    p.rows = n;
    p.cols = C;
    p.values.resize(static_cast<std::size_t>(n) * C);
    for (auto& v : p.values) v = draw();
    std::vector<int> classes(C);
    for (int c = 0; c < C; ++c) classes[c] = c;
    double expected = 0, weight = 0;
    for (int c : present) {
      std::vector<double> col(n);
      std::vector<int> is_c(n);
      for (int i = 0; i < n; ++i) {
        col[i] = p.at(i, c);
        is_c[i] = y[i] == c;
      }
      const double nc = std::count(is_c.begin(), is_c.end(), 1);
      if (nc == n) continue;
      expected += nc * pair_count_auc(col, is_c);
      weight += nc;
    }
    expected /= weight;
    const auto got = evaluate::auc_multiclass_ovr_weighted(p, y, classes);
    worst = std::max(worst, std::fabs(got.weighted - expected));
    ++multi;
  }
  const double t = sw.seconds();
  return {worst <= 1e-12 && t < 10.0,
          fmt("%d binary + %d multiclass instances, max |diff| %.3g, %.2f s", binary, multi, worst, t)};
}

// ---------------------------------------------------------------- 2

Outcome fid_closed_form() {
  Stopwatch sw;
  std::mt19937_64 g(202);
  std::normal_distribution<double> nd;
  double identical = 0;
  for (int rep = 0; rep < 5; ++rep) {
    const std::size_t d = 2 + rep, n = 60;
    features::FeatureMatrix m(n, d);
    for (auto& v : m.values) v = static_cast<float>(nd(g));
    identical = std::max(identical, std::fabs(generative::compute_fid(m, m).value));
  }
  double worst = 0;
  for (int c = 0; c < 100; ++c) {
    const int d = std::uniform_int_distribution<int>(1, 8)(g);
    Eigen::VectorXd m1(d), m2(d), v1(d), v2(d);
    double closed = 0;
    for (int i = 0; i < d; ++i) {
      m1[i] = nd(g);
      m2[i] = nd(g);
      v1[i] = std::exp(nd(g));
      v2[i] = std::exp(nd(g));
      closed += (m1[i] - m2[i]) * (m1[i] - m2[i]) + v1[i] + v2[i] - 2 * std::sqrt(v1[i] * v2[i]);
    }
    const double got = generative::fid_from_moments(m1, v1.asDiagonal().toDenseMatrix(), m2,
                                                    v2.asDiagonal().toDenseMatrix());
    worst = std::max(worst, std::fabs(got - closed));
  }
  const double t = sw.seconds();
  return {identical <= 1e-6 && worst <= 1e-8 && t < 5.0,
          fmt("identical sets %.3g, 100 diagonal cases max |diff| %.3g, %.2f s", identical, worst, t)};
}

// ---------------------------------------------------------------- 3

struct Instance {
  features::FeatureMatrix X;
  std::vector<int> y;
};

Instance random_instance(std::mt19937_64& g, bool balanced) {
  const int C = std::uniform_int_distribution<int>(2, 3)(g);
  const std::size_t d = std::uniform_int_distribution<std::size_t>(1, 6)(g);
  std::vector<int> counts(C);
  for (auto& c : counts) c = std::uniform_int_distribution<int>(1, 40)(g);
  if (balanced) std::fill(counts.begin(), counts.end(), counts[0]);
  Instance in;
  std::normal_distribution<double> nd;
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < counts[c]; ++i) {
      std::vector<float> row(d);
      for (auto& v : row) v = static_cast<float>(nd(g) + 1.5 * c);
      in.X.append_row(row, "r" + std::to_string(in.y.size()));
      in.y.push_back(c * 2 + 1);  // labels need not be 0..C-1
    }
  return in;
}

Outcome resampling_geometry() {
  Stopwatch sw;
  std::mt19937_64 g(303);
  double worst = 0;
  std::size_t rows_checked = 0;
  std::vector<std::string> problems;
  auto note = [&](const std::string& s) {
    if (problems.size() < 3) problems.push_back(s);
  };

  for (int inst = 0; inst < 200; ++inst) {
    const bool use_adasyn = inst % 2 == 1;
    const auto in = random_instance(g, false);
    resample::Options o;
    o.k_neighbors = std::uniform_int_distribution<int>(1, 6)(g);
    o.beta = use_adasyn ? std::uniform_real_distribution<double>(0.05, 1.0)(g) : 1.0;
    o.seed = g();
    const auto r = use_adasyn ? resample::adasyn(in.X, in.y, o) : resample::smote(in.X, in.y, o);

    if (r.X.rows != in.X.rows + r.rows.size() || r.y.size() != r.X.rows)
      note(fmt("instance %d: row count mismatch", inst));
    for (std::size_t i = 0; i < in.X.rows; ++i)
      if (!std::equal(in.X.row(i).begin(), in.X.row(i).end(), r.X.row(i).begin()) || r.y[i] != in.y[i])
        note(fmt("instance %d: input row %zu altered", inst, i));

    std::map<int, std::size_t> made;
    for (std::size_t s = 0; s < r.rows.size(); ++s) {
      const auto& row = r.rows[s];
      const auto out = r.X.row(in.X.rows + s);
      if (in.y[row.parent] != row.label || r.y[in.X.rows + s] != row.label)
        note(fmt("instance %d: synthetic row %zu label differs from its parent", inst, s));
      for (std::size_t c = 0; c < in.X.cols; ++c) {
        const double a = in.X.at(row.parent, c);
        double expected = a;
        if (row.neighbor) {
          if (in.y[*row.neighbor] != row.label) note(fmt("instance %d: neighbor from another class", inst));
          const double lam = row.lambda.value_or(std::nan(""));
          if (!(lam >= 0.0 && lam <= 1.0)) note(fmt("instance %d: lambda %g outside [0, 1]", inst, lam));
          expected = a + lam * (in.X.at(*row.neighbor, c) - a);
        }
        worst = std::max({worst, std::fabs(out[c] - expected), std::fabs(row.values[c] - expected)});
      }
      ++made[row.label];
      ++rows_checked;
    }

    std::map<int, std::size_t> n_c;
    for (int v : in.y) ++n_c[v];
    std::size_t majority = 0;
    for (const auto& [_, n] : n_c) majority = std::max(majority, n);
    for (const auto& [label, n] : n_c) {
      const auto gap = static_cast<double>(majority - n);
      const std::size_t G = use_adasyn ? static_cast<std::size_t>(std::floor(o.beta * gap + 1e-9)) : majority - n;
      if (made[label] != G)
        note(fmt("instance %d: class %d got %zu synthetic rows, expected %zu", inst, label, made[label], G));
    }
  }

  // Identities.
  int identities = 0;
  for (int inst = 0; inst < 20; ++inst) {
    const auto bal = random_instance(g, true);
    const auto unbal = random_instance(g, false);
    resample::Options o;
    o.seed = g();
    for (const auto& r : {resample::smote(bal.X, bal.y, o), resample::adasyn(bal.X, bal.y, o)}) {
      if (!r.rows.empty() || !(r.X == bal.X)) note("balanced input changed");
      ++identities;
    }
    o.beta = 0.0;
    const auto r = resample::adasyn(unbal.X, unbal.y, o);
    if (!r.rows.empty() || !(r.X == unbal.X)) note("beta 0 changed the input");
    ++identities;
  }

  const double t = sw.seconds();
  std::string detail = fmt("200 instances, %zu synthetic rows, max reconstruction error %.3g, %d identity cases, %.2f s",
                           rows_checked, worst, identities, t);
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty() && worst <= 1e-6 && t < 30.0, detail};
}

// ---------------------------------------------------------------- 4

Outcome stratification() {
  Stopwatch sw;
  std::mt19937_64 g(404);
  const int k = 10;
  std::vector<std::string> problems;
  for (int inst = 0; inst < 100; ++inst) {
    const int C = std::uniform_int_distribution<int>(2, 5)(g);
    std::vector<int> y;
    for (int c = 0; c < C; ++c) {
      const int n = std::uniform_int_distribution<int>(k, 120)(g);
      for (int i = 0; i < n; ++i) y.push_back(c);
    }
    std::shuffle(y.begin(), y.end(), g);
    const auto plan = evaluate::stratified_kfold(y, k, g());

    std::vector<int> seen(y.size(), 0);
    std::vector<std::map<int, int>> per_fold(k);
    for (int f = 0; f < k; ++f) {
      const auto test = plan.test_indices(f), train = plan.train_indices(f);
      if (test.size() + train.size() != y.size()) problems.push_back(fmt("instance %d fold %d: sizes", inst, f));
      std::set<std::size_t> tr(train.begin(), train.end());
      for (auto i : test) {
        ++seen[i];
        ++per_fold[f][y[i]];
        if (tr.count(i)) problems.push_back(fmt("instance %d fold %d: index %zu in train and test", inst, f, i));
      }
    }
    if (std::any_of(seen.begin(), seen.end(), [](int s) { return s != 1; }))
      problems.push_back(fmt("instance %d: folds do not partition the indices", inst));
    for (int c = 0; c < C; ++c) {
      int lo = 1 << 30, hi = 0;
      for (int f = 0; f < k; ++f) {
        lo = std::min(lo, per_fold[f][c]);
        hi = std::max(hi, per_fold[f][c]);
      }
      if (hi - lo > 1) problems.push_back(fmt("instance %d class %d: fold counts %d..%d", inst, c, lo, hi));
    }
  }
  const double t = sw.seconds();
  std::string detail = fmt("100 label vectors, 10 folds, %zu problems, %.2f s", problems.size(), t);
  if (!problems.empty()) detail += "; first: " + problems.front();
  return {problems.empty() && t < 5.0, detail};
}

// ---------------------------------------------------------------- 5, 6

const std::uint64_t kSmokeSeed = 7;

int smoke_run(const std::string& name) {
  fs::create_directories(kWork);
  return run_cli(fmt("experiment run --preset smoke --seed %llu --force --out %s",
                     static_cast<unsigned long long>(kSmokeSeed), (kWork / name).string().c_str()),
                 kWork / (name + ".log"));
}

Outcome determinism() {
  Stopwatch sw;
  const int a = smoke_run("smoke_a");
  const int b = smoke_run("smoke_b");
  if (a != 0 || b != 0) return {false, fmt("smoke runs exited %d and %d (logs under %s)", a, b, kWork.c_str())};
  const auto ra = slurp(kWork / "smoke_a" / "results.csv"), rb = slurp(kWork / "smoke_b" / "results.csv");
  const bool same = !ra.empty() && ra == rb;
  return {same, fmt("two smoke runs, master seed %llu: results.csv %s (%zu bytes), %.0f s",
                    static_cast<unsigned long long>(kSmokeSeed), same ? "byte-identical" : "DIFFERS", ra.size(),
                    sw.seconds())};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> out;
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string tok; std::getline(ss, tok, ',');) f.push_back(tok);
    out.push_back(f);
  }
  return out;
}

Outcome hygiene() {
  Stopwatch sw;
  const auto dir = kWork / "smoke_a";
  if (!fs::exists(dir / "run.json")) {
    const int rc = smoke_run("smoke_a");
    if (rc != 0) return {false, fmt("smoke run exited %d", rc)};
  }
  const auto run = json::parse(slurp(dir / "run.json"));
  const int folds = run["training"]["folds"].get<int>();
  std::vector<std::string> problems;
  if (!run["failures"].empty()) problems.push_back("failed cells: " + run["failures"].dump());

  std::size_t cells = 0;
  std::map<std::string, double> anomaly_auc;  // by retention
  for (const auto& c : run["cells"]) {
    ++cells;
    const auto checked = c["hygiene_checked_folds"].get<int>();
    const auto name = c["model"].get<std::string>() + ":" + c["augmentation"].get<std::string>() + ":" +
                      c["task"].get<std::string>() + ":" + c["retention"].dump();
    if (checked != folds) problems.push_back(fmt("%s checked %d of %d folds", name.c_str(), checked, folds));
    if (c["model"] == "anomaly") anomaly_auc[c["retention"].dump()] = c["mean_auc"].get<double>();
  }
  if (cells != evaluate::cell_count(evaluate::GridSpec{}))
    problems.push_back(fmt("%zu cells, expected the full grid", cells));

  // Test folds seen in the predictions must be the planned ones: every corpus id once per cell, in its fold.
  const auto manifest = corpus::load_manifest(run["corpus_manifest"].get<std::string>());
  std::vector<int> labels;
  for (const auto& s : manifest.samples) labels.push_back(static_cast<int>(s.label));
  const auto plan = evaluate::stratified_kfold(labels, folds, evaluate::seeds_from_master(kSmokeSeed).fold_seed);
  std::map<std::string, int> fold_of;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) fold_of[manifest.samples[i].id] = plan.fold_of[i];
  std::map<std::string, std::map<std::string, int>> seen;
  std::map<std::string, std::string> anomaly_scores;  // retention suffix -> concatenated scores
  for (const auto& f : read_csv(dir / "predictions.csv")) {
    const auto& cell = f[0];
    const int fold = std::stoi(f[1]);
    ++seen[cell][f[2]];
    auto it = fold_of.find(f[2]);
    if (it == fold_of.end()) problems.push_back(cell + ": unknown test id " + f[2]);
    else if (it->second != fold) problems.push_back(cell + ": " + f[2] + " tested in an unplanned fold");
    if (cell.rfind("anomaly-", 0) == 0) anomaly_scores[cell.substr(cell.rfind('-') + 1)] += f[2] + "=" + f[4] + ";";
  }
  for (const auto& [cell, ids] : seen)
    if (ids.size() != manifest.samples.size() ||
        std::any_of(ids.begin(), ids.end(), [](const auto& kv) { return kv.second != 1; }))
      problems.push_back(cell + ": test folds do not cover the corpus exactly once");

  bool identical = anomaly_auc.size() == 4 && anomaly_scores.size() == 4;
  for (const auto& [_, v] : anomaly_auc) identical = identical && v == anomaly_auc.begin()->second;
  for (const auto& [_, v] : anomaly_scores) identical = identical && v == anomaly_scores.begin()->second;
  if (!identical) problems.push_back("anomaly results differ across retentions");

  std::string detail = fmt("%zu cells x %d folds checked in-run, %zu cells' test folds match the plan, anomaly AUC %.6f at "
                           "%zu retentions %s, %.1f s",
                           cells, folds, seen.size(), anomaly_auc.empty() ? 0.0 : anomaly_auc.begin()->second,
                           anomaly_auc.size(), identical ? "bit-identical" : "NOT identical", sw.seconds());
  for (std::size_t i = 0; i < std::min<std::size_t>(3, problems.size()); ++i) detail += "; " + problems[i];
  return {problems.empty(), detail};
}

// ---------------------------------------------------------------- 7, 8

const std::uint64_t kLearningSeeds[] = {1, 2, 3};

// Smoke budgets on the default-size corpus. The GAN runs the generator smoke budget of 200 iterations.
evaluate::RunConfig learning_config(std::uint64_t master_seed) {
  json doc = {{"preset", "smoke"},
              {"master_seed", master_seed},
              {"corpus", {{"image_size", 64}, {"counts", {{"good", 1000}, {"double_print", 150}, {"interrupted_print", 150}}}}},
              {"features", {{"backend", "hermetic"}}},
              {"gan", {{"iterations", 200}}}};
  return evaluate::run_config_from_json(doc);
}

corpus::Manifest learning_corpus(const evaluate::RunConfig& cfg) {
  const auto dir = kWork / fmt("corpus_%016llx", static_cast<unsigned long long>(cfg.corpus.seed));
  if (fs::exists(dir / corpus::kManifestFileName)) {
    auto m = corpus::load_manifest(dir / corpus::kManifestFileName);
    if (m.corpus_spec == cfg.corpus) return m;
    fs::remove_all(dir);
  }
  return corpus::generate_corpus(cfg.corpus, dir);
}

struct LearningRun {
  std::map<std::string, double> auc;  // "<augmentation>@<retention>" and "anomaly@1.00"
  double seconds = 0;
  double generator_seconds = 0;
};

LearningRun learning_run(std::uint64_t master_seed,
                         const std::vector<std::tuple<evaluate::ModelChoice, evaluate::Augmentation, double>>& cells) {
  const auto cfg = learning_config(master_seed);
  const auto manifest = learning_corpus(cfg);
  Stopwatch sw;
  const auto work = kWork / fmt("learning_%llu", static_cast<unsigned long long>(master_seed));
  fs::remove_all(work);
  evaluate::ExperimentContext ctx(manifest, cfg.training, cfg.seeds(), work);
  LearningRun out;
  for (const auto& [model, aug, retention] : cells) {
    const auto reports = evaluate::run_cell_pair(ctx, model, aug, retention);
    const auto& binary = reports.front();
    const std::string key = (model == evaluate::ModelChoice::anomaly ? std::string("anomaly")
                                                                     : std::string(evaluate::to_string(aug))) +
                            fmt("@%.2f", retention);
    out.auc[key] = binary.mean_auc;
    out.generator_seconds += binary.generator_seconds;
    std::printf("  seed %llu %-14s binary AUC %.4f\n", static_cast<unsigned long long>(master_seed), key.c_str(),
                binary.mean_auc);
    std::fflush(stdout);
  }
  out.seconds = sw.seconds();
  fs::remove_all(work);
  return out;
}

Outcome learning_sanity() {
  using evaluate::Augmentation;
  const auto mlp = evaluate::ModelChoice::baseline_mlp;
  const std::vector<std::tuple<evaluate::ModelChoice, Augmentation, double>> cells{
      {mlp, Augmentation::none, 1.0},    {mlp, Augmentation::none, 0.25},  {mlp, Augmentation::random, 0.25},
      {mlp, Augmentation::smote, 0.25},  {mlp, Augmentation::adasyn, 0.25}, {mlp, Augmentation::gan, 0.25}};
  std::map<std::string, double> mean;
  double seconds = 0, generator = 0;
  for (auto seed : kLearningSeeds) {
    const auto r = learning_run(seed, cells);
    for (const auto& [k, v] : r.auc) mean[k] += v / std::size(kLearningSeeds);
    seconds += r.seconds;
    generator += r.generator_seconds;
  }
  const double base100 = mean["none@1.00"], base25 = mean["none@0.25"];
  bool pass = base100 >= 0.95;
  std::string detail = fmt("baseline@100%% %.4f (>= 0.95), baseline@25%% %.4f;", base100, base25);
  for (const char* a : {"random", "smote", "adasyn", "gan"}) {
    const double v = mean[std::string(a) + "@0.25"];
    const bool ok = v >= base25 - 0.01;
    pass = pass && ok;
    detail += fmt(" %s@25%% %.4f%s", a, v, ok ? "" : " (BELOW baseline - 0.01)");
  }
  const double runtime = seconds - generator;
  pass = pass && runtime < 30 * 60;
  detail += fmt("; 3 seeds, %.0f s excluding %.0f s of GAN training", runtime, generator);
  return {pass, detail};
}

Outcome supervised_beats_anomaly() {
  using evaluate::Augmentation;
  int wins = 0;
  std::string detail;
  for (auto seed : kLearningSeeds) {
    const auto r = learning_run(seed, {{evaluate::ModelChoice::baseline_mlp, Augmentation::none, 1.0},
                                       {evaluate::ModelChoice::anomaly, Augmentation::none, 1.0}});
    const double b = r.auc.at("none@1.00"), a = r.auc.at("anomaly@1.00");
    wins += b > a;
    detail += fmt("%sseed %llu: %.4f vs %.4f", detail.empty() ? "" : ", ", static_cast<unsigned long long>(seed), b, a);
  }
  return {wins == 3, fmt("supervised > anomaly in %d of 3 seeds (", wins) + detail + ")"};
}

// ---------------------------------------------------------------- 9

Outcome gan_smoke() {
  auto gan = evaluate::run_config_from_json(json::object()).training.gan;
  gan.image_size = 32;
  gan.iterations = 200;
  gan.fid_interval = 0;

  corpus::CorpusSpec spec;
  spec.image_size = 32;
  std::vector<std::string> problems;
  double slowest = 0;
  bool round_trip = true;
  std::string detail;
  for (auto label : corpus::kAllClasses) {
    std::vector<double> first, last;
    for (std::uint64_t seed : {1, 2, 3}) {
      spec.seed = seed;
      std::vector<GrayImage> images;
      for (std::size_t i = 0; i < 64; ++i) images.push_back(corpus::render(corpus::draw_render_params(spec, i, label)));
      auto cfg = gan;
      cfg.seed = seed;
      cfg.label = label;
      Stopwatch sw;
      const auto ck = generative::train_gan(images, cfg);
      slowest = std::max(slowest, sw.seconds());
      for (const auto& s : ck.log)
        if (!std::isfinite(s.d_loss) || !std::isfinite(s.g_loss) || !std::isfinite(s.recon_loss)) {
          problems.push_back(fmt("non-finite loss at iteration %d", s.iteration));
          break;
        }
      if (ck.log.size() != 200u) problems.push_back(fmt("%zu logged steps", ck.log.size()));
      first.push_back(ck.fid_history.front().second);
      last.push_back(ck.fid_history.back().second);

      const auto path = kWork / fmt("gan_%s_%llu.ckpt", std::string(corpus::to_string(label)).c_str(),
                                    static_cast<unsigned long long>(seed));
      fs::create_directories(kWork);
      generative::save_checkpoint(ck, path);
      const auto back = generative::load_checkpoint(path);
      const auto a = generative::sample(ck, 16, 99), b = generative::sample(back, 16, 99);
      for (std::size_t i = 0; i < a.size(); ++i) round_trip = round_trip && a[i].pixels == b[i].pixels;
      fs::remove(path);
    }
    const double f0 = median(first), f1 = median(last);
    if (!(f1 < f0)) problems.push_back(fmt("%s: FID did not drop", std::string(corpus::to_string(label)).c_str()));
    detail += fmt("%s FID %.3f -> %.3f; ", std::string(corpus::to_string(label)).c_str(), f0, f1);
  }
  if (!round_trip) problems.push_back("checkpoint round-trip changed samples");
  if (slowest >= 600) problems.push_back("a generator took over 10 min");
  detail += fmt("median of 3 seeds, slowest generator %.1f s, checkpoint samples %s", slowest,
                round_trip ? "bit-exact" : "DIFFER");
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty(), detail};
}

// ---------------------------------------------------------------- 10

// Per-tensor ‖g − fd‖ / max(‖g‖, ‖fd‖) over sampled coordinates of the full-size network.
Outcome gradient_check() {
  Stopwatch sw;
  const classify::MlpConfig defaults;
  const std::size_t in = 24, out = 3, batch = 10;
  classify::Mlp<double> net(in, defaults.hidden1, defaults.hidden2, out);
  Rng rng(10);
  net.init(rng);
  std::vector<double> x(batch * in);
  for (auto& v : x) v = rng.normal();
  std::vector<int> y(batch);
  for (std::size_t i = 0; i < batch; ++i) y[i] = static_cast<int>(i % out);
  std::vector<std::vector<double>> grads;
  net.loss(x.data(), batch, y, &grads);

  std::mt19937_64 g(1010);
  double worst = 0;
  std::size_t checked = 0;
  for (std::size_t p = 0; p < net.params.size(); ++p) {
    auto& w = net.params[p];
    std::vector<std::size_t> coords(w.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    std::shuffle(coords.begin(), coords.end(), g);
    coords.resize(std::min<std::size_t>(coords.size(), 400));
    double diff2 = 0, g2 = 0, fd2 = 0;
    for (auto i : coords) {
      const double saved = w[i], h = 1e-5;
      w[i] = saved + h;
      const double up = net.loss(x.data(), batch, y, nullptr);
      w[i] = saved - h;
      const double down = net.loss(x.data(), batch, y, nullptr);
      w[i] = saved;
      const double fd = (up - down) / (2 * h);
      diff2 += (fd - grads[p][i]) * (fd - grads[p][i]);
      g2 += grads[p][i] * grads[p][i];
      fd2 += fd * fd;
      ++checked;
    }
    const double denom = std::max(std::sqrt(g2), std::sqrt(fd2));
    if (denom > 0) worst = std::max(worst, std::sqrt(diff2) / denom);
  }
  const double t = sw.seconds();
  return {worst <= 1e-4 && t < 10.0,
          fmt("%zu-%zu-%zu-%zu network, %zu coordinates over %zu tensors, max relative error %.3g, %.2f s", in,
              defaults.hidden1, defaults.hidden2, out, checked, net.params.size(), worst, t)};
}

// ---------------------------------------------------------------- 11

Outcome k_selection() {
  std::mt19937_64 g(1111);
  std::string detail;
  bool pass = true;
  for (auto [n, expected] : {std::pair<std::size_t, std::size_t>{100, 10}, {3518, 59}, {5, 2}}) {
    features::FeatureMatrix m(n, 64);
    for (auto& v : m.values) v = std::uniform_real_distribution<float>()(g);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % 2);
    const auto mask = features::select_top_k(m, y);
    pass = pass && mask.k == expected && mask.selected_columns.size() == expected;
    detail += fmt("N=%zu k=%zu, ", n, mask.k);
  }
  double worst = 0;
  for (int C = 2; C <= 6; ++C) {
    const int per = 40;
    std::vector<int> y;
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < per; ++i) y.push_back(c);
    std::shuffle(y.begin(), y.end(), g);
    std::vector<float> copy(y.begin(), y.end());
    worst = std::max(worst, std::fabs(features::mutual_information(copy, y) - std::log(static_cast<double>(C))));
  }
  pass = pass && worst <= 1e-9;
  return {pass, detail + fmt("label-copy MI vs ln C for C=2..6 max |diff| %.3g", worst)};
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {"metric oracles", metric_oracles},
      {"FID closed form", fid_closed_form},
      {"resampling geometry", resampling_geometry},
      {"stratification", stratification},
      {"protocol hygiene", hygiene},
      {"determinism", determinism},
      {"learning sanity", learning_sanity},
      {"supervised vs anomaly ordering", supervised_beats_anomaly},
      {"GAN smoke", gan_smoke},
      {"gradient check", gradient_check},
      {"K selection", k_selection},
  };
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
  if (which.empty())
    for (int i = 1; i <= static_cast<int>(all.size()); ++i) which.push_back(i);

  int failures = 0;
  for (int id : which) {
    if (id < 1 || id > static_cast<int>(all.size())) {
      std::fprintf(stderr, "no criterion %d\n", id);
      return 2;
    }
    Outcome o;
    try {
      o = all[id - 1].run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %2d %s  %s: %s\n", id, o.pass ? "PASS" : "FAIL", all[id - 1].name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures ? 1 : 0;
}
