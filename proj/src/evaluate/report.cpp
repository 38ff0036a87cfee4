#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "inspectlab/core/error.hpp"
#include "inspectlab/experiment.hpp"
#include "inspectlab/metrics.hpp"

namespace inspectlab::evaluate {

namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

int percent(double r) { return static_cast<int>(std::lround(r * 100.0)); }

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

int row_rank(const ExperimentSpec& s) {
  const auto rows = paper_grid_rows();
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].model == s.model && rows[i].augmentation == s.augmentation) return static_cast<int>(i);
  return static_cast<int>(rows.size());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot write " + path.string());
  f << text;
}

// ---- raster helpers for the plots

void line(RgbImage& img, double x0, double y0, double x1, double y1, std::array<std::uint8_t, 3> c, int thick = 1) {
  const int steps = static_cast<int>(std::max(std::fabs(x1 - x0), std::fabs(y1 - y0))) + 1;
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    for (int dy = -(thick / 2); dy <= thick / 2; ++dy)
      for (int dx = -(thick / 2); dx <= thick / 2; ++dx) {
        const int px = x + dx, py = y + dy;
        if (px >= 0 && py >= 0 && px < img.width && py < img.height) img.set(px, py, c[0], c[1], c[2]);
      }
  }
}

void rect(RgbImage& img, int x0, int y0, int x1, int y1, std::array<std::uint8_t, 3> c) {
  for (int y = std::max(0, y0); y < std::min(img.height, y1); ++y)
    for (int x = std::max(0, x0); x < std::min(img.width, x1); ++x) img.set(x, y, c[0], c[1], c[2]);
}

constexpr std::array<std::array<std::uint8_t, 3>, 3> kClassColors{{{60, 120, 200}, {220, 120, 40}, {70, 160, 70}}};

}  // namespace

ResultsTable render_table(std::span<const MetricsReport> reports) {
  ResultsTable t;
  const std::vector<double> retentions{1.0, 0.75, 0.5, 0.25};
  std::vector<double> extra;
  for (const auto& r : reports)
    if (std::none_of(retentions.begin(), retentions.end(), [&](double x) { return percent(x) == percent(r.spec.retention); }) &&
        std::none_of(extra.begin(), extra.end(), [&](double x) { return percent(x) == percent(r.spec.retention); }))
      extra.push_back(r.spec.retention);
  std::sort(extra.begin(), extra.end(), std::greater<>());
  auto all_ret = retentions;
  all_ret.insert(all_ret.end(), extra.begin(), extra.end());
  // Columns present in the input, in table order.
  std::vector<std::pair<Task, int>> cols;
  for (auto task : {Task::binary, Task::multiclass})
    for (double r : all_ret)
      if (std::any_of(reports.begin(), reports.end(),
                      [&](const MetricsReport& m) { return m.spec.task == task && percent(m.spec.retention) == percent(r); }))
        cols.emplace_back(task, percent(r));
  for (const auto& [task, p] : cols) t.columns.push_back(std::string(to_string(task)) + " " + std::to_string(p) + "%");

  std::vector<const MetricsReport*> order;
  for (const auto& r : reports) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(),
                   [](const MetricsReport* a, const MetricsReport* b) { return row_rank(a->spec) < row_rank(b->spec); });
  for (const auto* r : order) {
    const auto label = r->spec.row_label();
    auto it = std::find(t.rows.begin(), t.rows.end(), label);
    std::size_t row;
    if (it == t.rows.end()) {
      t.rows.push_back(label);
      t.cells.emplace_back(cols.size());
      row = t.rows.size() - 1;
    } else {
      row = static_cast<std::size_t>(it - t.rows.begin());
    }
    const auto col = static_cast<std::size_t>(
        std::find(cols.begin(), cols.end(), std::pair{r->spec.task, percent(r->spec.retention)}) - cols.begin());
    if (t.cells[row][col])
      fail(ErrorKind::invalid_argument, "render_table: duplicate cell " + r->spec.cell_id());
    t.cells[row][col] = r->mean_auc;
  }

  // Ranking uses the printed precision, so equal printed values tie and the upper row wins.
  for (std::size_t c = 0; c < cols.size(); ++c) {
    std::vector<std::pair<double, std::size_t>> v;
    for (std::size_t r = 0; r < t.rows.size(); ++r)
      if (t.cells[r][c]) v.emplace_back(std::round(*t.cells[r][c] * 1e4), r);
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    t.best.push_back(v.empty() ? std::nullopt : std::optional(v[0].second));
    t.second.push_back(v.size() < 2 ? std::nullopt : std::optional(v[1].second));
  }
  return t;
}

std::string ResultsTable::to_text() const {
  std::size_t label_w = 5;
  for (const auto& r : rows) label_w = std::max(label_w, r.size());
  std::size_t cell_w = 10;
  for (const auto& c : columns) cell_w = std::max(cell_w, c.size());
  std::ostringstream os;
  auto pad = [](std::string s, std::size_t w, bool right) {
    if (s.size() >= w) return s;
    return right ? std::string(w - s.size(), ' ') + s : s + std::string(w - s.size(), ' ');
  };
  os << pad("Model", label_w, false);
  for (const auto& c : columns) os << " | " << pad(c, cell_w, true);
  os << "\n" << std::string(label_w, '-');
  for (std::size_t i = 0; i < columns.size(); ++i) os << "-+-" << std::string(cell_w, '-');
  os << "\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    os << pad(rows[r], label_w, false);
    for (std::size_t c = 0; c < columns.size(); ++c) {
      std::string s = "-";
      if (cells[r][c]) {
        s = fixed4(*cells[r][c]);
        if (best[c] == r) s = "**" + s + "**";
        else if (second[c] == r) s = "_" + s + "_";
      }
      os << " | " << pad(s, cell_w, true);
    }
    os << "\n";
  }
  os << "\nMean AUC ROC over folds. **best** per column, _second best_.\n";
  return os.str();
}

std::string results_csv(std::span<const MetricsReport> reports) {
  std::ostringstream os;
  os << "model,augmentation,task,retention,fold,auc\n";
  for (const auto& r : reports)
    for (std::size_t f = 0; f < r.per_fold_auc.size(); ++f)
      os << to_string(r.spec.model) << ',' << to_string(r.spec.augmentation) << ',' << to_string(r.spec.task) << ','
         << fixed4(r.spec.retention).substr(0, 4) << ',' << f << ',' << fixed4(r.per_fold_auc[f]) << '\n';
  return os.str();
}

std::vector<MetricsReport> parse_results_csv(std::string_view text) {
  std::vector<MetricsReport> out;
  std::istringstream is{std::string(text)};
  std::string line;
  std::getline(is, line);
  if (line.rfind("model,augmentation,task,retention,fold,auc", 0) != 0)
    fail(ErrorKind::format, "results.csv: unexpected header '" + line + "'");
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split(line, ',');
    if (f.size() != 6) fail(ErrorKind::format, "results.csv line " + std::to_string(line_no) + ": expected 6 fields");
    ExperimentSpec spec;
    try {
      spec.model = model_from_string(f[0]);
      spec.augmentation = augmentation_from_string(f[1]);
      spec.task = task_from_string(f[2]);
      spec.retention = std::stod(f[3]);
    } catch (const std::exception& e) {
      fail(ErrorKind::format, "results.csv line " + std::to_string(line_no) + ": " + e.what());
    }
    const double auc = std::stod(f[5]);
    auto it = std::find_if(out.begin(), out.end(), [&](const MetricsReport& r) { return r.spec.cell_id() == spec.cell_id(); });
    if (it == out.end()) {
      out.push_back({});
      out.back().spec = spec;
      it = out.end() - 1;
    }
    it->per_fold_auc.push_back(auc);
  }
  for (auto& r : out) {
    double s = 0.0;
    for (double v : r.per_fold_auc) s += v;
    r.mean_auc = s / static_cast<double>(r.per_fold_auc.size());
  }
  return out;
}

std::string predictions_csv(std::span<const MetricsReport> reports) {
  std::ostringstream os;
  os << "cell,fold,id,label,score\n";
  char buf[32];
  for (const auto& r : reports)
    for (const auto& p : r.predictions) {
      std::snprintf(buf, sizeof buf, "%.9g", p.score);
      os << r.spec.cell_id() << ',' << p.fold << ',' << p.id << ',' << p.label << ',' << buf << '\n';
    }
  return os.str();
}

void attach_predictions(std::vector<MetricsReport>& reports, std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 5) fail(ErrorKind::format, "predictions.csv: expected 5 fields in '" + line + "'");
    for (auto& r : reports)
      if (r.spec.cell_id() == f[0]) r.predictions.push_back({f[2], std::stoi(f[1]), std::stoi(f[3]), std::stod(f[4])});
  }
}

RgbImage plot_roc(const MetricsReport& report) {
  constexpr int size = 320, margin = 30;
  RgbImage img(size, size);
  const double span = size - 2 * margin;
  auto px = [&](double fpr) { return margin + fpr * span; };
  auto py = [&](double tpr) { return size - margin - tpr * span; };
  for (int g = 0; g <= 10; ++g) {
    const double v = g / 10.0;
    line(img, px(v), py(0), px(v), py(1), {235, 235, 235});
    line(img, px(0), py(v), px(1), py(v), {235, 235, 235});
  }
  line(img, px(0), py(0), px(1), py(1), {170, 170, 170});
  line(img, px(0), py(0), px(1), py(0), {0, 0, 0});
  line(img, px(0), py(0), px(0), py(1), {0, 0, 0});
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& p : report.predictions) {
    scores.push_back(p.score);
    labels.push_back(p.label != corpus::class_index(corpus::LabelClass::good));
  }
  if (!scores.empty()) {
    const auto roc = roc_curve(scores, labels);
    for (std::size_t i = 1; i < roc.size(); ++i)
      line(img, px(roc[i - 1].fpr), py(roc[i - 1].tpr), px(roc[i].fpr), py(roc[i].tpr), {200, 40, 40}, 3);
  }
  return img;
}

RgbImage plot_fid(const std::map<corpus::LabelClass, generative::FidReport>& fid) {
  constexpr int width = 320, height = 240, margin = 30;
  RgbImage img(width, height);
  double top = 1e-12;
  for (const auto& [label, r] : fid) top = std::max(top, r.value);
  const int n = static_cast<int>(fid.size());
  const int slot = n > 0 ? (width - 2 * margin) / n : 1;
  int i = 0;
  for (const auto& [label, r] : fid) {
    const int h = static_cast<int>(std::lround(std::max(0.0, r.value) / top * (height - 2 * margin)));
    rect(img, margin + i * slot + slot / 6, height - margin - h, margin + (i + 1) * slot - slot / 6, height - margin,
         kClassColors[static_cast<std::size_t>(corpus::class_index(label))]);
    ++i;
  }
  line(img, margin, height - margin, width - margin, height - margin, {0, 0, 0});
  line(img, margin, height - margin, margin, margin, {0, 0, 0});
  return img;
}

void write_report(const std::filesystem::path& dir, std::span<const MetricsReport> reports,
                  const std::map<corpus::LabelClass, generative::FidReport>* fid) {
  std::filesystem::create_directories(dir);
  write_text(dir / "results.csv", results_csv(reports));
  write_text(dir / "predictions.csv", predictions_csv(reports));
  write_text(dir / "table.txt", render_table(reports).to_text());
  for (const auto& r : reports)
    if (r.spec.task == Task::binary && !r.predictions.empty()) write_png(dir / ("roc_" + r.spec.cell_id() + ".png"), plot_roc(r));
  if (fid && !fid->empty()) {
    write_png(dir / "fid.png", plot_fid(*fid));
    std::ostringstream os;
    os << "class,fid,n_real,n_synth\n";
    for (const auto& [label, r] : *fid)
    {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", r.value);
      os << corpus::display_name(label) << ',' << buf << ',' << r.n_real << ',' << r.n_synth << '\n';
    }
    write_text(dir / "fid.csv", os.str());
  }
}

}  // namespace inspectlab::evaluate
