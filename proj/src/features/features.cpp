#include "inspectlab/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <system_error>

#include "inspectlab/core/container.hpp"
#include "inspectlab/core/error.hpp"
#include "inspectlab/core/rng.hpp"

namespace inspectlab::features {

namespace fs = std::filesystem;

std::vector<float> FeatureMatrix::column(std::size_t c) const {
  std::vector<float> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = at(r, c);
  return out;
}

void FeatureMatrix::validate() const {
  if (values.size() != rows * cols || row_ids.size() != rows)
    fail(ErrorKind::invalid_argument, "FeatureMatrix: inconsistent dimensions");
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i]))
      fail(ErrorKind::numerical, "FeatureMatrix: non-finite entry in row " + row_ids[i / cols]);
  std::set<std::string> seen;
  for (const auto& id : row_ids)
    if (!seen.insert(id).second) fail(ErrorKind::invalid_argument, "FeatureMatrix: duplicate row id " + id);
}

void FeatureMatrix::append_row(std::span<const float> v, std::string id) {
  if (rows == 0 && cols == 0) cols = v.size();
  require(v.size() == cols, "FeatureMatrix::append_row: width mismatch");
  values.insert(values.end(), v.begin(), v.end());
  row_ids.push_back(std::move(id));
  ++rows;
}

FeatureMatrix take_rows(const FeatureMatrix& m, std::span<const std::size_t> rows) {
  FeatureMatrix out(rows.size(), m.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < m.rows, "take_rows: row index out of range");
    std::copy_n(m.values.begin() + static_cast<std::ptrdiff_t>(rows[i] * m.cols), m.cols,
                out.values.begin() + static_cast<std::ptrdiff_t>(i * m.cols));
    out.row_ids[i] = m.row_ids[rows[i]];
  }
  return out;
}

std::string_view to_string(Backend b) { return b == Backend::hermetic ? "hermetic" : "pretrained_backbone"; }

Backend backend_from_string(std::string_view text) {
  if (text == "hermetic") return Backend::hermetic;
  if (text == "pretrained_backbone") return Backend::pretrained_backbone;
  fail(ErrorKind::config, "unknown feature backend '" + std::string(text) + "'");
}

// ---- extraction -----------------------------------------------------------

fs::path cache_dir_from_env() {
  const char* v = std::getenv("INSPECTLAB_CACHE");
  return v && *v ? fs::path(v) : fs::path();
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string backend_key(const ExtractOptions& o) {
  if (o.backend == Backend::hermetic) return "hermetic-v1";
  return "resnet18-" + hex64(fnv1a64(fs::absolute(o.weights_path).string())) + "-" +
         std::to_string(o.backbone_input_size);
}

std::uint64_t image_hash(const GrayImage& img) {
  std::uint64_t h = fnv1a64(std::string_view(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size()));
  return splitmix64(h ^ (static_cast<std::uint64_t>(img.width) << 32 | static_cast<std::uint32_t>(img.height)));
}

}  // namespace

FeatureMatrix extract_embeddings(std::span<const GrayImage> images, std::span<const std::string> ids,
                                 const ExtractOptions& options) {
  require(images.size() == ids.size(), "extract_embeddings: image/id count mismatch");
  std::unique_ptr<ResNet18> backbone;
  if (options.backend == Backend::pretrained_backbone) {
    if (options.weights_path.empty() || !fs::exists(options.weights_path))
      fail(ErrorKind::io, "backend weights unavailable: '" + options.weights_path.string() +
                              "' (export them with tools/export_resnet18.py)");
    backbone = std::make_unique<ResNet18>(ResNet18::load(options.weights_path));
    backbone->input_size = options.backbone_input_size;
  }
  fs::path cache;
  if (!options.cache_dir.empty()) {
    cache = options.cache_dir / backend_key(options);
    std::error_code ec;
    fs::create_directories(cache, ec);
    if (ec) cache.clear();
  }

  FeatureMatrix out(images.size(), kEmbeddingDim);
  std::vector<std::string> errors(images.size());
  const auto n = static_cast<std::ptrdiff_t>(images.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const GrayImage& img = images[i];
      fs::path entry;
      if (!cache.empty()) {
        entry = cache / (hex64(image_hash(img)) + ".f32");
        std::error_code ec;
        if (fs::exists(entry, ec) && fs::file_size(entry, ec) == kEmbeddingDim * sizeof(float)) {
          const auto bytes = read_file(entry);
          std::memcpy(out.row(i).data(), bytes.data(), bytes.size());
          continue;
        }
      }
      const auto row = backbone ? backbone->embed(img) : hermetic_descriptor(img);
      if (row.size() != kEmbeddingDim) fail(ErrorKind::numerical, "embedding has wrong width");
      std::copy(row.begin(), row.end(), out.row(i).begin());
      if (!entry.empty()) {
        const fs::path tmp = entry.string() + ".tmp" + std::to_string(i);
        write_file(tmp, std::span(reinterpret_cast<const std::uint8_t*>(row.data()), row.size() * sizeof(float)));
        std::error_code ec;
        fs::rename(tmp, entry, ec);
      }
    } catch (const std::exception& e) {
      errors[i] = "sample " + ids[i] + ": " + e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) fail(ErrorKind::format, e);
  for (std::size_t i = 0; i < ids.size(); ++i) out.row_ids[i] = ids[i];
  out.validate();
  return out;
}

FeatureMatrix extract_embeddings(const corpus::Manifest& manifest, std::span<const corpus::ImageSample> samples,
                                 const ExtractOptions& options) {
  std::vector<GrayImage> images(samples.size());
  std::vector<std::string> ids(samples.size());
  std::vector<std::string> errors(samples.size());
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    ids[i] = samples[i].id;
    try {
      images[i] = read_png(manifest.image_path(samples[i]));
    } catch (const std::exception& e) {
      errors[i] = "sample " + samples[i].id + ": undecodable image (" + e.what() + ")";
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) fail(ErrorKind::missing_sample, e);
  return extract_embeddings(images, ids, options);
}

// ---- mutual information ---------------------------------------------------

std::vector<int> equal_frequency_bins(std::span<const float> column, int bins) {
  const std::size_t n = column.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return column[a] < column[b]; });
  std::vector<int> bin(n);
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = start;
    while (end < n && column[order[end]] == column[order[start]]) ++end;
    const int b = static_cast<int>(start * static_cast<std::size_t>(bins) / n);
    for (std::size_t r = start; r < end; ++r) bin[order[r]] = b;
    start = end;
  }
  return bin;
}

double mutual_information(std::span<const float> column, std::span<const int> labels, int bins) {
  if (column.size() != labels.size())
    fail(ErrorKind::invalid_argument, "mutual_information: column and labels differ in length");
  require(column.size() >= 2, "mutual_information: need at least two samples");
  require(bins >= 2, "mutual_information: need at least two bins");
  const auto binned = equal_frequency_bins(column, bins);
  std::map<int, int> label_index;
  for (int y : labels) label_index.emplace(y, 0);
  int next = 0;
  for (auto& [y, idx] : label_index) idx = next++;
  const std::size_t nl = label_index.size();
  std::vector<double> joint(static_cast<std::size_t>(bins) * nl, 0.0), px(bins, 0.0), py(nl, 0.0);
  for (std::size_t i = 0; i < column.size(); ++i) {
    const auto yi = static_cast<std::size_t>(label_index[labels[i]]);
    joint[static_cast<std::size_t>(binned[i]) * nl + yi] += 1.0;
    px[binned[i]] += 1.0;
    py[yi] += 1.0;
  }
  const double n = static_cast<double>(column.size());
  double mi = 0.0;
  for (int b = 0; b < bins; ++b)
    for (std::size_t y = 0; y < nl; ++y) {
      const double nxy = joint[static_cast<std::size_t>(b) * nl + y];
      if (nxy > 0.0) mi += (nxy / n) * std::log(nxy * n / (px[b] * py[y]));
    }
  return std::max(mi, 0.0);
}

std::size_t floor_sqrt(std::size_t n) {
  // Compare via division so r·r never overflows.
  auto r = std::min<std::size_t>(static_cast<std::size_t>(std::sqrt(static_cast<double>(n))), 0xFFFFFFFFull);
  while (r > 0 && r > n / r) --r;
  while (r + 1 <= n / (r + 1)) ++r;
  return r;
}

SelectionMask select_top_k(const FeatureMatrix& matrix, std::span<const int> labels, int bins) {
  require(matrix.rows > 0 && matrix.cols > 0, "select_top_k: empty matrix");
  require(labels.size() == matrix.rows, "select_top_k: label count mismatch");
  SelectionMask mask;
  mask.k = std::min(floor_sqrt(matrix.rows), matrix.cols);
  mask.mi_scores.assign(matrix.cols, 0.0);
  const auto cols = static_cast<std::ptrdiff_t>(matrix.cols);
  if (matrix.rows >= 2) {
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t c = 0; c < cols; ++c)
      mask.mi_scores[c] = mutual_information(matrix.column(static_cast<std::size_t>(c)), labels, bins);
  }
  std::vector<std::size_t> order(matrix.cols);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return mask.mi_scores[a] > mask.mi_scores[b]; });
  mask.selected_columns.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(mask.k));
  std::sort(mask.selected_columns.begin(), mask.selected_columns.end());
  return mask;
}

FeatureMatrix apply_mask(const FeatureMatrix& matrix, const SelectionMask& mask) {
  FeatureMatrix out(matrix.rows, mask.selected_columns.size());
  for (auto c : mask.selected_columns)
    if (c >= matrix.cols) fail(ErrorKind::invalid_argument, "apply_mask: column " + std::to_string(c) + " out of range");
  for (std::size_t r = 0; r < matrix.rows; ++r)
    for (std::size_t j = 0; j < mask.selected_columns.size(); ++j) out.at(r, j) = matrix.at(r, mask.selected_columns[j]);
  out.row_ids = matrix.row_ids;
  return out;
}

// ---- persistence ----------------------------------------------------------

void write_fmat(const fs::path& path, const FeatureMatrix& m) {
  ByteWriter w;
  const std::string magic = "FMAT1";
  w.raw(std::span(reinterpret_cast<const std::uint8_t*>(magic.data()), magic.size()));
  w.u64(m.rows);
  w.u64(m.cols);
  for (float v : m.values) w.f32(v);
  for (const auto& id : m.row_ids) {
    w.raw(std::span(reinterpret_cast<const std::uint8_t*>(id.data()), id.size()));
    w.u8('\n');
  }
  write_file(path, w.bytes());
}

FeatureMatrix read_fmat(const fs::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 5 || std::string(bytes.begin(), bytes.begin() + 5) != "FMAT1")
    fail(ErrorKind::format, path.string() + ": not an FMAT1 file");
  ByteReader r(std::span<const std::uint8_t>(bytes).subspan(5));
  const auto n = r.u64();
  const auto d = r.u64();
  if (d != 0 && n > r.remaining() / (d * sizeof(float))) fail(ErrorKind::format, path.string() + ": truncated");
  FeatureMatrix m(n, d);
  for (auto& v : m.values) v = r.f32();
  const auto tail = r.raw(r.remaining());
  std::string text(tail.begin(), tail.end());
  std::istringstream in(text);
  std::size_t i = 0;
  for (std::string line; std::getline(in, line);) {
    if (i >= n) fail(ErrorKind::format, path.string() + ": more row ids than rows");
    m.row_ids[i++] = line;
  }
  if (i != n) fail(ErrorKind::format, path.string() + ": row id count does not match rows");
  return m;
}

std::string to_csv(const FeatureMatrix& m) {
  std::ostringstream out;
  out << "id";
  for (std::size_t c = 0; c < m.cols; ++c) out << ",f" << c;
  out << "\n";
  char buf[32];
  for (std::size_t r = 0; r < m.rows; ++r) {
    out << m.row_ids[r];
    for (std::size_t c = 0; c < m.cols; ++c) {
      std::snprintf(buf, sizeof(buf), ",%.9g", static_cast<double>(m.at(r, c)));
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace inspectlab::features
