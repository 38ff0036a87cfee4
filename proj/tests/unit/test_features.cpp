#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "inspectlab/core/container.hpp"
#include "inspectlab/core/error.hpp"
#include "inspectlab/corpus.hpp"
#include "inspectlab/features.hpp"

using namespace inspectlab;
using namespace inspectlab::features;

namespace {

// Plug-in MI from counts via entropies: H(X) + H(Y) − H(X, Y).
double entropy_mi(const std::vector<int>& x, const std::vector<int>& y) {
  std::map<int, double> px, py;
  std::map<std::pair<int, int>, double> pxy;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    px[x[i]] += 1 / n;
    py[y[i]] += 1 / n;
    pxy[{x[i], y[i]}] += 1 / n;
  }
  auto h = [](const auto& m) {
    double s = 0;
    for (const auto& [k, p] : m) s -= p * std::log(p);
    return s;
  };
  return h(px) + h(py) - h(pxy);
}

}  // namespace

TEST(MutualInformation, PerfectlyInformativeColumnGivesLogC) {
  // Bin edges fall on class boundaries for these (classes, bins) pairs.
  for (auto [classes, bins] : {std::pair{2, 16}, {3, 12}, {4, 16}}) {
    std::vector<float> col;
    std::vector<int> y;
    for (int c = 0; c < classes; ++c)
      for (int i = 0; i < 48; ++i) {
        col.push_back(static_cast<float>(c * 100 + i));
        y.push_back(c);
      }
    EXPECT_NEAR(mutual_information(col, y, bins), std::log(static_cast<double>(classes)), 1e-12);
  }
}

TEST(MutualInformation, ConstantColumnGivesZero) {
  std::vector<float> col(40, 1.5f);
  std::vector<int> y(40);
  for (int i = 0; i < 40; ++i) y[i] = i % 2;
  EXPECT_DOUBLE_EQ(mutual_information(col, y, 16), 0.0);
}

TEST(MutualInformation, MatchesEntropyFormulaOnRandomData) {
  std::mt19937 g(4);
  std::normal_distribution<float> d;
  std::vector<float> col(300);
  std::vector<int> y(300);
  for (int i = 0; i < 300; ++i) {
    y[i] = static_cast<int>(g() % 3);
    col[i] = d(g) + 0.7f * y[i];
  }
  // Oracle binning: rank r of n goes to bin ⌊r·B/n⌋ (values are distinct).
  std::vector<std::size_t> order(300);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return col[a] < col[b]; });
  std::vector<int> bins(300);
  for (std::size_t r = 0; r < 300; ++r) bins[order[r]] = static_cast<int>(r * 16 / 300);
  EXPECT_EQ(equal_frequency_bins(col, 16), bins);
  EXPECT_NEAR(mutual_information(col, y, 16), entropy_mi(bins, y), 1e-12);
}

TEST(EqualFrequencyBins, TiesShareFirstRankBin) {
  const std::vector<float> col{3, 1, 1, 1, 2, 5, 4, 0};
  // sorted: 0 | 1 1 1 | 2 3 4 5, ranks 0..7, 4 bins of two
  const auto b = equal_frequency_bins(col, 4);
  EXPECT_EQ(b, (std::vector<int>{2, 0, 0, 0, 2, 3, 3, 0}));
}

TEST(FloorSqrt, ExactAroundSquares) {
  for (std::size_t r : {0ull, 1ull, 2ull, 31ull, 1000ull, 4294967295ull}) {
    EXPECT_EQ(floor_sqrt(r * r), r);
    if (r > 0) EXPECT_EQ(floor_sqrt(r * r - 1), r - 1);
    EXPECT_EQ(floor_sqrt(r * r + 1), r == 0 ? 1u : r);
  }
  EXPECT_EQ(floor_sqrt(1300), 36u);
}

TEST(SelectTopK, KIsFloorSqrtNCappedByD) {
  std::mt19937 g(1);
  FeatureMatrix m(50, 20);
  std::vector<int> y(50);
  for (std::size_t i = 0; i < 50; ++i) {
    y[i] = static_cast<int>(i % 2);
    for (std::size_t c = 0; c < 20; ++c) m.at(i, c) = static_cast<float>(g() % 1000) + (c < 3 ? 5000.0f * y[i] : 0.0f);
  }
  const auto mask = select_top_k(m, y);
  EXPECT_EQ(mask.k, 7u);
  ASSERT_EQ(mask.selected_columns.size(), 7u);
  EXPECT_EQ(mask.mi_scores.size(), 20u);
  // Informative columns first.
  EXPECT_EQ(std::vector<std::size_t>(mask.selected_columns.begin(), mask.selected_columns.begin() + 3),
            (std::vector<std::size_t>{0, 1, 2}));
  FeatureMatrix narrow(50, 4);
  narrow.values.assign(200, 0.0f);
  EXPECT_EQ(select_top_k(narrow, y).k, 4u);
}

TEST(SelectTopK, TiesGoToLowerIndex) {
  FeatureMatrix m(16, 6);
  std::vector<int> y(16);
  for (std::size_t i = 0; i < 16; ++i) {
    y[i] = i < 8;
    for (std::size_t c = 0; c < 6; ++c) m.at(i, c) = static_cast<float>(i);  // identical columns
  }
  const auto mask = select_top_k(m, y);
  EXPECT_EQ(mask.selected_columns, (std::vector<std::size_t>{0, 1, 2, 3}));
  const auto reduced = apply_mask(m, mask);
  EXPECT_EQ(reduced.cols, 4u);
  EXPECT_EQ(reduced.row_ids, m.row_ids);
}

TEST(Fmat, RoundTripAndCsv) {
  testutil::TempDir dir("fmat");
  FeatureMatrix m(3, 2);
  m.values = {1.5f, -2.0f, 0.0f, 3.25f, 1e-7f, 9.0f};
  m.row_ids = {"a", "b", "c"};
  write_fmat(dir / "m.fmat", m);
  EXPECT_EQ(read_fmat(dir / "m.fmat"), m);
  const auto csv = to_csv(m);
  EXPECT_NE(csv.find("a,1.5,-2"), std::string::npos);
  write_text(dir / "bad.fmat", "FMAT2xxxx");
  EXPECT_THROW(read_fmat(dir / "bad.fmat"), Error);
}

TEST(FeatureMatrix, ValidateRejectsNanAndDuplicateIds) {
  FeatureMatrix m(2, 1);
  m.row_ids = {"x", "y"};
  m.validate();
  m.values[0] = std::nanf("");
  EXPECT_THROW(m.validate(), Error);
  m.values[0] = 0;
  m.row_ids = {"x", "x"};
  EXPECT_THROW(m.validate(), Error);
}

TEST(Hermetic, DescriptorShapeDeterminismAndSensitivity) {
  const auto spec = testutil::small_spec(2, 2, 2, 64);
  const auto good = corpus::render(corpus::draw_render_params(spec, 0, corpus::LabelClass::good));
  const auto bad = corpus::render(corpus::draw_render_params(spec, 3, corpus::LabelClass::double_print));
  const auto d1 = hermetic_descriptor(good);
  EXPECT_EQ(d1.size(), kEmbeddingDim);
  EXPECT_EQ(d1, hermetic_descriptor(good));
  for (float v : d1) EXPECT_TRUE(std::isfinite(v));
  EXPECT_NE(d1, hermetic_descriptor(bad));
  const auto small = resize_bilinear(good, 32, 32);
  EXPECT_EQ(hermetic_descriptor(small).size(), kEmbeddingDim);
}

TEST(Extract, CacheGivesIdenticalRows) {
  testutil::TempDir dir("extract");
  const auto spec = testutil::small_spec(3, 2, 2, 32);
  const auto manifest = corpus::generate_corpus(spec, dir / "corpus");
  ExtractOptions opt;
  const auto a = extract_embeddings(manifest, manifest.samples, opt);
  opt.cache_dir = dir / "cache";
  const auto b = extract_embeddings(manifest, manifest.samples, opt);
  const auto c = extract_embeddings(manifest, manifest.samples, opt);
  EXPECT_EQ(a, b);
  EXPECT_EQ(b, c);
  EXPECT_EQ(a.rows, 7u);
  EXPECT_EQ(a.row_ids[0], manifest.samples[0].id);
}

TEST(Extract, UndecodableImageNamesSample) {
  testutil::TempDir dir("extract_bad");
  const auto manifest = corpus::generate_corpus(testutil::small_spec(2, 1, 1, 32), dir / "corpus");
  write_text(manifest.image_path(manifest.samples[1]), "not a png");
  try {
    extract_embeddings(manifest, manifest.samples, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(manifest.samples[1].id), std::string::npos);
  }
}

// The C++ backbone against the torchvision forward pass, on randomly initialized weights.
TEST(ResNet18, MatchesTorchvisionForward) {
  if (std::system("python3 -c 'import torch, torchvision' >/dev/null 2>&1") != 0) GTEST_SKIP() << "torch unavailable";
  testutil::TempDir dir("resnet");
  const int size = 64;
  std::mt19937 g(8);
  std::normal_distribution<float> d;
  std::vector<float> x(3 * size * size);
  for (auto& v : x) v = d(g);
  {
    std::ofstream f(dir / "in.bin", std::ios::binary);
    f.write(reinterpret_cast<const char*>(x.data()), static_cast<std::streamsize>(x.size() * 4));
  }
  const std::string cmd = "python3 " INSPECTLAB_SOURCE_DIR "/tools/export_resnet18.py --random-init 3 --out " +
                          (dir / "w.bin").string() + " --reference-input " + (dir / "in.bin").string() +
                          " --reference-output " + (dir / "out.bin").string() + " --size 64";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  const auto net = ResNet18::load(dir / "w.bin");
  const auto y = net.embed_normalized(x, size, size);
  std::vector<float> ref(512);
  std::ifstream f(dir / "out.bin", std::ios::binary);
  f.read(reinterpret_cast<char*>(ref.data()), 512 * 4);
  ASSERT_EQ(y.size(), 512u);
  double max_err = 0, max_ref = 0;
  for (int i = 0; i < 512; ++i) {
    max_err = std::max(max_err, std::fabs(static_cast<double>(y[i]) - ref[i]));
    max_ref = std::max(max_ref, std::fabs(static_cast<double>(ref[i])));
  }
  EXPECT_LT(max_err, 1e-4 * (1 + max_ref));
}
