#include <cmath>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "inspectlab/anomaly.hpp"
#include "inspectlab/core/error.hpp"
#include "inspectlab/core/rng.hpp"

using namespace inspectlab;
using namespace inspectlab::anomaly;
using corpus::LabelClass;

namespace {

struct Fixture {
  std::vector<GrayImage> good, test;
  std::vector<LabelClass> test_labels;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture f;
    const auto spec = testutil::small_spec(60, 6, 6, 32);
    for (std::size_t i = 0; i < 72; ++i) {
      const auto label = i < 60 ? LabelClass::good : i < 66 ? LabelClass::double_print : LabelClass::interrupted_print;
      auto img = corpus::render(corpus::draw_render_params(spec, i, label));
      if (i < 52) {
        f.good.push_back(std::move(img));
      } else {
        f.test.push_back(std::move(img));
        f.test_labels.push_back(label);
      }
    }
    return f;
  }();
  return f;
}

AnomalyConfig tiny() {
  AnomalyConfig c;
  c.epochs = 1;
  c.batch_size = 8;
  c.channels = {4, 8};
  c.head_channels = 4;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(Anomaly, RejectsDefectiveLabels) {
  const auto& f = fixture();
  std::vector<LabelClass> labels(f.good.size(), LabelClass::good);
  labels[7] = LabelClass::double_print;
  try {
    train_unsupervised(f.good, labels, tiny());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::label_guard);
  }
}

TEST(Anomaly, RequiresEnoughImages) {
  const auto& f = fixture();
  std::vector<GrayImage> few(f.good.begin(), f.good.begin() + 10);
  EXPECT_THROW(train_unsupervised(few, std::vector<LabelClass>(10, LabelClass::good), tiny()), Error);
}

TEST(Anomaly, TrainsScoresAndRoundTrips) {
  testutil::TempDir dir("anomaly");
  const auto& f = fixture();
  const std::vector<LabelClass> labels(f.good.size(), LabelClass::good);
  const auto model = train_unsupervised(f.good, labels, tiny());
  ASSERT_EQ(model.reconstruction_history().size(), 1u);
  EXPECT_TRUE(std::isfinite(model.head_history()[0]));

  const auto r = score(model, f.test[0]);
  EXPECT_EQ(r.width, 32);
  EXPECT_EQ(r.map.size(), 32u * 32u);
  for (float v : r.map) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
  // top-1% of 1024 pixels is the mean of the 11 largest
  auto sorted = r.map;
  std::sort(sorted.rbegin(), sorted.rend());
  double top = 0;
  for (int i = 0; i < 11; ++i) top += sorted[i];
  EXPECT_NEAR(r.score, top / 11, 1e-6);

  const auto scores = score_all(model, f.test);
  EXPECT_EQ(scores[0], r.score);
  const double auc = evaluate_anomaly_auc(model, f.test, f.test_labels);
  EXPECT_GE(auc, 0.0);
  EXPECT_LE(auc, 1.0);

  EXPECT_EQ(train_unsupervised(f.good, labels, tiny()).weights_blob(), model.weights_blob());

  save_anomaly_model(model, dir / "m.anom");
  const auto back = load_anomaly_model(dir / "m.anom");
  EXPECT_EQ(score_all(back, f.test), scores);
  EXPECT_EQ(heatmap(r).width, 32);

  GrayImage wrong(16, 16);
  EXPECT_THROW(score(model, wrong), Error);
}

TEST(Anomaly, MaxAggregation) {
  const auto& f = fixture();
  auto cfg = tiny();
  cfg.aggregation = Aggregation::max;
  const auto model = train_unsupervised(f.good, std::vector<LabelClass>(f.good.size(), LabelClass::good), cfg);
  const auto r = score(model, f.test[1]);
  EXPECT_EQ(r.score, *std::max_element(r.map.begin(), r.map.end()));
}

TEST(Anomaly, RandomCorruptionMarksPixels) {
  const auto& f = fixture();
  Rng rng(4);
  int marked_images = 0;
  for (int i = 0; i < 20; ++i) {
    const auto c = random_corruption(f.good[i], corpus::DefectParams{}, rng);
    ASSERT_EQ(c.mask.size(), f.good[i].size());
    float s = 0;
    for (float v : c.mask) s += v;
    marked_images += s > 0;
  }
  EXPECT_GE(marked_images, 15);
}

TEST(Anomaly, ConfigJsonRejectsUnknownKeys) {
  auto j = to_json(tiny());
  EXPECT_EQ(to_json(anomaly_config_from_json(j)), j);
  j["epochs_typo"] = 3;
  EXPECT_THROW(anomaly_config_from_json(j), Error);
  auto bad = tiny();
  bad.top_fraction = 0;
  EXPECT_THROW(bad.validate(), Error);
}
