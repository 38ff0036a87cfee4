#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "inspectlab/core/container.hpp"
#include "inspectlab/core/error.hpp"
#include "inspectlab/corpus.hpp"

using namespace inspectlab;
using namespace inspectlab::corpus;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::invalid_argument;
}

}  // namespace

TEST(Corpus, SameSpecGivesIdenticalFiles) {
  testutil::TempDir dir("corpus_det");
  const auto spec = testutil::small_spec(6, 3, 3);
  const auto a = generate_corpus(spec, dir / "a");
  const auto b = generate_corpus(spec, dir / "b");
  EXPECT_TRUE(a.same_content(b));
  EXPECT_EQ(read_text(dir / "a" / kManifestFileName), read_text(dir / "b" / kManifestFileName));
  for (std::size_t i = 0; i < a.samples.size(); ++i)
    EXPECT_EQ(read_file(a.image_path(a.samples[i])), read_file(b.image_path(b.samples[i])));
  auto other = spec;
  other.seed = 4;
  const auto c = generate_corpus(other, dir / "c");
  EXPECT_NE(read_file(a.image_path(a.samples[0])), read_file(c.image_path(c.samples[0])));
}

TEST(Corpus, CountsSizesAndIds) {
  testutil::TempDir dir("corpus_counts");
  const auto m = generate_corpus(testutil::small_spec(7, 4, 2, 48), dir.path());
  EXPECT_EQ(m.class_counts().at(LabelClass::good), 7);
  EXPECT_EQ(m.class_counts().at(LabelClass::double_print), 4);
  EXPECT_EQ(m.class_counts().at(LabelClass::interrupted_print), 2);
  std::set<std::string> ids;
  for (const auto& s : m.samples) {
    ids.insert(s.id);
    const auto img = m.load_image(s);
    EXPECT_EQ(img.width, 48);
    EXPECT_EQ(img.height, 48);
    EXPECT_EQ(s.provenance, Provenance::real);
    EXPECT_EQ(render_params_from_json(s.gen_params).defect, s.label);
  }
  EXPECT_EQ(ids.size(), 13u);
}

TEST(Corpus, ImageIsPureFunctionOfRecordedParams) {
  testutil::TempDir dir("corpus_params");
  const auto m = generate_corpus(testutil::small_spec(2, 2, 2), dir.path());
  for (const auto& s : m.samples) EXPECT_EQ(render(render_params_from_json(s.gen_params)), m.load_image(s));
}

TEST(Corpus, DefectsOnlyChangePixelsNearTheDefect) {
  const auto spec = testutil::small_spec(1, 1, 1, 64);
  const auto ip = draw_render_params(spec, 2, LabelClass::interrupted_print);
  ASSERT_FALSE(ip.bands.empty());
  const auto with = render(ip), without = render(base_of(ip));
  std::size_t changed = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      if (with.at(x, y) == without.at(x, y)) continue;
      ++changed;
      // erased ink gets lighter
      EXPECT_GT(with.at(x, y), without.at(x, y));
    }
  EXPECT_GT(changed, 0u);

  const auto dp = draw_render_params(spec, 1, LabelClass::double_print);
  EXPECT_GT(dp.opacity, 0.0);
  const double off = std::hypot(dp.offset_x, dp.offset_y);
  EXPECT_GE(off, spec.defect_params.double_print_offset.lo - 1e-9);
  EXPECT_LE(off, spec.defect_params.double_print_offset.hi + 1e-9);
  EXPECT_NE(render(dp), render(base_of(dp)));
}

TEST(Corpus, ManifestRoundTripAndErrors) {
  testutil::TempDir dir("corpus_manifest");
  const auto m = generate_corpus(testutil::small_spec(3, 2, 2), dir / "c");
  const auto back = load_manifest(dir / "c" / kManifestFileName);
  EXPECT_TRUE(back.same_content(m));
  EXPECT_EQ(serialize_manifest(back), serialize_manifest(m));

  EXPECT_EQ(kind_of([&] { load_manifest(dir / "nope.json"); }), ErrorKind::io);

  auto j = to_json(m);
  j["format_version"] = 99;
  write_text(dir / "c" / "v99.json", j.dump());
  EXPECT_EQ(kind_of([&] { load_manifest(dir / "c" / "v99.json"); }), ErrorKind::version_mismatch);

  std::filesystem::remove(m.image_path(m.samples[4]));
  try {
    load_manifest(dir / "c" / kManifestFileName);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::missing_sample);
    EXPECT_NE(std::string(e.what()).find(m.samples[4].id), std::string::npos);
  }
}

TEST(Corpus, SpecValidationNamesField) {
  auto spec = testutil::small_spec(1, 1, 1);
  spec.image_size = 4;
  try {
    spec.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    EXPECT_NE(std::string(e.what()).find("image_size"), std::string::npos);
  }
  spec = testutil::small_spec(1, 1, 1);
  spec.defect_params.double_print_opacity = {0.9, 0.2};
  EXPECT_EQ(kind_of([&] { spec.validate(); }), ErrorKind::config);
  EXPECT_EQ(corpus_spec_from_json(to_json(testutil::small_spec(5, 6, 7))), testutil::small_spec(5, 6, 7));
}

TEST(Subsample, KeepsCeilingOfDefectsAndAllGood) {
  testutil::TempDir dir("corpus_sub");
  const auto m = generate_corpus(testutil::small_spec(10, 9, 7), dir.path());
  for (double r : {1.0, 0.75, 0.5, 0.25, 0.1}) {
    const auto s = subsample_defective(m, r, 3);
    const auto c = s.class_counts();
    EXPECT_EQ(c.at(LabelClass::good), 10);
    EXPECT_EQ(c.at(LabelClass::double_print), static_cast<int>(std::ceil(r * 9 - 1e-9)));
    EXPECT_EQ(c.at(LabelClass::interrupted_print), static_cast<int>(std::ceil(r * 7 - 1e-9)));
    // subset in original order
    std::size_t j = 0;
    for (const auto& smp : s.samples) {
      while (j < m.samples.size() && m.samples[j].id != smp.id) ++j;
      ASSERT_LT(j, m.samples.size()) << smp.id;
    }
  }
  EXPECT_NE(serialize_manifest(subsample_defective(m, 0.5, 1)), serialize_manifest(subsample_defective(m, 0.5, 2)));
  EXPECT_THROW(subsample_defective(m, 0.0, 1), Error);
}

TEST(Corruption, MaskMarksChangedPixels) {
  const auto spec = testutil::small_spec(1, 0, 0, 64);
  const auto img = render(draw_render_params(spec, 0, LabelClass::good));
  const auto dp = overlay_double_print(img, 4, 1, 0.8);
  const auto ip = erase_bands(img, {Band{32, 10, 4}});
  for (const auto* c : {&dp, &ip}) {
    ASSERT_EQ(c->mask.size(), img.size());
    std::size_t marked = 0;
    for (std::size_t i = 0; i < img.size(); ++i) {
      // marked where the pixel moved by at least 8 levels
      const int diff = std::abs(static_cast<int>(c->image.pixels[i]) - static_cast<int>(img.pixels[i]));
      EXPECT_EQ(c->mask[i], diff >= 8 ? 1.0f : 0.0f);
      marked += c->mask[i] > 0;
    }
    EXPECT_GT(marked, 0u);
  }
}
