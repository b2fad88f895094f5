#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "souf/data/augment.hpp"
#include "souf/data/batching.hpp"
#include "souf/data/dataset.hpp"
#include "souf/data/export.hpp"

using namespace souf;
using namespace souf::data;

namespace {

ShiftConfig small_config(int shots = 1) {
  ShiftConfig c;
  c.num_classes = 4;
  c.shots = shots;
  c.n_unlabeled = 400;
  c.n_source = 40;
  c.shift_kind = ShiftKind::color_invert;
  c.seed = 7;
  return c;
}

double differing_fraction(const Image& a, const Image& b) {
  std::size_t diff = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) diff += a.pixels[i] != b.pixels[i];
  return double(diff) / double(a.pixels.size());
}

}  // namespace

TEST(Generator, CountsFollowConfig) {
  const auto s = generate_synthetic_shift(small_config());
  EXPECT_EQ(s.target_labeled.size(), 4U);
  EXPECT_EQ(s.target_unlabeled.size(), 400U);
  EXPECT_EQ(s.source.size(), 40U);
  EXPECT_EQ(s.num_classes, 4);
}

TEST(Generator, ShotsPerClass) {
  const auto s = generate_synthetic_shift(small_config(3));
  std::vector<int> per(4, 0);
  for (const auto& x : s.target_labeled) ++per[std::size_t(*x.label)];
  for (int n : per) EXPECT_EQ(n, 3);
}

TEST(Generator, SameSeedSamePixels) {
  const auto a = generate_synthetic_shift(small_config());
  const auto b = generate_synthetic_shift(small_config());
  ASSERT_EQ(a.target_unlabeled.size(), b.target_unlabeled.size());
  for (std::size_t i = 0; i < a.target_unlabeled.size(); ++i)
    EXPECT_EQ(a.target_unlabeled[i].image, b.target_unlabeled[i].image);
  for (std::size_t i = 0; i < a.source.size(); ++i) EXPECT_EQ(a.source[i].image, b.source[i].image);
}

TEST(Generator, SplitsAreDisjointAndWellFormed) {
  auto cfg = small_config();
  cfg.n_holdout = 20;
  const auto s = generate_synthetic_shift(cfg);
  std::set<std::int64_t> ids;
  std::size_t total = 0;
  for (const auto* pool : {&s.source, &s.target_labeled, &s.target_unlabeled, &s.target_holdout})
    for (const auto& x : *pool) {
      ids.insert(x.id);
      ++total;
      check_image(x.image, cfg);
    }
  EXPECT_EQ(ids.size(), total);
  for (const auto& x : s.target_unlabeled) EXPECT_FALSE(x.label.has_value());
  for (const auto& x : s.source) EXPECT_EQ(x.domain, Domain::source);
  for (const auto& x : s.target_labeled) EXPECT_EQ(x.domain, Domain::target);
}

TEST(Generator, EveryShiftKindRuns) {
  for (auto kind : {ShiftKind::rotation, ShiftKind::color_invert, ShiftKind::hue_shift,
                    ShiftKind::noise_texture}) {
    auto cfg = small_config();
    cfg.shift_kind = kind;
    const auto s = generate_synthetic_shift(cfg);
    for (const auto& x : s.target_unlabeled) check_image(x.image, cfg);
  }
}

TEST(Generator, ColorInvertIsPixelwiseComplement) {
  Image img(3, 32, 32);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = float(i % 97) / 96.0F;
  Image shifted = img;
  apply_shift(shifted, ShiftKind::color_invert, 1);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    EXPECT_FLOAT_EQ(shifted.pixels[i], 1.0F - img.pixels[i]);
}

TEST(Generator, InvalidConfigsAreRejected) {
  auto c = small_config();
  c.num_classes = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.shots = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.patch_size = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.n_unlabeled = 30;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(generate_synthetic_shift(c), ConfigError);
}

TEST(Generator, ConfigSectionParses) {
  const auto cfg = ConfigFile::parse(
      "[data]\nnum_classes=3\nimage_size=16\npatch_size=4\nshots=2\nn_unlabeled=60\n"
      "shift_kind=rotation\nseed=5\n");
  const auto s = ShiftConfig::from_config(cfg);
  EXPECT_EQ(s.num_classes, 3);
  EXPECT_EQ(s.shift_kind, ShiftKind::rotation);
  EXPECT_EQ(s.n_source, 300);
}

TEST(Augment, ZeroOpsIsIdentity) {
  const auto s = generate_synthetic_shift(small_config());
  std::mt19937_64 rng(1);
  const Image& img = s.source[0].image;
  EXPECT_EQ(strong_augment(img, rng, {0, 9}), img);
}

TEST(Augment, DeterministicForFixedRng) {
  const auto s = generate_synthetic_shift(small_config());
  std::mt19937_64 a(3), b(3);
  EXPECT_EQ(strong_augment(s.source[0].image, a), strong_augment(s.source[0].image, b));
}

TEST(Augment, TwoOpsAtNineChangeEnoughPixels) {
  const auto s = generate_synthetic_shift(small_config());
  std::mt19937_64 rng(5);
  for (std::size_t i = 0; i < 40; ++i) {
    const Image& img = s.source[i].image;
    EXPECT_GE(differing_fraction(strong_augment(img, rng, {2, 9}), img), 0.01) << "sample " << i;
  }
}

TEST(Augment, OutputStaysInRangeAndShape) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> u(0, 1);
  for (int t = 0; t < 100; ++t) {
    Image img(3, 16, 16);
    for (auto& v : img.pixels) v = u(rng);
    const Image out = strong_augment(img, rng, {3, 10});
    ASSERT_TRUE(out.same_shape(img));
    for (float v : out.pixels) {
      EXPECT_GE(v, 0.0F);
      EXPECT_LE(v, 1.0F);
    }
  }
}

TEST(Augment, EveryOpKeepsRange) {
  const auto s = generate_synthetic_shift(small_config());
  for (int op = 0; op < kNumAugmentOps; ++op)
    for (double level : {-1.0, -0.3, 0.0, 0.5, 1.0}) {
      const Image out = apply_augment_op(s.source[1].image, AugmentOp(op), level);
      for (float v : out.pixels) ASSERT_TRUE(v >= 0.0F && v <= 1.0F) << to_string(AugmentOp(op));
    }
}

TEST(Batching, DropLastBatchCount) {
  const auto s = generate_synthetic_shift(small_config());
  LoaderOptions o;
  o.batch_size = 64;
  EXPECT_EQ(EpochLoader(s, o, 1).size(), 6U);
}

TEST(Batching, EpochPartitionsTheUnlabeledPool) {
  const auto s = generate_synthetic_shift(small_config());
  LoaderOptions o;
  o.batch_size = 64;
  EpochLoader loader(s, o, 2);
  std::set<std::int64_t> seen;
  std::size_t count = 0;
  for (std::size_t b = 0; b < loader.size(); ++b)
    for (auto id : loader.unlabeled_ids(b)) {
      seen.insert(id);
      ++count;
    }
  EXPECT_EQ(seen.size(), count);
  EXPECT_EQ(count, 384U);
  std::set<std::int64_t> pool;
  for (const auto& x : s.target_unlabeled) pool.insert(x.id);
  for (auto id : seen) EXPECT_TRUE(pool.count(id));
}

TEST(Batching, DifferentEpochSeedsReorder) {
  const auto s = generate_synthetic_shift(small_config());
  LoaderOptions o;
  EXPECT_NE(EpochLoader(s, o, 1).unlabeled_ids(0), EpochLoader(s, o, 2).unlabeled_ids(0));
}

TEST(Batching, BatchesCarryIdsAndViews) {
  const auto s = generate_synthetic_shift(small_config());
  LoaderOptions o;
  o.batch_size = 8;
  EpochLoader loader(s, o, 3);
  const auto b = loader.batch(1);
  EXPECT_EQ(b.unlabeled.ids(), loader.unlabeled_ids(1));
  EXPECT_EQ(b.labeled.images.size(), std::size_t(o.labeled_batch_size));
  for (const auto& p : b.unlabeled.pairs) EXPECT_TRUE(p.weak.same_shape(p.strong));
  for (std::size_t k = 0; k < b.labeled.ids.size(); ++k) {
    const auto it = std::find_if(s.target_labeled.begin(), s.target_labeled.end(),
                                 [&](const Sample& x) { return x.id == b.labeled.ids[k]; });
    ASSERT_NE(it, s.target_labeled.end());
    EXPECT_EQ(*it->label, b.labeled.labels[k]);
  }
  // Rebuilding the same batch gives the same strong views.
  const auto again = loader.batch(1);
  for (std::size_t k = 0; k < b.unlabeled.pairs.size(); ++k)
    EXPECT_EQ(b.unlabeled.pairs[k].strong, again.unlabeled.pairs[k].strong);
}

TEST(Batching, TooSmallBatchIsRejected) {
  const auto s = generate_synthetic_shift(small_config());
  LoaderOptions o;
  o.batch_size = 1;
  EXPECT_THROW(EpochLoader(s, o, 1), ConfigError);
}

TEST(Export, LayoutAndManifest) {
  auto cfg = small_config();
  cfg.n_unlabeled = 40;
  const auto s = generate_synthetic_shift(cfg);
  const auto dir = std::filesystem::temp_directory_path() / "souf_export_test";
  std::filesystem::remove_all(dir);
  export_split(s, cfg, dir);
  std::ifstream f(dir / "manifest.json");
  const auto j = nlohmann::json::parse(f);
  const auto& first = s.target_unlabeled.front();
  const auto entry = j.at("samples").at(std::to_string(first.id));
  EXPECT_EQ(entry.at("split"), "target_unlabeled");
  EXPECT_TRUE(entry.at("label").is_null());
  EXPECT_TRUE(std::filesystem::exists(dir / "target_unlabeled" / "unlabeled" /
                                      (std::to_string(first.id) + ".png")));
  const auto& lab = s.target_labeled.front();
  EXPECT_TRUE(std::filesystem::exists(dir / "target_labeled" / std::to_string(*lab.label) /
                                      (std::to_string(lab.id) + ".png")));
  std::filesystem::remove_all(dir);
}
