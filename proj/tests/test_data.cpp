#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "kandu/data.hpp"
#include "kandu/image_io.hpp"
#include "test_util.hpp"

using namespace kandu;
using kandu::test::TempDir;

namespace {

Image8 solid(std::size_t w, std::size_t h, std::size_t c, std::uint8_t v) {
  return {w, h, c, std::vector<std::uint8_t>(w * h * c, v)};
}

Sample random_sample(std::size_t w, std::size_t h, std::uint64_t seed) {
  Rng rng(seed);
  Sample s;
  s.width = w;
  s.height = h;
  s.image.resize(w * h * 3);
  s.mask.resize(w * h);
  for (auto& v : s.image) v = float(rng.uniform());
  for (auto& m : s.mask) m = rng.bernoulli(0.3) ? 1 : 0;
  return s;
}

bool binary(const Sample& s) {
  return std::all_of(s.mask.begin(), s.mask.end(), [](auto m) { return m <= 1; });
}

}  // namespace

TEST(Png, RoundTripGrayAndRgb) {
  TempDir dir("png");
  Image8 rgb{3, 2, 3, {}};
  for (std::size_t i = 0; i < 18; ++i) rgb.pixels.push_back(std::uint8_t(i * 13));
  write_png(dir / "a.png", rgb);
  const auto back = read_png(dir / "a.png");
  EXPECT_EQ(back.width, 3u);
  EXPECT_EQ(back.height, 2u);
  EXPECT_EQ(back.channels, 3u);
  EXPECT_EQ(back.pixels, rgb.pixels);
  write_png(dir / "b.png", rgb);
  EXPECT_EQ(test::read_file(dir / "a.png"), test::read_file(dir / "b.png"));
}

TEST(Png, MissingFileNamesPath) {
  try {
    read_png("/nonexistent/zzz.png");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("zzz.png"), std::string::npos);
  }
}

TEST(Png, CorruptFileRejected) {
  TempDir dir("corrupt");
  { std::ofstream(dir / "bad.png") << "not a png at all"; }
  EXPECT_THROW(read_png(dir / "bad.png"), std::runtime_error);
}

TEST(LoadSample, WhiteMaskBlackImage) {
  TempDir dir("load");
  write_png(dir / "img.png", solid(4, 3, 3, 0));
  write_png(dir / "msk.png", solid(4, 3, 1, 255));
  const auto s = load_sample(dir / "img.png", dir / "msk.png");
  EXPECT_EQ(s.width, 4u);
  EXPECT_EQ(s.height, 3u);
  for (float v : s.image) EXPECT_EQ(v, 0.0f);
  for (auto m : s.mask) EXPECT_EQ(m, 1);
}

TEST(LoadSample, ThresholdBoundary) {
  TempDir dir("thresh");
  write_png(dir / "img.png", solid(2, 1, 3, 255));
  write_png(dir / "msk.png", Image8{2, 1, 1, {127, 128}});
  const auto s = load_sample(dir / "img.png", dir / "msk.png");
  EXPECT_EQ(s.mask, (std::vector<std::uint8_t>{0, 1}));
  for (float v : s.image) EXPECT_EQ(v, 1.0f);
}

TEST(LoadSample, GrayImageReplicated) {
  TempDir dir("gray");
  write_png(dir / "img.png", Image8{1, 1, 1, {51}});
  write_png(dir / "msk.png", Image8{1, 1, 1, {0}});
  const auto s = load_sample(dir / "img.png", dir / "msk.png");
  for (float v : s.image) EXPECT_FLOAT_EQ(v, 0.2f);
}

TEST(LoadSample, SizeMismatchRejected) {
  TempDir dir("mismatch");
  write_png(dir / "img.png", solid(4, 4, 3, 10));
  write_png(dir / "msk.png", solid(4, 3, 1, 0));
  EXPECT_THROW(load_sample(dir / "img.png", dir / "msk.png"), std::runtime_error);
  EXPECT_THROW(load_sample(dir / "img.png", dir / "none.png"), std::runtime_error);
}

TEST(Resize, SameSizeUnchanged) {
  const auto s = random_sample(256, 256, 1);
  EXPECT_EQ(resize_to(s), s);
}

TEST(Resize, ConstantStaysConstant) {
  Sample s = random_sample(7, 5, 2);
  std::fill(s.image.begin(), s.image.end(), 0.375f);
  const auto r = resize_to(s, 13);
  EXPECT_EQ(r.width, 13u);
  for (float v : r.image) EXPECT_FLOAT_EQ(v, 0.375f);
  EXPECT_TRUE(binary(r));
}

TEST(Resize, BilinearColumnsMonotone) {
  Sample s;
  s.width = s.height = 2;
  s.image = {0, 0, 0, 1, 1, 1, 0, 0, 0, 1, 1, 1};
  s.mask = {0, 1, 0, 1};
  const auto r = resize_to(s, 4);
  // Half-pixel centers: source x = (x + 0.5) / 2 - 0.5 -> -0.25, 0.25, 0.75, 1.25, clamped.
  const float expected[4] = {0.0f, 0.25f, 0.75f, 1.0f};
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) EXPECT_FLOAT_EQ(r.pixel(y, x, 0), expected[x]);
  for (std::size_t y = 0; y < 4; ++y)
    EXPECT_EQ(r.mask[y * 4 + 0] + r.mask[y * 4 + 1] * 2 + r.mask[y * 4 + 2] * 4 + r.mask[y * 4 + 3] * 8,
              12);
}

TEST(Augment, IdentityPlanNoOp) {
  const auto s = random_sample(8, 8, 3);
  EXPECT_EQ(apply_augment(s, AugmentPlan{}), s);
}

TEST(Augment, DoubleFlipIsOriginal) {
  const auto s = random_sample(6, 4, 4);
  AugmentPlan h;
  h.hflip = true;
  EXPECT_NE(apply_augment(s, h), s);
  EXPECT_EQ(apply_augment(apply_augment(s, h), h), s);
  AugmentPlan v;
  v.vflip = true;
  EXPECT_EQ(apply_augment(apply_augment(s, v), v), s);
}

TEST(Augment, FourQuarterTurnsIsOriginal) {
  const auto s = random_sample(6, 4, 5);
  AugmentPlan r;
  r.rot90 = 1;
  auto t = s;
  for (int k = 0; k < 4; ++k) t = apply_augment(t, r);
  EXPECT_EQ(t, s);
}

TEST(Augment, RigidTransformsPreserveForeground) {
  const auto s = random_sample(8, 8, 6);
  Rng rng(7);
  for (int k = 0; k < 50; ++k) {
    auto plan = draw_augment(rng);
    plan.crop = false;
    const auto t = apply_augment(s, plan);
    EXPECT_EQ(t.foreground(), s.foreground());
  }
}

TEST(Augment, ImageAndMaskMoveTogether) {
  // Encode each pixel's mask label in its red channel; every draw must keep them paired.
  auto s = random_sample(16, 16, 8);
  for (std::size_t p = 0; p < 256; ++p) s.image[p * 3] = float(s.mask[p]);
  Rng rng(9);
  for (int k = 0; k < 50; ++k) {
    auto plan = draw_augment(rng);
    plan.crop = false;
    const auto t = apply_augment(s, plan);
    for (std::size_t p = 0; p < 256; ++p) EXPECT_EQ(t.image[p * 3], float(t.mask[p]));
  }
}

TEST(Augment, CropKeepsSizeAndBinaryMask) {
  const auto s = random_sample(32, 32, 10);
  Rng rng(11);
  for (int k = 0; k < 30; ++k) {
    const auto t = augment(s, rng);
    EXPECT_EQ(t.width, 32u);
    EXPECT_EQ(t.height, 32u);
    EXPECT_TRUE(binary(t));
  }
}

TEST(Augment, DrawsDeterministicAndVaried) {
  Rng a(12), b(12);
  std::set<int> kinds;
  for (int k = 0; k < 100; ++k) {
    const auto pa = draw_augment(a), pb = draw_augment(b);
    EXPECT_EQ(pa.hflip, pb.hflip);
    EXPECT_EQ(pa.rot90, pb.rot90);
    EXPECT_EQ(pa.crop_area, pb.crop_area);
    kinds.insert(int(pa.hflip) + 2 * int(pa.vflip) + 4 * int(pa.rot90 != 0) + 8 * int(pa.crop));
    if (pa.crop) {
      EXPECT_GE(pa.crop_area, 0.75);
      EXPECT_LE(pa.crop_area, 1.0);
    }
  }
  EXPECT_GT(kinds.size(), 8u);
}

TEST(Synth, DeterministicBinaryAndBounded) {
  const auto a = synth_generate(100, 32, 13);
  EXPECT_EQ(a, synth_generate(100, 32, 13));
  EXPECT_NE(a, synth_generate(100, 32, 14));
  for (const auto& s : a) {
    EXPECT_TRUE(binary(s));
    const double frac = double(s.foreground()) / double(s.mask.size());
    EXPECT_GE(frac, 0.02);
    EXPECT_LE(frac, 0.5);
    for (float v : s.image) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(Manifest, ReadSkipsCommentsAndResolvesRelative) {
  TempDir dir("manifest");
  write_png(dir / "i.png", solid(2, 2, 3, 0));
  write_png(dir / "m.png", solid(2, 2, 1, 0));
  {
    std::ofstream f(dir / "list.tsv");
    f << "# header\n\ni.png\tm.png\n";
  }
  const auto m = read_manifest(dir / "list.tsv", Split::val);
  EXPECT_EQ(m.split, Split::val);
  ASSERT_EQ(m.entries.size(), 1u);
  EXPECT_EQ(m.entries[0].image, dir / "i.png");
}

TEST(Manifest, MissingFileRejectedWithLine) {
  TempDir dir("manifest_bad");
  { std::ofstream(dir / "list.tsv") << "a.png\tb.png\n"; }
  try {
    read_manifest(dir / "list.tsv");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos) << e.what();
  }
}

TEST(Split, SizesFloorThenDistribute) {
  EXPECT_EQ(split_sizes(10, {0.8, 0.1, 0.1}), (std::vector<std::size_t>{8, 1, 1}));
  EXPECT_EQ(split_sizes(7, {1, 0, 0}), (std::vector<std::size_t>{7, 0, 0}));
  EXPECT_EQ(split_sizes(5, {0.5, 0.25, 0.25}), (std::vector<std::size_t>{3, 1, 1}));
  EXPECT_THROW(split_sizes(5, {0.5, 0.5, 0.5}), std::invalid_argument);
}

TEST(Split, PartitionAndDeterminism) {
  DatasetManifest m;
  for (int i = 0; i < 10; ++i) m.entries.push_back({std::to_string(i), std::to_string(i) + "m"});
  const auto parts = split(m, {0.8, 0.1, 0.1}, 3);
  ASSERT_EQ(parts.size(), 3u);
  EXPECT_EQ(parts[0].entries.size(), 8u);
  EXPECT_EQ(parts[1].split, Split::val);
  std::set<std::string> seen;
  for (const auto& p : parts)
    for (const auto& e : p.entries) EXPECT_TRUE(seen.insert(e.image.string()).second);
  EXPECT_EQ(seen.size(), 10u);
  const auto again = split(m, {0.8, 0.1, 0.1}, 3);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(again[k].entries, parts[k].entries);
  EXPECT_THROW(split(DatasetManifest{}, {}, 3), std::invalid_argument);
  const auto all = split(m, {1, 0, 0}, 3);
  EXPECT_EQ(all[0].entries.size(), 10u);
}
