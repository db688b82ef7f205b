#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include "asl/dataset.hpp"
#include "asl/image.hpp"
#include "asl/ops.hpp"
#include "test_util.hpp"

namespace asl {
namespace {

const std::filesystem::path kData = ASL_TEST_DATA_DIR;

Raster solid(std::size_t h, std::size_t w, std::uint8_t v) {
  return Raster{h, w, 3, std::vector<std::uint8_t>(h * w * 3, v)};
}

// Naive bilinear with half-pixel centers and edge clamping.
Tensor resize_oracle(const Tensor& img, std::size_t oh, std::size_t ow) {
  const long h = static_cast<long>(img.dim(0)), w = static_cast<long>(img.dim(1));
  const std::size_t c = img.dim(2);
  Tensor out({oh, ow, c});
  auto at = [&](long y, long x, std::size_t ch) {
    y = std::clamp(y, 0L, h - 1);
    x = std::clamp(x, 0L, w - 1);
    return static_cast<double>(img.at({static_cast<std::size_t>(y), static_cast<std::size_t>(x), ch}));
  };
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      const double sy = std::max(0.0, (i + 0.5) * h / oh - 0.5);
      const double sx = std::max(0.0, (j + 0.5) * w / ow - 0.5);
      const long y0 = static_cast<long>(std::floor(sy)), x0 = static_cast<long>(std::floor(sx));
      const double fy = sy - y0, fx = sx - x0;
      for (std::size_t ch = 0; ch < c; ++ch)
        out.at({i, j, ch}) = static_cast<float>(
            (1 - fy) * ((1 - fx) * at(y0, x0, ch) + fx * at(y0, x0 + 1, ch)) +
            fy * ((1 - fx) * at(y0 + 1, x0, ch) + fx * at(y0 + 1, x0 + 1, ch)));
    }
  return out;
}

TEST(Normalize, EndpointsAndMidpoint) {
  Raster r{1, 3, 1, {0, 255, 128}};
  Tensor t = normalize(r);
  EXPECT_EQ(t[0], 0.0f);
  EXPECT_EQ(t[1], 1.0f);
  EXPECT_NEAR(t[2], 0.50196, 1e-5);
}

TEST(Normalize, QuantizeRoundTripsAllValues) {
  Raster r{1, 256, 1, {}};
  for (int v = 0; v < 256; ++v) r.pixels.push_back(static_cast<std::uint8_t>(v));
  EXPECT_EQ(quantize(normalize(r)).pixels, r.pixels);
}

TEST(Resize, SameSizeIsIdentity) {
  Rng rng(1);
  Tensor img = uniform<float>(rng, 0.0f, 1.0f, {50, 50, 3});
  EXPECT_EQ(resize_bilinear(img, 50, 50), img);
}

TEST(Resize, ConstantStaysConstant) {
  Tensor out = resize_bilinear(Tensor({37, 81, 3}, 0.25f), 50, 50);
  for (float v : out.values()) EXPECT_NEAR(v, 0.25f, 1e-7);
  Tensor up = resize_bilinear(Tensor({3, 4, 1}, 0.75f), 50, 50);
  for (float v : up.values()) EXPECT_NEAR(v, 0.75f, 1e-7);
}

TEST(Resize, CheckerboardMatchesOracle) {
  Tensor board({200, 200, 3});
  for (std::size_t y = 0; y < 200; ++y)
    for (std::size_t x = 0; x < 200; ++x)
      for (std::size_t c = 0; c < 3; ++c) board.at({y, x, c}) = ((y / 3 + x / 3) % 2) ? 1.0f : 0.0f;
  EXPECT_LT(test::max_abs_diff(resize_bilinear(board, 50, 50), resize_oracle(board, 50, 50)), 1e-6);
  Rng rng(2);
  Tensor noise = uniform<float>(rng, 0.0f, 1.0f, {13, 29, 3});
  EXPECT_LT(test::max_abs_diff(resize_bilinear(noise, 50, 50), resize_oracle(noise, 50, 50)), 1e-6);
}

TEST(CenterCrop, TakesMiddleWindow) {
  Tensor img({4, 4, 1});
  for (std::size_t i = 0; i < 16; ++i) img[i] = static_cast<float>(i);
  EXPECT_EQ(center_crop(img, 2, 2), Tensor({2, 2, 1}, {5, 6, 9, 10}));
  EXPECT_THROW(center_crop(img, 5, 2), ShapeError);
}

TEST(Decode, PngIsExact) {
  Raster r = read_raster(kData / "gradient_8x6.png");
  ASSERT_EQ(r.height, 6u);
  ASSERT_EQ(r.width, 8u);
  ASSERT_EQ(r.channels, 3u);
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 8; ++x) {
      const auto* p = &r.pixels[(y * 8 + x) * 3];
      EXPECT_EQ(p[0], x * 30);
      EXPECT_EQ(p[1], y * 40);
      EXPECT_EQ(p[2], 128);
    }
}

TEST(Decode, JpegMatchesIndependentDecoder) {
  // gradient_8x6.jpg.rgb holds the same file decoded by another library.
  Raster r = read_raster(kData / "gradient_8x6.jpg");
  ASSERT_EQ(r.height, 6u);
  ASSERT_EQ(r.width, 8u);
  ASSERT_EQ(r.channels, 3u);
  std::ifstream in(kData / "gradient_8x6.jpg.rgb", std::ios::binary);
  std::vector<char> want((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ASSERT_EQ(want.size(), r.pixels.size());
  for (std::size_t i = 0; i < want.size(); ++i)
    EXPECT_NEAR(r.pixels[i], static_cast<unsigned char>(want[i]), 2) << i;
}

TEST(Decode, GrayIsReplicatedToRgb) {
  Tensor t = load_image(kData / "gray_4x4.png", LoadOptions{4, 4, false});
  ASSERT_EQ(t.shape(), (Shape{4, 4, 3}));
  for (float v : t.values()) EXPECT_NEAR(v, 200.0f / 255.0f, 1e-7);
}

TEST(Decode, Raw0RoundTrip) {
  test::TempDir dir("raw");
  Raster r{2, 3, 3, {}};
  for (int i = 0; i < 18; ++i) r.pixels.push_back(static_cast<std::uint8_t>(i * 14));
  write_raw0(r, dir / "x.raw");
  Raster back = read_raster(dir / "x.raw");
  EXPECT_EQ(back.pixels, r.pixels);
  EXPECT_EQ(back.height, 2u);
  EXPECT_EQ(back.width, 3u);
  auto bytes = encode_raw0(r);
  ASSERT_EQ(bytes.size(), 4u + 2 + 2 + 1 + 18);
  EXPECT_EQ(bytes[4], 2);
  EXPECT_EQ(bytes[5], 0);
}

TEST(Decode, GarbageIsIngestionErrorNamingPath) {
  test::TempDir dir("bad");
  std::ofstream(dir / "junk.png") << "definitely not an image";
  try {
    read_raster(dir / "junk.png");
    FAIL();
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("junk.png"), std::string::npos);
  }
  EXPECT_THROW(read_raster(dir / "missing.png"), IngestionError);
}

TEST(LoadImage, ResizesToNetworkInput) {
  Tensor t = load_image(kData / "gradient_8x6.png");
  EXPECT_EQ(t.shape(), (Shape{50, 50, 3}));
  for (float v : t.values()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(LoadDirectory, EnumeratesSortedClasses) {
  test::TempDir dir("tree");
  for (const char* cls : {"space", "B", "A"}) {
    std::filesystem::create_directories(dir / cls);
    write_png(solid(10, 10, 10), dir / cls / "2.png");
    write_png(solid(10, 10, 200), dir / cls / "1.png");
  }
  Dataset ds = load_directory(dir.path());
  EXPECT_EQ(ds.class_names, (std::vector<std::string>{"A", "B", "space"}));
  ASSERT_EQ(ds.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(ds.samples[i].label, i / 2);
    EXPECT_EQ(ds.samples[i].image.shape(), (Shape{50, 50, 3}));
    EXPECT_FALSE(ds.samples[i].origin.augmented());
  }
  EXPECT_NEAR(ds.samples[0].image[0], 200.0f / 255, 1e-6);  // 1.png sorts first
  EXPECT_NO_THROW(ds.validate());
}

TEST(LoadDirectory, EmptyClassIsIngestionErrorNamingIt) {
  test::TempDir dir("tree");
  std::filesystem::create_directories(dir / "A");
  std::filesystem::create_directories(dir / "Empty");
  write_png(solid(4, 4, 1), dir / "A" / "x.png");
  try {
    load_directory(dir.path());
    FAIL();
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("Empty"), std::string::npos);
  }
  EXPECT_THROW(load_directory(dir / "nope"), IngestionError);
}

Dataset per_class(std::size_t classes, std::size_t n) {
  Dataset ds;
  for (std::size_t c = 0; c < classes; ++c) ds.class_names.push_back("c" + std::to_string(c));
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < n; ++i)
      ds.samples.push_back({Tensor({1, 1, 3}), c, "c" + std::to_string(c) + "/" + std::to_string(i), {}});
  return ds;
}

std::map<std::pair<std::size_t, Split>, std::size_t> counts(const Dataset& ds, const Manifest& m) {
  std::map<std::pair<std::size_t, Split>, std::size_t> out;
  for (std::size_t i = 0; i < m.rows.size(); ++i) ++out[{ds.samples[i].label, m.rows[i].split}];
  return out;
}

TEST(Split, TenPerClass) {
  Dataset ds = per_class(3, 10);
  auto c = counts(ds, split_dataset(ds, {}, 1));
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ((c[{k, Split::kTrain}]), 6u);
    EXPECT_EQ((c[{k, Split::kVal}]), 2u);
    EXPECT_EQ((c[{k, Split::kTest}]), 2u);
  }
}

TEST(Split, ElevenPerClassRemainderToTrain) {
  Dataset ds = per_class(2, 11);
  auto c = counts(ds, split_dataset(ds, {}, 1));
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ((c[{k, Split::kTrain}]), 7u);
    EXPECT_EQ((c[{k, Split::kVal}]), 2u);
    EXPECT_EQ((c[{k, Split::kTest}]), 2u);
  }
}

TEST(Split, DeterministicPerSeed) {
  Dataset ds = per_class(3, 20);
  Manifest a = split_dataset(ds, {}, 7), b = split_dataset(ds, {}, 7), c = split_dataset(ds, {}, 8);
  bool differs = false;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].split, b.rows[i].split);
    differs = differs || a.rows[i].split != c.rows[i].split;
  }
  EXPECT_TRUE(differs);
  EXPECT_EQ(counts(ds, a), counts(ds, c));
}

TEST(Split, PartitionsEverySample) {
  Dataset ds = per_class(4, 17);
  Manifest m = split_dataset(ds, {}, 3);
  std::set<std::size_t> seen;
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest})
    for (std::size_t i : m.indices(s)) EXPECT_TRUE(seen.insert(i).second);
  EXPECT_EQ(seen.size(), ds.size());
}

TEST(Split, TinyClassIsSplitErrorNamingIt) {
  Dataset ds = per_class(2, 5);
  ds.class_names.push_back("tiny");
  ds.samples.push_back({Tensor({1, 1, 3}), 2, "t/0", {}});
  ds.samples.push_back({Tensor({1, 1, 3}), 2, "t/1", {}});
  try {
    split_dataset(ds, {}, 0);
    FAIL();
  } catch (const SplitError& e) {
    EXPECT_NE(std::string(e.what()).find("tiny"), std::string::npos);
  }
  EXPECT_THROW(split_dataset(per_class(2, 10), SplitRatios{0.5, 0.2, 0.2}, 0), ParameterError);
}

TEST(Manifest, RoundTrip) {
  test::TempDir dir("manifest");
  Dataset ds = per_class(3, 5);
  ds.samples[4].source_path = "with,comma \"quoted\".png";
  ds.samples[7].origin = Origin{AugmentOp::kRotateMinus60};
  Manifest m = split_dataset(ds, {}, 2);
  write_manifest(m, dir / "m.csv");
  Manifest back = read_manifest(dir / "m.csv");
  ASSERT_EQ(back.rows.size(), m.rows.size());
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    EXPECT_EQ(back.rows[i].path, m.rows[i].path);
    EXPECT_EQ(back.rows[i].label_name, m.rows[i].label_name);
    EXPECT_EQ(back.rows[i].label_id, m.rows[i].label_id);
    EXPECT_EQ(back.rows[i].split, m.rows[i].split);
    EXPECT_EQ(back.rows[i].origin, m.rows[i].origin);
  }
  EXPECT_EQ(manifest_class_names(back), ds.class_names);
  std::ifstream in(dir / "m.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "path,label_name,label_id,split,origin");
}

TEST(Origin, TextForms) {
  EXPECT_EQ(Origin{}.to_string(), "original");
  EXPECT_EQ(Origin{AugmentOp::kRotate30}.to_string(), "augmented:rot30");
  EXPECT_EQ(Origin::parse("augmented:noise"), Origin{AugmentOp::kGaussianNoise});
  EXPECT_THROW(Origin::parse("weird"), FormatError);
}

TEST(Batch, StacksImagesAndLabels) {
  Dataset ds = make_synthetic_dataset(3, 4, 1);
  std::vector<std::size_t> idx{5, 0, 11}, labels;
  Tensor b = make_batch(ds, idx, &labels);
  ASSERT_EQ(b.shape(), (Shape{3, 50, 50, 3}));
  EXPECT_EQ(labels, (std::vector<std::size_t>{1, 0, 2}));
  EXPECT_TRUE(std::equal(ds.samples[5].image.values().begin(), ds.samples[5].image.values().end(),
                         b.values().begin()));
  EXPECT_THROW(make_batch(ds, {}), InputError);
}

TEST(Synthetic, DeterministicAndInRange) {
  Dataset a = make_synthetic_dataset(8, 16, 3), b = make_synthetic_dataset(8, 16, 3);
  ASSERT_EQ(a.size(), 128u);
  EXPECT_EQ(a.class_names.front(), "class00");
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.samples[i].image, b.samples[i].image);
    for (float v : a.samples[i].image.values()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  }
}

TEST(Synthetic, RawTreeLoadsBack) {
  test::TempDir dir("synth");
  Dataset ds = make_synthetic_dataset(2, 3, 4);
  write_dataset_raw0(ds, dir.path());
  Dataset back = load_directory(dir.path());
  ASSERT_EQ(back.size(), 6u);
  EXPECT_EQ(back.class_names, ds.class_names);
  // RAW0 stores 8-bit pixels, so reloading quantizes.
  for (std::size_t i = 0; i < 6; ++i)
    EXPECT_LT(test::max_abs_diff(back.samples[i].image, ds.samples[i].image), 0.5 / 255 + 1e-6);
}

}  // namespace
}  // namespace asl
