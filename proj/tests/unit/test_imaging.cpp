#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <sstream>

#include "neuroedge/imaging.hpp"

using namespace neuroedge;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("neuroedge_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Image gray(std::size_t h, std::size_t w, double v) { return Image({h, w, 1}, v); }

}  // namespace

TEST(Grayscale, LuminanceWeights) {
  const Image white({1, 1, 3}, 1.0);
  EXPECT_DOUBLE_EQ(to_grayscale(white)[0], 1.0);
  const Image red({1, 1, 3}, std::vector<double>{1, 0, 0});
  EXPECT_DOUBLE_EQ(to_grayscale(red)[0], 0.299);
  for (double v : {0.0, 0.25, 0.7}) {
    EXPECT_NEAR(to_grayscale(Image({1, 1, 3}, v))[0], v, 1e-15);
  }
  EXPECT_THROW(to_grayscale(Image({2, 2, 2})), ShapeError);
}

TEST(Resize, ConstantStaysConstant) {
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{490, 640}, {7, 3}, {48, 48}, {100, 20}}) {
    const Image out = resize_bilinear(gray(h, w, 0.5), 48, 48);
    ASSERT_EQ(out.shape(), (Shape{48, 48, 1}));
    for (double v : out.data()) EXPECT_NEAR(v, 0.5, 1e-12);
  }
  EXPECT_THROW(resize_bilinear(gray(1, 5, 0.5), 48, 48), ShapeError);
}

TEST(Resize, NonSquareInputBecomes48x48) {
  Image img({490, 640, 3}, 0.2);
  EXPECT_EQ(preprocess(img).shape(), (Shape{48, 48, 1}));
}

TEST(Resize, HorizontalRampStaysLinear) {
  Image ramp({96, 96, 1});
  for (std::size_t y = 0; y < 96; ++y)
    for (std::size_t x = 0; x < 96; ++x) ramp.at(y, x, 0) = static_cast<double>(x) / 95.0;
  const Image out = resize_bilinear(ramp, 48, 48);
  // Output column x samples source column 2x + 0.5.
  for (std::size_t y = 0; y < 48; ++y)
    for (std::size_t x = 0; x < 48; ++x)
      EXPECT_NEAR(out.at(y, x, 0), (2.0 * x + 0.5) / 95.0, 1e-6);
}

TEST(Resize, UpDownRoundTrip) {
  Image img({24, 24, 1});
  for (std::size_t y = 0; y < 24; ++y)
    for (std::size_t x = 0; x < 24; ++x)
      img.at(y, x, 0) = 0.5 + 0.3 * std::sin(x * 0.25) * std::cos(y * 0.2);
  const Image back = resize_bilinear(resize_bilinear(img, 48, 48), 24, 24);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(back[i], img[i], 1e-2);
}

TEST(EdgeDetect, ConstantImageIsAllZero) {
  for (double v : edge_detect(gray(48, 48, 0.37)).data()) EXPECT_EQ(v, 0.0);
}

TEST(EdgeDetect, VerticalStepLightsTwoColumns) {
  Image img = gray(48, 48, 0.0);
  for (std::size_t y = 0; y < 48; ++y)
    for (std::size_t x = 24; x < 48; ++x) img.at(y, x, 0) = 1.0;
  const Image e = edge_detect(img);
  for (std::size_t y = 0; y < 48; ++y) {
    for (std::size_t x = 0; x < 48; ++x) {
      if (x == 23 || x == 24) {
        EXPECT_DOUBLE_EQ(e.at(y, x, 0), 1.0);
      } else {
        EXPECT_EQ(e.at(y, x, 0), 0.0) << y << "," << x;
      }
    }
  }
}

TEST(EdgeDetect, SmoothBlobBecomesSparser) {
  Image blob = gray(48, 48, 0.0);
  for (std::size_t y = 0; y < 48; ++y)
    for (std::size_t x = 0; x < 48; ++x) {
      const double d2 = (x - 23.5) * (x - 23.5) + (y - 23.5) * (y - 23.5);
      blob.at(y, x, 0) = 0.2 + 0.6 * std::exp(-d2 / 120.0);
    }
  EXPECT_GT(zero_fraction(edge_detect(blob)), zero_fraction(blob));
}

TEST(EdgeDetect, ThresholdIsConfigurable) {
  Image img = gray(48, 48, 0.0);
  for (std::size_t x = 0; x < 48; ++x) img.at(10, x, 0) = 1.0;
  img.at(40, 5, 0) = 0.05;  // weak feature
  const Image loose = edge_detect(img, 0.0);
  const Image strict = edge_detect(img, 0.5);
  EXPECT_GT(std::count_if(loose.data().begin(), loose.data().end(), [](double v) { return v > 0; }),
            std::count_if(strict.data().begin(), strict.data().end(), [](double v) { return v > 0; }));
}

TEST(Preprocess, IdempotentAndInRange) {
  const Dataset d = make_synthetic_dataset(3, 5);
  Image rgb({60, 80, 3});
  Xoshiro256 rng(1);
  for (double& v : rgb.data()) v = rng.uniform(-0.2, 1.2);
  std::vector<Image> inputs{rgb};
  for (const auto& s : d.samples) inputs.push_back(s.pixels);
  for (const Image& in : inputs) {
    const Image once = preprocess(in);
    EXPECT_EQ(preprocess(once), once);
    for (double v : once.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    for (double v : preprocess(in, {image_size, true, 0.1}).data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Synthetic, CountsAndDeterminism) {
  const Dataset d = make_synthetic_dataset(10, 3);
  ASSERT_EQ(d.size(), 70u);
  std::array<int, num_classes> per{};
  for (const auto& s : d.samples) {
    ++per[s.label];
    EXPECT_EQ(s.pixels.shape(), (Shape{48, 48, 1}));
  }
  for (int c : per) EXPECT_EQ(c, 10);
  const Dataset again = make_synthetic_dataset(10, 3);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d.samples[i].pixels, again.samples[i].pixels);
  EXPECT_NE(make_synthetic_dataset(1, 4).samples[0].pixels, d.samples[0].pixels);
}

TEST(Synthetic, EdgeDetectionReducesMeanNonzeroFraction) {
  const Dataset d = make_synthetic_dataset(20, 11);
  double before = 0.0, after = 0.0;
  for (const auto& s : d.samples) {
    before += 1.0 - zero_fraction(s.pixels);
    after += 1.0 - zero_fraction(edge_detect(s.pixels));
  }
  EXPECT_LT(after, before);
  EXPECT_LT(after / static_cast<double>(d.size()), 0.3);
}

TEST(Pgm, EncodeDecodeRoundTrip) {
  Image img({5, 7, 1});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i * 7 % 256) / 255.0;
  const Image back = decode_pgm(encode_pgm(img));
  ASSERT_EQ(back.shape(), img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(back[i], img[i], 1e-12);

  const std::string with_comment = "P5\n# comment\n2 1\n255\n";
  std::vector<std::uint8_t> bytes(with_comment.begin(), with_comment.end());
  bytes.push_back(0);
  bytes.push_back(255);
  const Image c = decode_pgm(bytes);
  EXPECT_EQ(c.shape(), (Shape{1, 2, 1}));
  EXPECT_EQ(c[1], 1.0);
  bytes.pop_back();
  EXPECT_THROW(decode_pgm(bytes), DataError);
}

TEST(Ingest, StratifiedSplitArithmeticAndDeterminism) {
  const auto root = scratch_dir("ingest");
  write_dataset(make_synthetic_dataset(10, 2), root);
  const auto a = ingest(root, {0.2, 7});
  EXPECT_EQ(a.train.size(), 56u);
  EXPECT_EQ(a.test.size(), 14u);
  EXPECT_TRUE(a.skipped.empty());
  const auto b = ingest(root, {0.2, 7});
  std::ostringstream ma, mb;
  write_split_manifest(ma, a.train, a.test);
  write_split_manifest(mb, b.train, b.test);
  EXPECT_EQ(ma.str(), mb.str());

  std::set<std::string> train_ids;
  for (const auto& s : a.train.samples) train_ids.insert(s.source_id);
  std::array<int, num_classes> test_per{};
  for (const auto& s : a.test.samples) {
    EXPECT_FALSE(train_ids.count(s.source_id)) << s.source_id;
    ++test_per[s.label];
  }
  for (int c : test_per) EXPECT_EQ(c, 2);

  const auto other = ingest(root, {0.2, 8});
  std::ostringstream mo;
  write_split_manifest(mo, other.train, other.test);
  EXPECT_NE(ma.str(), mo.str());
  fs::remove_all(root);
}

TEST(Ingest, ReportsSkippedFilesAndRejectsUnknownClasses) {
  const auto root = scratch_dir("ingest_bad");
  write_dataset(make_synthetic_dataset(2, 1), root);
  write_file(root / "fear" / "broken.pgm", {'P', '5', '\n', '4'});
  write_file(root / "fear" / "notes.txt", {'h', 'i'});
  const auto r = ingest(root, {0.5, 0});
  EXPECT_EQ(r.skipped.size(), 2u);
  EXPECT_EQ(r.train.size() + r.test.size(), 14u);

  fs::create_directories(root / "boredom");
  EXPECT_THROW(ingest(root, {0.5, 0}), DataError);
  EXPECT_THROW(ingest(root / "missing", {0.5, 0}), DataError);
  fs::remove_all(root);
}

TEST(Ingest, ClassOrderAndAliases) {
  EXPECT_EQ(class_names()[0], "anger");
  EXPECT_EQ(class_names()[6], "surprise");
  EXPECT_EQ(class_index("happy"), 4u);
  EXPECT_EQ(class_index("Happiness"), 4u);
  EXPECT_FALSE(class_index("neutral"));
}

TEST(Ingest, DecodesRgbThroughRegistry) {
  const auto root = scratch_dir("ingest_rgb");
  fs::create_directories(root / "anger");
  write_file(root / "anger" / "a.ppm", encode_ppm(Image({490, 640, 3}, 1.0)));
  const auto r = ingest(root, {0.0, 0});
  ASSERT_EQ(r.train.size(), 1u);
  EXPECT_EQ(r.train.samples[0].pixels.shape(), (Shape{48, 48, 1}));
  EXPECT_NEAR(r.train.samples[0].pixels[0], 1.0, 1e-12);

  DecoderRegistry only_pgm;
  only_pgm.add(".PGM", decode_pgm);
  EXPECT_EQ(ingest(root, {0.0, 0}, {}, only_pgm).skipped.size(), 1u);
  fs::remove_all(root);
}
