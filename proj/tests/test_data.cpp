#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "driveflow/data.hpp"
#include "driveflow/error.hpp"
#include "driveflow/rng.hpp"

namespace driveflow {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("driveflow_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

DatasetManifest stamps(const std::vector<double>& t) {
  DatasetManifest m;
  for (std::size_t i = 0; i < t.size(); ++i) {
    ManifestRecord r;
    r.image = "img" + std::to_string(i);
    r.timestamp_s = t[i];
    m.records.push_back(r);
  }
  return m;
}

// Independent recount of the 1 fps rule.
std::vector<std::size_t> resample_oracle(const std::vector<double>& t) {
  std::vector<std::size_t> kept;
  if (t.empty()) return kept;
  for (long long s = static_cast<long long>(std::ceil(t.front())); s <= static_cast<long long>(std::floor(t.back()));
       ++s) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < t.size(); ++i)
      if (std::abs(t[i] - static_cast<double>(s)) < std::abs(t[best] - static_cast<double>(s))) best = i;
    if (kept.empty() || kept.back() != best) kept.push_back(best);
  }
  return kept;
}

TEST(Resample, ThirtyFpsForTenSeconds) {
  std::vector<double> t(300);
  for (std::size_t i = 0; i < 300; ++i) t[i] = static_cast<double>(i) / 30.0;
  DatasetManifest m = stamps(t);
  m.fps = 30;
  DatasetManifest out = resample_to_1fps(m);
  EXPECT_EQ(out.records.size(), 10u);
  EXPECT_EQ(out.records.size(), resample_oracle(t).size());
  EXPECT_EQ(out.fps, 1.0);
  for (std::size_t k = 0; k < out.records.size(); ++k) EXPECT_EQ(out.records[k].timestamp_s, t[k * 30]);
}

TEST(Resample, AlreadyOneFpsIsUnchanged) {
  DatasetManifest m = stamps({0, 1, 2, 3, 4});
  DatasetManifest out = resample_to_1fps(m);
  ASSERT_EQ(out.records.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(out.records[i].image, m.records[i].image);
}

TEST(Resample, TieKeepsEarlier) {
  DatasetManifest out = resample_to_1fps(stamps({2.5, 3.5}));
  ASSERT_EQ(out.records.size(), 1u);
  EXPECT_EQ(out.records[0].timestamp_s, 2.5);
}

TEST(Resample, MatchesOracleOnJitteredStreams) {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> t;
    double now = rng.uniform(-2, 2);
    const std::size_t n = 1 + rng.below(200);
    for (std::size_t i = 0; i < n; ++i) t.push_back(now), now += rng.uniform(0.01, 1.7);
    DatasetManifest out = resample_to_1fps(stamps(t));
    const auto want = resample_oracle(t);
    ASSERT_EQ(out.records.size(), want.size());
    for (std::size_t k = 0; k < want.size(); ++k) EXPECT_EQ(out.records[k].timestamp_s, t[want[k]]);
  }
}

TEST(Resample, RegularStreamsKeepHalfSecondSpacing) {
  Rng rng(28);
  for (int trial = 0; trial < 30; ++trial) {
    const double fps = rng.uniform(1.0, 60.0);
    const double start = rng.uniform(-3, 3);
    std::vector<double> t;
    for (std::size_t i = 0; i < 1 + rng.below(400); ++i) t.push_back(start + static_cast<double>(i) / fps);
    DatasetManifest out = resample_to_1fps(stamps(t));
    for (std::size_t k = 1; k < out.records.size(); ++k)
      EXPECT_GE(out.records[k].timestamp_s - out.records[k - 1].timestamp_s, 0.5);
  }
}

TEST(Resample, UnsortedIsContractError) {
  EXPECT_THROW(resample_to_1fps(stamps({0, 2, 1})), ContractError);
  EXPECT_THROW(resample_to_1fps(stamps({1, 1})), ContractError);
}

TEST(SubsetFraction, KeepsOrderAndCount) {
  std::vector<double> t(50);
  std::iota(t.begin(), t.end(), 0.0);
  DatasetManifest out = subset_fraction(stamps(t), 0.1, 3);
  ASSERT_EQ(out.records.size(), 5u);
  for (std::size_t k = 1; k < 5; ++k) EXPECT_LT(out.records[k - 1].timestamp_s, out.records[k].timestamp_s);
  EXPECT_EQ(subset_fraction(stamps(t), 1.0, 3).records.size(), 50u);
  EXPECT_THROW(subset_fraction(stamps(t), 0.0, 3), ContractError);
  EXPECT_THROW(subset_fraction(stamps(t), 1.5, 3), ContractError);
}

TEST(AssignSplits, FractionsAndPreTagged) {
  std::vector<double> t(100);
  std::iota(t.begin(), t.end(), 0.0);
  DatasetManifest m = stamps(t);
  m.records[0].split = "test";
  DatasetManifest out = assign_splits(m, 0.8, 0.1, 0.1, 1);
  EXPECT_EQ(out.records[0].split, "test");
  EXPECT_EQ(out.count("train"), 79u);
  EXPECT_EQ(out.count("val"), 10u);
  EXPECT_EQ(out.count("test"), 11u);
  EXPECT_THROW(assign_splits(m, 0.5, 0.1, 0.1, 1), ContractError);
}

TEST(ResizeImage, ConstantStaysConstant) {
  Tensor img({3, 5, 7}, 0.3);
  Tensor out = resize_image(img, 11, 4);
  EXPECT_EQ(out.shape(), (Shape{3, 11, 4}));
  for (double v : out.data()) EXPECT_NEAR(v, 0.3, 1e-15);
}

TEST(ResizeImage, IdentityIsUnchanged) {
  Rng rng(22);
  Tensor img({3, 4, 6}, 0.0);
  for (double& v : img.mutable_data()) v = rng.uniform();
  Tensor out = resize_image(img, 4, 6);
  for (std::size_t i = 0; i < img.numel(); ++i) EXPECT_EQ(out[i], img[i]);
}

TEST(ResizeImage, CheckerboardToOnePixelIsMean) {
  Tensor img = Tensor::of({1, 2, 2}, {0.0, 1.0, 1.0, 0.0});
  EXPECT_DOUBLE_EQ(resize_image(img, 1, 1)[0], 0.5);
  Tensor img2 = Tensor::of({1, 2, 2}, {0.1, 0.2, 0.7, 0.4});
  EXPECT_DOUBLE_EQ(resize_image(img2, 1, 1)[0], (0.1 + 0.2 + 0.7 + 0.4) / 4.0);
}

TEST(ResizeImage, StaysInUnitRangeAndRejectsZero) {
  Rng rng(23);
  Tensor img({3, 9, 13}, 0.0);
  for (double& v : img.mutable_data()) v = rng.uniform();
  for (double v : resize_image(img, 31, 5).data()) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
  EXPECT_THROW(resize_image(img, 0, 5), ContractError);
}

PointCloud random_cloud(std::size_t n, Rng& rng, bool intensity) {
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    c.points.emplace_back(rng.uniform(-80, 80), rng.uniform(-80, 80), rng.uniform(-5, 5));
    if (intensity) c.intensity.push_back(rng.uniform());
  }
  return c;
}

TEST(CloudCodec, BinaryRoundTripAtFloatPrecision) {
  TempDir dir;
  Rng rng(24);
  PointCloud c = random_cloud(500, rng, false);
  save_cloud(c, dir.path() / "c.pcb");
  EXPECT_EQ(slurp(dir.path() / "c.pcb").substr(0, 4), "PCB1");
  PointCloud back = load_cloud(dir.path() / "c.pcb");
  ASSERT_EQ(back.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i)
    for (int k = 0; k < 3; ++k)
      EXPECT_EQ(back.points[i][k], static_cast<double>(static_cast<float>(c.points[i][k])));
}

TEST(CloudCodec, AsciiRoundTripWithIntensity) {
  TempDir dir;
  Rng rng(25);
  PointCloud c = random_cloud(200, rng, true);
  save_cloud(c, dir.path() / "c.xyz");
  PointCloud back = load_cloud(dir.path() / "c.xyz");
  ASSERT_EQ(back.size(), c.size());
  ASSERT_EQ(back.intensity.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (int k = 0; k < 3; ++k)
      EXPECT_NEAR(back.points[i][k], c.points[i][k], std::abs(c.points[i][k]) * 1e-7 + 1e-30);
    EXPECT_NEAR(back.intensity[i], c.intensity[i], 1e-7);
  }
}

TEST(CloudCodec, CommentsOnlyIsEmpty) {
  TempDir dir;
  write_text(dir.path() / "c.txt", "# header\n# another\n\n");
  EXPECT_TRUE(load_cloud(dir.path() / "c.txt").empty());
}

TEST(CloudCodec, BadTokenNamesLine) {
  TempDir dir;
  std::string text;
  for (int i = 1; i <= 6; ++i) text += "1 2 3\n";
  text += "1 abc 3\n";
  write_text(dir.path() / "c.txt", text);
  try {
    load_cloud(dir.path() / "c.txt");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 7u);
    EXPECT_NE(std::string(e.what()).find("line 7"), std::string::npos);
  }
}

TEST(CloudCodec, TruncatedBinary) {
  TempDir dir;
  Rng rng(26);
  save_cloud(random_cloud(10, rng, false), dir.path() / "c.pcb");
  std::string bytes = slurp(dir.path() / "c.pcb");
  write_text(dir.path() / "t.pcb", bytes.substr(0, bytes.size() - 5));
  EXPECT_THROW(load_cloud(dir.path() / "t.pcb"), TruncationError);
  write_text(dir.path() / "h.pcb", bytes.substr(0, 7));
  EXPECT_THROW(load_cloud(dir.path() / "h.pcb"), TruncationError);
  EXPECT_THROW(load_cloud(dir.path() / "missing.pcb"), IoError);
}

TEST(ImageCodec, WhitePixel) {
  TempDir dir;
  write_text(dir.path() / "w.ppm", std::string("P6\n1 1\n255\n") + "\xff\xff\xff");
  Tensor t = load_image_ppm(dir.path() / "w.ppm");
  EXPECT_EQ(t.shape(), (Shape{3, 1, 1}));
  for (double v : t.data()) EXPECT_EQ(v, 1.0);
}

TEST(ImageCodec, BlackThenWhite) {
  TempDir dir;
  write_text(dir.path() / "bw.ppm", std::string("P6\n2 1\n255\n") + std::string(3, '\0') + "\xff\xff\xff");
  Tensor t = load_image_ppm(dir.path() / "bw.ppm");
  ASSERT_EQ(t.shape(), (Shape{3, 1, 2}));
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(t[c * 2 + 0], 0.0);
    EXPECT_EQ(t[c * 2 + 1], 1.0);
  }
}

TEST(ImageCodec, PayloadShorterThanHeader) {
  TempDir dir;
  write_text(dir.path() / "s.ppm", std::string("P6\n4 4\n255\n") + std::string(20, 'x'));
  EXPECT_THROW(load_image_ppm(dir.path() / "s.ppm"), TruncationError);
  write_text(dir.path() / "m.ppm", std::string("P3\n1 1\n255\n1 1 1\n"));
  EXPECT_THROW(load_image_ppm(dir.path() / "m.ppm"), ParseError);
  write_text(dir.path() / "v.ppm", std::string("P6\n1 1\n65535\n") + std::string(6, 'x'));
  EXPECT_THROW(load_image_ppm(dir.path() / "v.ppm"), ParseError);
}

TEST(ImageCodec, RoundTripWithinHalfStep) {
  TempDir dir;
  Rng rng(27);
  Tensor img({3, 5, 9}, 0.0);
  for (double& v : img.mutable_data()) v = rng.uniform();
  save_image_ppm(img, dir.path() / "r.ppm");
  Tensor back = load_image_ppm(dir.path() / "r.ppm");
  for (std::size_t i = 0; i < img.numel(); ++i) EXPECT_LE(std::abs(back[i] - img[i]), 0.5 / 255.0 + 1e-12);
}

TEST(SyntheticScene, ZeroCurvatureGivesZeroAngle) {
  SceneParams p;
  p.curvature_min = p.curvature_max = 0.0;
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(generate_synthetic_scene(p, i, 42).behavior.angle_rad, 0.0);
}

TEST(SyntheticScene, SpeedClampEnds) {
  SceneParams far;
  far.obstacle_min = 50.0;
  far.obstacle_max = 80.0;
  SceneParams near = far;
  near.obstacle_min = 1.0;
  near.obstacle_max = 10.0;
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(generate_synthetic_scene(far, i, 1).behavior.speed_kmh, far.max_speed_kmh);
    EXPECT_EQ(generate_synthetic_scene(near, i, 1).behavior.speed_kmh, 0.0);
  }
}

TEST(SyntheticScene, AngleIsAtanOfWheelbaseTimesCurvature) {
  SceneParams p;
  p.curvature_min = p.curvature_max = 0.02;
  EXPECT_DOUBLE_EQ(generate_synthetic_scene(p, 0, 3).behavior.angle_rad, std::atan(2.7 * 0.02));
}

TEST(SyntheticScene, Deterministic) {
  SceneParams p;
  Sample a = generate_synthetic_scene(p, 7, 42);
  Sample b = generate_synthetic_scene(p, 7, 42);
  EXPECT_EQ(a.image.values(), b.image.values());
  EXPECT_EQ(a.cloud.points, b.cloud.points);
  EXPECT_EQ(a.behavior.angle_rad, b.behavior.angle_rad);
  EXPECT_EQ(a.behavior.speed_kmh, b.behavior.speed_kmh);
  Sample c = generate_synthetic_scene(p, 8, 42);
  EXPECT_NE(a.image.values(), c.image.values());
}

TEST(SyntheticScene, ImageDoesNotSeeTheObstacle) {
  // Same draws, different obstacle placement: the image must not change.
  SceneParams near;
  near.obstacle_min = 5.0;
  near.obstacle_max = 6.0;
  SceneParams far = near;
  far.obstacle_min = 55.0;
  far.obstacle_max = 56.0;
  Sample a = generate_synthetic_scene(near, 3, 9);
  Sample b = generate_synthetic_scene(far, 3, 9);
  EXPECT_NE(a.behavior.speed_kmh, b.behavior.speed_kmh);
  EXPECT_EQ(a.image.values(), b.image.values());
  EXPECT_NE(a.cloud.points, b.cloud.points);
}

TEST(SyntheticScene, ShapesAndRanges) {
  SceneParams p;
  Sample s = generate_synthetic_scene(p, 0, 1);
  EXPECT_EQ(s.image.shape(), (Shape{3, p.image_height, p.image_width}));
  EXPECT_EQ(s.cloud.size(), p.ground_points + p.obstacle_points);
  for (double v : s.image.data()) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
  SceneParams bad;
  bad.curvature_min = 1;
  bad.curvature_max = -1;
  EXPECT_THROW(generate_synthetic_scene(bad, 0, 1), ConfigError);
}

TEST(GenerateDataset, CountsAndReload) {
  TempDir dir;
  SceneParams p;
  p.train_count = 8;
  p.val_count = 2;
  p.test_count = 2;
  DatasetManifest m = generate_dataset(p, 42, dir.path() / "ds");
  ASSERT_EQ(m.records.size(), 12u);
  EXPECT_EQ(m.count("train"), 8u);
  EXPECT_EQ(m.count("val"), 2u);
  EXPECT_EQ(m.count("test"), 2u);

  DatasetManifest back = read_manifest(dir.path() / "ds" / "manifest.csv");
  ASSERT_EQ(back.records.size(), 12u);
  EXPECT_EQ(back.max_speed_kmh, p.max_speed_kmh);
  const auto samples = load_samples(back, "train");
  ASSERT_EQ(samples.size(), 8u);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample ref = generate_synthetic_scene(p, i, 42);
    EXPECT_EQ(samples[i].behavior.angle_rad, ref.behavior.angle_rad);
    EXPECT_EQ(samples[i].behavior.speed_kmh, ref.behavior.speed_kmh);
    for (std::size_t k = 0; k < ref.image.numel(); ++k)
      ASSERT_LE(std::abs(samples[i].image[k] - ref.image[k]), 0.5 / 255.0 + 1e-12);
    ASSERT_EQ(samples[i].cloud.size(), ref.cloud.size());
    for (std::size_t k = 0; k < ref.cloud.size(); ++k)
      ASSERT_EQ(samples[i].cloud.points[k], ref.cloud.points[k].cast<float>().cast<double>());
  }
}

TEST(GenerateDataset, RegenerationIsByteIdentical) {
  TempDir dir;
  SceneParams p;
  p.train_count = 3;
  p.val_count = 1;
  p.test_count = 1;
  generate_dataset(p, 5, dir.path() / "a");
  generate_dataset(p, 5, dir.path() / "b");
  for (const auto& entry : fs::recursive_directory_iterator(dir.path() / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), dir.path() / "a");
    EXPECT_EQ(slurp(entry.path()), slurp(dir.path() / "b" / rel)) << rel;
  }
}

TEST(Manifest, MalformedLinesArePositioned) {
  TempDir dir;
  write_text(dir.path() / "m.csv", std::string(kManifestHeader) + "\na.ppm,a.pcb,0.1,10,0,train\nb.ppm,b.pcb,x,10,1,train\n");
  try {
    read_manifest(dir.path() / "m.csv");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 3u);
  }
  write_text(dir.path() / "n.csv", std::string(kManifestHeader) + "\na.ppm,a.pcb,0.1,10\n");
  EXPECT_THROW(read_manifest(dir.path() / "n.csv"), ParseError);
  write_text(dir.path() / "e.csv", "");
  EXPECT_THROW(read_manifest(dir.path() / "e.csv"), ParseError);
}

}  // namespace
}  // namespace driveflow
