#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "driveflow/pointcloud.hpp"
#include "driveflow/tensor.hpp"

namespace driveflow {

/// Regression target. Angle is positive for a left turn; speed is raw km/h and
/// gets normalized by a configured maximum at the model boundary.
struct DrivingBehavior {
  double angle_rad = 0.0;
  double speed_kmh = 0.0;
};

/// One synchronized camera/LiDAR/behavior record.
struct Sample {
  Tensor image;  // [3 x H x W], values in [0, 1]
  PointCloud cloud;
  DrivingBehavior behavior;
  double timestamp_s = 0.0;
};

struct ManifestRecord {
  std::string image;  // relative to the manifest directory
  std::string cloud;
  double angle_rad = 0.0;
  double speed_kmh = 0.0;
  double timestamp_s = 0.0;
  std::string split;  // "train", "val", "test" or empty
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  double fps = 1.0;
  double max_speed_kmh = 60.0;
  std::string units = "rad,km/h";
  std::filesystem::path base_dir;

  std::size_t count(const std::string& split) const;
};

/// Synthetic scene generator parameters. Lane curvature is visible only in the
/// camera image; obstacle distance only in the point cloud.
struct SceneParams {
  double curvature_min = -0.03;  // 1/m
  double curvature_max = 0.03;
  double obstacle_min = 5.0;  // sampling range of obstacle distance, m
  double obstacle_max = 60.0;
  double speed_distance_min = 10.0;  // distance at which the target speed hits 0
  double speed_distance_max = 50.0;  // ... and reaches max_speed_kmh
  double max_speed_kmh = 60.0;
  double wheelbase = 2.7;
  double pixel_noise = 0.05;
  double point_noise = 0.02;
  std::size_t image_height = 32;
  std::size_t image_width = 64;
  std::size_t ground_points = 256;
  std::size_t obstacle_points = 64;
  std::size_t train_count = 64;
  std::size_t val_count = 16;
  std::size_t test_count = 16;
  double fps = 1.0;

  void validate() const;
  std::size_t total_count() const { return train_count + val_count + test_count; }
};

/// Keeps, for each whole second between the first and last timestamp, the
/// record nearest to it (earlier record on ties). Duplicates collapse.
DatasetManifest resample_to_1fps(const DatasetManifest& manifest);

/// Seeded random subset of round(fraction * n) records, original order kept.
DatasetManifest subset_fraction(const DatasetManifest& manifest, double fraction,
                                std::uint64_t seed);

/// Tags records with an empty split using a seeded shuffle and the given
/// train/val/test fractions (which must sum to 1).
DatasetManifest assign_splits(const DatasetManifest& manifest, double train, double val,
                              double test, std::uint64_t seed);

/// Bilinear resampling of a [C x H x W] image with half-pixel centers.
Tensor resize_image(const Tensor& image, std::size_t height, std::size_t width);

/// Point-cloud codecs. Files starting with the `PCB1` magic are binary
/// (little-endian u64 count, float32 xyz triples); anything else is parsed as
/// ASCII `x y z [intensity]` lines with `#` comments. `save_cloud` writes
/// binary for a `.pcb` extension and ASCII otherwise. Both keep float32
/// precision.
PointCloud load_cloud(const std::filesystem::path& path);
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path);

/// Binary P6 PPM with maxval 255, mapped to [0, 1] channel-major.
Tensor load_image_ppm(const std::filesystem::path& path);
void save_image_ppm(const Tensor& image, const std::filesystem::path& path);

Sample generate_synthetic_scene(const SceneParams& params, std::size_t index,
                                std::uint64_t seed);

/// Writes images/, clouds/, manifest.csv and manifest.meta under `out_dir`.
DatasetManifest generate_dataset(const SceneParams& params, std::uint64_t seed,
                                 const std::filesystem::path& out_dir);

inline constexpr const char* kManifestHeader = "image,cloud,angle_rad,speed_kmh,timestamp_s,split";

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Loads every record of `split` (all records when `split` is empty).
std::vector<Sample> load_samples(const DatasetManifest& manifest, const std::string& split);

}  // namespace driveflow
