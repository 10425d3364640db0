#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "driveflow/tensor.hpp"

namespace driveflow {

/// LiDAR sweep in the sensor frame: x forward, y left, z up, meters.
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  /// Either empty or one value in [0, 1] per point.
  std::vector<double> intensity;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_intensity() const { return !intensity.empty(); }
  /// Throws ContractError if a coordinate is non-finite or the intensity
  /// list does not line up with the points.
  void validate() const;
};

using DepthImage = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ValidityMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Range image. Invalid pixels hold depth 0; valid ones hold a positive range.
struct DepthMap {
  DepthImage depth;
  ValidityMask valid;

  std::size_t height() const { return static_cast<std::size_t>(depth.rows()); }
  std::size_t width() const { return static_cast<std::size_t>(depth.cols()); }
  std::size_t valid_count() const { return static_cast<std::size_t>(valid.count()); }
};

/// Spherical projection parameters. Both fields of view are centered on the
/// x axis.
struct ProjectionConfig {
  double horizontal_fov_deg = 90.0;
  double vertical_fov_deg = 26.8;
  std::size_t height = 64;
  std::size_t width = 512;
  double max_range = 120.0;

  void validate() const;
};

/// Exactly `n` points. Larger clouds are subsampled without replacement
/// (original order kept); smaller ones are kept whole and padded with seeded
/// draws with replacement.
PointCloud random_downsample(const PointCloud& cloud, std::size_t n, std::uint64_t seed);

/// Greedy max-min subset of min(n, |cloud|) points, seeded with the point
/// nearest the centroid. Ties resolve to the lowest index.
PointCloud farthest_point_downsample(const PointCloud& cloud, std::size_t n);

/// Centroid to the origin, farthest point to distance 1. A cloud with no
/// spread is only translated.
PointCloud normalize_cloud(const PointCloud& cloud);

/// Range-image projection. Row 0 is the top of the vertical FOV and column 0
/// its left edge (positive azimuth). Each pixel keeps the nearest return;
/// ranges are clipped to `max_range`, out-of-FOV points are dropped.
DepthMap pcm_project(const PointCloud& cloud, const ProjectionConfig& cfg);

/// [2 x H x W]: channel 0 is depth / max_range, channel 1 the validity mask.
Tensor depthmap_to_tensor(const DepthMap& map, const ProjectionConfig& cfg);

/// Angles (radians) of the center of pixel (row, col).
Eigen::Vector2d pixel_center_angles(std::size_t row, std::size_t col,
                                    const ProjectionConfig& cfg);

/// Binary 16-bit PGM (P5, big-endian samples), depth scaled so that
/// max_range maps to 65535. Invalid pixels are 0.
void write_depth_pgm(const DepthMap& map, const ProjectionConfig& cfg,
                     const std::filesystem::path& path);

using Pgm16 = Eigen::Matrix<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
Pgm16 read_pgm16(const std::filesystem::path& path);

}  // namespace driveflow
