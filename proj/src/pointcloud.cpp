#include "driveflow/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>

#include "driveflow/error.hpp"
#include "driveflow/rng.hpp"

namespace driveflow {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

PointCloud select(const PointCloud& cloud, const std::vector<std::size_t>& indices) {
  PointCloud out;
  out.points.reserve(indices.size());
  for (std::size_t i : indices) out.points.push_back(cloud.points[i]);
  if (cloud.has_intensity()) {
    out.intensity.reserve(indices.size());
    for (std::size_t i : indices) out.intensity.push_back(cloud.intensity[i]);
  }
  return out;
}

Eigen::Vector3d centroid(const PointCloud& cloud) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& p : cloud.points) c += p;
  return c / static_cast<double>(cloud.size());
}

}  // namespace

void PointCloud::validate() const {
  if (!intensity.empty() && intensity.size() != points.size()) {
    throw ContractError("point cloud has " + std::to_string(points.size()) +
                        " points but " + std::to_string(intensity.size()) +
                        " intensity values");
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].allFinite()) {
      throw ContractError("point " + std::to_string(i) + " has a non-finite coordinate");
    }
  }
}

void ProjectionConfig::validate() const {
  if (!(horizontal_fov_deg > 0.0 && horizontal_fov_deg <= 360.0)) {
    throw ConfigError("horizontal FOV must be in (0, 360] degrees");
  }
  if (!(vertical_fov_deg > 0.0 && vertical_fov_deg <= 180.0)) {
    throw ConfigError("vertical FOV must be in (0, 180] degrees");
  }
  if (height == 0 || width == 0) throw ConfigError("depth map dimensions must be positive");
  if (!(max_range > 0.0) || !std::isfinite(max_range)) {
    throw ConfigError("max range must be positive and finite");
  }
}

PointCloud random_downsample(const PointCloud& cloud, std::size_t n, std::uint64_t seed) {
  if (cloud.empty()) throw EmptyInputError("random_downsample: empty cloud");
  if (n == 0) throw ContractError("random_downsample: n must be at least 1");
  Rng rng(seed);
  std::vector<std::size_t> indices(cloud.size());
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  if (cloud.size() >= n) {
    // Partial Fisher-Yates; the chosen prefix is re-sorted to keep scan order.
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(cloud.size() - i));
      std::swap(indices[i], indices[j]);
    }
    indices.resize(n);
    std::sort(indices.begin(), indices.end());
  } else {
    while (indices.size() < n) indices.push_back(static_cast<std::size_t>(rng.below(cloud.size())));
  }
  return select(cloud, indices);
}

PointCloud farthest_point_downsample(const PointCloud& cloud, std::size_t n) {
  if (cloud.empty()) throw EmptyInputError("farthest_point_downsample: empty cloud");
  if (n == 0) throw ContractError("farthest_point_downsample: n must be at least 1");
  const std::size_t count = std::min(n, cloud.size());
  const Eigen::Vector3d c = centroid(cloud);

  std::size_t current = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double d = (cloud.points[i] - c).squaredNorm();
    if (d < best) {
      best = d;
      current = i;
    }
  }

  std::vector<double> nearest(cloud.size(), std::numeric_limits<double>::infinity());
  std::vector<std::size_t> chosen;
  chosen.reserve(count);
  while (true) {
    chosen.push_back(current);
    if (chosen.size() == count) break;
    std::size_t next = 0;
    double farthest = -1.0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      nearest[i] = std::min(nearest[i], (cloud.points[i] - cloud.points[current]).squaredNorm());
      if (nearest[i] > farthest) {
        farthest = nearest[i];
        next = i;
      }
    }
    current = next;
  }
  return select(cloud, chosen);
}

PointCloud normalize_cloud(const PointCloud& cloud) {
  if (cloud.empty()) throw EmptyInputError("normalize_cloud: empty cloud");
  const Eigen::Vector3d c = centroid(cloud);
  PointCloud out = cloud;
  double radius = 0.0;
  for (auto& p : out.points) {
    p -= c;
    radius = std::max(radius, p.norm());
  }
  if (radius > 0.0) {
    for (auto& p : out.points) p /= radius;
  }
  return out;
}

DepthMap pcm_project(const PointCloud& cloud, const ProjectionConfig& cfg) {
  cfg.validate();
  const auto rows = static_cast<Eigen::Index>(cfg.height);
  const auto cols = static_cast<Eigen::Index>(cfg.width);
  DepthMap map{DepthImage::Zero(rows, cols), ValidityMask::Constant(rows, cols, false)};
  const double half_h = 0.5 * cfg.horizontal_fov_deg * kDegToRad;
  const double half_v = 0.5 * cfg.vertical_fov_deg * kDegToRad;
  const double fov_h = cfg.horizontal_fov_deg * kDegToRad;
  const double fov_v = cfg.vertical_fov_deg * kDegToRad;

  for (const Eigen::Vector3d& p : cloud.points) {
    if (!p.allFinite()) continue;
    const double range = p.norm();
    if (range <= 0.0) continue;
    const double azimuth = std::atan2(p.y(), p.x());
    const double elevation = std::atan2(p.z(), std::hypot(p.x(), p.y()));
    if (std::abs(azimuth) > half_h || std::abs(elevation) > half_v) continue;
    const auto col = std::min<Eigen::Index>(
        static_cast<Eigen::Index>(std::floor((half_h - azimuth) / fov_h * static_cast<double>(cols))),
        cols - 1);
    const auto row = std::min<Eigen::Index>(
        static_cast<Eigen::Index>(std::floor((half_v - elevation) / fov_v * static_cast<double>(rows))),
        rows - 1);
    const double depth = std::min(range, cfg.max_range);
    if (!map.valid(row, col) || depth < map.depth(row, col)) {
      map.depth(row, col) = depth;
      map.valid(row, col) = true;
    }
  }
  return map;
}

Eigen::Vector2d pixel_center_angles(std::size_t row, std::size_t col,
                                    const ProjectionConfig& cfg) {
  const double fov_h = cfg.horizontal_fov_deg * kDegToRad;
  const double fov_v = cfg.vertical_fov_deg * kDegToRad;
  const double azimuth =
      0.5 * fov_h - (static_cast<double>(col) + 0.5) / static_cast<double>(cfg.width) * fov_h;
  const double elevation =
      0.5 * fov_v - (static_cast<double>(row) + 0.5) / static_cast<double>(cfg.height) * fov_v;
  return {azimuth, elevation};
}

Tensor depthmap_to_tensor(const DepthMap& map, const ProjectionConfig& cfg) {
  const std::size_t h = map.height(), w = map.width();
  Tensor out({2, h, w}, 0.0);
  auto data = out.mutable_data();
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const auto er = static_cast<Eigen::Index>(r), ec = static_cast<Eigen::Index>(c);
      if (!map.valid(er, ec)) continue;
      data[r * w + c] = map.depth(er, ec) / cfg.max_range;
      data[h * w + r * w + c] = 1.0;
    }
  }
  return out;
}

void write_depth_pgm(const DepthMap& map, const ProjectionConfig& cfg,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << map.width() << ' ' << map.height() << "\n65535\n";
  for (Eigen::Index r = 0; r < map.depth.rows(); ++r) {
    for (Eigen::Index c = 0; c < map.depth.cols(); ++c) {
      std::uint16_t v = 0;
      if (map.valid(r, c)) {
        const double scaled = std::clamp(map.depth(r, c) / cfg.max_range, 0.0, 1.0) * 65535.0;
        v = static_cast<std::uint16_t>(std::lround(scaled));
      }
      const char bytes[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xFF)};
      out.write(bytes, 2);
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Pgm16 read_pgm16(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  std::size_t width = 0, height = 0, maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (magic != "P5") throw ParseError(path.string() + ": not a binary PGM", 0);
  if (!in || width == 0 || height == 0 || maxval != 65535) {
    throw ParseError(path.string() + ": unsupported PGM header", 0);
  }
  in.get();
  const auto header = static_cast<std::size_t>(in.tellg());
  Pgm16 img(static_cast<Eigen::Index>(height), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < width * height; ++i) {
    unsigned char bytes[2];
    if (!in.read(reinterpret_cast<char*>(bytes), 2)) {
      throw TruncationError(path.string() + ": pixel data ends early", header + 2 * i);
    }
    img.data()[i] = static_cast<std::uint16_t>((bytes[0] << 8) | bytes[1]);
  }
  return img;
}

}  // namespace driveflow
