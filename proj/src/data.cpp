#include "driveflow/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <sstream>

#include "driveflow/error.hpp"
#include "driveflow/rng.hpp"
#include "text_util.hpp"

namespace driveflow {

namespace {

namespace fs = std::filesystem;

constexpr char kCloudMagic[4] = {'P', 'C', 'B', '1'};

void write_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

void write_f32_le(std::ostream& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  unsigned char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

PointCloud parse_binary_cloud(const std::string& bytes, const fs::path& path) {
  if (bytes.size() < 12) {
    throw TruncationError(path.string() + ": binary cloud header truncated at byte " +
                              std::to_string(bytes.size()),
                          bytes.size());
  }
  std::uint64_t count = 0;
  for (int i = 0; i < 8; ++i) {
    count |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[4 + i])) << (8 * i);
  }
  const std::size_t need = 12 + count * 12;
  if (count > (bytes.size() / 12) || bytes.size() < need) {
    throw TruncationError(path.string() + ": binary cloud announces " + std::to_string(count) +
                              " points but data ends at byte " + std::to_string(bytes.size()),
                          bytes.size());
  }
  PointCloud cloud;
  cloud.points.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    float xyz[3];
    for (int k = 0; k < 3; ++k) {
      std::uint32_t bits = 0;
      const std::size_t at = 12 + i * 12 + static_cast<std::size_t>(k) * 4;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + b])) << (8 * b);
      }
      xyz[k] = std::bit_cast<float>(bits);
    }
    cloud.points.emplace_back(xyz[0], xyz[1], xyz[2]);
  }
  return cloud;
}

PointCloud parse_ascii_cloud(const std::string& text, const fs::path& path) {
  PointCloud cloud;
  std::size_t line_no = 0;
  int columns = 0;
  for (std::string_view line : text::split(text, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tokens = text::split_whitespace(line);
    if (tokens.empty()) continue;
    if (tokens.size() != 3 && tokens.size() != 4) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": expected 3 or 4 values, got " +
                           std::to_string(tokens.size()),
                       line_no);
    }
    if (columns == 0) columns = static_cast<int>(tokens.size());
    if (static_cast<int>(tokens.size()) != columns) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                           ": intensity column present on some lines only",
                       line_no);
    }
    double v[4] = {0, 0, 0, 0};
    for (std::size_t k = 0; k < tokens.size(); ++k) {
      const auto parsed = text::parse_double(tokens[k]);
      if (!parsed || !std::isfinite(*parsed)) {
        throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                             ": invalid number '" + std::string(tokens[k]) + "'",
                         line_no);
      }
      v[k] = *parsed;
    }
    cloud.points.emplace_back(v[0], v[1], v[2]);
    if (columns == 4) cloud.intensity.push_back(v[3]);
  }
  return cloud;
}

std::size_t skip_ppm_space(const std::string& bytes, std::size_t at) {
  while (at < bytes.size()) {
    if (bytes[at] == '#') {
      while (at < bytes.size() && bytes[at] != '\n') ++at;
    } else if (std::isspace(static_cast<unsigned char>(bytes[at]))) {
      ++at;
    } else {
      break;
    }
  }
  return at;
}

std::size_t read_ppm_int(const std::string& bytes, std::size_t& at, const fs::path& path) {
  at = skip_ppm_space(bytes, at);
  const std::size_t start = at;
  while (at < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[at]))) ++at;
  if (at == start) {
    if (at >= bytes.size()) throw TruncationError(path.string() + ": PPM header truncated", at);
    throw ParseError(path.string() + ": malformed PPM header at byte " + std::to_string(at), at);
  }
  return static_cast<std::size_t>(std::stoull(bytes.substr(start, at - start)));
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

std::size_t DatasetManifest::count(const std::string& split) const {
  return static_cast<std::size_t>(std::count_if(
      records.begin(), records.end(), [&](const ManifestRecord& r) { return r.split == split; }));
}

void SceneParams::validate() const {
  auto finite_range = [](double lo, double hi, const char* what) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
      throw ConfigError(std::string(what) + " range must be finite and non-empty");
    }
  };
  finite_range(curvature_min, curvature_max, "curvature");
  finite_range(obstacle_min, obstacle_max, "obstacle distance");
  if (obstacle_min <= 0.0) throw ConfigError("obstacle distance must be positive");
  if (!(speed_distance_max > speed_distance_min)) {
    throw ConfigError("speed_distance_max must exceed speed_distance_min");
  }
  if (!(max_speed_kmh > 0.0)) throw ConfigError("max_speed_kmh must be positive");
  if (!(wheelbase > 0.0)) throw ConfigError("wheelbase must be positive");
  if (pixel_noise < 0.0 || point_noise < 0.0) throw ConfigError("noise levels must be non-negative");
  if (image_height < 8 || image_width < 8) throw ConfigError("synthetic image must be at least 8x8");
  if (ground_points + obstacle_points == 0) throw ConfigError("scene needs at least one point");
  if (!(fps > 0.0)) throw ConfigError("fps must be positive");
}

DatasetManifest resample_to_1fps(const DatasetManifest& manifest) {
  const auto& recs = manifest.records;
  for (std::size_t i = 1; i < recs.size(); ++i) {
    if (!(recs[i].timestamp_s > recs[i - 1].timestamp_s)) {
      throw ContractError("resample_to_1fps: timestamps not strictly increasing at record " +
                          std::to_string(i));
    }
  }
  DatasetManifest out = manifest;
  out.records.clear();
  out.fps = 1.0;
  if (recs.empty()) return out;

  const auto first = static_cast<long long>(std::ceil(recs.front().timestamp_s));
  const auto last = static_cast<long long>(std::floor(recs.back().timestamp_s));
  std::size_t cursor = 0;
  std::size_t last_kept = recs.size();
  for (long long second = first; second <= last; ++second) {
    const auto s = static_cast<double>(second);
    // Advance while the next record is strictly closer; ties keep the earlier.
    while (cursor + 1 < recs.size() &&
           std::abs(recs[cursor + 1].timestamp_s - s) < std::abs(recs[cursor].timestamp_s - s)) {
      ++cursor;
    }
    if (cursor != last_kept) {
      out.records.push_back(recs[cursor]);
      last_kept = cursor;
    }
  }
  return out;
}

DatasetManifest subset_fraction(const DatasetManifest& manifest, double fraction,
                                std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ContractError("subset fraction must be in (0, 1]");
  }
  const std::size_t n = manifest.records.size();
  const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < std::min(keep, n); ++i) {
    std::swap(order[i], order[i + static_cast<std::size_t>(rng.below(n - i))]);
  }
  order.resize(std::min(keep, n));
  std::sort(order.begin(), order.end());
  DatasetManifest out = manifest;
  out.records.clear();
  for (std::size_t i : order) out.records.push_back(manifest.records[i]);
  return out;
}

DatasetManifest assign_splits(const DatasetManifest& manifest, double train, double val,
                              double test, std::uint64_t seed) {
  if (train < 0 || val < 0 || test < 0 || std::abs(train + val + test - 1.0) > 1e-9) {
    throw ContractError("split fractions must be non-negative and sum to 1");
  }
  DatasetManifest out = manifest;
  std::vector<std::size_t> untagged;
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    if (out.records[i].split.empty()) untagged.push_back(i);
  }
  Rng rng(seed);
  for (std::size_t i = untagged.size(); i > 1; --i) {
    std::swap(untagged[i - 1], untagged[static_cast<std::size_t>(rng.below(i))]);
  }
  const auto n = static_cast<double>(untagged.size());
  const auto n_train = static_cast<std::size_t>(std::llround(train * n));
  const auto n_val = std::min(untagged.size() - std::min(n_train, untagged.size()),
                              static_cast<std::size_t>(std::llround(val * n)));
  for (std::size_t k = 0; k < untagged.size(); ++k) {
    auto& split = out.records[untagged[k]].split;
    split = k < n_train ? "train" : (k < n_train + n_val ? "val" : "test");
  }
  return out;
}

Tensor resize_image(const Tensor& image, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ContractError("resize_image: target dims must be positive");
  if (image.rank() != 3) {
    throw DimensionError("resize_image: expected [C x H x W], got " + shape_string(image.shape()));
  }
  const std::size_t channels = image.dim(0), src_h = image.dim(1), src_w = image.dim(2);
  if (src_h == height && src_w == width) return image.clone();

  auto axis = [](std::size_t dst, std::size_t src, std::vector<std::size_t>& lo,
                 std::vector<std::size_t>& hi, std::vector<double>& frac) {
    lo.resize(dst);
    hi.resize(dst);
    frac.resize(dst);
    const double ratio = static_cast<double>(src) / static_cast<double>(dst);
    for (std::size_t i = 0; i < dst; ++i) {
      const double x = std::clamp((static_cast<double>(i) + 0.5) * ratio - 0.5, 0.0,
                                  static_cast<double>(src - 1));
      lo[i] = static_cast<std::size_t>(std::floor(x));
      hi[i] = std::min(lo[i] + 1, src - 1);
      frac[i] = x - static_cast<double>(lo[i]);
    }
  };
  std::vector<std::size_t> y0, y1, x0, x1;
  std::vector<double> fy, fx;
  axis(height, src_h, y0, y1, fy);
  axis(width, src_w, x0, x1, fx);

  Tensor out({channels, height, width}, 0.0);
  const double* in = image.data().data();
  double* o = out.mutable_data().data();
  for (std::size_t c = 0; c < channels; ++c) {
    const double* plane = in + c * src_h * src_w;
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double top = plane[y0[y] * src_w + x0[x]] * (1.0 - fx[x]) + plane[y0[y] * src_w + x1[x]] * fx[x];
        const double bottom = plane[y1[y] * src_w + x0[x]] * (1.0 - fx[x]) + plane[y1[y] * src_w + x1[x]] * fx[x];
        o[(c * height + y) * width + x] = clamp01(top * (1.0 - fy[y]) + bottom * fy[y]);
      }
    }
  }
  return out;
}

PointCloud load_cloud(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kCloudMagic, 4) == 0) {
    return parse_binary_cloud(bytes, path);
  }
  return parse_ascii_cloud(bytes, path);
}

void save_cloud(const PointCloud& cloud, const fs::path& path) {
  cloud.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  if (path.extension() == ".pcb") {
    out.write(kCloudMagic, 4);
    write_u64_le(out, cloud.size());
    for (const auto& p : cloud.points) {
      for (int k = 0; k < 3; ++k) write_f32_le(out, static_cast<float>(p[k]));
    }
  } else {
    out << "# x y z" << (cloud.has_intensity() ? " intensity" : "") << '\n';
    char buf[128];
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto& p = cloud.points[i];
      int len = std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g", static_cast<double>(static_cast<float>(p.x())),
                              static_cast<double>(static_cast<float>(p.y())),
                              static_cast<double>(static_cast<float>(p.z())));
      out.write(buf, len);
      if (cloud.has_intensity()) {
        len = std::snprintf(buf, sizeof buf, " %.9g",
                            static_cast<double>(static_cast<float>(cloud.intensity[i])));
        out.write(buf, len);
      }
      out << '\n';
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor load_image_ppm(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw ParseError(path.string() + ": not a binary PPM (expected magic P6)", 0);
  }
  std::size_t at = 2;
  const std::size_t width = read_ppm_int(bytes, at, path);
  const std::size_t height = read_ppm_int(bytes, at, path);
  const std::size_t maxval = read_ppm_int(bytes, at, path);
  if (width == 0 || height == 0) throw ParseError(path.string() + ": PPM has a zero dimension", at);
  if (maxval != 255) {
    throw ParseError(path.string() + ": PPM maxval " + std::to_string(maxval) + " unsupported (need 255)", at);
  }
  if (at >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[at]))) {
    throw TruncationError(path.string() + ": PPM header not terminated", at);
  }
  ++at;
  const std::size_t payload = width * height * 3;
  if (bytes.size() - at < payload) {
    throw TruncationError(path.string() + ": PPM header announces " + std::to_string(width) + "x" +
                              std::to_string(height) + " but only " +
                              std::to_string(bytes.size() - at) + " of " +
                              std::to_string(payload) + " payload bytes are present",
                          bytes.size());
  }
  Tensor image({3, height, width}, 0.0);
  double* o = image.mutable_data().data();
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const auto v = static_cast<unsigned char>(bytes[at + (y * width + x) * 3 + c]);
        o[(c * height + y) * width + x] = static_cast<double>(v) / 255.0;
      }
    }
  }
  return image;
}

void save_image_ppm(const Tensor& image, const fs::path& path) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("save_image_ppm: expected [3 x H x W], got " + shape_string(image.shape()));
  }
  const std::size_t height = image.dim(1), width = image.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P6\n" << width << ' ' << height << "\n255\n";
  std::string payload(width * height * 3, '\0');
  const double* in = image.data().data();
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = clamp01(in[(c * height + y) * width + x]);
        payload[(y * width + x) * 3 + c] = static_cast<char>(std::lround(v * 255.0));
      }
    }
  }
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Sample generate_synthetic_scene(const SceneParams& params, std::size_t index,
                                std::uint64_t seed) {
  params.validate();
  Rng rng = Rng::derive(seed, index);
  const double curvature = rng.uniform(params.curvature_min, params.curvature_max);
  const double distance = rng.uniform(params.obstacle_min, params.obstacle_max);

  Sample sample;
  sample.timestamp_s = static_cast<double>(index) / params.fps;
  sample.behavior.angle_rad = std::atan(params.wheelbase * curvature);
  const double ramp = (distance - params.speed_distance_min) /
                      (params.speed_distance_max - params.speed_distance_min);
  sample.behavior.speed_kmh = params.max_speed_kmh * std::clamp(ramp, 0.0, 1.0);

  // Camera: pinhole with 90 degree horizontal FOV, 1.5 m above a flat road.
  // Only the two lane boundaries are drawn; the obstacle is never rendered.
  const std::size_t h = params.image_height, w = params.image_width;
  const double focal = 0.5 * static_cast<double>(w);
  const double horizon = 0.3 * static_cast<double>(h);
  constexpr double kCameraHeight = 1.5;
  constexpr double kLaneHalfWidth = 1.8;
  constexpr double kGroundLevel = 0.2;
  const double tint[3] = {1.0, 1.0, 0.6};

  Eigen::ArrayXXd lane = Eigen::ArrayXXd::Zero(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(w));
  for (std::size_t row = 0; row < h; ++row) {
    const double below = static_cast<double>(row) + 0.5 - horizon;
    if (below <= 0.0) continue;
    const double ahead = kCameraHeight * focal / below;
    const double center = 0.5 * curvature * ahead * ahead;
    for (double side : {-1.0, 1.0}) {
      const double lateral = center + side * kLaneHalfWidth;
      const double col = 0.5 * static_cast<double>(w) - focal * lateral / ahead - 0.5;
      const double base = std::floor(col);
      const double frac = col - base;
      // Mark is split over two columns.
      for (int k = 0; k < 2; ++k) {
        const double c = base + k;
        if (c < 0.0 || c >= static_cast<double>(w)) continue;
        lane(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) += k == 0 ? 1.0 - frac : frac;
      }
    }
  }
  sample.image = Tensor({3, h, w}, 0.0);
  double* px = sample.image.mutable_data().data();
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t row = 0; row < h; ++row) {
      for (std::size_t col = 0; col < w; ++col) {
        const double sky = static_cast<double>(row) < horizon ? 0.5 : kGroundLevel;
        const double mark = std::min(1.0, lane(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)));
        const double v = sky + mark * (tint[c] - sky) + rng.normal(0.0, params.pixel_noise);
        px[(c * h + row) * w + col] = clamp01(v);
      }
    }
  }

  // LiDAR 1.7 m above the road: scattered ground returns plus the front face of
  // an obstacle straddling the lane center at the drawn distance.
  constexpr double kSensorHeight = 1.7;
  constexpr double kObstacleHeight = 1.5;
  constexpr double kObstacleHalfWidth = 0.9;
  auto& pts = sample.cloud.points;
  pts.reserve(params.ground_points + params.obstacle_points);
  for (std::size_t i = 0; i < params.ground_points; ++i) {
    const double x = rng.uniform(3.0, 60.0);
    const double y = rng.uniform(-12.0, 12.0);
    pts.emplace_back(x, y, -kSensorHeight + rng.normal(0.0, params.point_noise));
  }
  const double lane_center = std::clamp(0.5 * curvature * distance * distance, -5.0, 5.0);
  for (std::size_t i = 0; i < params.obstacle_points; ++i) {
    const double y = lane_center + rng.uniform(-kObstacleHalfWidth, kObstacleHalfWidth);
    const double z = -kSensorHeight + rng.uniform(0.0, kObstacleHeight);
    pts.emplace_back(distance + rng.normal(0.0, params.point_noise),
                     y + rng.normal(0.0, params.point_noise),
                     z + rng.normal(0.0, params.point_noise));
  }
  return sample;
}

DatasetManifest generate_dataset(const SceneParams& params, std::uint64_t seed,
                                 const fs::path& out_dir) {
  params.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (!ec) fs::create_directories(out_dir / "clouds", ec);
  if (ec) throw IoError("cannot create dataset directory " + out_dir.string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.fps = params.fps;
  manifest.max_speed_kmh = params.max_speed_kmh;
  manifest.base_dir = out_dir;
  const std::size_t total = params.total_count();
  for (std::size_t i = 0; i < total; ++i) {
    const Sample s = generate_synthetic_scene(params, i, seed);
    char name[32];
    std::snprintf(name, sizeof name, "%06zu", i);
    ManifestRecord rec;
    rec.image = std::string("images/") + name + ".ppm";
    rec.cloud = std::string("clouds/") + name + ".pcb";
    rec.angle_rad = s.behavior.angle_rad;
    rec.speed_kmh = s.behavior.speed_kmh;
    rec.timestamp_s = s.timestamp_s;
    rec.split = i < params.train_count ? "train"
                : i < params.train_count + params.val_count ? "val"
                                                            : "test";
    save_image_ppm(s.image, out_dir / rec.image);
    save_cloud(s.cloud, out_dir / rec.cloud);
    manifest.records.push_back(std::move(rec));
  }
  write_manifest(manifest, out_dir / "manifest.csv");
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << kManifestHeader << '\n';
  for (const auto& r : manifest.records) {
    out << r.image << ',' << r.cloud << ',' << text::format_double(r.angle_rad) << ','
        << text::format_double(r.speed_kmh) << ',' << text::format_double(r.timestamp_s) << ','
        << r.split << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());

  fs::path meta = path;
  meta.replace_extension(".meta");
  std::ofstream m(meta, std::ios::binary);
  if (!m) throw IoError("cannot open " + meta.string() + " for writing");
  m << "fps = " << text::format_double(manifest.fps) << '\n'
    << "max_speed_kmh = " << text::format_double(manifest.max_speed_kmh) << '\n'
    << "units = " << manifest.units << '\n';
}

DatasetManifest read_manifest(const fs::path& path) {
  const std::string content = read_file(path);
  DatasetManifest manifest;
  manifest.base_dir = path.parent_path();
  std::size_t line_no = 0;
  bool header_seen = false;
  for (std::string_view line : text::split(content, '\n')) {
    ++line_no;
    line = text::trim(line);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kManifestHeader) {
        throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                             ": expected header '" + kManifestHeader + "'",
                         line_no);
      }
      header_seen = true;
      continue;
    }
    const auto fields = text::split(line, ',');
    if (fields.size() != 6) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": expected 6 fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    ManifestRecord rec;
    rec.image = std::string(fields[0]);
    rec.cloud = std::string(fields[1]);
    const auto angle = text::parse_double(fields[2]);
    const auto speed = text::parse_double(fields[3]);
    const auto stamp = text::parse_double(fields[4]);
    if (!angle || !speed || !stamp || !std::isfinite(*angle) || !std::isfinite(*speed) || *speed < 0) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": invalid numeric field", line_no);
    }
    rec.angle_rad = *angle;
    rec.speed_kmh = *speed;
    rec.timestamp_s = *stamp;
    rec.split = std::string(fields[5]);
    if (!rec.split.empty() && rec.split != "train" && rec.split != "val" && rec.split != "test") {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": unknown split '" +
                           rec.split + "'",
                       line_no);
    }
    manifest.records.push_back(std::move(rec));
  }
  if (!header_seen) throw ParseError(path.string() + ": empty manifest", line_no);

  fs::path meta = path;
  meta.replace_extension(".meta");
  if (fs::exists(meta)) {
    std::size_t meta_line = 0;
    const std::string meta_text = read_file(meta);
    for (std::string_view line : text::split(meta_text, '\n')) {
      ++meta_line;
      line = text::trim(line);
      if (line.empty() || line.front() == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ParseError(meta.string() + ": line " + std::to_string(meta_line) + ": expected key = value",
                         meta_line);
      }
      const auto key = text::trim(line.substr(0, eq));
      const auto value = text::trim(line.substr(eq + 1));
      if (key == "units") {
        manifest.units = std::string(value);
        continue;
      }
      const auto v = text::parse_double(value);
      if (!v) throw ParseError(meta.string() + ": line " + std::to_string(meta_line) + ": bad number", meta_line);
      if (key == "fps") manifest.fps = *v;
      else if (key == "max_speed_kmh") manifest.max_speed_kmh = *v;
      else throw ParseError(meta.string() + ": line " + std::to_string(meta_line) + ": unknown key", meta_line);
    }
  }
  return manifest;
}

std::vector<Sample> load_samples(const DatasetManifest& manifest, const std::string& split) {
  std::vector<Sample> out;
  for (const auto& r : manifest.records) {
    if (!split.empty() && r.split != split) continue;
    Sample s;
    s.image = load_image_ppm(manifest.base_dir / r.image);
    s.cloud = load_cloud(manifest.base_dir / r.cloud);
    s.behavior = {r.angle_rad, r.speed_kmh};
    s.timestamp_s = r.timestamp_s;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace driveflow
