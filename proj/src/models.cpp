#include "driveflow/models.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "driveflow/error.hpp"
#include "driveflow/ops.hpp"
#include "text_util.hpp"

namespace driveflow {

namespace {

struct ConvShape {
  std::size_t filters, kernel, stride;
  bool pool;
};

std::vector<ConvShape> conv_table(const BackboneSpec& spec) {
  if (spec.variant == BackboneVariant::nvidia) {
    return {{24, 5, 2, false}, {36, 5, 2, false}, {48, 5, 2, false}, {64, 3, 1, false}, {64, 3, 1, false}};
  }
  std::vector<ConvShape> table;
  for (std::size_t i = 0; i < spec.widths.size(); ++i) table.push_back({spec.widths[i], 3, 1, i < 2});
  return table;
}

const std::vector<std::size_t> kNvidiaDense = {100, 50, 10};

// Spatial dims after the convolution stack; throws when a layer does not fit.
std::pair<std::size_t, std::size_t> conv_output_dims(const BackboneSpec& spec) {
  std::size_t h = spec.height, w = spec.width;
  for (const ConvShape& c : conv_table(spec)) {
    if (c.kernel > h || c.kernel > w) {
      throw ConfigError(to_string(spec.variant) + " backbone: input " + std::to_string(spec.height) + "x" +
                        std::to_string(spec.width) + " too small for its convolution stack");
    }
    h = (h - c.kernel) / c.stride + 1;
    w = (w - c.kernel) / c.stride + 1;
    if (c.pool) {
      if (h < 2 || w < 2) {
        throw ConfigError(to_string(spec.variant) + " backbone: input " + std::to_string(spec.height) + "x" +
                          std::to_string(spec.width) + " too small for its pooling stages");
      }
      h = (h - 2) / 2 + 1;
      w = (w - 2) / 2 + 1;
    }
  }
  return {h, w};
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<std::size_t> parse_list(const std::string& s, const std::string& key) {
  std::vector<std::size_t> out;
  if (text::trim(s).empty()) return out;
  for (auto tok : text::split(s, ',')) {
    const auto v = text::parse_int(tok);
    if (!v || *v <= 0) throw ConfigError("model spec: bad list entry for " + key);
    out.push_back(static_cast<std::size_t>(*v));
  }
  return out;
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::io: return "io";
    case ModelKind::pcm: return "pcm";
    case ModelKind::pn: return "pn";
  }
  return "?";
}

std::string to_string(BackboneVariant variant) {
  return variant == BackboneVariant::nvidia ? "nvidia" : "tinyconv";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "io") return ModelKind::io;
  if (name == "pcm") return ModelKind::pcm;
  if (name == "pn") return ModelKind::pn;
  throw ConfigError("unknown model kind '" + name + "' (valid: io, pcm, pn)");
}

BackboneVariant parse_backbone_variant(const std::string& name) {
  if (name == "nvidia") return BackboneVariant::nvidia;
  if (name == "tinyconv") return BackboneVariant::tinyconv;
  throw ConfigError("unknown backbone '" + name + "' (valid: nvidia, tinyconv)");
}

BackboneSpec BackboneSpec::nvidia() {
  return {BackboneVariant::nvidia, 3, 66, 200, {}};
}

void BackboneSpec::validate() const {
  if (variant == BackboneVariant::nvidia) {
    if (channels != 3 || height != 66 || width != 200) {
      throw ConfigError("nvidia backbone requires 3x66x200 input, got " + std::to_string(channels) + "x" +
                        std::to_string(height) + "x" + std::to_string(width));
    }
  } else {
    if (channels == 0) throw ConfigError("tinyconv backbone needs at least one input channel");
    if (widths.size() != 4) throw ConfigError("tinyconv backbone needs exactly 4 conv widths");
    for (std::size_t w : widths) {
      if (w == 0) throw ConfigError("tinyconv conv widths must be positive");
    }
  }
  conv_output_dims(*this);
}

std::size_t BackboneSpec::feature_dim() const {
  if (variant == BackboneVariant::nvidia) return kNvidiaDense.back();
  const auto [h, w] = conv_output_dims(*this);
  return widths.back() * h * w;
}

void PointNetSpec::validate() const {
  if (widths.empty()) throw ConfigError("PointNet needs at least one layer");
  for (std::size_t w : widths) {
    if (w == 0) throw ConfigError("PointNet widths must be positive");
  }
}

void ModelSpec::validate() const {
  image.validate();
  if (image.channels != 3) throw ConfigError("image backbone must take 3 channels");
  if (fusion.hidden == 0) throw ConfigError("fusion hidden width must be positive");
  input.projection.validate();
  if (input.num_points == 0) throw ConfigError("num_points must be positive");
  if (!(input.point_scale > 0.0)) throw ConfigError("point_scale must be positive");
  if (!(input.max_speed_kmh > 0.0)) throw ConfigError("max_speed_kmh must be positive");
  if (kind == ModelKind::pcm) {
    depth.validate();
    if (depth.channels != 2) throw ConfigError("depth backbone must take 2 channels (depth + validity)");
    if (depth.height != input.projection.height || depth.width != input.projection.width) {
      throw ConfigError("depth backbone input must match the projection size");
    }
  }
  if (kind == ModelKind::pn) pointnet.validate();
}

std::size_t ModelSpec::fused_width() const {
  std::size_t width = image.feature_dim();
  if (kind == ModelKind::pcm) width += depth.feature_dim();
  if (kind == ModelKind::pn) width += pointnet.feature_dim();
  return width;
}

std::string ModelSpec::serialize() const {
  std::ostringstream out;
  auto backbone = [&](const char* name, const BackboneSpec& b) {
    out << name << ".variant=" << to_string(b.variant) << '\n'
        << name << ".shape=" << b.channels << ',' << b.height << ',' << b.width << '\n'
        << name << ".widths=" << join(b.widths) << '\n';
  };
  out << "kind=" << to_string(kind) << '\n';
  backbone("image", image);
  backbone("depth", depth);
  out << "pointnet.widths=" << join(pointnet.widths) << '\n'
      << "fusion.hidden=" << fusion.hidden << '\n'
      << "input.hfov=" << text::format_double(input.projection.horizontal_fov_deg) << '\n'
      << "input.vfov=" << text::format_double(input.projection.vertical_fov_deg) << '\n'
      << "input.proj_height=" << input.projection.height << '\n'
      << "input.proj_width=" << input.projection.width << '\n'
      << "input.max_range=" << text::format_double(input.projection.max_range) << '\n'
      << "input.num_points=" << input.num_points << '\n'
      << "input.point_scale=" << text::format_double(input.point_scale) << '\n'
      << "input.max_speed_kmh=" << text::format_double(input.max_speed_kmh) << '\n';
  return out.str();
}

ModelSpec ModelSpec::deserialize(const std::string& text_blob) {
  std::map<std::string, std::string> kv;
  for (auto line : text::split(text_blob, '\n')) {
    line = text::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("model spec: malformed line '" + std::string(line) + "'");
    kv[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 1));
  }
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("model spec: missing key " + key);
    return it->second;
  };
  auto get_size = [&](const std::string& key) {
    const auto v = text::parse_int(get(key));
    if (!v || *v < 0) throw ConfigError("model spec: bad integer for " + key);
    return static_cast<std::size_t>(*v);
  };
  auto get_double = [&](const std::string& key) {
    const auto v = text::parse_double(get(key));
    if (!v) throw ConfigError("model spec: bad number for " + key);
    return *v;
  };
  auto backbone = [&](const std::string& name) {
    BackboneSpec b;
    b.variant = parse_backbone_variant(get(name + ".variant"));
    const auto shape = parse_list(get(name + ".shape"), name + ".shape");
    if (shape.size() != 3) throw ConfigError("model spec: " + name + ".shape needs 3 dims");
    b.channels = shape[0];
    b.height = shape[1];
    b.width = shape[2];
    b.widths = parse_list(get(name + ".widths"), name + ".widths");
    return b;
  };
  ModelSpec spec;
  spec.kind = parse_model_kind(get("kind"));
  spec.image = backbone("image");
  spec.depth = backbone("depth");
  spec.pointnet.widths = parse_list(get("pointnet.widths"), "pointnet.widths");
  spec.fusion.hidden = get_size("fusion.hidden");
  spec.input.projection.horizontal_fov_deg = get_double("input.hfov");
  spec.input.projection.vertical_fov_deg = get_double("input.vfov");
  spec.input.projection.height = get_size("input.proj_height");
  spec.input.projection.width = get_size("input.proj_width");
  spec.input.projection.max_range = get_double("input.max_range");
  spec.input.num_points = get_size("input.num_points");
  spec.input.point_scale = get_double("input.point_scale");
  spec.input.max_speed_kmh = get_double("input.max_speed_kmh");
  return spec;
}

ModelInput prepare_input(const ModelSpec& spec, const Sample& sample, std::uint64_t sampling_seed) {
  ModelInput input;
  input.image = resize_image(sample.image, spec.image.height, spec.image.width);
  if (spec.kind == ModelKind::pcm) {
    input.depth = depthmap_to_tensor(pcm_project(sample.cloud, spec.input.projection), spec.input.projection);
  } else if (spec.kind == ModelKind::pn) {
    const PointCloud sampled = random_downsample(sample.cloud, spec.input.num_points, sampling_seed);
    Tensor points({sampled.size(), 3}, 0.0);
    auto data = points.mutable_data();
    for (std::size_t i = 0; i < sampled.size(); ++i) {
      for (std::size_t k = 0; k < 3; ++k) {
        data[i * 3 + k] = sampled.points[i][static_cast<Eigen::Index>(k)] / spec.input.point_scale;
      }
    }
    input.points = points;
  }
  return input;
}

std::pair<double, double> normalized_target(const DrivingBehavior& b, double max_speed_kmh) {
  return {b.angle_rad, b.speed_kmh / max_speed_kmh};
}

Tensor Model::add_param(Tensor t, std::string name) {
  t.set_requires_grad(true);
  params_.push_back(t);
  names_.push_back(std::move(name));
  return t;
}

Model::Dense Model::make_dense(std::size_t in, std::size_t out, bool relu, const std::string& name,
                               Rng& rng) {
  // He-normal weights, zero biases.
  Tensor w({in, out}, 0.0);
  const double stddev = std::sqrt(2.0 / static_cast<double>(in));
  for (double& v : w.mutable_data()) v = rng.normal(0.0, stddev);
  Dense layer;
  layer.weight = add_param(w, name + ".weight");
  layer.bias = add_param(Tensor({out}, 0.0), name + ".bias");
  layer.relu = relu;
  return layer;
}

Model::Cnn Model::make_cnn(const BackboneSpec& spec, const std::string& prefix, Rng& rng) {
  Cnn cnn;
  std::size_t channels = spec.channels;
  std::size_t index = 0;
  for (const ConvShape& c : conv_table(spec)) {
    Tensor k({c.filters, channels, c.kernel, c.kernel}, 0.0);
    const double stddev = std::sqrt(2.0 / static_cast<double>(channels * c.kernel * c.kernel));
    for (double& v : k.mutable_data()) v = rng.normal(0.0, stddev);
    const std::string name = prefix + ".conv" + std::to_string(index++);
    Conv conv;
    conv.kernels = add_param(k, name + ".kernels");
    conv.bias = add_param(Tensor({c.filters}, 0.0), name + ".bias");
    conv.stride = c.stride;
    conv.pool = c.pool;
    cnn.convs.push_back(std::move(conv));
    channels = c.filters;
  }
  if (spec.variant == BackboneVariant::nvidia) {
    const auto [h, w] = conv_output_dims(spec);
    std::size_t in = channels * h * w;
    for (std::size_t i = 0; i < kNvidiaDense.size(); ++i) {
      cnn.dense.push_back(make_dense(in, kNvidiaDense[i], true, prefix + ".fc" + std::to_string(i), rng));
      in = kNvidiaDense[i];
    }
  }
  return cnn;
}

Model Model::build(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model m;
  m.spec_ = spec;
  Rng rng(seed);
  m.image_ = m.make_cnn(spec.image, "image", rng);
  if (spec.kind == ModelKind::pcm) m.depth_ = m.make_cnn(spec.depth, "depth", rng);
  if (spec.kind == ModelKind::pn) {
    std::size_t in = 3;
    for (std::size_t i = 0; i < spec.pointnet.widths.size(); ++i) {
      m.pointnet_.push_back(
          m.make_dense(in, spec.pointnet.widths[i], true, "points.mlp" + std::to_string(i), rng));
      in = spec.pointnet.widths[i];
    }
  }
  m.hidden_ = m.make_dense(spec.fused_width(), spec.fusion.hidden, true, "head.hidden", rng);
  m.output_ = m.make_dense(spec.fusion.hidden, 2, false, "head.output", rng);
  return m;
}

Model Model::clone() const {
  Model copy = build(spec_, 0);
  for (std::size_t i = 0; i < params_.size(); ++i) copy.params_[i].mutable_values() = params_[i].values();
  return copy;
}

std::vector<Tensor> Model::parameters_with_prefix(const std::string& prefix) const {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (names_[i].rfind(prefix, 0) == 0) out.push_back(params_[i]);
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& p : params_) n += p.numel();
  return n;
}

void Model::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

Tensor Model::run_dense(const Dense& layer, const Tensor& x) {
  Tensor y = add_bias(matmul(x, layer.weight), layer.bias);
  return layer.relu ? relu(y) : y;
}

Tensor Model::run_cnn(const Cnn& cnn, const Tensor& input) {
  Tensor x = input;
  for (const Conv& c : cnn.convs) {
    x = relu(add_channel_bias(conv2d(x, c.kernels, c.stride), c.bias));
    if (c.pool) x = maxpool2d(x, 2, 2);
  }
  x = reshape(x, {1, x.numel()});
  for (const Dense& d : cnn.dense) x = run_dense(d, x);
  return flatten(x);
}

void Model::check_input(const ModelInput& input) const {
  const Shape want{spec_.image.channels, spec_.image.height, spec_.image.width};
  if (input.image.shape() != want) {
    throw DimensionError("model expects image " + shape_string(want) + ", got " +
                         shape_string(input.image.shape()));
  }
  if (spec_.kind == ModelKind::pcm) {
    const Shape depth{spec_.depth.channels, spec_.depth.height, spec_.depth.width};
    if (!input.depth) throw DimensionError("pcm model needs a depth map input " + shape_string(depth));
    if (input.depth->shape() != depth) {
      throw DimensionError("model expects depth map " + shape_string(depth) + ", got " +
                           shape_string(input.depth->shape()));
    }
  }
  if (spec_.kind == ModelKind::pn) {
    if (!input.points) throw DimensionError("pn model needs an [N x 3] point input");
    if (input.points->rank() != 2 || input.points->dim(1) != 3) {
      throw DimensionError("model expects points [N x 3], got " + shape_string(input.points->shape()));
    }
  }
}

Tensor Model::forward(const ModelInput& input) const {
  check_input(input);
  std::vector<Tensor> features{run_cnn(image_, input.image)};
  if (spec_.kind == ModelKind::pcm) features.push_back(run_cnn(*depth_, *input.depth));
  if (spec_.kind == ModelKind::pn) {
    Tensor x = *input.points;
    for (const Dense& layer : pointnet_) x = run_dense(layer, x);
    features.push_back(global_max_over_points(x));
  }
  Tensor fused = reshape(concat(features), {1, spec_.fused_width()});
  Tensor out = run_dense(output_, run_dense(hidden_, fused));
  return concat({take(out, 0), sigmoid(take(out, 1))});
}

Prediction Model::predict(const ModelInput& input) const {
  const Tensor out = forward(input);
  return {out[0], out[1]};
}

}  // namespace driveflow
