#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "driveflow/data.hpp"
#include "driveflow/rng.hpp"
#include "driveflow/pointcloud.hpp"
#include "driveflow/tensor.hpp"

namespace driveflow {

enum class ModelKind { io, pcm, pn };
enum class BackboneVariant { nvidia, tinyconv };

std::string to_string(ModelKind kind);
std::string to_string(BackboneVariant variant);
ModelKind parse_model_kind(const std::string& name);
BackboneVariant parse_backbone_variant(const std::string& name);

/// CNN feature extractor.
///
/// `nvidia` is the PilotNet layout: 5x5/stride-2 convolutions with 24, 36 and
/// 48 filters, two 3x3/stride-1 convolutions with 64 filters, then fully
/// connected layers of 100, 50 and 10 units. It only accepts 3x66x200 input.
///
/// `tinyconv` is four 3x3/stride-1 convolutions of configurable width; the
/// first two are each followed by 2x2 max pooling.
struct BackboneSpec {
  BackboneVariant variant = BackboneVariant::tinyconv;
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 64;
  std::vector<std::size_t> widths = {8, 16, 16, 16};

  static BackboneSpec nvidia();
  void validate() const;
  /// Length of the flattened feature vector this backbone produces.
  std::size_t feature_dim() const;
};

/// Shared per-point MLP; the global feature is the last width.
struct PointNetSpec {
  std::vector<std::size_t> widths = {64, 64, 128, 1024};

  void validate() const;
  std::size_t feature_dim() const { return widths.empty() ? 0 : widths.back(); }
};

struct FusionSpec {
  std::size_t hidden = 256;
};

/// How raw samples become model inputs.
struct InputSpec {
  ProjectionConfig projection;
  std::size_t num_points = 16384;
  double point_scale = 50.0;  // meters per unit of PointNet input
  double max_speed_kmh = 60.0;
};

struct ModelSpec {
  ModelKind kind = ModelKind::io;
  BackboneSpec image;
  BackboneSpec depth{BackboneVariant::tinyconv, 2, 64, 512, {8, 16, 16, 16}};
  PointNetSpec pointnet;
  FusionSpec fusion;
  InputSpec input;

  void validate() const;
  /// Width of the concatenated feature vector entering the prediction head.
  std::size_t fused_width() const;
  std::string serialize() const;
  static ModelSpec deserialize(const std::string& text);
};

/// Model output: steering angle in radians, speed normalized to [0, 1].
struct Prediction {
  double angle_rad = 0.0;
  double speed = 0.0;
};

struct ModelInput {
  Tensor image;                 // [3 x H x W]
  std::optional<Tensor> depth;  // [2 x H x W] for pcm
  std::optional<Tensor> points; // [N x 3] for pn
};

/// Converts a raw sample into the tensors `spec` expects: resizes the image,
/// projects the cloud (pcm) or downsamples and scales it (pn).
ModelInput prepare_input(const ModelSpec& spec, const Sample& sample,
                         std::uint64_t sampling_seed);

/// Normalized regression target of a behavior: {angle_rad, speed / max}.
std::pair<double, double> normalized_target(const DrivingBehavior& b, double max_speed_kmh);

/// One of the three architectures: image-only (io), image + projected depth
/// map (pcm), image + PointNet (pn). Every variant ends in the same head:
/// concatenated branch features -> FC(hidden) -> ReLU -> FC(2), with the
/// speed output squashed by a sigmoid.
class Model {
 public:
  static Model build(const ModelSpec& spec, std::uint64_t seed);

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// Deep copy with independent parameters.
  Model clone() const;

  const ModelSpec& spec() const { return spec_; }

  /// [2] tensor (angle, speed); recorded on the active tape, if any.
  Tensor forward(const ModelInput& input) const;
  Prediction predict(const ModelInput& input) const;

  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }
  /// Parameters whose name starts with `prefix` ("image.", "depth.", "points.", "head.").
  std::vector<Tensor> parameters_with_prefix(const std::string& prefix) const;
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  struct Conv {
    Tensor kernels;
    Tensor bias;
    std::size_t stride = 1;
    bool pool = false;
  };
  struct Dense {
    Tensor weight;  // [in x out]
    Tensor bias;    // [out]
    bool relu = true;
  };
  struct Cnn {
    std::vector<Conv> convs;
    std::vector<Dense> dense;
  };

  Model() = default;
  Cnn make_cnn(const BackboneSpec& spec, const std::string& prefix, Rng& rng);
  Dense make_dense(std::size_t in, std::size_t out, bool relu, const std::string& name, Rng& rng);
  Tensor add_param(Tensor t, std::string name);
  void check_input(const ModelInput& input) const;

  static Tensor run_cnn(const Cnn& cnn, const Tensor& input);
  static Tensor run_dense(const Dense& layer, const Tensor& x);

  ModelSpec spec_;
  Cnn image_;
  std::optional<Cnn> depth_;
  std::vector<Dense> pointnet_;
  Dense hidden_;
  Dense output_;
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
};

}  // namespace driveflow
