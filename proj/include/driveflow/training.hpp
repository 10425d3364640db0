#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "driveflow/data.hpp"
#include "driveflow/models.hpp"
#include "driveflow/optim.hpp"
#include "driveflow/tensor.hpp"

namespace driveflow {

struct TrainConfig {
  std::size_t epochs = 125;
  std::size_t batch_size = 16;
  AdamConfig adam;
  std::uint64_t seed = 42;
  double angle_tolerance = 5.0 / 180.0 * std::numbers::pi;  // radians
  double speed_tolerance = 0.25;                             // normalized speed
  /// Loss normalizers: errors are divided by these before squaring.
  double angle_scale = 1.0;
  double speed_scale = 1.0;
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  double test_fraction = 0.1;

  void validate() const;
};

/// Validation mean absolute errors (angle in radians, speed normalized).
struct ValidationMae {
  double angle = 0.0;
  double speed = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_rmsd = 0.0;
  double val_angle_mae = 0.0;
  double val_speed_mae = 0.0;
  bool qualified = false;
};

struct Checkpoint {
  ModelSpec spec;
  std::vector<std::string> names;
  std::vector<Tensor> parameters;  // deep copies
  std::size_t epoch = 0;
  double val_angle_mae = 0.0;
  double val_speed_mae = 0.0;
  std::uint64_t rng_digest = 0;
};

/// A model-ready input with its normalized target.
struct LabeledInput {
  ModelInput input;
  double angle_rad = 0.0;
  double speed = 0.0;  // normalized
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochRecord> history;
  std::size_t steps = 0;
};

/// sqrt of the mean squared error over a [B x 2] batch of (angle, speed)
/// predictions, with angle and speed errors first divided by their scales.
Tensor rmsd_loss(const Tensor& predictions, const Tensor& targets, double angle_scale = 1.0,
                 double speed_scale = 1.0);

/// True when the MAEs satisfy both tolerances (strict inequalities).
bool qualifies(const ValidationMae& mae, const TrainConfig& cfg);

/// Best-checkpoint rule. With no incumbent the candidate always wins. A
/// qualifier beats a non-qualifier; between qualifiers the lower MAE sum wins
/// (the incumbent keeps ties); between non-qualifiers the incumbent stays.
bool is_better_checkpoint(const ValidationMae& candidate,
                          const std::optional<ValidationMae>& incumbent, const TrainConfig& cfg);

/// Prepares model inputs for samples; PointNet subsampling is seeded per
/// sample index from `seed`.
std::vector<LabeledInput> prepare_dataset(const ModelSpec& spec, std::span<const Sample> samples,
                                          std::uint64_t seed);

ValidationMae mean_absolute_errors(const Model& model, std::span<const LabeledInput> data);

/// Seeded-shuffled minibatch Adam on rmsd_loss for cfg.epochs epochs,
/// evaluating validation MAEs and the checkpoint rule after every epoch.
/// Validation falls back to the training set when `val` is empty.
TrainResult train(Model& model, std::span<const LabeledInput> train_set,
                  std::span<const LabeledInput> val, const TrainConfig& cfg);

Checkpoint snapshot(const Model& model, std::size_t epoch, const ValidationMae& mae,
                    std::uint64_t rng_digest);
Model restore_model(const Checkpoint& ckpt);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary checkpoint: "DFCK" magic, u32 version, spec text, epoch, MAEs, RNG
/// digest, then each parameter as name, rank, dims and little-endian f64
/// values. All integers little-endian.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

inline constexpr const char* kHistoryHeader = "epoch,train_rmsd,val_angle_mae,val_speed_mae,qualified";
void write_history_csv(std::span<const EpochRecord> history, const std::filesystem::path& path);

}  // namespace driveflow
