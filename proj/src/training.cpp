#include "driveflow/training.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "driveflow/error.hpp"
#include "driveflow/ops.hpp"
#include "driveflow/rng.hpp"
#include "text_util.hpp"

namespace driveflow {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(angle_tolerance > 0.0) || !(speed_tolerance > 0.0)) throw ConfigError("tolerances must be positive");
  if (!(angle_scale > 0.0) || !(speed_scale > 0.0)) throw ConfigError("loss scales must be positive");
  if (adam.learning_rate < 0.0) throw ConfigError("learning rate must be non-negative");
  if (train_fraction < 0 || val_fraction < 0 || test_fraction < 0 ||
      std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
}

Tensor rmsd_loss(const Tensor& predictions, const Tensor& targets, double angle_scale,
                 double speed_scale) {
  if (predictions.rank() != 2 || predictions.dim(1) != 2) {
    throw DimensionError("rmsd_loss: predictions must be [B x 2], got " + shape_string(predictions.shape()));
  }
  if (predictions.shape() != targets.shape()) {
    throw ContractError("rmsd_loss: batch mismatch " + shape_string(predictions.shape()) + " vs " +
                        shape_string(targets.shape()));
  }
  const std::size_t batch = predictions.dim(0);
  Tensor weights({batch, 2}, 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    weights.mutable_data()[2 * i] = 1.0 / angle_scale;
    weights.mutable_data()[2 * i + 1] = 1.0 / speed_scale;
  }
  Tensor err = mul(sub(predictions, targets), weights);
  return driveflow::sqrt(mean(mul(err, err)));
}

bool qualifies(const ValidationMae& mae, const TrainConfig& cfg) {
  return mae.angle < cfg.angle_tolerance && mae.speed < cfg.speed_tolerance;
}

bool is_better_checkpoint(const ValidationMae& candidate,
                          const std::optional<ValidationMae>& incumbent, const TrainConfig& cfg) {
  if (!incumbent) return true;
  const bool cand_ok = qualifies(candidate, cfg);
  const bool inc_ok = qualifies(*incumbent, cfg);
  if (cand_ok != inc_ok) return cand_ok;
  if (!cand_ok) return false;
  return candidate.angle + candidate.speed < incumbent->angle + incumbent->speed;
}

std::vector<LabeledInput> prepare_dataset(const ModelSpec& spec, std::span<const Sample> samples,
                                          std::uint64_t seed) {
  std::vector<LabeledInput> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto [angle, speed] = normalized_target(samples[i].behavior, spec.input.max_speed_kmh);
    out.push_back({prepare_input(spec, samples[i], Rng::mix(seed ^ (i + 1))), angle, speed});
  }
  return out;
}

ValidationMae mean_absolute_errors(const Model& model, std::span<const LabeledInput> data) {
  if (data.empty()) throw EmptyInputError("mean_absolute_errors: no samples");
  ValidationMae mae;
  for (const LabeledInput& item : data) {
    const Prediction p = model.predict(item.input);
    mae.angle += std::abs(p.angle_rad - item.angle_rad);
    mae.speed += std::abs(p.speed - item.speed);
  }
  mae.angle /= static_cast<double>(data.size());
  mae.speed /= static_cast<double>(data.size());
  return mae;
}

namespace {

std::string parameter_norms(const Model& model) {
  std::ostringstream out;
  double total = 0.0;
  double largest = 0.0;
  std::string largest_name;
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    const double n = model.parameters()[i].values().norm();
    total += n * n;
    if (!(n <= largest)) {
      largest = n;
      largest_name = model.parameter_names()[i];
    }
  }
  out << "parameter norm " << std::sqrt(total) << ", largest " << largest_name << " = " << largest;
  return out.str();
}

std::uint64_t digest_engine(const Rng& rng) {
  std::ostringstream state;
  state << rng.engine();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : state.str()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

TrainResult train(Model& model, std::span<const LabeledInput> train_set,
                  std::span<const LabeledInput> val, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw EmptyInputError("train: empty training set");
  const auto& validation = val.empty() ? train_set : val;

  TrainResult result;
  AdamState adam;
  Rng shuffler(cfg.seed);
  std::optional<ValidationMae> best_mae;
  std::vector<std::size_t> order(train_set.size());

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffler.below(i))]);
    }

    double squared_error_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::size_t batch = end - start;
      Tape tape;
      Tensor loss;
      {
        TapeScope scope(tape);
        std::vector<Tensor> rows;
        Tensor targets({batch, 2}, 0.0);
        for (std::size_t k = 0; k < batch; ++k) {
          const LabeledInput& item = train_set[order[start + k]];
          rows.push_back(reshape(model.forward(item.input), {1, 2}));
          targets.mutable_data()[2 * k] = item.angle_rad;
          targets.mutable_data()[2 * k + 1] = item.speed;
        }
        loss = rmsd_loss(concat(rows), targets, cfg.angle_scale, cfg.speed_scale);
      }
      if (!loss.all_finite()) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index) + "; " + parameter_norms(model));
      }
      model.zero_grad();
      backward(loss, tape);
      try {
        adam_step(model.parameters(), adam, cfg.adam);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index) + "; " + parameter_norms(model));
      }
      ++result.steps;
      const double l = loss.item();
      squared_error_sum += l * l * 2.0 * static_cast<double>(batch);
    }
    model.zero_grad();

    const ValidationMae mae = mean_absolute_errors(model, validation);
    if (!std::isfinite(mae.angle) || !std::isfinite(mae.speed)) {
      throw TrainingError("non-finite validation error at epoch " + std::to_string(epoch) + "; " +
                          parameter_norms(model));
    }
    EpochRecord record;
    record.epoch = epoch;
    record.train_rmsd = std::sqrt(squared_error_sum / (2.0 * static_cast<double>(order.size())));
    record.val_angle_mae = mae.angle;
    record.val_speed_mae = mae.speed;
    record.qualified = qualifies(mae, cfg);
    result.history.push_back(record);

    if (is_better_checkpoint(mae, best_mae, cfg)) {
      best_mae = mae;
      result.best = snapshot(model, epoch, mae, digest_engine(shuffler));
    }
  }
  return result;
}

Checkpoint snapshot(const Model& model, std::size_t epoch, const ValidationMae& mae,
                    std::uint64_t rng_digest) {
  Checkpoint ckpt;
  ckpt.spec = model.spec();
  ckpt.names = model.parameter_names();
  for (const Tensor& p : model.parameters()) ckpt.parameters.push_back(p.clone());
  ckpt.epoch = epoch;
  ckpt.val_angle_mae = mae.angle;
  ckpt.val_speed_mae = mae.speed;
  ckpt.rng_digest = rng_digest;
  return ckpt;
}

Model restore_model(const Checkpoint& ckpt) {
  Model model = Model::build(ckpt.spec, 0);
  auto& params = model.parameters();
  if (params.size() != ckpt.parameters.size()) {
    throw CheckpointShapeError("checkpoint holds " + std::to_string(ckpt.parameters.size()) +
                               " parameter tensors, spec needs " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != ckpt.parameters[i].shape()) {
      throw CheckpointShapeError("checkpoint parameter " + model.parameter_names()[i] + " has shape " +
                                 shape_string(ckpt.parameters[i].shape()) + ", spec needs " +
                                 shape_string(params[i].shape()));
    }
    params[i].mutable_values() = ckpt.parameters[i].values();
  }
  return model;
}

void write_history_csv(std::span<const EpochRecord> history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << kHistoryHeader << '\n';
  for (const EpochRecord& r : history) {
    out << r.epoch << ',' << text::format_double(r.train_rmsd) << ','
        << text::format_double(r.val_angle_mae) << ',' << text::format_double(r.val_speed_mae) << ','
        << (r.qualified ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace driveflow
