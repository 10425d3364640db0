#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "driveflow/data.hpp"

namespace driveflow {

enum class Target { angle, speed };
std::string to_string(Target target);

/// Accuracy against ascending thresholds. Angle thresholds are in degrees,
/// speed thresholds in km/h.
struct AccuracyCurve {
  Target target = Target::angle;
  std::vector<double> thresholds;
  std::vector<double> accuracy;
};

struct PerplexityReport {
  double angle = 0.0;
  double speed = 0.0;
  double combined = 0.0;  // geometric mean of the two
  double sigma_angle = 0.0;
  double sigma_speed = 0.0;
  std::size_t events = 0;
};

enum class ActionClass { straight, stop, turn_left, turn_right };
std::string to_string(ActionClass action);

/// Fraction of samples with |pred - truth| < tol.
double threshold_accuracy(std::span<const double> preds, std::span<const double> truths, double tol);

AccuracyCurve accuracy_curve(std::span<const double> preds, std::span<const double> truths,
                             std::span<const double> thresholds, Target target);

/// exp of the mean negative log-density of each truth under N(pred, sigma^2).
double gaussian_perplexity(std::span<const double> preds, std::span<const double> truths, double sigma);

/// Angle in radians, speed normalized; the sigmas are in those units.
PerplexityReport perplexity(std::span<const double> pred_angle, std::span<const double> true_angle,
                            std::span<const double> pred_speed, std::span<const double> true_speed,
                            double sigma_angle, double sigma_speed);

/// stop if speed < stop_cut; otherwise turn_left / turn_right when the angle
/// strictly exceeds +-angle_cut; straight otherwise.
ActionClass discretize_action(const DrivingBehavior& behavior, double angle_cut, double stop_cut);

double classification_accuracy(std::span<const DrivingBehavior> preds,
                               std::span<const DrivingBehavior> truths, double angle_cut,
                               double stop_cut);

/// step, 2*step, ... up to and including max (within rounding).
std::vector<double> threshold_range(double step, double max);

struct EvalConfig {
  double report_threshold = 5.0;  // degrees for angle, km/h for speed
  std::vector<double> thresholds = threshold_range(0.5, 15.0);
  double sigma_angle = 0.1;  // rad
  double sigma_speed = 0.1;  // normalized
  double angle_cut = 0.05;   // rad
  double stop_cut_kmh = 5.0;
};

struct EvaluationReport {
  std::size_t samples = 0;
  double angle_accuracy = 0.0;  // at report_threshold
  double speed_accuracy = 0.0;
  double angle_mae_deg = 0.0;
  double speed_mae_kmh = 0.0;
  PerplexityReport perplexity;
  double classification_accuracy = 0.0;
  AccuracyCurve angle_curve;
  AccuracyCurve speed_curve;
};

/// Full metric set over behaviors in raw units (radians, km/h).
EvaluationReport evaluate_behaviors(std::span<const DrivingBehavior> preds,
                                    std::span<const DrivingBehavior> truths, double max_speed_kmh,
                                    const EvalConfig& cfg);

inline constexpr const char* kCurveHeader = "threshold,accuracy,target,model";
void write_curves_csv(std::span<const AccuracyCurve> curves, const std::string& model,
                      const std::filesystem::path& path);

/// Line-oriented key=value rendering of a report.
std::string format_report(const EvaluationReport& report, const EvalConfig& cfg);

}  // namespace driveflow
