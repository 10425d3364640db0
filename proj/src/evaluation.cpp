#include "driveflow/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "driveflow/error.hpp"
#include "text_util.hpp"

namespace driveflow {

namespace {

void require_aligned(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw ContractError(std::string(op) + ": " + std::to_string(a) + " predictions vs " +
                        std::to_string(b) + " ground-truth values");
  }
  if (a == 0) throw EmptyInputError(std::string(op) + ": no samples");
}

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

}  // namespace

std::string to_string(Target target) { return target == Target::angle ? "angle" : "speed"; }

std::string to_string(ActionClass action) {
  switch (action) {
    case ActionClass::straight: return "straight";
    case ActionClass::stop: return "stop";
    case ActionClass::turn_left: return "turn_left";
    case ActionClass::turn_right: return "turn_right";
  }
  return "?";
}

double threshold_accuracy(std::span<const double> preds, std::span<const double> truths, double tol) {
  require_aligned(preds.size(), truths.size(), "threshold_accuracy");
  if (!(tol > 0.0)) throw ContractError("threshold_accuracy: tolerance must be positive");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (std::abs(preds[i] - truths[i]) < tol) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

AccuracyCurve accuracy_curve(std::span<const double> preds, std::span<const double> truths,
                             std::span<const double> thresholds, Target target) {
  require_aligned(preds.size(), truths.size(), "accuracy_curve");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0)) throw ContractError("accuracy_curve: thresholds must be positive");
    if (i > 0 && !(thresholds[i] > thresholds[i - 1])) {
      throw ContractError("accuracy_curve: thresholds must be strictly ascending");
    }
  }
  AccuracyCurve curve;
  curve.target = target;
  curve.thresholds.assign(thresholds.begin(), thresholds.end());
  for (double t : thresholds) curve.accuracy.push_back(threshold_accuracy(preds, truths, t));
  return curve;
}

double gaussian_perplexity(std::span<const double> preds, std::span<const double> truths, double sigma) {
  require_aligned(preds.size(), truths.size(), "perplexity");
  if (!(sigma > 0.0)) throw ContractError("perplexity: sigma must be positive");
  const double log_norm = 0.5 * std::log(2.0 * std::numbers::pi * sigma * sigma);
  double nll = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double z = (truths[i] - preds[i]) / sigma;
    nll += log_norm + 0.5 * z * z;
  }
  return std::exp(nll / static_cast<double>(preds.size()));
}

PerplexityReport perplexity(std::span<const double> pred_angle, std::span<const double> true_angle,
                            std::span<const double> pred_speed, std::span<const double> true_speed,
                            double sigma_angle, double sigma_speed) {
  PerplexityReport r;
  r.angle = gaussian_perplexity(pred_angle, true_angle, sigma_angle);
  r.speed = gaussian_perplexity(pred_speed, true_speed, sigma_speed);
  r.combined = std::sqrt(r.angle * r.speed);
  r.sigma_angle = sigma_angle;
  r.sigma_speed = sigma_speed;
  r.events = pred_angle.size();
  return r;
}

ActionClass discretize_action(const DrivingBehavior& behavior, double angle_cut, double stop_cut) {
  if (behavior.speed_kmh < stop_cut) return ActionClass::stop;
  if (behavior.angle_rad > angle_cut) return ActionClass::turn_left;
  if (behavior.angle_rad < -angle_cut) return ActionClass::turn_right;
  return ActionClass::straight;
}

double classification_accuracy(std::span<const DrivingBehavior> preds,
                               std::span<const DrivingBehavior> truths, double angle_cut,
                               double stop_cut) {
  require_aligned(preds.size(), truths.size(), "classification_accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (discretize_action(preds[i], angle_cut, stop_cut) == discretize_action(truths[i], angle_cut, stop_cut)) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

std::vector<double> threshold_range(double step, double max) {
  if (!(step > 0.0) || !(max >= step)) throw ContractError("threshold_range: need 0 < step <= max");
  std::vector<double> out;
  for (std::size_t k = 1;; ++k) {
    const double t = static_cast<double>(k) * step;
    if (t > max * (1.0 + 1e-12)) break;
    out.push_back(t);
  }
  return out;
}

EvaluationReport evaluate_behaviors(std::span<const DrivingBehavior> preds,
                                    std::span<const DrivingBehavior> truths, double max_speed_kmh,
                                    const EvalConfig& cfg) {
  require_aligned(preds.size(), truths.size(), "evaluate");
  const std::size_t n = preds.size();
  std::vector<double> pa(n), ta(n), ps(n), ts(n), pa_deg(n), ta_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    pa[i] = preds[i].angle_rad;
    ta[i] = truths[i].angle_rad;
    pa_deg[i] = pa[i] * kRadToDeg;
    ta_deg[i] = ta[i] * kRadToDeg;
    ps[i] = preds[i].speed_kmh;
    ts[i] = truths[i].speed_kmh;
  }
  EvaluationReport r;
  r.samples = n;
  r.angle_accuracy = threshold_accuracy(pa_deg, ta_deg, cfg.report_threshold);
  r.speed_accuracy = threshold_accuracy(ps, ts, cfg.report_threshold);
  for (std::size_t i = 0; i < n; ++i) {
    r.angle_mae_deg += std::abs(pa_deg[i] - ta_deg[i]) / static_cast<double>(n);
    r.speed_mae_kmh += std::abs(ps[i] - ts[i]) / static_cast<double>(n);
  }
  r.angle_curve = accuracy_curve(pa_deg, ta_deg, cfg.thresholds, Target::angle);
  r.speed_curve = accuracy_curve(ps, ts, cfg.thresholds, Target::speed);

  std::vector<double> ps_norm(n), ts_norm(n);
  for (std::size_t i = 0; i < n; ++i) {
    ps_norm[i] = ps[i] / max_speed_kmh;
    ts_norm[i] = ts[i] / max_speed_kmh;
  }
  r.perplexity = perplexity(pa, ta, ps_norm, ts_norm, cfg.sigma_angle, cfg.sigma_speed);
  r.classification_accuracy = classification_accuracy(preds, truths, cfg.angle_cut, cfg.stop_cut_kmh);
  return r;
}

void write_curves_csv(std::span<const AccuracyCurve> curves, const std::string& model,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << kCurveHeader << '\n';
  for (const AccuracyCurve& c : curves) {
    for (std::size_t i = 0; i < c.thresholds.size(); ++i) {
      out << text::format_double(c.thresholds[i]) << ',' << text::format_double(c.accuracy[i]) << ','
          << to_string(c.target) << ',' << model << '\n';
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::string format_report(const EvaluationReport& r, const EvalConfig& cfg) {
  std::ostringstream out;
  out << "samples=" << r.samples << '\n'
      << "report_threshold=" << text::format_double(cfg.report_threshold) << '\n'
      << "angle_accuracy=" << text::format_fixed(r.angle_accuracy, 6) << '\n'
      << "speed_accuracy=" << text::format_fixed(r.speed_accuracy, 6) << '\n'
      << "angle_mae_deg=" << text::format_fixed(r.angle_mae_deg, 6) << '\n'
      << "speed_mae_kmh=" << text::format_fixed(r.speed_mae_kmh, 6) << '\n'
      << "perplexity_angle=" << text::format_fixed(r.perplexity.angle, 6) << '\n'
      << "perplexity_speed=" << text::format_fixed(r.perplexity.speed, 6) << '\n'
      << "perplexity_combined=" << text::format_fixed(r.perplexity.combined, 6) << '\n'
      << "classification_accuracy=" << text::format_fixed(r.classification_accuracy, 6) << '\n';
  return out.str();
}

}  // namespace driveflow
