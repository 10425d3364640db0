#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "driveflow/error.hpp"
#include "driveflow/evaluation.hpp"
#include "driveflow/rng.hpp"

namespace driveflow {
namespace {

std::size_t brute_count(const std::vector<double>& p, const std::vector<double>& t, double tol) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (std::abs(p[i] - t[i]) < tol) ++n;
  return n;
}

TEST(ThresholdAccuracy, Examples) {
  const std::vector<double> t = {1, 2, 3};
  EXPECT_EQ(threshold_accuracy(t, t, 1e-9), 1.0);
  const std::vector<double> p = {1.1, 2.2, 3.3};
  EXPECT_DOUBLE_EQ(threshold_accuracy(p, t, 0.25), 2.0 / 3.0);
  EXPECT_EQ(threshold_accuracy(p, t, 0.05), 0.0);
}

TEST(ThresholdAccuracy, StrictInequality) {
  const std::vector<double> p = {0.5}, t = {0.0};
  EXPECT_EQ(threshold_accuracy(p, t, 0.5), 0.0);
  EXPECT_EQ(threshold_accuracy(p, t, std::nextafter(0.5, 1.0)), 1.0);
}

TEST(ThresholdAccuracy, Errors) {
  const std::vector<double> a = {1, 2}, b = {1};
  const std::vector<double> empty;
  EXPECT_THROW(threshold_accuracy(a, b, 1.0), ContractError);
  EXPECT_THROW(threshold_accuracy(empty, empty, 1.0), ContractError);
  EXPECT_THROW(threshold_accuracy(a, a, 0.0), ContractError);
}

TEST(ThresholdAccuracy, BruteForceOnRandomVectors) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<double> p(n), t(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = rng.uniform(-5, 5), t[i] = rng.uniform(-5, 5);
    const double tol = rng.uniform(0.01, 6.0);
    EXPECT_EQ(threshold_accuracy(p, t, tol), static_cast<double>(brute_count(p, t, tol)) / static_cast<double>(n));
  }
}

TEST(AccuracyCurve, Examples) {
  const std::vector<double> p = {5}, t = {0};
  const std::vector<double> th = {1, 10};
  const AccuracyCurve c = accuracy_curve(p, t, th, Target::angle);
  EXPECT_EQ(c.accuracy, (std::vector<double>{0.0, 1.0}));
  EXPECT_EQ(c.thresholds, th);
  const AccuracyCurve ones = accuracy_curve(t, t, th, Target::speed);
  EXPECT_EQ(ones.accuracy, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(ones.target, Target::speed);
}

TEST(AccuracyCurve, RejectsBadThresholds) {
  const std::vector<double> p = {1}, t = {0};
  const std::vector<double> unsorted = {2, 1}, dup = {1, 1}, neg = {-1, 1};
  EXPECT_THROW(accuracy_curve(p, t, unsorted, Target::angle), ContractError);
  EXPECT_THROW(accuracy_curve(p, t, dup, Target::angle), ContractError);
  EXPECT_THROW(accuracy_curve(p, t, neg, Target::angle), ContractError);
}

TEST(AccuracyCurve, MatchesRecountAndIsMonotone) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 50;
    std::vector<double> p(n), t(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = rng.normal(0, 3), t[i] = rng.normal(0, 3);
    std::vector<double> th;
    double x = 0;
    for (int k = 0; k < 20; ++k) th.push_back(x += rng.uniform(0.01, 1.0));
    const AccuracyCurve c = accuracy_curve(p, t, th, Target::angle);
    for (std::size_t k = 0; k < th.size(); ++k) {
      EXPECT_EQ(c.accuracy[k], static_cast<double>(brute_count(p, t, th[k])) / 50.0);
      if (k > 0) EXPECT_GE(c.accuracy[k], c.accuracy[k - 1]);
      EXPECT_GE(c.accuracy[k], 0.0);
      EXPECT_LE(c.accuracy[k], 1.0);
    }
  }
}

TEST(Perplexity, UnitDensityGivesOne) {
  const std::vector<double> v = {0.1, -0.4, 2.0};
  EXPECT_NEAR(gaussian_perplexity(v, v, 1.0 / std::sqrt(2.0 * std::numbers::pi)), 1.0, 1e-15);
}

TEST(Perplexity, ClosedForm) {
  Rng rng(3);
  std::vector<double> p(30), t(30);
  double sq = 0;
  for (std::size_t i = 0; i < 30; ++i) {
    p[i] = rng.uniform(-1, 1), t[i] = rng.uniform(-1, 1);
    sq += (p[i] - t[i]) * (p[i] - t[i]);
  }
  const double sigma = 0.3;
  const double nll = std::log(sigma * std::sqrt(2 * std::numbers::pi)) + sq / 30.0 / (2 * sigma * sigma);
  EXPECT_NEAR(gaussian_perplexity(p, t, sigma), std::exp(nll), 1e-12 * std::exp(nll));
}

TEST(Perplexity, LargerErrorIsLarger) {
  const std::vector<double> t = {0, 0};
  const std::vector<double> a = {0.1, 0.1}, b = {0.2, 0.2};
  EXPECT_LT(gaussian_perplexity(a, t, 0.5), gaussian_perplexity(b, t, 0.5));
}

TEST(Perplexity, MeanInvariance) {
  const std::vector<double> p1 = {0.3}, t1 = {0.0};
  const std::vector<double> p5(5, 0.3), t5(5, 0.0);
  EXPECT_NEAR(gaussian_perplexity(p1, t1, 0.2), gaussian_perplexity(p5, t5, 0.2), 1e-12);
}

TEST(Perplexity, ScaleCoherence) {
  Rng rng(4);
  std::vector<double> p(20), t(20), pk(20), tk(20);
  const double k = 3.7;
  for (std::size_t i = 0; i < 20; ++i) {
    p[i] = rng.uniform(-1, 1), t[i] = rng.uniform(-1, 1);
    pk[i] = k * p[i], tk[i] = k * t[i];
  }
  // Scaling errors and sigma by k only moves the normalizer: perplexity * k.
  EXPECT_NEAR(gaussian_perplexity(pk, tk, 0.4 * k), k * gaussian_perplexity(p, t, 0.4), 1e-9);
}

TEST(Perplexity, ReportCombinesGeometrically) {
  const std::vector<double> pa = {0.1, 0.2}, ta = {0.0, 0.0}, ps = {0.5, 0.4}, ts = {0.45, 0.5};
  const PerplexityReport r = perplexity(pa, ta, ps, ts, 0.1, 0.2);
  EXPECT_DOUBLE_EQ(r.angle, gaussian_perplexity(pa, ta, 0.1));
  EXPECT_DOUBLE_EQ(r.speed, gaussian_perplexity(ps, ts, 0.2));
  EXPECT_NEAR(r.combined, std::sqrt(r.angle * r.speed), 1e-12);
  EXPECT_EQ(r.events, 2u);
  EXPECT_THROW(gaussian_perplexity(pa, ta, 0.0), ContractError);
}

TEST(DiscretizeAction, Examples) {
  EXPECT_EQ(discretize_action({0.0, 0.0}, 0.1, 5.0), ActionClass::stop);
  EXPECT_EQ(discretize_action({0.5, 40.0}, 0.1, 5.0), ActionClass::turn_left);
  EXPECT_EQ(discretize_action({-0.5, 40.0}, 0.1, 5.0), ActionClass::turn_right);
}

TEST(DiscretizeAction, BoundaryTable) {
  struct Row {
    double angle, speed;
    ActionClass want;
  };
  const double cut = 0.1, stop = 5.0;
  const Row rows[] = {
      {cut, 10.0, ActionClass::straight},
      {-cut, 10.0, ActionClass::straight},
      {std::nextafter(cut, 1.0), 10.0, ActionClass::turn_left},
      {std::nextafter(-cut, -1.0), 10.0, ActionClass::turn_right},
      {0.0, stop, ActionClass::straight},
      {0.0, std::nextafter(stop, 0.0), ActionClass::stop},
      {1.0, std::nextafter(stop, 0.0), ActionClass::stop},
      {-1.0, 0.0, ActionClass::stop},
      {1.0, stop, ActionClass::turn_left},
  };
  for (const Row& r : rows)
    EXPECT_EQ(discretize_action({r.angle, r.speed}, cut, stop), r.want) << r.angle << " " << r.speed;
}

TEST(DiscretizeAction, TotalOverGrid) {
  for (double a = -3.0; a <= 3.0; a += 0.05)
    for (double s = 0.0; s <= 200.0; s += 2.5) {
      const ActionClass c = discretize_action({a, s}, 0.05, 5.0);
      const ActionClass want = s < 5.0 ? ActionClass::stop
                               : a > 0.05 ? ActionClass::turn_left
                               : a < -0.05 ? ActionClass::turn_right
                                           : ActionClass::straight;
      ASSERT_EQ(c, want);
    }
}

TEST(ClassificationAccuracy, Examples) {
  const std::vector<DrivingBehavior> t = {{0, 30}, {0.5, 30}, {-0.5, 30}, {0, 0}};
  EXPECT_EQ(classification_accuracy(t, t, 0.1, 5.0), 1.0);
  std::vector<DrivingBehavior> p = t;
  p[1] = {0.0, 30};
  EXPECT_EQ(classification_accuracy(p, t, 0.1, 5.0), 0.75);
  const std::vector<DrivingBehavior> stops(3, {0, 0}), straights(3, {0, 30});
  EXPECT_EQ(classification_accuracy(stops, straights, 0.1, 5.0), 0.0);
  EXPECT_THROW(classification_accuracy(stops, t, 0.1, 5.0), ContractError);
}

TEST(ThresholdRange, IncludesMax) {
  const auto r = threshold_range(0.5, 15.0);
  ASSERT_EQ(r.size(), 30u);
  EXPECT_EQ(r.front(), 0.5);
  EXPECT_EQ(r.back(), 15.0);
  EXPECT_EQ(threshold_range(0.1, 0.3).size(), 3u);
  EXPECT_THROW(threshold_range(0.0, 1.0), ContractError);
}

TEST(EvaluateBehaviors, UnitsAndCsv) {
  const std::vector<DrivingBehavior> t = {{0.0, 30.0}, {0.1, 50.0}};
  const std::vector<DrivingBehavior> p = {{4.0 * std::numbers::pi / 180.0, 36.0}, {0.1, 50.0}};
  EvalConfig cfg;
  const EvaluationReport r = evaluate_behaviors(p, t, 60.0, cfg);
  EXPECT_EQ(r.samples, 2u);
  EXPECT_EQ(r.angle_accuracy, 1.0);   // 4 degrees < 5
  EXPECT_EQ(r.speed_accuracy, 0.5);   // 6 km/h >= 5
  EXPECT_NEAR(r.angle_mae_deg, 2.0, 1e-12);
  EXPECT_NEAR(r.speed_mae_kmh, 3.0, 1e-12);
  EXPECT_EQ(r.angle_curve.thresholds.size(), 30u);

  const auto path = std::filesystem::temp_directory_path() / "driveflow_curves.csv";
  const AccuracyCurve curves[] = {r.angle_curve, r.speed_curve};
  write_curves_csv(curves, "io", path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kCurveHeader);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_TRUE(line.ends_with(",angle,io") || line.ends_with(",speed,io")) << line;
  }
  EXPECT_EQ(rows, 60u);
  std::filesystem::remove(path);

  const std::string text = format_report(r, cfg);
  EXPECT_NE(text.find("angle_accuracy=1"), std::string::npos) << text;
}

}  // namespace
}  // namespace driveflow
