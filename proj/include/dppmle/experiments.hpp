#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dppmle/errors.hpp"
#include "dppmle/kernel_algebra.hpp"
#include "dppmle/mle.hpp"

namespace dppmle {

// ------------------------------------------------------------ kernel specs

/// Kernel description accepted in configs:
///   {"type": "literal", "n": 2, "entries": [...]}
///   {"type": "tridiagonal", "n": 4, "a": 2.0, "b": 0.9}
///   {"type": "block", "blocks": [<spec>, <spec>, ...]}
/// `path` names the field in error messages.
KernelMatrix kernel_from_spec(const nlohmann::json& spec, const std::string& path = "kernel");

/// Requires a > 0 and a² > 4b², which makes the tridiagonal kernel positive
/// definite for every n.
void validate_tridiagonal(double a, double b, const std::string& path = "kernel");

// -------------------------------------------------------------- fitting

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares of log y on log x. Needs at least 3 points, all
/// coordinates positive.
LineFit fit_loglog_slope(const std::vector<std::pair<double, double>>& points);
/// Least squares of log y on x (exponential growth or decay in x).
LineFit fit_semilog(const std::vector<std::pair<double, double>>& points);

nlohmann::json to_json(const LineFit& f);

// ----------------------------------------------------- curvature scan

struct CurvatureScanConfig {
  double a = 2.0;
  double b = 0.9;
  std::vector<int> sizes{3, 4, 5, 6, 7, 8, 9};
  int max_n = 10;
};

CurvatureScanConfig curvature_scan_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CurvatureScanConfig& c);

struct CurvatureRow {
  int n = 0;
  double min_curvature = 0.0;
  bool reducible = false;
};

struct CurvatureReport {
  CurvatureScanConfig config;
  std::vector<CurvatureRow> rows;
  /// log λ_min ≈ intercept + slope · N over rows with positive curvature;
  /// absent with fewer than 3 such rows.
  std::optional<LineFit> fit;
  bool strictly_decreasing = false;
};

CurvatureReport curvature_scan(const CurvatureScanConfig& config, Exec exec = Exec::parallel);
nlohmann::json to_json(const CurvatureReport& r);
void write_csv(std::ostream& out, const CurvatureReport& r);

// -------------------------------------------------- variance growth

struct VarianceGrowthRow {
  int n = 0;
  double max_variance = 0.0;  // largest eigenvalue of V(L*)
  bool singular = false;
};

struct VarianceGrowthReport {
  CurvatureScanConfig config;
  std::vector<VarianceGrowthRow> rows;
  std::optional<LineFit> fit;  // log max_variance vs N
  bool strictly_increasing = false;
};

VarianceGrowthReport variance_growth(const CurvatureScanConfig& config,
                                     Exec exec = Exec::parallel);
nlohmann::json to_json(const VarianceGrowthReport& r);
void write_csv(std::ostream& out, const VarianceGrowthReport& r);

// ---------------------------------------------------------- rate study

enum class EstimatorMode { mle, oracle };

struct RateStudyConfig {
  nlohmann::json kernel;  // kernel spec, echoed verbatim
  std::vector<std::size_t> sample_sizes{1000, 10000, 100000};
  int replicates = 50;
  std::uint64_t seed = 0;
  MleConfig mle;
  EstimatorMode estimator = EstimatorMode::mle;
};

RateStudyConfig rate_study_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RateStudyConfig& c);

struct RateSlopes {
  std::optional<LineFit> total_mean;
  std::optional<LineFit> total_median;
  std::optional<LineFit> within_mean;
  std::optional<LineFit> within_median;
  std::optional<LineFit> cross_mean;
  std::optional<LineFit> cross_median;
};

struct RateReport {
  RateStudyConfig config;
  std::vector<RiskEstimate> rows;
  RateSlopes slopes;
  /// Set when a sample size failed; rows holds the completed ones.
  std::optional<std::string> failure;
  ExitCode failure_code = ExitCode::success;
};

/// Runs estimate_risk per sample size and fits log-log slopes. `progress`
/// receives one line per completed sample size.
RateReport rate_study(const RateStudyConfig& config, Exec exec = Exec::parallel,
                      std::ostream* progress = nullptr);
nlohmann::json to_json(const RateReport& r);
void write_csv(std::ostream& out, const RateReport& r);
/// replicate-level rows: sample_size, replicate, loss, within, cross,
/// converged, iterations.
void write_replicates_csv(std::ostream& out, const RateReport& r);

/// Estimator returning L* itself.
Estimator oracle_estimator(const KernelMatrix& l_star);

}  // namespace dppmle
