#include "dppmle/experiments.hpp"

#include <cmath>
#include <iomanip>
#include <iostream>
#include <limits>
#include <ostream>
#include <sstream>

#include "dppmle/errors.hpp"
#include "dppmle/info_geometry.hpp"

namespace dppmle {

namespace {

using nlohmann::json;

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw ConfigError("field '" + path + "': " + what);
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

template <class T>
T required(const json& j, const std::string& path, const std::string& key) {
  if (!j.is_object() || !j.contains(key)) field_error(join(path, key), "missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    field_error(join(path, key), "wrong type");
  }
}

template <class T>
T optional_field(const json& j, const std::string& path, const std::string& key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    field_error(join(path, key), "wrong type");
  }
}

void reject_unknown(const json& j, const std::string& path,
                    std::initializer_list<const char*> known) {
  if (!j.is_object()) field_error(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) field_error(join(path, key), "unknown field");
  }
}

std::optional<LineFit> try_fit(const std::vector<std::pair<double, double>>& points,
                               bool loglog) {
  if (points.size() < 3) return std::nullopt;
  for (const auto& [x, y] : points)
    if (!(x > 0.0) || !(y > 0.0)) return std::nullopt;
  return loglog ? fit_loglog_slope(points) : fit_semilog(points);
}

json optional_json(const std::optional<LineFit>& f) {
  return f ? to_json(*f) : json(nullptr);
}

LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const auto count = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= count;
  my /= count;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw NumericalFailure("least squares: all x values coincide");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  // A constant response is fit exactly.
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

}  // namespace

// ------------------------------------------------------------ kernel specs

void validate_tridiagonal(double a, double b, const std::string& path) {
  if (!(a > 0.0 && a * a > 4.0 * b * b))
    field_error(path, "tridiagonal kernel requires a > 0 and a^2 > 4 b^2 (got a = " +
                          std::to_string(a) + ", b = " + std::to_string(b) + ")");
}

KernelMatrix kernel_from_spec(const json& spec, const std::string& path) {
  const auto type = required<std::string>(spec, path, "type");
  try {
    if (type == "literal") {
      reject_unknown(spec, path, {"type", "n", "entries"});
      return KernelMatrix(matrix_from_json(spec, &std::cerr));
    }
    if (type == "tridiagonal") {
      reject_unknown(spec, path, {"type", "n", "a", "b"});
      const int n = required<int>(spec, path, "n");
      const double a = required<double>(spec, path, "a");
      const double b = required<double>(spec, path, "b");
      if (n < 1 || n > kMaxGroundSet) field_error(join(path, "n"), "out of range");
      validate_tridiagonal(a, b, path);
      return tridiagonal_kernel(n, a, b);
    }
    if (type == "block") {
      reject_unknown(spec, path, {"type", "blocks"});
      if (!spec.contains("blocks") || !spec.at("blocks").is_array() || spec.at("blocks").empty())
        field_error(join(path, "blocks"), "must be a non-empty array");
      std::vector<KernelMatrix> blocks;
      const auto& arr = spec.at("blocks");
      for (std::size_t i = 0; i < arr.size(); ++i)
        blocks.push_back(kernel_from_spec(arr[i], join(path, "blocks[" + std::to_string(i) + "]")));
      return block_diagonal_kernel(blocks);
    }
  } catch (const InvalidKernel& e) {
    field_error(path, e.what());
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.rfind("field '", 0) == 0) throw;
    field_error(path, what);
  }
  field_error(join(path, "type"), "unknown kernel type '" + type + "'");
}

// -------------------------------------------------------------- fitting

LineFit fit_loglog_slope(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) throw InsufficientPoints(points.size());
  std::vector<double> x, y;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!(points[i].first > 0.0) || !(points[i].second > 0.0)) throw NonpositiveValue(i);
    x.push_back(std::log(points[i].first));
    y.push_back(std::log(points[i].second));
  }
  return least_squares(x, y);
}

LineFit fit_semilog(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) throw InsufficientPoints(points.size());
  std::vector<double> x, y;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!(points[i].second > 0.0)) throw NonpositiveValue(i);
    x.push_back(points[i].first);
    y.push_back(std::log(points[i].second));
  }
  return least_squares(x, y);
}

nlohmann::json to_json(const LineFit& f) {
  return {{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}};
}

// ----------------------------------------------------- curvature scan

CurvatureScanConfig curvature_scan_config_from_json(const json& j) {
  reject_unknown(j, "", {"a", "b", "sizes", "max_n"});
  CurvatureScanConfig c;
  c.a = optional_field(j, "", "a", c.a);
  c.b = optional_field(j, "", "b", c.b);
  c.sizes = optional_field(j, "", "sizes", c.sizes);
  c.max_n = optional_field(j, "", "max_n", c.max_n);
  validate_tridiagonal(c.a, c.b, "a/b");
  if (c.sizes.empty()) field_error("sizes", "must not be empty");
  for (std::size_t i = 0; i < c.sizes.size(); ++i) {
    if (c.sizes[i] < 1) field_error("sizes", "entries must be positive");
    if (i > 0 && c.sizes[i] <= c.sizes[i - 1]) field_error("sizes", "must be strictly increasing");
  }
  if (c.max_n > kMaxHessianGroundSet) throw GroundSetTooLarge(c.max_n, kMaxHessianGroundSet);
  if (c.sizes.back() > c.max_n) throw GroundSetTooLarge(c.sizes.back(), c.max_n);
  return c;
}

nlohmann::json to_json(const CurvatureScanConfig& c) {
  return {{"a", c.a}, {"b", c.b}, {"sizes", c.sizes}, {"max_n", c.max_n}};
}

CurvatureReport curvature_scan(const CurvatureScanConfig& config, Exec exec) {
  CurvatureReport report;
  report.config = config;
  std::vector<std::pair<double, double>> points;
  for (int n : config.sizes) {
    if (n > config.max_n) throw GroundSetTooLarge(n, config.max_n);
    const auto c = min_curvature(tridiagonal_kernel(n, config.a, config.b), exec);
    report.rows.push_back({n, c.value, c.reducible});
    if (!c.reducible && c.value > 0.0) points.emplace_back(n, c.value);
  }
  report.fit = try_fit(points, false);
  report.strictly_decreasing = points.size() >= 2;
  for (std::size_t i = 1; i < points.size(); ++i)
    report.strictly_decreasing = report.strictly_decreasing && points[i].second < points[i - 1].second;
  return report;
}

nlohmann::json to_json(const CurvatureReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"n", row.n}, {"min_curvature", row.min_curvature}, {"reducible", row.reducible}});
  return {{"config", to_json(r.config)},
          {"rows", rows},
          {"fit", optional_json(r.fit)},
          {"strictly_decreasing", r.strictly_decreasing}};
}

void write_csv(std::ostream& out, const CurvatureReport& r) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "n,min_curvature,reducible\n";
  for (const auto& row : r.rows) out << row.n << ',' << row.min_curvature << ',' << row.reducible << '\n';
}

// -------------------------------------------------- variance growth

VarianceGrowthReport variance_growth(const CurvatureScanConfig& config, Exec exec) {
  VarianceGrowthReport report;
  report.config = config;
  std::vector<std::pair<double, double>> points;
  bool any_singular = false;
  for (int n : config.sizes) {
    if (n > config.max_n) throw GroundSetTooLarge(n, config.max_n);
    VarianceGrowthRow row{n, 0.0, false};
    try {
      const Matrix v = asymptotic_covariance(tridiagonal_kernel(n, config.a, config.b), exec);
      Eigen::SelfAdjointEigenSolver<Matrix> eig(v, Eigen::EigenvaluesOnly);
      row.max_variance = eig.eigenvalues().maxCoeff();
      points.emplace_back(n, row.max_variance);
    } catch (const SingularInformation&) {
      row.singular = true;
      any_singular = true;
    }
    report.rows.push_back(row);
  }
  if (!any_singular) report.fit = try_fit(points, false);
  report.strictly_increasing = !any_singular && points.size() >= 2;
  for (std::size_t i = 1; i < points.size(); ++i)
    report.strictly_increasing = report.strictly_increasing && points[i].second > points[i - 1].second;
  return report;
}

nlohmann::json to_json(const VarianceGrowthReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"n", row.n}, {"max_variance", row.max_variance}, {"singular", row.singular}});
  return {{"config", to_json(r.config)},
          {"rows", rows},
          {"fit", optional_json(r.fit)},
          {"strictly_increasing", r.strictly_increasing}};
}

void write_csv(std::ostream& out, const VarianceGrowthReport& r) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "n,max_variance,singular\n";
  for (const auto& row : r.rows) out << row.n << ',' << row.max_variance << ',' << row.singular << '\n';
}

// ---------------------------------------------------------- rate study

RateStudyConfig rate_study_config_from_json(const json& j) {
  reject_unknown(j, "", {"kernel", "sample_sizes", "replicates", "seed", "mle", "estimator"});
  RateStudyConfig c;
  if (!j.contains("kernel")) field_error("kernel", "missing");
  c.kernel = j.at("kernel");
  kernel_from_spec(c.kernel, "kernel");
  c.sample_sizes = optional_field(j, "", "sample_sizes", c.sample_sizes);
  c.replicates = optional_field(j, "", "replicates", c.replicates);
  c.seed = optional_field(j, "", "seed", c.seed);
  if (j.contains("mle")) {
    try {
      c.mle = mle_config_from_json(j.at("mle"));
    } catch (const ConfigError& e) {
      field_error("mle", e.what());
    }
  }
  const auto estimator = optional_field<std::string>(j, "", "estimator", "mle");
  if (estimator == "mle") c.estimator = EstimatorMode::mle;
  else if (estimator == "oracle") c.estimator = EstimatorMode::oracle;
  else field_error("estimator", "must be 'mle' or 'oracle'");
  if (c.sample_sizes.empty()) field_error("sample_sizes", "must not be empty");
  for (std::size_t i = 0; i < c.sample_sizes.size(); ++i) {
    if (c.sample_sizes[i] < 1) field_error("sample_sizes", "entries must be positive");
    if (i > 0 && c.sample_sizes[i] <= c.sample_sizes[i - 1])
      field_error("sample_sizes", "must be strictly increasing");
  }
  if (c.replicates < 2) field_error("replicates", "must be at least 2");
  return c;
}

nlohmann::json to_json(const RateStudyConfig& c) {
  return {{"kernel", c.kernel},
          {"sample_sizes", c.sample_sizes},
          {"replicates", c.replicates},
          {"seed", c.seed},
          {"mle", to_json(c.mle)},
          {"estimator", c.estimator == EstimatorMode::mle ? "mle" : "oracle"}};
}

Estimator oracle_estimator(const KernelMatrix& l_star) {
  return [l_star](const EmpiricalTable& freqs, const MleConfig&) {
    MleResult r{l_star, 0.0, 0, false, 0, 0.0, {}};
    r.log_likelihood = empirical_log_likelihood(freqs, l_star);
    r.converged = true;
    return r;
  };
}

RateReport rate_study(const RateStudyConfig& config, Exec exec, std::ostream* progress) {
  const KernelMatrix l_star = kernel_from_spec(config.kernel, "kernel");
  RateReport report;
  report.config = config;
  RiskOptions options;
  options.exec = exec;
  if (config.estimator == EstimatorMode::oracle) options.estimator = oracle_estimator(l_star);

  for (std::size_t n : config.sample_sizes) {
    try {
      report.rows.push_back(
          estimate_risk(l_star, n, config.replicates, config.mle, config.seed, options));
    } catch (const Error& e) {
      report.failure = "sample size " + std::to_string(n) + ": " + e.what();
      report.failure_code = e.exit_code();
      break;
    }
    if (progress != nullptr) {
      const auto& row = report.rows.back();
      *progress << "n=" << n << " replicates=" << row.replicates << " mean_loss=" << row.mean_loss
                << " median_cross=" << row.median_cross << " nonconverged=" << row.nonconverged
                << std::endl;
    }
  }

  auto points = [&](auto member) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& row : report.rows) pts.emplace_back(static_cast<double>(row.sample_size), row.*member);
    return pts;
  };
  report.slopes.total_mean = try_fit(points(&RiskEstimate::mean_loss), true);
  report.slopes.total_median = try_fit(points(&RiskEstimate::median_loss), true);
  report.slopes.within_mean = try_fit(points(&RiskEstimate::mean_within), true);
  report.slopes.within_median = try_fit(points(&RiskEstimate::median_within), true);
  report.slopes.cross_mean = try_fit(points(&RiskEstimate::mean_cross), true);
  report.slopes.cross_median = try_fit(points(&RiskEstimate::median_cross), true);
  return report;
}

nlohmann::json to_json(const RateReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    json j = to_json(row);
    j.erase("per_replicate");
    rows.push_back(j);
  }
  const auto& s = r.slopes;
  return {{"config", to_json(r.config)},
          {"rows", rows},
          {"slopes",
           {{"total", optional_json(s.total_mean)},
            {"within", optional_json(s.within_mean)},
            {"cross", optional_json(s.cross_median)},
            {"total_median", optional_json(s.total_median)},
            {"within_median", optional_json(s.within_median)},
            {"cross_mean", optional_json(s.cross_mean)}}},
          {"slope_statistics", {{"total", "mean"}, {"within", "mean"}, {"cross", "median"}}},
          {"blockwise_signs", "within and cross evaluated at the sign vector minimizing the total loss"},
          {"failure", r.failure ? json(*r.failure) : json(nullptr)}};
}

void write_csv(std::ostream& out, const RateReport& r) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "sample_size,mean_loss,std_error,median_loss,mean_within,mean_cross,median_within,"
         "median_cross,nonconverged\n";
  for (const auto& row : r.rows)
    out << row.sample_size << ',' << row.mean_loss << ',' << row.std_error << ',' << row.median_loss
        << ',' << row.mean_within << ',' << row.mean_cross << ',' << row.median_within << ','
        << row.median_cross << ',' << row.nonconverged << '\n';
}

void write_replicates_csv(std::ostream& out, const RateReport& r) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "sample_size,replicate,loss,within,cross,converged,iterations\n";
  for (const auto& row : r.rows)
    for (std::size_t i = 0; i < row.per_replicate.size(); ++i) {
      const auto& o = row.per_replicate[i];
      out << row.sample_size << ',' << i << ',' << o.loss << ',' << o.within << ',' << o.cross
          << ',' << o.converged << ',' << o.iterations << '\n';
    }
}

}  // namespace dppmle
