// dpp_mle: experiment runner for L-ensemble maximum likelihood.
//
//   dpp_mle <command> [--config cfg.json] [--seed S] [--out DIR] [--threads T]
//
// Every report embeds the resolved config. DPP_MLE_THREADS overrides
// --threads. Exit codes: 0 ok, 2 config error, 3 budget exceeded,
// 4 numerical failure.

#include <omp.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dppmle/dpp_model.hpp"
#include "dppmle/errors.hpp"
#include "dppmle/experiments.hpp"
#include "dppmle/info_geometry.hpp"
#include "dppmle/kernel_algebra.hpp"
#include "dppmle/mle.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dppmle;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  int threads = 0;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    // e.what() carries the line and column.
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

fs::path out_file(const Common& c, const std::string& name) {
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw ConfigError("cannot create output directory '" + c.out + "': " + ec.message());
  return fs::path(c.out) / name;
}

std::ofstream open_out(const Common& c, const std::string& name) {
  const auto path = out_file(c, name);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

void write_json(const Common& c, const std::string& name, const json& j) {
  auto out = open_out(c, name);
  out << j.dump(2) << '\n';
}

void reject_unknown(const json& j, std::initializer_list<const char*> known) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("field '" + key + "': unknown field");
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("field '") + key + "': wrong type");
  }
}

void apply_threads(const Common& c) {
  int threads = c.threads;
  if (const char* env = std::getenv("DPP_MLE_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw ConfigError("DPP_MLE_THREADS must be a positive integer");
    threads = static_cast<int>(v);
  }
  if (threads < 0) throw ConfigError("--threads must be positive");
  if (threads > 0) omp_set_num_threads(threads);
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

void write_matrix_csv(std::ostream& out, const Matrix& m) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << '\n';
  }
}

// ---------------------------------------------------------------- commands

int cmd_simulate(const Common& c) {
  json cfg = load_config(c.config_path);
  reject_unknown(cfg, {"kernel", "count", "seed", "stream"});
  if (!cfg.contains("kernel")) throw ConfigError("field 'kernel': missing");
  const KernelMatrix l = kernel_from_spec(cfg.at("kernel"), "kernel");
  const auto count = get_or<std::uint64_t>(cfg, "count", 1000);
  const auto seed = c.seed.value_or(get_or<std::uint64_t>(cfg, "seed", 0));
  const auto stream = get_or<std::uint64_t>(cfg, "stream", 0);
  if (count == 0) throw ConfigError("field 'count': must be positive");

  const DppTable table = build_table(l);
  const SampleBatch batch = sample(table, count, seed, stream);

  json echo = cfg;
  echo["count"] = count;
  echo["seed"] = seed;
  echo["stream"] = stream;
  write_json(c, "samples.json", to_json(batch));
  {
    auto out = open_out(c, "table.csv");
    write_probability_csv(out, table.probs());
  }
  write_json(c, "simulate_config.json", echo);
  std::cout << "wrote " << count << " draws (n = " << l.size() << ") to " << c.out << '\n';
  return 0;
}

int cmd_estimate(const Common& c, const std::string& samples_flag, const std::string& table_flag) {
  json cfg = load_config(c.config_path);
  reject_unknown(cfg, {"samples", "table", "true_kernel", "mle"});
  std::string samples_path = samples_flag.empty() ? get_or<std::string>(cfg, "samples", "") : samples_flag;
  std::string table_path = table_flag.empty() ? get_or<std::string>(cfg, "table", "") : table_flag;
  if (samples_path.empty() == table_path.empty())
    throw ConfigError("exactly one of 'samples' and 'table' must be given");

  MleConfig mle;
  if (cfg.contains("mle")) mle = mle_config_from_json(cfg.at("mle"));
  if (c.seed) mle.seed = *c.seed;

  EmpiricalTable freqs;
  std::string input;
  if (!samples_path.empty()) {
    std::ifstream in(samples_path);
    if (!in) throw ConfigError("cannot open samples '" + samples_path + "'");
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("samples '" + samples_path + "': " + e.what());
    }
    freqs = empirical_table(sample_batch_from_json(j));
    input = samples_path;
  } else {
    std::ifstream in(table_path);
    if (!in) throw ConfigError("cannot open table '" + table_path + "'");
    freqs = read_probability_csv(in);
    input = table_path;
  }

  std::optional<KernelMatrix> truth;
  if (cfg.contains("true_kernel")) {
    truth = kernel_from_spec(cfg.at("true_kernel"), "true_kernel");
    if (truth->size() != freqs.n)
      throw ConfigError("true_kernel has n = " + std::to_string(truth->size()) +
                        " but the data has n = " + std::to_string(freqs.n));
  }

  const MleResult result = fit_mle(freqs, mle);
  json report = {{"config",
                  {{"samples", samples_path.empty() ? json(nullptr) : json(samples_path)},
                   {"table", table_path.empty() ? json(nullptr) : json(table_path)},
                   {"true_kernel", cfg.contains("true_kernel") ? cfg.at("true_kernel") : json(nullptr)},
                   {"mle", to_json(mle)}}},
                 {"n", freqs.n},
                 {"sample_count", freqs.sample_count},
                 {"result", to_json(result)}};
  if (truth) {
    const auto loss = sign_orbit_loss(result.estimate, *truth);
    const auto block = blockwise_loss(result.estimate.entries(), truth->entries(),
                                      determinantal_graph(truth->entries()));
    report["loss"] = loss.value;
    report["loss_signs"] = loss.argmin_signs.signs();
    report["blockwise_loss"] = {{"total", block.total}, {"within", block.within}, {"cross", block.cross}};
  }
  report["generated_at"] = timestamp();
  write_json(c, "estimate.json", report);
  std::cout << "log-likelihood " << result.log_likelihood << ", converged "
            << (result.converged ? "yes" : "no") << " (input " << input << ")\n";
  if (report.contains("loss")) std::cout << "sign-orbit loss " << report["loss"].get<double>() << '\n';
  return 0;
}

int cmd_hessian(const Common& c) {
  json cfg = load_config(c.config_path);
  reject_unknown(cfg, {"kernel"});
  if (!cfg.contains("kernel")) throw ConfigError("field 'kernel': missing");
  const KernelMatrix l = kernel_from_spec(cfg.at("kernel"), "kernel");
  if (l.size() > kMaxHessianGroundSet) throw GroundSetTooLarge(l.size(), kMaxHessianGroundSet);

  const DppTable table = build_table(l);
  const HessianForm h = hessian_matrix(table);
  const DeterminantalGraph graph = determinantal_graph(l.entries());
  const NullSpaceBasis null_space = null_space_basis(graph);

  json pairs = json::array();
  for (const auto& [i, j] : null_space.pairs) pairs.push_back({i, j});
  json basis = json::array();
  for (const auto& b : null_space.basis) {
    const Vector v = b.coords();
    basis.push_back(std::vector<double>(v.data(), v.data() + v.size()));
  }
  json components = json::array();
  for (const auto& comp : graph.components) components.push_back(comp);
  const auto coord_pairs = symmetric_basis_pairs(l.size());
  json coords = json::array();
  for (const auto& [i, j] : coord_pairs) coords.push_back({i, j});

  write_json(c, "null_space.json",
             {{"config", cfg}, {"components", components}, {"coordinates", coords},
              {"dimension", null_space.dimension()}, {"pairs", pairs}, {"basis", basis}});
  {
    auto out = open_out(c, "hessian_eigenvalues.csv");
    out << std::setprecision(std::numeric_limits<double>::max_digits10) << "index,eigenvalue\n";
    for (Eigen::Index i = 0; i < h.eigenvalues.size(); ++i) out << i << ',' << h.eigenvalues(i) << '\n';
  }
  {
    auto out = open_out(c, "hessian_matrix.csv");
    write_matrix_csv(out, h.matrix);
  }
  std::cout << "hessian " << h.matrix.rows() << "x" << h.matrix.cols() << ", eigenvalues in ["
            << h.eigenvalues.minCoeff() << ", " << h.eigenvalues.maxCoeff() << "], null space dimension "
            << null_space.dimension() << '\n';
  return 0;
}

int cmd_curvature_scan(const Common& c) {
  const auto config = curvature_scan_config_from_json(load_config(c.config_path));
  const auto report = curvature_scan(config);
  write_json(c, "curvature_scan.json", to_json(report));
  {
    auto out = open_out(c, "curvature_scan.csv");
    write_csv(out, report);
  }
  for (const auto& row : report.rows)
    std::cout << "N=" << row.n << " min_curvature=" << row.min_curvature
              << (row.reducible ? " (reducible)" : "") << '\n';
  if (report.fit)
    std::cout << "fit: slope " << report.fit->slope << ", intercept " << report.fit->intercept
              << ", R^2 " << report.fit->r2 << '\n';
  return 0;
}

int cmd_variance_growth(const Common& c) {
  const auto config = curvature_scan_config_from_json(load_config(c.config_path));
  const auto report = variance_growth(config);
  write_json(c, "variance_growth.json", to_json(report));
  {
    auto out = open_out(c, "variance_growth.csv");
    write_csv(out, report);
  }
  for (const auto& row : report.rows)
    std::cout << "N=" << row.n << " max_variance=" << row.max_variance
              << (row.singular ? " (singular)" : "") << '\n';
  if (report.fit)
    std::cout << "fit: slope " << report.fit->slope << ", R^2 " << report.fit->r2 << '\n';
  return 0;
}

int cmd_rate_study(const Common& c) {
  json cfg = load_config(c.config_path);
  if (c.seed) cfg["seed"] = *c.seed;
  const auto config = rate_study_config_from_json(cfg);
  const auto report = rate_study(config, Exec::parallel, &std::cerr);
  // Partial results are written even when a sample size failed.
  write_json(c, "rate_study.json", to_json(report));
  {
    auto out = open_out(c, "rate_study.csv");
    write_csv(out, report);
  }
  {
    auto out = open_out(c, "rate_study_replicates.csv");
    write_replicates_csv(out, report);
  }
  auto show = [](const char* name, const std::optional<LineFit>& f) {
    std::cout << name << " slope: ";
    if (f) std::cout << f->slope << " (R^2 " << f->r2 << ")\n";
    else std::cout << "null\n";
  };
  show("total (mean)", report.slopes.total_mean);
  show("within (mean)", report.slopes.within_mean);
  show("cross (median)", report.slopes.cross_median);
  if (report.failure) {
    std::cerr << "rate-study stopped: " << *report.failure << '\n';
    return static_cast<int>(report.failure_code);
  }
  return 0;
}

int cmd_verify_identities(const Common& c) {
  json cfg = load_config(c.config_path);
  reject_unknown(cfg, {"trials", "n_min", "n_max", "seed", "tolerance"});
  const int trials = get_or(cfg, "trials", 100);
  const int n_min = get_or(cfg, "n_min", 2);
  const int n_max = get_or(cfg, "n_max", 8);
  const double tolerance = get_or(cfg, "tolerance", 1e-9);
  const auto seed = c.seed.value_or(get_or<std::uint64_t>(cfg, "seed", 0));
  if (trials < 1) throw ConfigError("field 'trials': must be positive");
  if (n_min < 1 || n_max < n_min) throw ConfigError("fields 'n_min'/'n_max': need 1 <= n_min <= n_max");
  if (n_max > SubsetInverseCache::kMaxGroundSet)
    throw GroundSetTooLarge(n_max, SubsetInverseCache::kMaxGroundSet);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_n(n_min, n_max);
  json rows = json::array();
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const int n = pick_n(rng);
    const KernelMatrix l = random_kernel(n, rng);
    const SymmetricDirection h = random_direction(n, rng);
    const auto r = identity_residuals(l, h);
    worst = std::max(worst, r.worst_relative());
    json row = to_json(r);
    row["trial"] = t;
    row["n"] = n;
    rows.push_back(row);
  }
  const bool ok = worst <= tolerance;
  write_json(c, "identities.json",
             {{"config", {{"trials", trials}, {"n_min", n_min}, {"n_max", n_max}, {"seed", seed},
                          {"tolerance", tolerance}}},
              {"worst_relative", worst},
              {"passed", ok},
              {"trials", rows}});
  std::cout << trials << " trials, worst relative residual " << worst << (ok ? " (ok)" : " (FAILED)") << '\n';
  return ok ? 0 : static_cast<int>(ExitCode::numerical_failure);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Maximum likelihood experiments for L-ensemble DPPs"};
  app.require_subcommand(1);
  Common common;
  std::uint64_t seed = 0;
  std::string samples, table;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Seed (overrides the config)");
    sub->add_option("--out", common.out, "Output directory")->capture_default_str();
    sub->add_option("--threads", common.threads, "OpenMP threads (0 = runtime default)");
  };

  auto* simulate = app.add_subcommand("simulate", "Draw samples and write the exact probability table");
  auto* estimate = app.add_subcommand("estimate", "Fit the MLE to samples or a probability table");
  auto* hessian = app.add_subcommand("hessian", "Dump the Hessian at L* and its null space");
  auto* curvature = app.add_subcommand("curvature-scan", "Minimum curvature along tridiagonal kernels");
  auto* rate = app.add_subcommand("rate-study", "Monte Carlo risk against sample size");
  auto* growth = app.add_subcommand("variance-growth", "Largest asymptotic variance against N");
  auto* identities = app.add_subcommand("verify-identities", "Check the normalization identities");
  for (auto* sub : {simulate, estimate, hessian, curvature, rate, growth, identities}) add_common(sub);
  estimate->add_option("--samples", samples, "samples.json from simulate");
  estimate->add_option("--table", table, "probability table CSV (exact weights)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::config_error);
  }

  for (auto* sub : app.get_subcommands())
    if (sub->count("--seed") > 0) common.seed = seed;

  try {
    apply_threads(common);
    if (*simulate) return cmd_simulate(common);
    if (*estimate) return cmd_estimate(common, samples, table);
    if (*hessian) return cmd_hessian(common);
    if (*curvature) return cmd_curvature_scan(common);
    if (*rate) return cmd_rate_study(common);
    if (*growth) return cmd_variance_growth(common);
    if (*identities) return cmd_verify_identities(common);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::numerical_failure);
  }
  return 0;
}
