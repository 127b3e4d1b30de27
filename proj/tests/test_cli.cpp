#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("dpp_mle_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

void write(const std::string& name, const std::string& text) { std::ofstream(path(name)) << text; }

std::string slurp(const std::string& name) {
  std::ifstream in(path(name));
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Runs the CLI; returns its exit status. Output goes to `log`.
int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + DPP_MLE_BINARY + " " + args + " > " + path("log") + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kIdentity2 = R"({"type": "literal", "n": 2, "entries": [[1, 0], [0, 1]]})";
const char* kTri3 = R"({"type": "tridiagonal", "n": 3, "a": 2.0, "b": 0.5})";

}  // namespace

TEST_CASE("simulate is deterministic and writes a normalized table") {
  write("sim.json", std::string(R"({"kernel": )") + kIdentity2 + R"(, "count": 4, "seed": 17})");
  REQUIRE(run("simulate --config " + path("sim.json") + " --out " + path("sim_a")) == 0);
  REQUIRE(run("simulate --config " + path("sim.json") + " --out " + path("sim_b")) == 0);
  CHECK(slurp("sim_a/samples.json") == slurp("sim_b/samples.json"));
  CHECK(json::parse(slurp("sim_a/samples.json"))["draws"].size() == 4);
  CHECK(json::parse(slurp("sim_a/simulate_config.json"))["seed"] == 17);

  std::istringstream table(slurp("sim_a/table.csv"));
  std::string line;
  std::getline(table, line);
  CHECK(line == "mask,probability");
  double total = 0.0;
  while (std::getline(table, line)) total += std::stod(line.substr(line.find(',') + 1));
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));

  // --seed overrides the config.
  REQUIRE(run("simulate --config " + path("sim.json") + " --seed 18 --out " + path("sim_c")) == 0);
  CHECK(json::parse(slurp("sim_c/samples.json"))["seed"] == 18);
}

TEST_CASE("config errors exit with 2") {
  write("bad_tri.json", R"({"kernel": {"type": "tridiagonal", "n": 3, "a": 1.0, "b": 0.5}, "count": 10})");
  CHECK(run("simulate --config " + path("bad_tri.json") + " --out " + path("x")) == 2);
  CHECK(slurp("log").find("a^2 > 4 b^2") != std::string::npos);

  write("broken.json", "{\"a\": 2,\n");
  CHECK(run("curvature-scan --config " + path("broken.json") + " --out " + path("x")) == 2);
  CHECK(slurp("log").find("line 2") != std::string::npos);

  CHECK(run("no-such-command") == 2);
  CHECK(run("verify-identities --out " + path("x"), "DPP_MLE_THREADS=zero") == 2);
}

TEST_CASE("budget errors exit with 3") {
  write("big.json", R"({"sizes": [3, 11]})");
  CHECK(run("curvature-scan --config " + path("big.json") + " --out " + path("x")) == 3);
}

TEST_CASE("estimate") {
  write("sim3.json", std::string(R"({"kernel": )") + kTri3 + R"(, "count": 2000, "seed": 4})");
  REQUIRE(run("simulate --config " + path("sim3.json") + " --out " + path("sim3")) == 0);

  write("est.json", std::string(R"({"true_kernel": )") + kTri3 + "}");
  REQUIRE(run("estimate --config " + path("est.json") + " --samples " + path("sim3/samples.json") +
              " --out " + path("est_a")) == 0);
  REQUIRE(run("estimate --config " + path("est.json") + " --samples " + path("sim3/samples.json") +
              " --out " + path("est_b")) == 0);
  json a = json::parse(slurp("est_a/estimate.json"));
  json b = json::parse(slurp("est_b/estimate.json"));
  CHECK(std::isfinite(a["loss"].get<double>()));
  CHECK(a.contains("blockwise_loss"));
  a.erase("generated_at");
  b.erase("generated_at");
  CHECK(a.dump() == b.dump());

  REQUIRE(run("estimate --config " + path("est.json") + " --table " + path("sim3/table.csv") +
              " --out " + path("est_t")) == 0);
  CHECK(json::parse(slurp("est_t/estimate.json"))["loss"].get<double>() <= 1e-4);

  write("est4.json", R"({"true_kernel": {"type": "tridiagonal", "n": 4, "a": 2.0, "b": 0.5}})");
  CHECK(run("estimate --config " + path("est4.json") + " --samples " + path("sim3/samples.json") +
            " --out " + path("x")) == 2);
  CHECK(run("estimate --out " + path("x")) == 2);
}

TEST_CASE("hessian dump") {
  write("hess.json", R"({"kernel": {"type": "block", "blocks": [
      {"type": "tridiagonal", "n": 2, "a": 2.0, "b": 0.5},
      {"type": "literal", "n": 1, "entries": [2.0]}]}})");
  REQUIRE(run("hessian --config " + path("hess.json") + " --out " + path("hess")) == 0);
  const json ns = json::parse(slurp("hess/null_space.json"));
  CHECK(ns["dimension"] == 2);
  CHECK(ns["pairs"] == json::parse("[[0, 2], [1, 2]]"));
  CHECK(slurp("hess/hessian_eigenvalues.csv").rfind("index,eigenvalue\n", 0) == 0);
}

TEST_CASE("experiment commands") {
  write("scan.json", R"({"a": 2.0, "b": 0.9, "sizes": [3, 4, 5, 6]})");
  REQUIRE(run("curvature-scan --config " + path("scan.json") + " --out " + path("scan")) == 0);
  const json scan = json::parse(slurp("scan/curvature_scan.json"));
  CHECK(scan["strictly_decreasing"] == true);
  CHECK(scan["config"]["max_n"] == 10);

  REQUIRE(run("variance-growth --config " + path("scan.json") + " --out " + path("growth")) == 0);
  CHECK(json::parse(slurp("growth/variance_growth.json"))["strictly_increasing"] == true);

  write("rate.json", std::string(R"({"kernel": )") + kTri3 +
                         R"(, "sample_sizes": [100, 1000, 10000], "replicates": 3, "estimator": "oracle"})");
  REQUIRE(run("rate-study --config " + path("rate.json") + " --out " + path("rate") + " --threads 2") == 0);
  const json rate = json::parse(slurp("rate/rate_study.json"));
  CHECK(rate["slopes"]["total"].is_null());
  CHECK(rate["config"]["estimator"] == "oracle");

  REQUIRE(run("verify-identities --out " + path("ids"), "DPP_MLE_THREADS=2") == 0);
  CHECK(json::parse(slurp("ids/identities.json"))["passed"] == true);
}
