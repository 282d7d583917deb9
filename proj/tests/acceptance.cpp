// Acceptance gate: ten end-to-end criteria covering sampling fidelity,
// gradient correctness, analytic baselines, trajectory-count scaling,
// desk-scale benchmark runs, exact cost contracts, feasibility, determinism,
// and the discrete domain.  Each criterion prints one summary line:
//
//   ACCEPTANCE cN: PASS|FAIL - <details>
//
// Run a single criterion with its tag, e.g.  ./acceptance "[c5]".

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lookahes/acquisition.hpp"
#include "lookahes/config.hpp"
#include "lookahes/runner.hpp"
#include "lookahes/selfcheck.hpp"

namespace fs = std::filesystem;
using namespace lookahes;

namespace {

using Clock = std::chrono::steady_clock;

double secs_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int n, bool pass, const std::string& detail) {
  std::printf("ACCEPTANCE c%d: %s - %s\n", n, pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
}

double median3(std::vector<double> v) {
  REQUIRE(v.size() == 3);
  std::sort(v.begin(), v.end());
  return v[1];
}

RunResult run_from_toml(const std::string& toml, std::uint64_t seed) {
  return run_experiment(parse_config(toml), seed);
}

std::string fmt(double v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

// --- CLI helpers (criterion 9 drives the real binary). ---------------------

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(LOOKAHES_CLI) + " " + args + " > /dev/null 2> /dev/null";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  REQUIRE(WIFEXITED(rc));
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_tmp(const std::string& name, const std::string& text) {
  const fs::path p = fs::temp_directory_path() / ("lookahes_acc_" + name);
  std::ofstream out(p, std::ios::binary);
  REQUIRE(out.good());
  out << text;
  return p;
}

// --- Shared fixtures. -------------------------------------------------------

Dataset fixture_data_2d(int n) {
  Dataset data;
  SeedStream s(424242);
  for (int i = 0; i < n; ++i) {
    VectorXd x(2);
    x << s.uniform(0.1, 0.9), s.uniform(0.1, 0.9);
    data.append(x, std::sin(3.0 * x[0]) * std::cos(2.0 * x[1]), 0.0);
  }
  return data;
}

// Naive iterative-fantasization baseline: condition a fresh model on every
// fantasized branch (k = 2 children per level) and count the visited leaves.
long tree_leaves(const KernelSpec& spec, const MatrixXd& X, const VectorXd& y,
                 const VectorXd& q, int depth) {
  if (depth == 0) return 1;
  const GpModel gp = condition_gp(spec, y.mean(), X, y);
  const auto [mu, var] = posterior(gp, q);
  const double sd = std::sqrt(std::max(var, 0.0));
  long total = 0;
  for (const double fy : {mu - sd, mu + sd}) {
    MatrixXd X2(X.rows(), X.cols() + 1);
    X2 << X, q;
    VectorXd y2(y.size() + 1);
    y2 << y, fy;
    VectorXd q2 = q;
    for (Eigen::Index i = 0; i < q2.size(); ++i)
      q2[i] = std::fmod(q2[i] + 0.37, 1.0);
    total += tree_leaves(spec, X2, y2, q2, depth - 1);
  }
  return total;
}

// --- Experiment protocols (desk scale). -------------------------------------

std::string c5_toml(const std::string& kind) {
  return "[env]\nname = \"ackley2\"\nnoise_sigma = 0.05\n"
         "[cost]\nkind = \"spotlight\"\nr = 0.1\nlambda = 1.0\n"
         "[acquisition]\nkind = \"" + kind +
         "\"\nhorizon = 20\nrestarts = 16\ngrad_steps = 200\n"
         "[run]\nn_init = 50\nsteps = 100\nthreads = 1\n";
}

std::string c6_toml(int horizon) {
  return "[env]\nname = \"syngp\"\nnoise_sigma = 0.01\n"
         "[cost]\nkind = \"spotlight\"\nr = 0.1\nlambda = 1.0\n"
         "[acquisition]\nkind = \"lookahes\"\nhorizon = " +
         std::to_string(horizon) +
         "\nrestarts = 16\ngrad_steps = 150\n"
         "[run]\nn_init = 10\nsteps = 30\nthreads = 1\n";
}

std::string c10_toml(const std::string& kind) {
  return "[env]\nname = \"syngp_discrete\"\ncategories = 20\n"
         "noise_sigma = 0.01\n"
         "[cost]\nkind = \"spotlight\"\nr = 0.1\nlambda = 1.0\n"
         "[acquisition]\nkind = \"" + kind +
         "\"\nhorizon = 4\nrestarts = 16\ngrad_steps = 100\n"
         "[run]\nn_init = 10\nsteps = 18\nthreads = 1\n";
}

}  // namespace

// ---------------------------------------------------------------------------

TEST_CASE("c1: pathwise samples reproduce the exact posterior at scale",
          "[c1]") {
  const auto t0 = Clock::now();
  const std::vector<CheckResult> checks = run_matheron_suite(4096, 2048, 8);
  const double secs = secs_since(t0);
  bool pass = secs < 30.0;
  std::ostringstream d;
  for (const CheckResult& c : checks) {
    pass = pass && c.pass;
    d << c.name << " = " << c.measured << " (< " << c.threshold << "); ";
  }
  d << "runtime " << fmt(secs) << " s (< 30)";
  report(1, pass, d.str());
  for (const CheckResult& c : checks) {
    INFO(c.name << ": measured " << c.measured << ", threshold "
                << c.threshold);
    CHECK(c.pass);
  }
  CHECK(secs < 30.0);
}

TEST_CASE("c2: analytic gradients match central finite differences", "[c2]") {
  const std::vector<CheckResult> checks = run_gradient_suite(100);
  bool pass = true;
  std::ostringstream d;
  for (const CheckResult& c : checks) {
    pass = pass && c.pass;
    d << c.name << " = " << c.measured << " (< " << c.threshold << "); ";
  }
  report(2, pass, d.str());
  for (const CheckResult& c : checks) {
    INFO(c.name << ": measured " << c.measured << ", threshold "
                << c.threshold);
    CHECK(c.pass);
  }
}

TEST_CASE("c3: Sobol-MC EI matches the analytic form and KG is nonnegative",
          "[c3]") {
  const KernelKind kinds[4] = {KernelKind::rbf, KernelKind::matern32,
                               KernelKind::matern52, KernelKind::matern12};
  double worst_ei = 0.0;
  double kg_min = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 20; ++k) {
    SeedStream s(900 + k);
    const int dim = 1 + (k % 2);
    const int n = 6;
    MatrixXd X(dim, n);
    VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < dim; ++j) X(j, i) = s.uniform(0.0, 1.0);
      y[i] = s.normal();
    }
    KernelSpec spec;
    spec.kind = kinds[k % 4];
    spec.lengthscale = s.uniform(0.15, 0.6);
    spec.signal_variance = s.uniform(0.5, 2.0);
    spec.noise_variance = s.uniform(1e-4, 1e-2);
    const GpModel gp = condition_gp(spec, y.mean(), X, y);
    const double best = y.maxCoeff();
    VectorXd x(dim);
    for (int j = 0; j < dim; ++j) x[j] = s.uniform(0.0, 1.0);

    const auto [mu, var] = posterior(gp, x);
    const double analytic =
        ei_analytic(mu, std::sqrt(std::max(var, 0.0)), best);
    const double mc = ei_value_mc(gp, x, best, 8192, SeedStream(1300 + k));
    worst_ei = std::max(worst_ei, std::abs(analytic - mc));

    AcqConfig cfg;
    cfg.base_sample_seed = SeedStream(500 + k);
    kg_min = std::min(kg_min, kg_value(gp, x, cfg));
  }
  const bool pass = worst_ei < 0.01 && kg_min >= -1e-3;
  report(3, pass,
         "max |EI_mc - EI_analytic| = " + fmt(worst_ei) +
             " (< 0.01) over 20 posteriors; min KG = " + fmt(kg_min) +
             " (>= -0.001)");
  CHECK(worst_ei < 0.01);
  CHECK(kg_min >= -1e-3);
}

TEST_CASE("c4: planners draw a constant path count while naive tree "
          "fantasization is exponential",
          "[c4]") {
  const Dataset data = fixture_data_2d(6);
  KernelSpec spec;
  spec.kind = KernelKind::rbf;
  spec.lengthscale = 0.3;
  spec.signal_variance = 1.0;
  spec.noise_variance = 1e-3;
  const VectorXd y = data.observations_vector();
  const GpModel gp = condition_gp(spec, y.mean(), data.points_matrix(), y);
  const CostModel cost = make_cost_model(CostKind::euclidean);

  bool pass = true;
  std::ostringstream d;
  const int r = 8;
  for (const int L : {1, 5, 20}) {
    AcqConfig cfg;
    cfg.kind = AcqKind::lookahes;
    cfg.horizon = L;
    cfg.restarts = r;
    cfg.grad_steps = 10;
    cfg.base_sample_seed = SeedStream(40 + L);

    reset_path_draw_count();
    PathBatch batch = sample_paths(gp, r, 256, SeedStream(77 + L));
    PolicyParams params =
        init_policy(2, 16, PolicyHead::continuous, SeedStream(21));
    optimize_lookahes(params, batch, data, cost, cfg);
    const std::uint64_t drew_policy = path_draw_count();

    reset_path_draw_count();
    PathBatch batch2 = sample_paths(gp, r, 256, SeedStream(90 + L));
    cfg.kind = AcqKind::msl;
    optimize_msl(batch2, data, cost, cfg);
    const std::uint64_t drew_msl = path_draw_count();

    pass = pass && drew_policy == static_cast<std::uint64_t>(r) &&
           drew_msl == static_cast<std::uint64_t>(r);
    d << "L=" << L << ": policy " << drew_policy << ", msl " << drew_msl
      << " (== " << r << "); ";
    CHECK(drew_policy == static_cast<std::uint64_t>(r));
    CHECK(drew_msl == static_cast<std::uint64_t>(r));
  }

  // Full production loop: one draw of `restarts` paths per BO step.
  reset_path_draw_count();
  const RunResult rr = run_from_toml(
      "[env]\nname = \"ackley2\"\nnoise_sigma = 0.01\n"
      "[cost]\nkind = \"euclidean\"\n"
      "[acquisition]\nkind = \"lookahes\"\nhorizon = 5\nrestarts = 8\n"
      "grad_steps = 10\n"
      "[policy]\nwarmup_steps = 10\n"
      "[run]\nn_init = 6\nsteps = 2\nthreads = 1\n",
      1);
  REQUIRE_FALSE(rr.aborted);
  const std::uint64_t drew_run = path_draw_count();
  pass = pass && drew_run == 2 * 8;
  d << "2-step run drew " << drew_run << " (== 16); ";
  CHECK(drew_run == 2 * 8);

  // Reference testbed: binary-tree fantasization visits 2^L leaves.
  MatrixXd X0(1, 4);
  X0 << 0.1, 0.4, 0.6, 0.9;
  VectorXd y0(4);
  y0 << 0.2, 0.8, 0.7, -0.3;
  VectorXd q0(1);
  q0 << 0.5;
  std::ostringstream tree;
  for (int L = 1; L <= 6; ++L) {
    const long leaves = tree_leaves(spec, X0, y0, q0, L);
    pass = pass && leaves == (1L << L);
    tree << leaves << (L < 6 ? "," : "");
    CHECK(leaves == (1L << L));
  }
  d << "tree leaves L=1..6: " << tree.str() << " (== 2^L)";
  report(4, pass, d.str());
}

TEST_CASE("c5: desk-scale benchmark separates the planner from myopic EI",
          "[c5]") {
  std::vector<double> la_scaled, ei_scaled;
  double max_secs = 0.0;
  for (const std::uint64_t seed : {0ull, 1ull, 2ull}) {
    const auto t0 = Clock::now();
    const RunResult r = run_from_toml(c5_toml("lookahes"), seed);
    const double secs = secs_since(t0);
    max_secs = std::max(max_secs, secs);
    REQUIRE_FALSE(r.aborted);
    la_scaled.push_back(r.final_value / 3.0);
    std::printf("  c5 lookahes seed %llu: scaled value %.4f in %.0f s\n",
                static_cast<unsigned long long>(seed), r.final_value / 3.0,
                secs);
    std::fflush(stdout);
  }
  for (const std::uint64_t seed : {0ull, 1ull, 2ull}) {
    const RunResult r = run_from_toml(c5_toml("ei"), seed);
    REQUIRE_FALSE(r.aborted);
    ei_scaled.push_back(r.final_value / 3.0);
    std::printf("  c5 ei seed %llu: scaled value %.4f\n",
                static_cast<unsigned long long>(seed), r.final_value / 3.0);
    std::fflush(stdout);
  }
  const double la_med = median3(la_scaled);
  const double ei_med = median3(ei_scaled);
  const bool pass = la_med >= 0.9 && ei_med <= 0.3 && max_secs <= 3600.0;
  report(5, pass,
         "median scaled final value: planner " + fmt(la_med) +
             " (>= 0.9), ei " + fmt(ei_med) + " (<= 0.3); slowest seed " +
             fmt(max_secs) + " s (<= 3600)");
  CHECK(la_med >= 0.9);
  CHECK(ei_med <= 0.3);
  CHECK(max_secs <= 3600.0);
}

TEST_CASE("c6: a longer horizon does not hurt on the sampled-field benchmark",
          "[c6]") {
  std::vector<double> l20, l5;
  for (const std::uint64_t seed : {0ull, 1ull, 2ull}) {
    const RunResult a = run_from_toml(c6_toml(20), seed);
    REQUIRE_FALSE(a.aborted);
    l20.push_back(a.final_value);
    const RunResult b = run_from_toml(c6_toml(5), seed);
    REQUIRE_FALSE(b.aborted);
    l5.push_back(b.final_value);
    std::printf("  c6 seed %llu: final value L=20 %.4f, L=5 %.4f\n",
                static_cast<unsigned long long>(seed), a.final_value,
                b.final_value);
    std::fflush(stdout);
  }
  const double m20 = median3(l20), m5 = median3(l5);
  const bool pass = m20 >= m5;
  report(6, pass,
         "median final value: L=20 " + fmt(m20) + " >= L=5 " + fmt(m5));
  CHECK(m20 >= m5);
}

TEST_CASE("c7: cost-model unit vectors are exact", "[c7]") {
  const std::vector<CheckResult> checks = run_cost_suite();
  bool pass = true;
  for (const CheckResult& c : checks) {
    pass = pass && c.pass;
    INFO(c.name << ": got " << c.measured << ", want " << c.threshold);
    CHECK(c.pass);
  }
  report(7, pass,
         fmt(static_cast<double>(checks.size())) +
             " exact vectors, all bitwise equal");
}

TEST_CASE("c8: spotlight feasibility holds for every committed pair", "[c8]") {
  struct Proto {
    std::string toml;
    std::uint64_t seed;
  };
  auto continuous = [](const std::string& kind, double radius, int steps,
                       const std::string& acq_extra) {
    return "[env]\nname = \"ackley2\"\nnoise_sigma = 0.01\n"
           "[cost]\nkind = \"spotlight\"\nr = " + fmt(radius) +
           "\nlambda = 1.0\n"
           "[acquisition]\nkind = \"" + kind + "\"\n" + acq_extra +
           "[run]\nn_init = 8\nsteps = " + std::to_string(steps) +
           "\nthreads = 1\n";
  };
  const std::vector<Proto> protos = {
      {continuous("ei", 0.1, 15, ""), 0},
      {continuous("ei", 0.1, 15, ""), 1},
      {continuous("sr", 0.15, 15, ""), 0},
      {continuous("ucb", 0.12, 12, ""), 0},
      {continuous("lookahes", 0.1, 10,
                  "horizon = 3\nrestarts = 8\ngrad_steps = 40\n"),
       0},
      {continuous("msl", 0.15, 8, "horizon = 2\ngrad_steps = 40\n"), 0},
      {"[env]\nname = \"syngp_discrete\"\ncategories = 20\n"
       "noise_sigma = 0.01\n"
       "[cost]\nkind = \"spotlight\"\nr = 0.1\nlambda = 1.0\n"
       "[acquisition]\nkind = \"ei\"\n"
       "[run]\nn_init = 8\nsteps = 8\nthreads = 1\n",
       0}};

  int pairs = 0, violations = 0;
  double worst_excess = -1.0;
  for (const Proto& p : protos) {
    const ExperimentConfig cfg = parse_config(p.toml);
    const RunResult r = run_experiment(cfg, p.seed);
    REQUIRE_FALSE(r.aborted);
    REQUIRE(r.records.size() == static_cast<std::size_t>(cfg.run.steps));
    // Queries start right after the initial design (whose last row is the
    // start anchor); every consecutive committed pair is radius-bound.
    const std::size_t first_query = static_cast<std::size_t>(cfg.run.n_init);
    for (std::size_t i = first_query; i < r.data.points.size(); ++i) {
      const double dist = (r.data.points[i] - r.data.points[i - 1]).norm();
      ++pairs;
      worst_excess = std::max(worst_excess, dist - cfg.cost.r);
      if (!(dist <= cfg.cost.r + 1e-9)) {
        ++violations;
        INFO("pair " << i << " dist " << dist << " radius " << cfg.cost.r);
        CHECK(dist <= cfg.cost.r + 1e-9);
      }
    }
  }
  const bool pass = violations == 0 && pairs > 0;
  report(8, pass,
         std::to_string(pairs) + " consecutive pairs across " +
             std::to_string(protos.size()) + " spotlight runs, " +
             std::to_string(violations) + " violations (worst dist - r = " +
             fmt(worst_excess) + ")");
  CHECK(violations == 0);
}

TEST_CASE("c9: runs are byte-deterministic and thread-count invariant",
          "[c9]") {
  const fs::path ei_cfg = write_tmp(
      "c9_ei.toml",
      "[env]\nname = \"ackley2\"\nnoise_sigma = 0.01\n"
      "[cost]\nkind = \"euclidean\"\n"
      "[acquisition]\nkind = \"ei\"\nrestarts = 16\ngrad_steps = 30\n"
      "[run]\nn_init = 8\nsteps = 6\n");
  const fs::path la_cfg = write_tmp(
      "c9_la.toml",
      "[env]\nname = \"ackley2\"\nnoise_sigma = 0.01\n"
      "[cost]\nkind = \"spotlight\"\nr = 0.1\n"
      "[acquisition]\nkind = \"lookahes\"\nhorizon = 2\nrestarts = 8\n"
      "grad_steps = 40\n"
      "[policy]\nwarmup_steps = 10\n"
      "[run]\nn_init = 6\nsteps = 3\n");

  bool pass = true;
  std::ostringstream d;
  for (const auto& [name, cfg] : {std::pair<std::string, fs::path>{"ei", ei_cfg},
                                  {"planner", la_cfg}}) {
    std::vector<std::string> csv;
    for (const std::string& variant :
         {std::string("a --threads 1"), std::string("b --threads 1"),
          std::string("c --threads 8")}) {
      const fs::path out = fs::temp_directory_path() /
                           ("lookahes_acc_c9_" + name + "_" +
                            variant.substr(0, 1));
      fs::remove_all(out);
      REQUIRE(run_cli("run --config " + cfg.string() + " --seed 3 --out " +
                      out.string() + variant.substr(1)) == 0);
      csv.push_back(slurp(out / "records.csv"));
    }
    const bool rerun_ok = csv[0] == csv[1];
    const bool threads_ok = csv[0] == csv[2];
    pass = pass && rerun_ok && threads_ok;
    d << name << ": rerun " << (rerun_ok ? "identical" : "DIFFERS")
      << ", threads 8 vs 1 " << (threads_ok ? "identical" : "DIFFERS") << "; ";
    CHECK(rerun_ok);
    CHECK(threads_ok);
  }
  report(9, pass, d.str());
}

TEST_CASE("c10: the planner beats EI on the discrete lattice", "[c10]") {
  std::vector<double> la, ei;
  for (const std::uint64_t seed : {0ull, 1ull, 2ull}) {
    const RunResult a = run_from_toml(c10_toml("lookahes"), seed);
    REQUIRE_FALSE(a.aborted);
    la.push_back(a.final_value);
    const RunResult b = run_from_toml(c10_toml("ei"), seed);
    REQUIRE_FALSE(b.aborted);
    ei.push_back(b.final_value);
    std::printf("  c10 seed %llu: final value planner %.4f, ei %.4f\n",
                static_cast<unsigned long long>(seed), a.final_value,
                b.final_value);
    std::fflush(stdout);
  }
  const double la_med = median3(la), ei_med = median3(ei);
  const bool pass = la_med > ei_med;
  report(10, pass,
         "median final value: planner " + fmt(la_med) + " > ei " +
             fmt(ei_med));
  CHECK(la_med > ei_med);
}
