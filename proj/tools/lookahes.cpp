// lookahes CLI: reproducible experiment runs, config sweeps, and built-in
// validation suites.
//
// Exit codes: 0 success, 1 validation-suite failure, 2 configuration error
// (message names the offending key), 3 runtime failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lookahes/config.hpp"
#include "lookahes/parallel.hpp"
#include "lookahes/report.hpp"
#include "lookahes/runner.hpp"
#include "lookahes/selfcheck.hpp"
#include "lookahes/version.hpp"

namespace fs = std::filesystem;
using namespace lookahes;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Accept either TOML or a previously written summary.json (whose embedded
// config_toml makes any summary rerunnable as-is).
std::string config_text_from_file(const std::string& path) {
  std::string text = read_file(path);
  const std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
      throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    if (!j.contains("config_toml") || !j["config_toml"].is_string())
      throw ConfigError("config file " + path + " has no config_toml field");
    return j["config_toml"].get<std::string>();
  }
  return text;
}

void write_run_outputs(const fs::path& dir, const RunResult& run) {
  fs::create_directories(dir);
  write_records_csv((dir / "records.csv").string(), run);
  write_json((dir / "summary.json").string(), run_summary_json(run));
  write_trace_svg((dir / "trace.svg").string(), run);
}

void print_run_line(const RunResult& r) {
  std::printf("seed %llu: final value %.4f (scaled %.4f), regret %.4f, "
              "cum cost %.4f, %zu steps%s\n",
              static_cast<unsigned long long>(r.seed), r.final_value,
              r.final_value / 3.0, r.final_regret,
              r.records.empty() ? 0.0 : r.records.back().cum_cost,
              r.records.size(),
              r.aborted ? (" [ABORTED: " + r.abort_reason + "]").c_str() : "");
}

int cmd_run(const std::string& config_path, bool have_seed, std::uint64_t seed,
            const std::string& out_dir, int threads) {
  ExperimentConfig cfg = parse_config(config_text_from_file(config_path));
  if (have_seed) cfg.run.seeds = {seed};
  if (threads >= 0) cfg.run.threads = threads;

  const fs::path dir(out_dir);
  std::vector<RunResult> runs;
  runs.reserve(cfg.run.seeds.size());
  for (std::uint64_t s : cfg.run.seeds) {
    RunResult r = run_experiment(cfg, s);
    if (cfg.run.seeds.size() == 1) {
      write_run_outputs(dir, r);
    } else {
      write_run_outputs(dir / ("seed_" + std::to_string(s)), r);
    }
    print_run_line(r);
    runs.push_back(std::move(r));
  }
  if (cfg.run.seeds.size() > 1) {
    fs::create_directories(dir);
    Metrics m = compute_metrics(runs);
    write_json((dir / "summary.json").string(),
               aggregate_summary_json(config_to_toml(cfg), runs, m));
    std::printf("aggregate over %d seeds: median final value %.4f "
                "(scaled %.4f), median regret %.4f, median cum cost %.4f\n",
                m.n_runs, m.final_value_median, m.scaled_value_median,
                m.regret_median, m.cum_cost_median);
  }
  for (const RunResult& r : runs)
    if (r.aborted) {
      std::fprintf(stderr, "error: seed %llu aborted: %s\n",
                   static_cast<unsigned long long>(r.seed),
                   r.abort_reason.c_str());
      return 3;
    }
  return 0;
}

struct GridAxis {
  std::string key;             // dotted table.key
  std::vector<std::string> values;  // raw value tokens
};

GridAxis parse_grid_axis(const std::string& spec) {
  const std::size_t eq = spec.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 >= spec.size())
    throw ConfigError("grid spec '" + spec + "' must look like table.key=v1,v2");
  GridAxis axis;
  axis.key = spec.substr(0, eq);
  std::string rest = spec.substr(eq + 1);
  std::size_t pos = 0;
  while (pos != std::string::npos) {
    const std::size_t comma = rest.find(',', pos);
    const std::string tok =
        rest.substr(pos, comma == std::string::npos ? std::string::npos
                                                    : comma - pos);
    if (tok.empty())
      throw ConfigError("grid spec '" + spec + "' has an empty value");
    axis.values.push_back(tok);
    pos = comma == std::string::npos ? std::string::npos : comma + 1;
  }
  return axis;
}

std::string sanitize_token(std::string s) {
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.'))
      c = '_';
  return s;
}

int cmd_sweep(const std::string& config_path,
              const std::vector<std::string>& grid_specs,
              const std::string& out_dir, int jobs, int threads) {
  const std::string base_text = config_text_from_file(config_path);
  const TomlDoc base_doc = parse_toml(base_text);
  {  // the base config must itself be valid
    ExperimentConfig probe = config_from_toml(base_doc);
    (void)probe;
  }

  std::vector<GridAxis> axes;
  for (const std::string& s : grid_specs) axes.push_back(parse_grid_axis(s));

  // Cartesian product of axis values; an empty grid is one base cell.
  struct Cell {
    std::string name;
    ExperimentConfig cfg;
  };
  std::vector<Cell> cells;
  std::vector<std::size_t> idx(axes.size(), 0);
  for (;;) {
    TomlDoc doc = base_doc;
    std::string name;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      apply_override(doc, axes[a].key, axes[a].values[idx[a]]);
      if (!name.empty()) name += "_";
      name += sanitize_token(axes[a].key) + "-" +
              sanitize_token(axes[a].values[idx[a]]);
    }
    if (name.empty()) name = "base";
    cells.push_back({name, config_from_toml(doc)});  // rejects unknown keys
    std::size_t a = 0;
    for (; a < axes.size(); ++a) {
      if (++idx[a] < axes[a].values.size()) break;
      idx[a] = 0;
    }
    if (a == axes.size()) break;
  }

  struct Job {
    std::size_t cell;
    std::uint64_t seed;
  };
  std::vector<Job> jobs_list;
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (std::uint64_t s : cells[c].cfg.run.seeds) jobs_list.push_back({c, s});

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  std::vector<std::pair<std::string, RunResult>> rows(jobs_list.size());
  std::vector<std::string> failures(jobs_list.size());
  parallel_for(jobs_list.size(), std::max(1, jobs), [&](std::size_t i) {
    const Cell& cell = cells[jobs_list[i].cell];
    ExperimentConfig cfg = cell.cfg;
    if (threads >= 0) cfg.run.threads = threads;
    const std::string run_name =
        cell.name + "_seed" + std::to_string(jobs_list[i].seed);
    try {
      RunResult r = run_experiment(cfg, jobs_list[i].seed);
      write_run_outputs(dir / run_name, r);
      rows[i] = {run_name, std::move(r)};
    } catch (const std::exception& e) {
      failures[i] = run_name + ": " + e.what();
    }
  });
  for (const std::string& f : failures)
    if (!f.empty()) {
      std::fprintf(stderr, "error: sweep run %s\n", f.c_str());
      return 3;
    }

  report_detail::write_file((dir / "sweep_summary.csv").string(),
                            sweep_summary_csv(rows));
  for (const auto& [name, r] : rows) {
    std::printf("%s: ", name.c_str());
    print_run_line(r);
  }
  std::printf("sweep complete: %zu runs across %zu cells -> %s\n",
              rows.size(), cells.size(),
              (dir / "sweep_summary.csv").string().c_str());
  for (const auto& [name, r] : rows)
    if (r.aborted) return 3;
  return 0;
}

int cmd_validate(const std::string& suite) {
  std::vector<CheckResult> checks;
  if (suite == "matheron") checks = run_matheron_suite();
  else if (suite == "gradients") checks = run_gradient_suite();
  else if (suite == "costs") checks = run_cost_suite();
  else if (suite == "all") checks = run_all_suites();
  else throw ConfigError("unknown validation suite '" + suite +
                         "' (matheron|gradients|costs|all)");
  bool all_pass = true;
  for (const CheckResult& c : checks) {
    std::printf("%s  %s (measured %.6g vs %.6g)\n",
                c.pass ? "pass" : "FAIL", c.name.c_str(), c.measured,
                c.threshold);
    all_pass = all_pass && c.pass;
  }
  std::printf("%zu checks, %s\n", checks.size(),
              all_pass ? "all passed" : "FAILURES PRESENT");
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lookahes: cost-aware nonmyopic Bayesian optimization"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", suite = "all";
  std::uint64_t seed = 0;
  bool have_seed = false;
  int threads = -1, jobs = 1;
  std::vector<std::string> grid_specs;

  CLI::App* run = app.add_subcommand("run", "execute one configured experiment");
  run->add_option("--config", config_path,
                  "TOML config, or a summary.json from a previous run")
      ->required();
  run->add_option("--seed", seed, "override [run].seeds with one seed")
      ->trigger_on_parse()
      ->each([&](const std::string&) { have_seed = true; });
  run->add_option("--out", out_dir, "output directory (default: out)");
  run->add_option("--threads", threads,
                  "worker threads (default: LOOKAHES_THREADS or hardware)");

  CLI::App* sweep = app.add_subcommand("sweep", "Cartesian grid of config overrides");
  sweep->add_option("--config", config_path, "base TOML config")->required();
  sweep->add_option("--grid", grid_specs,
                    "axis spec table.key=v1,v2 (repeatable)");
  sweep->add_option("--out", out_dir, "output directory (default: out)");
  sweep->add_option("--jobs", jobs, "parallel sweep cells (default 1)");
  sweep->add_option("--threads", threads, "worker threads per run");

  CLI::App* validate = app.add_subcommand("validate", "built-in numeric checks");
  validate->add_option("--suite", suite, "matheron|gradients|costs|all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage problems are configuration errors
  }

  try {
    if (run->parsed()) return cmd_run(config_path, have_seed, seed, out_dir, threads);
    if (sweep->parsed())
      return cmd_sweep(config_path, grid_specs, out_dir, jobs, threads);
    return cmd_validate(suite);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
