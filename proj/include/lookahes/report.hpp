#ifndef LOOKAHES_REPORT_HPP
#define LOOKAHES_REPORT_HPP

// Run artifacts: records.csv (full numeric precision, deterministic bytes),
// summary.json (metrics plus the resolved config, so any summary can be fed
// back to `run --config`), a self-contained trace.svg, and the sweep roll-up
// CSV.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lookahes/runner.hpp"
#include "lookahes/version.hpp"

namespace lookahes {

namespace report_detail {

inline std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace report_detail

// step,x*,y,step_cost,cum_cost,acq_value,a*,regret — one row per BO step.
// Wall-clock timings are deliberately excluded: identical (config, seed)
// runs must produce identical bytes.
inline std::string records_csv(const RunResult& run) {
  std::ostringstream out;
  const int dim = run.data.points.empty()
                      ? 0
                      : static_cast<int>(run.data.points.front().size());
  out << "step";
  for (int i = 0; i < dim; ++i) out << ",x" << i;
  out << ",y,step_cost,cum_cost,acq_value";
  for (int i = 0; i < dim; ++i) out << ",a" << i;
  out << ",regret\n";
  for (const RunRecord& r : run.records) {
    out << r.step;
    for (int i = 0; i < dim; ++i) out << "," << report_detail::num(r.x[i]);
    out << "," << report_detail::num(r.y);
    out << "," << report_detail::num(r.step_cost);
    out << "," << report_detail::num(r.cum_cost);
    out << "," << report_detail::num(r.acq_value);
    for (int i = 0; i < dim; ++i) out << "," << report_detail::num(r.action[i]);
    out << "," << report_detail::num(r.regret) << "\n";
  }
  return out.str();
}

inline void write_records_csv(const std::string& path, const RunResult& run) {
  report_detail::write_file(path, records_csv(run));
}

inline nlohmann::json run_summary_json(const RunResult& run) {
  nlohmann::json j;
  j["version"] = kVersion;
  j["seed"] = run.seed;
  j["config_toml"] = run.config_toml;
  j["aborted"] = run.aborted;
  j["abort_reason"] = run.abort_reason;
  j["n_steps"] = run.records.size();
  std::vector<double> fa(run.final_action.data(),
                         run.final_action.data() + run.final_action.size());
  j["final_action"] = fa;
  j["final_value"] = run.final_value;
  j["scaled_final_value"] = run.final_value / 3.0;
  j["final_regret"] = run.final_regret;
  j["best_observed"] = run.best_observed;
  j["cum_cost"] = run.records.empty() ? 0.0 : run.records.back().cum_cost;
  j["wall_ms_total"] = run.wall_ms_total;
  return j;
}

inline nlohmann::json metrics_json(const Metrics& m) {
  nlohmann::json j;
  j["n_runs"] = m.n_runs;
  j["n_aborted"] = m.n_aborted;
  j["final_value_median"] = m.final_value_median;
  j["final_value_mean"] = m.final_value_mean;
  j["final_value_std"] = m.final_value_std;
  j["scaled_value_median"] = m.scaled_value_median;
  j["regret_median"] = m.regret_median;
  j["cum_regret_median"] = m.cum_regret_median;
  j["cum_cost_median"] = m.cum_cost_median;
  j["cum_cost_mean"] = m.cum_cost_mean;
  j["best_observed_median"] = m.best_observed_median;
  j["wall_ms_mean"] = m.wall_ms_mean;
  return j;
}

// Aggregate summary across the seeds of one configuration.
inline nlohmann::json aggregate_summary_json(const std::string& config_toml,
                                             const std::vector<RunResult>& runs,
                                             const Metrics& metrics) {
  nlohmann::json j;
  j["version"] = kVersion;
  j["config_toml"] = config_toml;
  j["metrics"] = metrics_json(metrics);
  j["runs"] = nlohmann::json::array();
  for (const RunResult& r : runs) {
    nlohmann::json e;
    e["seed"] = r.seed;
    e["final_value"] = r.final_value;
    e["scaled_final_value"] = r.final_value / 3.0;
    e["final_regret"] = r.final_regret;
    e["cum_cost"] = r.records.empty() ? 0.0 : r.records.back().cum_cost;
    e["best_observed"] = r.best_observed;
    e["aborted"] = r.aborted;
    j["runs"].push_back(e);
  }
  return j;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  report_detail::write_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// trace.svg: observed values, action regret, and cumulative cost per step.

namespace report_detail {

struct Series {
  std::string label, color, dash;
  std::vector<double> ys;
};

inline std::string svg_polyline(const Series& s, double x0, double y0,
                                double w, double h, double lo, double hi) {
  std::ostringstream out;
  out << "<polyline fill=\"none\" stroke=\"" << s.color
      << "\" stroke-width=\"1.5\"";
  if (!s.dash.empty()) out << " stroke-dasharray=\"" << s.dash << "\"";
  out << " points=\"";
  const std::size_t n = s.ys.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double px = x0 + (n == 1 ? 0.5 : static_cast<double>(i) / (n - 1)) * w;
    const double t = (s.ys[i] - lo) / (hi - lo);
    const double py = y0 + h - t * h;
    out << (i ? " " : "") << num(px) << "," << num(py);
  }
  out << "\"/>\n";
  return out.str();
}

}  // namespace report_detail

inline std::string trace_svg(const RunResult& run) {
  const double W = 920, H = 420, ML = 64, MR = 24, MT = 40, MB = 48;
  const double pw = W - ML - MR, ph = H - MT - MB;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  out << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << ML << "\" y=\"24\" font-family=\"sans-serif\" "
      << "font-size=\"15\" fill=\"#222\">optimization trace (seed "
      << run.seed << ")</text>\n";
  if (run.records.empty()) {
    out << "<text x=\"" << W / 2 << "\" y=\"" << H / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"14\" fill=\"#888\">no optimization steps</text>\n";
    out << "</svg>\n";
    return out.str();
  }

  std::vector<report_detail::Series> series = {
      {"observed y", "#1f6fb2", "", {}},
      {"action regret", "#c0392b", "", {}},
      {"cumulative cost", "#7f8c8d", "5,4", {}}};
  for (const RunRecord& r : run.records) {
    series[0].ys.push_back(r.y);
    series[1].ys.push_back(r.regret);
    series[2].ys.push_back(r.cum_cost);
  }
  double lo = 0.0, hi = 1.0;
  bool first = true;
  for (const auto& s : series)
    for (double v : s.ys) {
      if (!std::isfinite(v)) continue;
      if (first) {
        lo = hi = v;
        first = false;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  if (!(hi > lo)) {
    hi = lo + 1.0;
    lo -= 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  // Axes and horizontal gridlines.
  out << "<line x1=\"" << ML << "\" y1=\"" << MT + ph << "\" x2=\"" << ML + pw
      << "\" y2=\"" << MT + ph << "\" stroke=\"#444\"/>\n";
  out << "<line x1=\"" << ML << "\" y1=\"" << MT << "\" x2=\"" << ML
      << "\" y2=\"" << MT + ph << "\" stroke=\"#444\"/>\n";
  for (int g = 0; g <= 4; ++g) {
    const double v = lo + (hi - lo) * g / 4.0;
    const double py = MT + ph - ph * g / 4.0;
    out << "<line x1=\"" << ML << "\" y1=\"" << py << "\" x2=\"" << ML + pw
        << "\" y2=\"" << py << "\" stroke=\"#ddd\"/>\n";
    char lab[32];
    std::snprintf(lab, sizeof(lab), "%.3g", v);
    out << "<text x=\"" << ML - 8 << "\" y=\"" << py + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
        << "font-size=\"11\" fill=\"#555\">" << lab << "</text>\n";
  }
  out << "<text x=\"" << ML + pw / 2 << "\" y=\"" << H - 14
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"12\" fill=\"#555\">step</text>\n";
  const int n = static_cast<int>(run.records.size());
  for (int g = 0; g <= 4; ++g) {
    const int step = 1 + (n - 1) * g / 4;
    const double px = ML + (n == 1 ? 0.5 * pw : pw * (step - 1) / (n - 1));
    out << "<text x=\"" << px << "\" y=\"" << MT + ph + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"11\" fill=\"#555\">" << step << "</text>\n";
  }

  double lx = ML + 12;
  for (const auto& s : series) {
    out << report_detail::svg_polyline(s, ML, MT, pw, ph, lo, hi);
    out << "<line x1=\"" << lx << "\" y1=\"" << MT - 8 << "\" x2=\"" << lx + 22
        << "\" y2=\"" << MT - 8 << "\" stroke=\"" << s.color
        << "\" stroke-width=\"2\"";
    if (!s.dash.empty()) out << " stroke-dasharray=\"" << s.dash << "\"";
    out << "/>\n";
    out << "<text x=\"" << lx + 28 << "\" y=\"" << MT - 4
        << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">"
        << s.label << "</text>\n";
    lx += 28 + 8.0 * s.label.size() + 24;
  }
  out << "</svg>\n";
  return out.str();
}

inline void write_trace_svg(const std::string& path, const RunResult& run) {
  report_detail::write_file(path, trace_svg(run));
}

// One row per (cell, seed) of a sweep.
inline std::string sweep_summary_csv(
    const std::vector<std::pair<std::string, RunResult>>& rows) {
  std::ostringstream out;
  out << "cell,seed,final_value,scaled_final_value,final_regret,cum_cost,"
         "best_observed,aborted\n";
  for (const auto& [cell, r] : rows) {
    out << cell << "," << r.seed << "," << report_detail::num(r.final_value)
        << "," << report_detail::num(r.final_value / 3.0) << ","
        << report_detail::num(r.final_regret) << ","
        << report_detail::num(r.records.empty() ? 0.0
                                                : r.records.back().cum_cost)
        << "," << report_detail::num(r.best_observed) << ","
        << (r.aborted ? "true" : "false") << "\n";
  }
  return out.str();
}

}  // namespace lookahes

#endif  // LOOKAHES_REPORT_HPP
