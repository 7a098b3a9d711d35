#pragma once

/**
 * \file bench.hpp
 * \brief Benchmark harness: train/evaluate grids, second-derivative traces and the efficiency sweep.
 *
 * Every table is a pure function of the dataset, the configuration and the
 * seeds. Wall-clock times are kept apart from the tables so that re-running a
 * report reproduces its JSON byte for byte.
 */

#include <polyfit/data.hpp>
#include <polyfit/error.hpp>
#include <polyfit/metrics.hpp>
#include <polyfit/potential.hpp>
#include <polyfit/training.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace polyfit {

struct TracePoint
{
  double hat = 0.0;
  double raw = 0.0;
  double value = 0.0;
};

struct DerivativeTrace
{
  std::string label;
  Invariant invariant = Invariant::I1;
  std::vector<TracePoint> points;
};

/// d2psi/dI_k^2 along the normalized invariant k over [lo, hi]; every other invariant stays at the reference state.
inline DerivativeTrace second_derivative_trace(const ConvexTermBank& bank, Invariant k, double lo, double hi, int n) {
  if (!bank.uses(k)) fail(ErrorKind::Config, "invariant " + std::string(name(k)) + " is not used by the model");
  if (n < 1) fail(ErrorKind::Config, "trace needs at least one point");
  if (!(hi >= lo)) fail(ErrorKind::Config, "trace range is empty");
  const auto& c = bank.constants();
  DerivativeTrace out;
  out.invariant = k;
  out.label = std::string(name(k));
  const auto grid = n == 1 ? std::vector<double>{lo} : linspace(lo, hi, n);
  for (double h : grid) {
    std::array<double, 4> hat{};
    hat[index(k)] = h;
    double value = 0.0;
    for (const auto& t : bank.terms()) {
      const auto ch = detail::chain(t, c);
      for (int a = 0; a < ch.n; ++a) {
        if (ch.idx[a] != index(k)) continue;
        const double x = t.input(hat);
        value += t.second_derivative(x) * ch.factor[a] * ch.factor[a];
      }
    }
    out.points.push_back({h, c.a[index(k)] + c.b[index(k)] * h, value});
  }
  return out;
}

/// Traces for every invariant the model uses.
inline std::vector<DerivativeTrace> second_derivative_traces(const ConvexTermBank& bank, double lo, double hi, int n) {
  std::vector<DerivativeTrace> out;
  for (auto k : kAllInvariants)
    if (bank.uses(k)) out.push_back(second_derivative_trace(bank, k, lo, hi, n));
  return out;
}

/// One (family, training set, evaluation mode) cell aggregated over restarts.
struct GridCell
{
  std::string family;
  std::string train;
  Mode eval = Mode::UT;
  double mean_r2 = 0.0;
  double std_r2 = 0.0;
  double median_r2 = 0.0;
  double mean_mae = 0.0;
  double median_mae = 0.0;
  std::vector<double> r2;
  /// Restarts whose NODE step-doubling check exceeded its tolerance (metrics still included).
  int rejected = 0;
  double worst_step_check = 0.0;
};

struct EfficiencyRow
{
  std::string family;
  std::string ansatz;
  std::vector<int> widths;
  std::size_t parameter_count = 0;
  double median_mae = 0.0;
  double wall_time_s = 0.0;
};

struct BenchReport
{
  std::vector<GridCell> grid;
  std::vector<std::pair<std::string, DerivativeTrace>> traces;
  std::vector<EfficiencyRow> efficiency;
  std::vector<std::string> failures;
  /// Wall time per grid cell, reported separately from the deterministic tables.
  std::vector<std::pair<std::string, double>> timings;

  [[nodiscard]] bool partial() const { return !failures.empty(); }

  [[nodiscard]] const GridCell* cell(std::string_view family, std::string_view train, Mode eval) const {
    for (const auto& c : grid)
      if (c.family == family && c.train == train && c.eval == eval) return &c;
    return nullptr;
  }
};

inline std::string modes_label(const std::vector<Mode>& modes) {
  std::string s;
  for (auto m : modes) s += (s.empty() ? "" : "+") + std::string(name(m));
  return s;
}

/// Mean MAE over curves for one restart.
inline double mean_curve_mae(const std::vector<CurveMetrics>& ms) {
  std::vector<double> v;
  for (const auto& m : ms) v.push_back(m.mae);
  return mean(v);
}

/**
 * Trains every family on every training set and evaluates on every curve of the dataset.
 * Normalization constants come from the full dataset unless the config fixes them; the first
 * restart's model of each cell is kept for the derivative traces. A failing cell is recorded
 * in `failures` and the remaining cells still run.
 */
inline BenchReport run_grid(const std::vector<FamilySpec>& families, const Dataset& dataset,
                            const std::vector<std::vector<Mode>>& train_sets, const TrainingConfig& config,
                            int trace_points = 0, double trace_hi = 4.0) {
  if (families.empty() || train_sets.empty()) fail(ErrorKind::Config, "benchmark grid is empty");
  BenchReport report;
  auto cfg = config;
  if (!cfg.normalization) cfg.normalization = normalization_for(dataset);
  for (const auto& spec : families) {
    const std::string fam(name(spec.family));
    for (const auto& modes : train_sets) {
      const auto label = modes_label(modes);
      try {
        const auto train_set = subset(dataset, modes);
        const auto res = multi_restart(spec, train_set, cfg, &dataset);
        double wall = 0.0;
        for (const auto& f : res.fits) wall += f.wall_time_s;
        report.timings.emplace_back(fam + "/" + label, wall);
        for (std::size_t c = 0; c < res.summary.size(); ++c) {
          const auto& s = res.summary[c];
          GridCell cell{fam, label, s.mode, s.mean_r2, s.std_r2, s.median_r2, s.mean_mae, s.median_mae, {}};
          for (const auto& f : res.fits) {
            cell.r2.push_back(f.evaluation[c].r2);
            cell.rejected += f.accepted ? 0 : 1;
            cell.worst_step_check = std::max(cell.worst_step_check, f.node_step_check);
          }
          report.grid.push_back(std::move(cell));
        }
        if (trace_points > 0)
          for (auto& tr : second_derivative_traces(res.fits.front().bank, 0.0, trace_hi, trace_points))
            report.traces.emplace_back(fam + "/" + label, std::move(tr));
      } catch (const Error& e) {
        report.failures.push_back(fam + "/" + label + ": " + e.what());
      }
    }
  }
  return report;
}

/// Default size ladder per family; CANN is represented by its two ansatz only.
inline std::vector<FamilySpec> default_ladder(Family family) {
  std::vector<FamilySpec> out;
  switch (family) {
    case Family::Cann:
      out.push_back({Family::Cann, Ansatz::Reduced, {}, {}});
      out.push_back({Family::Cann, Ansatz::Full, {}, {}});
      break;
    case Family::Icnn:
      for (auto w : {std::vector<int>{1}, {4}, {4, 4}, {8, 8}})
        out.push_back({Family::Icnn, Ansatz::Reduced, {w, 20}, {}});
      break;
    case Family::Node:
      for (auto w : {std::vector<int>{3}, {5, 5}, {8, 8}}) out.push_back({Family::Node, Ansatz::Reduced, {w, 20}, {}});
      break;
  }
  return out;
}

/// For each ladder entry: median over restarts of the mean per-curve training MAE.
inline std::vector<EfficiencyRow> efficiency_sweep(const std::vector<FamilySpec>& ladder, const Dataset& dataset,
                                                   const TrainingConfig& config) {
  if (ladder.empty()) fail(ErrorKind::Config, "size ladder is empty");
  std::vector<EfficiencyRow> rows;
  for (const auto& spec : ladder) {
    const auto res = multi_restart(spec, dataset, config);
    std::vector<double> maes;
    double wall = 0.0;
    for (const auto& f : res.fits) {
      maes.push_back(mean_curve_mae(f.evaluation));
      wall += f.wall_time_s;
    }
    std::vector<int> widths;
    if (spec.family != Family::Cann)
      widths = spec.backend.widths.empty() ? default_widths(spec.family) : spec.backend.widths;
    rows.push_back({std::string(name(spec.family)), std::string(name(spec.ansatz)), widths,
                    res.fits.front().parameter_count, median(maes), wall});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Output

inline nlohmann::json to_json(const BenchReport& r) {
  nlohmann::json j;
  j["grid"] = nlohmann::json::array();
  for (const auto& c : r.grid) {
    nlohmann::json r2 = nlohmann::json::array();
    for (double v : c.r2) r2.push_back(json_number(v));
    j["grid"].push_back({{"family", c.family},
                         {"train", c.train},
                         {"eval", name(c.eval)},
                         {"mean_r2", json_number(c.mean_r2)},
                         {"std_r2", json_number(c.std_r2)},
                         {"median_r2", json_number(c.median_r2)},
                         {"mean_mae", json_number(c.mean_mae)},
                         {"median_mae", json_number(c.median_mae)},
                         {"r2", r2},
                         {"rejected", c.rejected},
                         {"worst_step_check", c.worst_step_check}});
  }
  j["traces"] = nlohmann::json::array();
  for (const auto& [cell, tr] : r.traces) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : tr.points) pts.push_back({p.hat, p.raw, json_number(p.value)});
    j["traces"].push_back({{"cell", cell}, {"invariant", tr.label}, {"points", pts}});
  }
  j["efficiency"] = nlohmann::json::array();
  for (const auto& e : r.efficiency)
    j["efficiency"].push_back({{"family", e.family},
                               {"ansatz", e.ansatz},
                               {"widths", e.widths},
                               {"parameter_count", e.parameter_count},
                               {"median_mae", json_number(e.median_mae)}});
  j["partial"] = r.partial();
  j["failures"] = r.failures;
  return j;
}

inline std::string trace_csv(const DerivativeTrace& t) {
  std::string out = "hat,raw,d2psi\n";
  for (const auto& p : t.points)
    out += detail::format_double(p.hat) + "," + detail::format_double(p.raw) + "," + detail::format_double(p.value) +
           "\n";
  return out;
}

namespace detail {
  inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out << text;
  }

  inline std::string file_safe(std::string s) {
    for (char& ch : s)
      if (ch == '/' || ch == '+' || ch == '(' || ch == ')' || ch == ',') ch = '_';
    return s;
  }
} // namespace detail

/// report.json, grid_r2.csv, grid_mae.csv, efficiency.csv, timings.json and traces/<cell>_<invariant>.csv.
inline void write_report(const BenchReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  detail::write_text(dir / "report.json", to_json(r).dump(2) + "\n");

  std::string r2 = "family,train,eval,mean_r2,std_r2,median_r2\n";
  std::string err = "family,train,eval,mean_mae,median_mae\n";
  for (const auto& c : r.grid) {
    const std::string key = c.family + "," + c.train + "," + std::string(name(c.eval)) + ",";
    r2 += key + detail::format_double(c.mean_r2) + "," + detail::format_double(c.std_r2) + "," +
          detail::format_double(c.median_r2) + "\n";
    err += key + detail::format_double(c.mean_mae) + "," + detail::format_double(c.median_mae) + "\n";
  }
  detail::write_text(dir / "grid_r2.csv", r2);
  detail::write_text(dir / "grid_mae.csv", err);

  if (!r.efficiency.empty()) {
    std::string eff = "family,ansatz,widths,parameter_count,median_mae\n";
    for (const auto& e : r.efficiency) {
      std::string w;
      for (int x : e.widths) w += (w.empty() ? "" : "x") + std::to_string(x);
      eff += e.family + "," + e.ansatz + "," + w + "," + std::to_string(e.parameter_count) + "," +
             detail::format_double(e.median_mae) + "\n";
    }
    detail::write_text(dir / "efficiency.csv", eff);
  }

  if (!r.traces.empty()) {
    std::filesystem::create_directories(dir / "traces");
    for (const auto& [cell, tr] : r.traces)
      detail::write_text(dir / "traces" / (detail::file_safe(cell) + "_" + tr.label + ".csv"), trace_csv(tr));
  }

  nlohmann::json t = nlohmann::json::object();
  for (const auto& [cell, s] : r.timings) t[cell] = s;
  for (const auto& e : r.efficiency) {
    std::string w;
    for (int x : e.widths) w += (w.empty() ? "" : "x") + std::to_string(x);
    t["efficiency/" + e.family + "/" + e.ansatz + (w.empty() ? "" : "/" + w)] = e.wall_time_s;
  }
  detail::write_text(dir / "timings.json", t.dump(2) + "\n");
}

} // namespace polyfit
