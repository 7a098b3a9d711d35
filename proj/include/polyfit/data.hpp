#pragma once

/**
 * \file data.hpp
 * \brief Stress-stretch datasets: CSV I/O, synthetic oracles and protocol splits.
 *
 * CSV schema (UTF-8, comma separated, dot decimal, header row required):
 *
 *     mode,lambda_x,lambda_y,P_xx,P_yy
 *     UT,2.0,,1.75,
 *     SX,1.1,1.0,0.31,0.12
 *
 * Scalar protocols (UT, PS, ET) leave lambda_y and P_yy empty; biaxial
 * protocols (SX, SY, EB) fill all five columns. A JSON sidecar next to the
 * CSV (same stem, ".meta.json") carries the stress unit, fiber frame and a
 * provenance note.
 */

#include <polyfit/error.hpp>
#include <polyfit/kinematics.hpp>
#include <polyfit/loading.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace polyfit {

struct StressStretchSample
{
  Mode mode = Mode::UT;
  double lambda_x = 1.0;
  std::optional<double> lambda_y;
  double p_xx = 0.0;
  std::optional<double> p_yy;

  [[nodiscard]] double ly() const { return lambda_y.value_or(1.0); }
  /// The stretch the protocol drives: lambda_y for SY, lambda_x otherwise.
  [[nodiscard]] double loading_stretch() const { return mode == Mode::SY ? ly() : lambda_x; }

  friend bool operator==(const StressStretchSample&, const StressStretchSample&) = default;
};

struct Curve
{
  Mode mode = Mode::UT;
  std::vector<StressStretchSample> samples;

  /// Observed stress series; biaxial curves concatenate P_xx then P_yy.
  [[nodiscard]] std::vector<double> observed() const {
    std::vector<double> out;
    for (const auto& s : samples) out.push_back(s.p_xx);
    if (is_biaxial(mode))
      for (const auto& s : samples) out.push_back(s.p_yy.value_or(0.0));
    return out;
  }

  friend bool operator==(const Curve&, const Curve&) = default;
};

struct Dataset
{
  std::vector<Curve> curves;
  std::string stress_unit = "MPa";
  std::string provenance;
  MaterialFrame frame;

  [[nodiscard]] std::vector<Mode> modes() const {
    std::vector<Mode> out;
    for (const auto& c : curves) out.push_back(c.mode);
    return out;
  }

  [[nodiscard]] bool has_mode(Mode m) const {
    return std::any_of(curves.begin(), curves.end(), [m](const Curve& c) { return c.mode == m; });
  }

  [[nodiscard]] const Curve& curve(Mode m) const {
    for (const auto& c : curves)
      if (c.mode == m) return c;
    fail(ErrorKind::Config, "dataset has no " + std::string(name(m)) + " curve");
  }

  [[nodiscard]] std::size_t sample_count() const {
    std::size_t n = 0;
    for (const auto& c : curves) n += c.samples.size();
    return n;
  }

  [[nodiscard]] bool empty() const { return sample_count() == 0; }

  /// Anisotropic terms need biaxial data to be identifiable.
  [[nodiscard]] bool anisotropic() const {
    return std::any_of(curves.begin(), curves.end(), [](const Curve& c) { return is_biaxial(c.mode); });
  }

  void add(const StressStretchSample& s) {
    for (auto& c : curves)
      if (c.mode == s.mode) {
        c.samples.push_back(s);
        return;
      }
    curves.push_back(Curve{s.mode, {s}});
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.curves == b.curves && a.stress_unit == b.stress_unit && a.provenance == b.provenance &&
           a.frame.a0 == b.frame.a0 && a.frame.s0 == b.frame.s0;
  }
};

/// Checks positivity, finiteness, per-mode column presence and strictly increasing loading stretch.
inline void validate(const Dataset& d) {
  for (const auto& c : d.curves) {
    if (c.samples.empty()) fail(ErrorKind::Validation, "mode " + std::string(name(c.mode)) + " has no samples");
    double prev = -1.0;
    for (const auto& s : c.samples) {
      if (s.mode != c.mode) fail(ErrorKind::Validation, "sample filed under the wrong mode");
      if (!(s.lambda_x > 0.0) || (s.lambda_y && !(*s.lambda_y > 0.0)))
        fail(ErrorKind::Validation, "stretches must be positive");
      if (!std::isfinite(s.p_xx) || (s.p_yy && !std::isfinite(*s.p_yy)))
        fail(ErrorKind::Validation, "stresses must be finite");
      if (is_biaxial(c.mode) && (!s.lambda_y || !s.p_yy))
        fail(ErrorKind::Validation, "biaxial samples need lambda_y and P_yy");
      if (!(s.loading_stretch() > prev))
        fail(ErrorKind::Validation, "stretches must be strictly increasing within mode " + std::string(name(c.mode)));
      prev = s.loading_stretch();
    }
  }
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

  inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  }

  inline std::optional<double> parse_cell(const std::string& cell, std::size_t line) {
    std::string s = cell;
    s.erase(0, s.find_first_not_of(" \t\r"));
    s.erase(s.find_last_not_of(" \t\r") + 1);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = s.data();
    if (*first == '+') ++first;
    auto res = std::from_chars(first, s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      fail(ErrorKind::Parse, "line " + std::to_string(line) + ": cannot parse number '" + cell + "'");
    return v;
  }

  inline std::vector<std::string> split_row(const std::string& row) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(row);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    if (!row.empty() && row.back() == ',') out.emplace_back();
    return out;
  }

  inline std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
    auto p = csv;
    p.replace_extension(".meta.json");
    return p;
  }

} // namespace detail

inline constexpr const char* kCsvHeader = "mode,lambda_x,lambda_y,P_xx,P_yy";

inline std::string to_csv(const Dataset& d) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& c : d.curves)
    for (const auto& s : c.samples) {
      out += std::string(name(s.mode)) + "," + detail::format_double(s.lambda_x) + ",";
      if (s.lambda_y) out += detail::format_double(*s.lambda_y);
      out += "," + detail::format_double(s.p_xx) + ",";
      if (s.p_yy) out += detail::format_double(*s.p_yy);
      out += "\n";
    }
  return out;
}

inline Dataset parse_csv(std::istream& in) {
  Dataset d;
  std::string row;
  std::size_t line = 0;
  bool header = false;
  while (std::getline(in, row)) {
    ++line;
    if (!row.empty() && row.back() == '\r') row.pop_back();
    if (row.empty()) continue;
    if (!header) {
      auto cols = detail::split_row(row);
      if (cols.size() != 5 || cols[0] != "mode") fail(ErrorKind::Parse, "line 1: expected header '" + std::string(kCsvHeader) + "'");
      header = true;
      continue;
    }
    const auto cells = detail::split_row(row);
    if (cells.size() != 5)
      fail(ErrorKind::Parse, "line " + std::to_string(line) + ": expected 5 columns, got " + std::to_string(cells.size()));
    StressStretchSample s;
    try {
      s.mode = parse_mode(cells[0]);
    } catch (const Error&) {
      fail(ErrorKind::Parse, "line " + std::to_string(line) + ": unknown mode tag '" + cells[0] + "'");
    }
    const auto lx = detail::parse_cell(cells[1], line);
    const auto pxx = detail::parse_cell(cells[3], line);
    if (!lx || !pxx) fail(ErrorKind::Parse, "line " + std::to_string(line) + ": lambda_x and P_xx are required");
    s.lambda_x = *lx;
    s.lambda_y = detail::parse_cell(cells[2], line);
    s.p_xx = *pxx;
    s.p_yy = detail::parse_cell(cells[4], line);
    if (is_biaxial(s.mode) && (!s.lambda_y || !s.p_yy))
      fail(ErrorKind::Parse, "line " + std::to_string(line) + ": biaxial rows need lambda_y and P_yy");
    if (!is_biaxial(s.mode) && (s.lambda_y || s.p_yy))
      fail(ErrorKind::Parse, "line " + std::to_string(line) + ": scalar protocols leave lambda_y and P_yy empty");
    d.add(s);
  }
  if (!header) fail(ErrorKind::Parse, "missing header row");
  validate(d);
  return d;
}

inline nlohmann::json metadata_json(const Dataset& d) {
  return {{"stress_unit", d.stress_unit},
          {"provenance", d.provenance},
          {"frame", {{"a0", {d.frame.a0.x(), d.frame.a0.y(), d.frame.a0.z()}},
                     {"s0", {d.frame.s0.x(), d.frame.s0.y(), d.frame.s0.z()}}}}};
}

inline void apply_metadata(Dataset& d, const nlohmann::json& j) {
  d.stress_unit = j.value("stress_unit", d.stress_unit);
  d.provenance = j.value("provenance", d.provenance);
  if (j.contains("frame")) {
    const auto a = j["frame"]["a0"].get<std::vector<double>>();
    const auto s = j["frame"]["s0"].get<std::vector<double>>();
    if (a.size() != 3 || s.size() != 3) fail(ErrorKind::Parse, "frame vectors need three components");
    d.frame = MaterialFrame::make(Vec3(a[0], a[1], a[2]), Vec3(s[0], s[1], s[2]));
  }
}

/// Reads the CSV and, if present, its metadata sidecar.
inline Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  Dataset d = parse_csv(in);
  const auto meta = detail::sidecar_path(path);
  if (std::filesystem::exists(meta)) {
    std::ifstream m(meta);
    try {
      apply_metadata(d, nlohmann::json::parse(m));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Parse, meta.string() + ": " + e.what());
    }
  }
  return d;
}

inline void save_csv(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << to_csv(d);
  std::ofstream meta(detail::sidecar_path(path), std::ios::binary);
  if (!meta) fail(ErrorKind::Io, "cannot write metadata for " + path.string());
  meta << metadata_json(d).dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Synthetic oracles

struct NeoHookean
{
  double c1 = 0.5;
};

struct MooneyRivlin
{
  double c1 = 0.3;
  double c2 = 0.1;
};

/// psi = c1 (I1 - 3) + k1/(2 k2) (exp(k2 E^2) - 1), E = max(kappa (I1 - 3) + (1 - 3 kappa)(I4a - 1), 0).
/// Defaults keep the normalized energy derivatives of skin-range stretches (lambda <= 1.3) of order one.
struct FiberReinforced
{
  double c1 = 4.0;
  double k1 = 10.0;
  double k2 = 5.0;
  double kappa = 0.1;
};

using Oracle = std::variant<NeoHookean, MooneyRivlin, FiberReinforced>;

inline void validate_oracle(const Oracle& o) {
  std::visit(
      [](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, NeoHookean>) {
          if (!(p.c1 > 0.0)) fail(ErrorKind::Config, "neo-Hookean c1 must be positive");
        } else if constexpr (std::is_same_v<P, MooneyRivlin>) {
          if (!(p.c1 > 0.0 && p.c2 > 0.0)) fail(ErrorKind::Config, "Mooney-Rivlin c1, c2 must be positive");
        } else {
          if (!(p.c1 > 0.0 && p.k1 > 0.0 && p.k2 > 0.0))
            fail(ErrorKind::Config, "fiber oracle c1, k1, k2 must be positive");
          if (!(p.kappa >= 0.0 && p.kappa < 1.0 / 3.0)) fail(ErrorKind::Config, "fiber dispersion must lie in [0, 1/3)");
        }
      },
      o);
}

/// Hand-coded dpsi/dI of each oracle.
inline DerivativeVector oracle_derivatives(const Oracle& o, const InvariantBundle& b) {
  return std::visit(
      [&](const auto& p) -> DerivativeVector {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, NeoHookean>) {
          return {p.c1, 0.0, 0.0, 0.0};
        } else if constexpr (std::is_same_v<P, MooneyRivlin>) {
          return {p.c1, p.c2, 0.0, 0.0};
        } else {
          const double E = std::max(p.kappa * (b.i1 - 3.0) + (1.0 - 3.0 * p.kappa) * (b.i4a - 1.0), 0.0);
          const double dE = p.k1 * E * std::exp(p.k2 * E * E);
          return {p.c1 + p.kappa * dE, 0.0, (1.0 - 3.0 * p.kappa) * dE, 0.0};
        }
      },
      o);
}

inline std::array<double, 2> oracle_stress(const Oracle& o, Mode m, double lx, double ly,
                                           const MaterialFrame& frame = {}) {
  const auto bundle = invariants_from_deformation(deformation_for(m, lx, ly), frame);
  return mode_stress(m, oracle_derivatives(o, bundle), lx, ly, frame);
}

/// Evenly spaced stretches in [lo, hi].
inline std::vector<double> linspace(double lo, double hi, int n) {
  if (n < 1) fail(ErrorKind::Config, "grid needs at least one point");
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[i] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
  return out;
}

/// Stretch grid per mode plus optional Gaussian stress noise.
struct SynthSpec
{
  Oracle oracle = NeoHookean{};
  std::vector<std::pair<Mode, std::vector<double>>> grids;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  MaterialFrame frame;
  std::string stress_unit = "MPa";
};

inline StressStretchSample make_sample(Mode m, double stretch) {
  StressStretchSample s;
  s.mode = m;
  switch (m) {
    case Mode::SX: s.lambda_x = stretch; s.lambda_y = 1.0; break;
    case Mode::SY: s.lambda_x = 1.0; s.lambda_y = stretch; break;
    case Mode::EB: s.lambda_x = stretch; s.lambda_y = stretch; break;
    default: s.lambda_x = stretch; break;
  }
  return s;
}

inline Dataset synth_generate(const SynthSpec& spec) {
  validate_oracle(spec.oracle);
  if (spec.noise_sigma < 0.0) fail(ErrorKind::Config, "noise level must be non-negative");
  Dataset d;
  d.stress_unit = spec.stress_unit;
  d.frame = spec.frame;
  d.provenance = "synthetic";
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (const auto& [mode, grid] : spec.grids) {
    if (!std::is_sorted(grid.begin(), grid.end())) fail(ErrorKind::Config, "stretch grid must be sorted");
    for (double stretch : grid) {
      auto s = make_sample(mode, stretch);
      const auto p = oracle_stress(spec.oracle, mode, s.lambda_x, s.ly(), spec.frame);
      s.p_xx = p[0] + spec.noise_sigma * noise(rng);
      if (is_biaxial(mode)) s.p_yy = p[1] + spec.noise_sigma * noise(rng);
      d.add(s);
    }
  }
  validate(d);
  return d;
}

// ---------------------------------------------------------------------------
// Protocol splits

/// Parses "all" or a comma-separated list of mode tags.
inline std::vector<Mode> parse_modes(std::string_view s, const Dataset* dataset = nullptr) {
  if (s == "all") {
    if (!dataset) fail(ErrorKind::Config, "'all' needs a dataset to resolve against");
    return dataset->modes();
  }
  std::vector<Mode> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = s.find(',', start);
    const auto tok = s.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    if (!tok.empty()) {
      try {
        out.push_back(parse_mode(tok));
      } catch (const Error&) {
        fail(ErrorKind::Config, "unknown mode '" + std::string(tok) + "'");
      }
    }
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  if (out.empty()) fail(ErrorKind::Config, "no loading modes given");
  return out;
}

inline Dataset subset(const Dataset& d, const std::vector<Mode>& modes) {
  Dataset out;
  out.stress_unit = d.stress_unit;
  out.provenance = d.provenance;
  out.frame = d.frame;
  for (const auto& c : d.curves)
    if (std::find(modes.begin(), modes.end(), c.mode) != modes.end()) out.curves.push_back(c);
  return out;
}

/// Train on the given modes and validate on the rest. Training on every mode validates on the training set.
inline std::pair<Dataset, Dataset> split_protocol(const Dataset& d, const std::vector<Mode>& train_modes) {
  for (auto m : train_modes)
    if (!d.has_mode(m)) fail(ErrorKind::Config, "dataset has no " + std::string(name(m)) + " data");
  Dataset train = subset(d, train_modes);
  std::vector<Mode> rest;
  for (auto m : d.modes())
    if (std::find(train_modes.begin(), train_modes.end(), m) == train_modes.end()) rest.push_back(m);
  if (rest.empty()) return {train, train};
  return {train, subset(d, rest)};
}

/// FNV-1a over mode tags and the bit patterns of every number.
inline std::string fingerprint(const Dataset& d) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& c : d.curves)
    for (const auto& s : c.samples) {
      const int tag = static_cast<int>(s.mode);
      mix(&tag, sizeof tag);
      for (double v : {s.lambda_x, s.ly(), s.p_xx, s.p_yy.value_or(0.0)}) mix(&v, sizeof v);
    }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Normalization scales from the largest invariants reached by the dataset's deformations.
inline NormalizationConstants normalization_for(const Dataset& d) {
  std::array<double, 4> max_raw{3.0, 3.0, 1.0, 1.0};
  for (const auto& c : d.curves)
    for (const auto& s : c.samples) {
      const auto b = invariants_from_deformation(deformation_for(s.mode, s.lambda_x, s.ly()), d.frame);
      for (auto k : kAllInvariants) max_raw[index(k)] = std::max(max_raw[index(k)], b.raw(k));
    }
  return NormalizationConstants::from_maxima(max_raw);
}

} // namespace polyfit
