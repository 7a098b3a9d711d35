// polyfit command-line tool: synthetic data generation, fitting, benchmark grids and derivative traces.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error, 3 numerical failure.

#include <polyfit/bench.hpp>
#include <polyfit/data.hpp>
#include <polyfit/serialization.hpp>
#include <polyfit/training.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace polyfit;

namespace {

constexpr const char* kToolVersion = "1.0.0";

enum Exit : int { Ok = 0, Usage = 1, DataError = 2, NumericalFailure = 3 };

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config:
    case ErrorKind::InvalidParameter: return Usage;
    case ErrorKind::Numerical:
    case ErrorKind::UndefinedMetric: return NumericalFailure;
    default: return DataError;
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

/// Lists the files a command produced; kept free of timestamps so reruns are byte-identical.
void write_manifest(const fs::path& dir, const std::string& command, std::vector<std::string> files) {
  files.push_back("config.toml");
  nlohmann::json j{{"tool", "polyfit"}, {"version", kToolVersion}, {"command", command}, {"files", files}};
  write_file(dir / "manifest.json", j.dump(2) + "\n");
}

/// Writes the effective options of the running subcommand in a form accepted back by --config.
void echo_config(const CLI::App& cmd, const fs::path& dir) {
  write_file(dir / "config.toml", "[" + cmd.get_name() + "]\n" + cmd.config_to_str(true, false));
}

std::vector<int> parse_widths(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      fail(ErrorKind::Config, "layer widths must be a comma-separated list of integers");
    }
  }
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

struct TrainingFlags
{
  std::string family = "cann";
  std::string ansatz = "reduced";
  std::string train_modes = "all";
  int restarts = 1;
  std::uint64_t seed = 0;
  double lr = 0.0;
  int epochs = 20000;
  std::string grad_mode = "analytic";
  int ode_steps = 20;
  std::string widths;

  void add(CLI::App& cmd) {
    cmd.add_option("--family", family, "Model family")->check(CLI::IsMember({"cann", "icnn", "node"}));
    cmd.add_option("--ansatz", ansatz, "Term menu")->check(CLI::IsMember({"reduced", "full"}));
    cmd.add_option("--train-modes", train_modes, "'all' or comma-separated modes (UT,PS,ET,SX,SY,EB)");
    cmd.add_option("--seed", seed, "Base random seed");
    cmd.add_option("--lr", lr, "Adam step size (family default when 0)")->check(CLI::NonNegativeNumber);
    cmd.add_option("--epochs", epochs, "Maximum epochs per fit")->check(CLI::PositiveNumber);
    cmd.add_option("--grad-mode", grad_mode, "Gradient mode")->check(CLI::IsMember({"analytic", "fd"}));
    cmd.add_option("--ode-steps", ode_steps, "NODE RK4 steps")->check(CLI::PositiveNumber);
    cmd.add_option("--widths", widths, "Hidden widths for ICNN/NODE, e.g. 4,4");
  }

  [[nodiscard]] TrainingConfig config() const {
    TrainingConfig c;
    if (lr > 0.0) c.learning_rate = lr;
    c.max_epochs = epochs;
    c.restarts = restarts;
    c.seed = seed;
    c.grad_mode = parse_gradient_mode(grad_mode);
    return c;
  }

  [[nodiscard]] FamilySpec spec(Family f) const {
    FamilySpec s;
    s.family = f;
    s.ansatz = parse_ansatz(ansatz);
    s.backend.widths = parse_widths(widths);
    s.backend.ode_steps = ode_steps;
    return s;
  }
};

// ---------------------------------------------------------------------------

struct GenDataFlags
{
  std::string oracle = "mooney-rivlin";
  std::string modes;
  double c1 = 0.0, c2 = 0.1, k1 = 10.0, k2 = 5.0, kappa = 0.1;
  double lambda_min = 1.0;
  double lambda_max = 0.0;
  int points = 20;
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::string unit = "MPa";
  std::string out = "polyfit-data";
};

int cmd_gen_data(const CLI::App& cmd, const GenDataFlags& f) {
  SynthSpec spec;
  spec.noise_sigma = f.noise;
  spec.seed = f.seed;
  spec.stress_unit = f.unit;
  std::string default_modes;
  double default_max = 0.0;
  if (f.oracle == "neo-hookean") {
    spec.oracle = NeoHookean{f.c1 > 0.0 ? f.c1 : 0.5};
    default_modes = "UT,PS,ET";
    default_max = 2.0;
  } else if (f.oracle == "mooney-rivlin") {
    spec.oracle = MooneyRivlin{f.c1 > 0.0 ? f.c1 : 0.3, f.c2};
    default_modes = "UT,PS,ET";
    default_max = 3.0;
  } else {
    spec.oracle = FiberReinforced{f.c1 > 0.0 ? f.c1 : 4.0, f.k1, f.k2, f.kappa};
    default_modes = "SX,SY,EB";
    default_max = 1.3;
  }
  const double hi = f.lambda_max > 0.0 ? f.lambda_max : default_max;
  for (auto m : parse_modes(f.modes.empty() ? default_modes : f.modes)) {
    // Equibiaxial stretches grow I2 fastest; the default rubber grid stops ET at 2.5.
    const double top = (m == Mode::ET && f.lambda_max <= 0.0 && f.oracle == "mooney-rivlin") ? 2.5 : hi;
    spec.grids.emplace_back(m, linspace(f.lambda_min, top, f.points));
  }
  const auto data = synth_generate(spec);
  const fs::path dir(f.out);
  fs::create_directories(dir);
  save_csv(data, dir / "dataset.csv");
  echo_config(cmd, dir);
  write_manifest(dir, "gen-data", {"dataset.csv", "dataset.meta.json"});
  std::cout << "wrote " << data.sample_count() << " samples to " << (dir / "dataset.csv").string() << "\n";
  return Ok;
}

// ---------------------------------------------------------------------------

struct FitFlags
{
  std::string data;
  std::string out = "polyfit-fit";
  TrainingFlags training;
};

int cmd_fit(const CLI::App& cmd, const FitFlags& f) {
  const auto dataset = load_csv(f.data);
  const auto modes = parse_modes(f.training.train_modes, &dataset);
  const auto [train_set, validation] = split_protocol(dataset, modes);
  const auto spec = f.training.spec(parse_family(f.training.family));
  const auto cfg = f.training.config();

  const auto result = multi_restart(spec, train_set, cfg, &dataset);
  std::size_t best = 0;
  for (std::size_t i = 1; i < result.fits.size(); ++i)
    if (result.fits[i].final_loss < result.fits[best].final_loss) best = i;
  const auto& fit = result.fits[best];

  const fs::path dir(f.out);
  fs::create_directories(dir);
  save_model(fit.bank, dir / "model.json");
  auto j = to_json(fit);
  j["validation_fingerprint"] = fingerprint(validation);
  if (result.fits.size() > 1) {
    nlohmann::json summary = nlohmann::json::array();
    for (const auto& s : result.summary)
      summary.push_back({{"mode", name(s.mode)},
                         {"mean_r2", json_number(s.mean_r2)},
                         {"std_r2", json_number(s.std_r2)},
                         {"median_r2", json_number(s.median_r2)},
                         {"median_mae", json_number(s.median_mae)}});
    j["restarts"] = result.fits.size();
    j["summary"] = summary;
  }
  write_file(dir / "fit_result.json", j.dump(2) + "\n");
  write_file(dir / "loss_history.csv", loss_history_csv(fit));
  nlohmann::json timings = nlohmann::json::object();
  for (const auto& r : result.fits) timings["seed_" + std::to_string(r.seed)] = r.wall_time_s;
  write_file(dir / "timings.json", timings.dump(2) + "\n");
  echo_config(cmd, dir);
  write_manifest(dir, "fit", {"model.json", "fit_result.json", "loss_history.csv", "timings.json"});

  std::cout << name(spec.family) << " fit: loss " << fit.final_loss << " after " << fit.epochs_run << " epochs\n";
  for (const auto& m : fit.evaluation) std::cout << "  " << name(m.mode) << "  R2 " << m.r2 << "  MAE " << m.mae << "\n";
  if (!fit.accepted) {
    std::cerr << "NODE step check failed: doubling the steps changed outputs by " << fit.node_step_check << "\n";
    return NumericalFailure;
  }
  return Ok;
}

// ---------------------------------------------------------------------------

struct BenchFlags
{
  std::string data;
  std::string out = "polyfit-bench";
  std::string families = "cann,icnn,node";
  std::string train_sets = "singles,all";
  int trace_points = 50;
  double trace_max = 3.0;
  bool efficiency = false;
  TrainingFlags training;
};

int cmd_bench(const CLI::App& cmd, const BenchFlags& f) {
  const auto dataset = load_csv(f.data);
  std::vector<std::vector<Mode>> sets;
  for (const auto& tok : split(f.train_sets)) {
    if (tok == "singles") {
      for (auto m : dataset.modes()) sets.push_back({m});
    } else if (tok == "all") {
      sets.push_back(dataset.modes());
    } else {
      std::string list = tok;
      std::replace(list.begin(), list.end(), '+', ',');
      sets.push_back(parse_modes(list));
    }
  }
  std::vector<FamilySpec> specs;
  for (const auto& fam : split(f.families)) specs.push_back(f.training.spec(parse_family(fam)));

  auto cfg = f.training.config();
  if (cmd.get_option("--restarts")->count() == 0) cfg.restarts = dataset.anisotropic() ? 10 : 50;

  auto report = run_grid(specs, dataset, sets, cfg, f.trace_points, f.trace_max);
  if (f.efficiency) {
    auto eff_cfg = cfg;
    eff_cfg.normalization = normalization_for(dataset);
    for (const auto& s : specs) {
      auto ladder = default_ladder(s.family);
      for (auto& rung : ladder) rung.backend.ode_steps = s.backend.ode_steps;
      try {
        for (auto& row : efficiency_sweep(ladder, dataset, eff_cfg)) report.efficiency.push_back(std::move(row));
      } catch (const Error& e) {
        report.failures.push_back("efficiency/" + std::string(name(s.family)) + ": " + e.what());
      }
    }
  }

  const fs::path dir(f.out);
  write_report(report, dir);
  echo_config(cmd, dir);
  std::vector<std::string> files{"report.json", "grid_r2.csv", "grid_mae.csv", "timings.json"};
  if (!report.efficiency.empty()) files.push_back("efficiency.csv");
  if (!report.traces.empty()) files.push_back("traces/");
  write_manifest(dir, "bench", files);

  for (const auto& c : report.grid) {
    std::cout << c.family << "  train " << c.train << "  eval " << name(c.eval) << "  mean R2 " << c.mean_r2 << "\n";
    if (c.rejected > 0)
      std::cerr << "warning: " << c.family << "/" << c.train << ": " << c.rejected
                << " restarts failed the NODE step check (worst " << c.worst_step_check << ")\n";
  }
  if (report.partial()) {
    for (const auto& msg : report.failures) std::cerr << "failed: " << msg << "\n";
    return NumericalFailure;
  }
  return Ok;
}

// ---------------------------------------------------------------------------

struct DerivativeFlags
{
  std::string model;
  std::string out = "polyfit-derivatives";
  int points = 100;
  double lo = 0.0;
  double hi = 3.0;
};

int cmd_derivatives(const CLI::App& cmd, const DerivativeFlags& f) {
  const auto bank = load_model(f.model);
  const auto traces = second_derivative_traces(bank, f.lo, f.hi, f.points);
  const fs::path dir(f.out);
  fs::create_directories(dir);
  std::vector<std::string> files;
  for (const auto& t : traces) {
    const std::string file = "d2psi_" + t.label + ".csv";
    write_file(dir / file, trace_csv(t));
    files.push_back(file);
  }
  echo_config(cmd, dir);
  write_manifest(dir, "derivatives", files);
  std::cout << "wrote " << traces.size() << " traces of " << f.points << " points to " << dir.string() << "\n";
  return Ok;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Physics-constrained hyperelastic model fitting (CANN, ICNN, NODE)"};
  app.set_config("--config", "", "TOML/INI configuration file; command-line flags take precedence");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  GenDataFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic stress-stretch dataset");
  gen_cmd->add_option("--oracle", gen.oracle, "Ground-truth material")
      ->check(CLI::IsMember({"neo-hookean", "mooney-rivlin", "fiber"}));
  gen_cmd->add_option("--modes", gen.modes, "Comma-separated modes (default depends on the oracle)");
  gen_cmd->add_option("--c1", gen.c1, "Matrix stiffness (oracle default when 0)");
  gen_cmd->add_option("--c2", gen.c2, "Mooney-Rivlin c2");
  gen_cmd->add_option("--k1", gen.k1, "Fiber stiffness");
  gen_cmd->add_option("--k2", gen.k2, "Fiber exponential rate");
  gen_cmd->add_option("--kappa", gen.kappa, "Fiber dispersion in [0, 1/3)");
  gen_cmd->add_option("--lambda-min", gen.lambda_min, "Smallest stretch");
  gen_cmd->add_option("--lambda-max", gen.lambda_max, "Largest stretch (oracle default when 0)");
  gen_cmd->add_option("--points", gen.points, "Points per mode")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--noise", gen.noise, "Gaussian stress noise sigma")->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--seed", gen.seed, "Noise seed");
  gen_cmd->add_option("--unit", gen.unit, "Stress unit label");
  gen_cmd->add_option("--out", gen.out, "Output directory");

  FitFlags fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit one model family to a dataset");
  fit_cmd->add_option("--data", fit.data, "Dataset CSV")->required();
  fit_cmd->add_option("--out", fit.out, "Output directory");
  fit_cmd->add_option("--restarts", fit.training.restarts, "Independent restarts; the lowest-loss fit is saved")
      ->check(CLI::PositiveNumber);
  fit.training.add(*fit_cmd);

  BenchFlags bench;
  bench.training.restarts = 10;
  auto* bench_cmd = app.add_subcommand("bench", "Train/evaluate grid over loading modes and families");
  bench_cmd->add_option("--data", bench.data, "Dataset CSV")->required();
  bench_cmd->add_option("--out", bench.out, "Output directory");
  bench_cmd->add_option("--families", bench.families, "Comma-separated families");
  bench_cmd->add_option("--train-sets", bench.train_sets,
                        "Comma-separated training sets: 'singles', 'all' or modes joined with '+'");
  bench_cmd->add_option("--restarts", bench.training.restarts,
                        "Restarts per cell (default 50 on isotropic data, 10 on anisotropic data)")
      ->check(CLI::PositiveNumber);
  bench_cmd->add_option("--trace-points", bench.trace_points, "Points per second-derivative trace (0 disables)");
  bench_cmd->add_option("--trace-max", bench.trace_max, "Upper end of the normalized trace range");
  bench_cmd->add_flag("--efficiency", bench.efficiency, "Also run the parameter-efficiency sweep");
  bench.training.add(*bench_cmd);
  bench_cmd->get_option("--family")->description("Unused by bench; see --families");

  DerivativeFlags deriv;
  auto* deriv_cmd = app.add_subcommand("derivatives", "Second-derivative traces of a saved model");
  deriv_cmd->add_option("--model", deriv.model, "Model JSON")->required();
  deriv_cmd->add_option("--out", deriv.out, "Output directory");
  deriv_cmd->add_option("--points", deriv.points, "Points per trace")->check(CLI::PositiveNumber);
  deriv_cmd->add_option("--lo", deriv.lo, "Lower end of the normalized range");
  deriv_cmd->add_option("--hi", deriv.hi, "Upper end of the normalized range");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? Ok : Usage;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(*gen_cmd, gen);
    if (*fit_cmd) return cmd_fit(*fit_cmd, fit);
    if (*bench_cmd) return cmd_bench(*bench_cmd, bench);
    if (*deriv_cmd) return cmd_derivatives(*deriv_cmd, deriv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return DataError;
  }
  return Usage;
}
