#pragma once

/**
 * \file training.hpp
 * \brief Fitting a ConvexTermBank to stress-stretch data.
 *
 * The loss is the mean squared nominal-stress error over every sample and
 * stress component. Each stress component is linear in dpsi/dI, so a sample is
 * reduced once to a 2x4 coefficient matrix and the normalized invariants of
 * its state; the loss gradient then only needs, per term, the parameter
 * gradient of psi'(x) (and psi''(x) for the mixing weights).
 *
 * Parameters are updated with Adam. After every step CANN weights are clipped
 * at zero and NODE biases reset to zero; ICNN weights and mixing weights are
 * unconstrained by construction (exp / logistic).
 */

#include <polyfit/data.hpp>
#include <polyfit/error.hpp>
#include <polyfit/loading.hpp>
#include <polyfit/metrics.hpp>
#include <polyfit/potential.hpp>
#include <polyfit/serialization.hpp>

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace polyfit {

enum class GradientMode { FiniteDifference, Analytic };

inline std::string_view name(GradientMode g) { return g == GradientMode::Analytic ? "analytic" : "fd"; }

inline GradientMode parse_gradient_mode(std::string_view s) {
  if (s == "analytic") return GradientMode::Analytic;
  if (s == "fd" || s == "finite-difference") return GradientMode::FiniteDifference;
  fail(ErrorKind::Config, "unknown gradient mode '" + std::string(s) + "'");
}

struct FamilySpec
{
  Family family = Family::Cann;
  Ansatz ansatz = Ansatz::Reduced;
  BackendConfig backend;
  /// Force the anisotropic term menu; by default it follows the dataset.
  std::optional<bool> anisotropic;
};

/// Adam step size per family when the configuration leaves it unset.
inline double default_learning_rate(Family f) {
  switch (f) {
    case Family::Cann: return 1e-2;
    default: return 3e-2;
  }
}

struct TrainingConfig
{
  /// Adam step size; default_learning_rate(family) when unset.
  std::optional<double> learning_rate;
  int max_epochs = 20000;
  /// Stop once the loss changed by less than this over plateau_window epochs.
  double tolerance = 1e-9;
  int plateau_window = 200;
  int restarts = 10;
  std::uint64_t seed = 0;
  GradientMode grad_mode = GradientMode::Analytic;
  /// Normalization constants; computed from the training data when absent.
  std::optional<NormalizationConstants> normalization;
  /// Threads for independent restarts; 0 reads POLYFIT_THREADS, then the hardware count.
  int threads = 0;
  /// Called after every optimizer step with the constrained bank and the epoch index.
  std::function<void(const ConvexTermBank&, int)> on_step;
};

struct CurveMetrics
{
  Mode mode = Mode::UT;
  double r2 = 0.0;
  double mae = 0.0;
  std::size_t points = 0;

  friend bool operator==(const CurveMetrics&, const CurveMetrics&) = default;
};

struct FitResult
{
  ConvexTermBank bank;
  double final_loss = 0.0;
  std::vector<double> loss_history;
  /// Metrics on the training curves.
  std::vector<CurveMetrics> metrics;
  /// Metrics on the evaluation curves, filled by multi_restart.
  std::vector<CurveMetrics> evaluation;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;
  std::size_t parameter_count = 0;
  int epochs_run = 0;
  std::vector<Mode> train_modes;
  std::string train_fingerprint;
  std::size_t exp_clamp_count = 0;
  /// Largest change in a NODE output when the step count is doubled; zero for other families.
  double node_step_check = 0.0;
  bool accepted = true;
};

namespace detail {

  struct SampleRow
  {
    std::array<double, 4> hat{};
    std::array<std::array<double, 4>, 2> coeff{};
    std::array<double, 2> target{};
    int components = 1;
  };

  struct Problem
  {
    std::vector<SampleRow> rows;
    std::size_t components = 0;
    NormalizationConstants constants;
  };

  inline Problem build_problem(const Dataset& d, const NormalizationConstants& c) {
    if (d.empty()) fail(ErrorKind::InvalidParameter, "dataset is empty");
    Problem p;
    p.constants = c;
    for (const auto& curve : d.curves)
      for (const auto& s : curve.samples) {
        SampleRow row;
        const double ly = s.ly();
        const auto bundle =
            normalize_invariants(invariants_from_deformation(deformation_for(s.mode, s.lambda_x, ly), d.frame), c);
        row.hat = *bundle.normalized;
        for (auto k : kAllInvariants) {
          DerivativeVector unit{};
          unit[index(k)] = 1.0;
          const auto st = mode_stress(s.mode, unit, s.lambda_x, ly, d.frame);
          row.coeff[0][index(k)] = st[0];
          row.coeff[1][index(k)] = st[1];
        }
        row.components = component_count(s.mode);
        row.target = {s.p_xx, s.p_yy.value_or(0.0)};
        p.components += static_cast<std::size_t>(row.components);
        p.rows.push_back(row);
      }
    return p;
  }

  /// Mean squared stress error; accumulates the analytic gradient into grad when it is non-empty.
  inline double loss_and_gradient(const ConvexTermBank& bank, const Problem& prob, std::span<double> grad,
                                  const TermEvalOptions& opt = {}) {
    const auto& terms = bank.terms();
    const auto& c = bank.constants();
    const std::size_t nt = terms.size();
    std::vector<double> x(nt), d1(nt);
    std::vector<Chain> chains(nt);
    std::vector<node::Tape> tapes(nt);
    std::vector<std::size_t> offsets(nt);
    {
      std::size_t off = 0;
      for (std::size_t t = 0; t < nt; ++t) {
        chains[t] = chain(terms[t], c);
        offsets[t] = off;
        off += terms[t].parameter_count();
      }
    }
    const double inv_n = 1.0 / static_cast<double>(prob.components);
    double loss = 0.0;
    for (const auto& row : prob.rows) {
      std::array<double, 4> D{};
      for (std::size_t t = 0; t < nt; ++t) {
        x[t] = terms[t].input(row.hat);
        const auto* np = std::get_if<node::NodeParams>(&terms[t].backend);
        d1[t] = np && !grad.empty() ? node::node_forward(*np, x[t], tapes[t], terms[t].target.mixed())
                                    : terms[t].first_derivative(x[t], opt);
        for (int a = 0; a < chains[t].n; ++a) D[chains[t].idx[a]] += d1[t] * chains[t].factor[a];
      }
      std::array<double, 2> r{};
      for (int comp = 0; comp < row.components; ++comp) {
        double P = 0.0;
        for (std::size_t k = 0; k < 4; ++k) P += row.coeff[comp][k] * D[k];
        r[comp] = P - row.target[comp];
        loss += r[comp] * r[comp];
      }
      if (grad.empty()) continue;

      std::array<double, 4> gbar{};
      for (int comp = 0; comp < row.components; ++comp)
        for (std::size_t k = 0; k < 4; ++k) gbar[k] += 2.0 * inv_n * r[comp] * row.coeff[comp][k];

      for (std::size_t t = 0; t < nt; ++t) {
        const auto& term = terms[t];
        const auto& ch = chains[t];
        double u = 0.0;
        for (int a = 0; a < ch.n; ++a) u += gbar[ch.idx[a]] * ch.factor[a];
        const std::size_t nb = term.backend_params().size();
        if (u != 0.0) {
          if (const auto* np = std::get_if<node::NodeParams>(&term.backend))
            node::node_reverse(*np, tapes[t], u, grad.subspan(offsets[t], nb));
          else
            term.first_derivative_vjp(x[t], u, grad.subspan(offsets[t], nb), opt);
        }
        if (term.target.mixed()) {
          const std::size_t i = ch.idx[0], j = ch.idx[1];
          const double alpha = term.alpha();
          const auto* np = std::get_if<node::NodeParams>(&term.backend);
          const double d2 = np ? tapes[t].slope : term.second_derivative(x[t], opt);
          const double dx = row.hat[i] - row.hat[j];
          const double dalpha = d2 * dx * u + d1[t] * (gbar[i] / c.b[i] - gbar[j] / c.b[j]);
          grad[offsets[t] + nb] += dalpha * alpha * (1.0 - alpha);
        }
      }
    }
    return loss * inv_n;
  }

  inline double loss_only(const ConvexTermBank& bank, const Problem& prob, const TermEvalOptions& opt = {}) {
    return loss_and_gradient(bank, prob, {}, opt);
  }

  /// Central differences of the loss over every parameter.
  inline std::vector<double> finite_difference_gradient(ConvexTermBank bank, const Problem& prob,
                                                        const TermEvalOptions& opt = {}) {
    auto theta = bank.parameters();
    std::vector<double> g(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(theta[i]));
      const double keep = theta[i];
      theta[i] = keep + h;
      bank.set_parameters(theta);
      const double up = loss_only(bank, prob, opt);
      theta[i] = keep - h;
      bank.set_parameters(theta);
      const double down = loss_only(bank, prob, opt);
      theta[i] = keep;
      g[i] = (up - down) / (2.0 * h);
    }
    return g;
  }

} // namespace detail

/// Mean over samples and stress components of the squared nominal-stress error.
inline double loss(const ConvexTermBank& bank, const Dataset& dataset) {
  return detail::loss_only(bank, detail::build_problem(dataset, bank.constants()));
}

/// Analytic gradient of loss() with respect to bank.parameters().
inline std::vector<double> loss_gradient(const ConvexTermBank& bank, const Dataset& dataset,
                                         GradientMode mode = GradientMode::Analytic) {
  const auto prob = detail::build_problem(dataset, bank.constants());
  if (mode == GradientMode::FiniteDifference) return detail::finite_difference_gradient(bank, prob);
  std::vector<double> g(bank.parameter_count(), 0.0);
  detail::loss_and_gradient(bank, prob, g);
  return g;
}

/// Stress predictions and observations for one curve; biaxial curves concatenate xx then yy.
inline std::pair<std::vector<double>, std::vector<double>> curve_series(const ConvexTermBank& bank, const Curve& curve,
                                                                        const MaterialFrame& frame) {
  std::vector<double> xx, yy;
  for (const auto& s : curve.samples) {
    std::array<double, 2> p{};
    try {
      p = predict(bank, curve.mode, s.lambda_x, s.ly(), frame);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Numerical) throw;
      p = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    }
    xx.push_back(p[0]);
    yy.push_back(p[1]);
  }
  if (is_biaxial(curve.mode)) xx.insert(xx.end(), yy.begin(), yy.end());
  return {xx, curve.observed()};
}

/// R^2 and MAE of the bank on every curve of the dataset.
inline std::vector<CurveMetrics> evaluate(const ConvexTermBank& bank, const Dataset& dataset) {
  std::vector<CurveMetrics> out;
  for (const auto& c : dataset.curves) {
    const auto [pred, obs] = curve_series(bank, c, dataset.frame);
    CurveMetrics m;
    m.mode = c.mode;
    m.points = obs.size();
    m.r2 = r_squared(pred, obs);
    m.mae = mae(pred, obs);
    if (!std::isfinite(m.r2)) m.r2 = -std::numeric_limits<double>::infinity();
    if (!std::isfinite(m.mae)) m.mae = std::numeric_limits<double>::infinity();
    out.push_back(m);
  }
  return out;
}

namespace detail {

  /// Largest relative change of any NODE term output on the training inputs when the step count doubles.
  inline double node_step_check(const ConvexTermBank& bank, const Problem& prob) {
    double worst = 0.0;
    for (const auto& t : bank.terms()) {
      const auto* p = std::get_if<node::NodeParams>(&t.backend);
      if (!p) continue;
      auto fine = *p;
      fine.steps *= 2;
      for (const auto& row : prob.rows) {
        const double x = t.input(row.hat);
        const double a = node::node_first_derivative(*p, x);
        const double b = node::node_first_derivative(fine, x);
        worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(b)));
      }
    }
    return worst;
  }

} // namespace detail

inline ConvexTermBank make_bank(const FamilySpec& spec, const Dataset& train, const NormalizationConstants& c) {
  const bool aniso = spec.anisotropic.value_or(train.anisotropic());
  if (aniso && !train.anisotropic())
    fail(ErrorKind::Config, "anisotropic terms need biaxial (SX/SY/EB) training data");
  return make_bank(spec.family, spec.ansatz, aniso, c, spec.backend);
}

/// One Adam fit from a random start determined by config.seed.
inline FitResult train(const FamilySpec& spec, const Dataset& dataset, const TrainingConfig& config) {
  if (dataset.empty()) fail(ErrorKind::InvalidParameter, "dataset is empty");
  const double lr = config.learning_rate.value_or(default_learning_rate(spec.family));
  if (!(lr > 0.0) || config.max_epochs < 1 || !(config.tolerance > 0.0) || config.plateau_window < 1)
    fail(ErrorKind::Config, "training settings must be positive");
  const auto start = std::chrono::steady_clock::now();

  const auto constants = config.normalization.value_or(normalization_for(dataset));
  FitResult result;
  result.bank = make_bank(spec, dataset, constants);
  std::mt19937_64 rng(config.seed);
  initialize(result.bank, rng);
  result.bank.enforce_constraints();

  const auto prob = detail::build_problem(dataset, constants);
  TermEvalOptions opt;
  opt.cann.clamp_exp = true;
  opt.cann.clamp_counter = &result.exp_clamp_count;

  auto& bank = result.bank;
  auto theta = bank.parameters();
  const std::size_t n = theta.size();
  std::vector<double> m(n, 0.0), v(n, 0.0), grad(n, 0.0);
  auto best_theta = theta;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_history;
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double b1t = 1.0, b2t = 1.0;

  int epoch = 0;
  for (; epoch < config.max_epochs; ++epoch) {
    double L = 0.0;
    if (config.grad_mode == GradientMode::Analytic) {
      std::fill(grad.begin(), grad.end(), 0.0);
      L = detail::loss_and_gradient(bank, prob, grad, opt);
    } else {
      L = detail::loss_only(bank, prob, opt);
      grad = detail::finite_difference_gradient(bank, prob, opt);
    }
    if (!std::isfinite(L))
      fail(ErrorKind::Numerical, "loss became non-finite at epoch " + std::to_string(epoch) + " (seed " +
                                     std::to_string(config.seed) + "); try a smaller learning rate");
    result.loss_history.push_back(L);
    if (L < best) {
      best = L;
      best_theta = theta;
    }
    best_history.push_back(best);
    const auto& h = best_history;
    if (h.size() > static_cast<std::size_t>(config.plateau_window) &&
        h[h.size() - 1 - config.plateau_window] - best < config.tolerance)
      break;

    b1t *= beta1;
    b2t *= beta2;
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      const double mhat = m[i] / (1.0 - b1t);
      const double vhat = v[i] / (1.0 - b2t);
      theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    bank.set_parameters(theta);
    bank.enforce_constraints();
    theta = bank.parameters();
    if (config.on_step) config.on_step(bank, epoch);
  }

  bank.set_parameters(best_theta);
  result.final_loss = best;
  result.epochs_run = epoch;
  result.seed = config.seed;
  result.parameter_count = bank.parameter_count();
  result.train_modes = dataset.modes();
  result.train_fingerprint = fingerprint(dataset);
  result.metrics = evaluate(bank, dataset);
  if (bank.family() == Family::Node) {
    result.node_step_check = detail::node_step_check(bank, prob);
    result.accepted = result.node_step_check <= 1e-6;
  }
  result.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

struct CurveSummary
{
  Mode mode = Mode::UT;
  double mean_r2 = 0.0;
  double std_r2 = 0.0;
  double median_r2 = 0.0;
  double mean_mae = 0.0;
  double median_mae = 0.0;
};

struct MultiRestartResult
{
  std::vector<FitResult> fits;
  std::vector<CurveSummary> summary;
};

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("POLYFIT_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

inline std::vector<CurveSummary> summarize(const std::vector<FitResult>& fits) {
  std::vector<CurveSummary> out;
  if (fits.empty()) return out;
  for (std::size_t c = 0; c < fits.front().evaluation.size(); ++c) {
    std::vector<double> r2, err;
    for (const auto& f : fits) {
      r2.push_back(f.evaluation[c].r2);
      err.push_back(f.evaluation[c].mae);
    }
    out.push_back({fits.front().evaluation[c].mode, mean(r2), stddev(r2), median(r2), mean(err), median(err)});
  }
  return out;
}

/// Independent fits with seeds config.seed, config.seed + 1, ...; metrics are computed on `evaluation`
/// (the training data when null).
inline MultiRestartResult multi_restart(const FamilySpec& spec, const Dataset& dataset, const TrainingConfig& config,
                                        const Dataset* evaluation = nullptr) {
  if (config.restarts < 1) fail(ErrorKind::Config, "restarts must be at least 1");
  const Dataset& eval = evaluation ? *evaluation : dataset;
  MultiRestartResult out;
  out.fits.resize(static_cast<std::size_t>(config.restarts));
  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (int r = next++; r < config.restarts; r = next++) {
      try {
        auto cfg = config;
        cfg.seed = config.seed + static_cast<std::uint64_t>(r);
        auto fit = train(spec, dataset, cfg);
        fit.evaluation = evaluate(fit.bank, eval);
        out.fits[static_cast<std::size_t>(r)] = std::move(fit);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int threads = std::min(resolve_threads(config.threads), config.restarts);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  out.summary = summarize(out.fits);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json json_number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

inline nlohmann::json to_json(const std::vector<CurveMetrics>& ms) {
  auto arr = nlohmann::json::array();
  for (const auto& m : ms)
    arr.push_back({{"mode", name(m.mode)}, {"r2", json_number(m.r2)}, {"mae", json_number(m.mae)}, {"points", m.points}});
  return arr;
}

/// FitResult without the loss history (written separately as CSV), the model (saved on its own) and the wall time
/// (kept out so that a rerun with the same seed reproduces the document byte for byte).
inline nlohmann::json to_json(const FitResult& r) {
  nlohmann::json modes = nlohmann::json::array();
  for (auto m : r.train_modes) modes.push_back(name(m));
  return {{"family", name(r.bank.family())},
          {"ansatz", name(r.bank.ansatz())},
          {"final_loss", r.final_loss},
          {"epochs_run", r.epochs_run},
          {"seed", r.seed},
          {"parameter_count", r.parameter_count},
          {"train_modes", modes},
          {"train_fingerprint", r.train_fingerprint},
          {"exp_clamp_count", r.exp_clamp_count},
          {"node_step_check", r.node_step_check},
          {"accepted", r.accepted},
          {"metrics", to_json(r.metrics)},
          {"evaluation", to_json(r.evaluation)}};
}

inline std::string loss_history_csv(const FitResult& r) {
  std::string out = "epoch,loss\n";
  for (std::size_t i = 0; i < r.loss_history.size(); ++i)
    out += std::to_string(i) + "," + detail::format_double(r.loss_history[i]) + "\n";
  return out;
}

} // namespace polyfit
