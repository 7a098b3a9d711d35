#pragma once

/**
 * \file potential.hpp
 * \brief The shared additive energy expansion.
 *
 * psi = sum_i psi_i(hat I_i) + sum_(i,j) psi_ij(hat K_ij), each psi_* a convex
 * non-decreasing scalar function backed by one of the three model families.
 * Derivatives with respect to the raw invariants follow by the chain rule
 * through the normalization (x - a)/b and the mixing weight alpha.
 */

#include <polyfit/cann.hpp>
#include <polyfit/error.hpp>
#include <polyfit/icnn.hpp>
#include <polyfit/kinematics.hpp>
#include <polyfit/node.hpp>

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace polyfit {

enum class Family { Cann, Icnn, Node };
enum class Ansatz { Reduced, Full };

inline std::string_view name(Family f) {
  switch (f) {
    case Family::Cann: return "cann";
    case Family::Icnn: return "icnn";
    case Family::Node: return "node";
  }
  return "?";
}

inline std::string_view name(Ansatz a) { return a == Ansatz::Reduced ? "reduced" : "full"; }

inline Family parse_family(std::string_view s) {
  if (s == "cann") return Family::Cann;
  if (s == "icnn") return Family::Icnn;
  if (s == "node") return Family::Node;
  fail(ErrorKind::Config, "unknown model family '" + std::string(s) + "'");
}

inline Ansatz parse_ansatz(std::string_view s) {
  if (s == "reduced") return Ansatz::Reduced;
  if (s == "full") return Ansatz::Full;
  fail(ErrorKind::Config, "unknown ansatz '" + std::string(s) + "'");
}

/// Which invariant (or mixed pair) a term consumes.
struct Target
{
  Invariant first = Invariant::I1;
  std::optional<Invariant> second;

  [[nodiscard]] bool mixed() const { return second.has_value(); }
  [[nodiscard]] bool anisotropic() const {
    return is_anisotropic(first) || (second && is_anisotropic(*second));
  }
  [[nodiscard]] std::string label() const {
    return mixed() ? "K(" + std::string(name(first)) + "," + std::string(name(*second)) + ")"
                   : std::string(name(first));
  }

  friend bool operator==(const Target&, const Target&) = default;
};

inline double logistic(double t) { return icnn::logistic(t); }

using Backend = std::variant<cann::CannTermParams, icnn::IcnnParams, node::NodeParams>;

/// Evaluation switches that only the trainer turns on.
struct TermEvalOptions
{
  cann::EvalOptions cann;
};

struct ConvexScalarTerm
{
  Target target;
  Backend backend;
  /// Unconstrained mixing parameter; alpha = logistic(alpha_raw). Unused for single-invariant terms.
  double alpha_raw = 0.0;

  [[nodiscard]] double alpha() const { return target.mixed() ? logistic(alpha_raw) : 1.0; }
  [[nodiscard]] Family family() const { return static_cast<Family>(backend.index()); }

  [[nodiscard]] std::span<double> backend_params() {
    return std::visit([](auto& b) { return std::span<double>(b.params); }, backend);
  }
  [[nodiscard]] std::span<const double> backend_params() const {
    return std::visit([](const auto& b) { return std::span<const double>(b.params); }, backend);
  }

  [[nodiscard]] std::size_t parameter_count() const { return backend_params().size() + (target.mixed() ? 1 : 0); }

  /// Scalar input of the term for a normalized bundle.
  [[nodiscard]] double input(const std::array<double, 4>& hat) const {
    if (!target.mixed()) return hat[index(target.first)];
    const double a = alpha();
    return a * hat[index(target.first)] + (1.0 - a) * hat[index(*target.second)];
  }

  [[nodiscard]] double value(double x, const TermEvalOptions& opt = {}) const {
    switch (backend.index()) {
      case 0: return cann::cann_value(std::get<0>(backend), x, opt.cann);
      case 1: return icnn::icnn_value(std::get<1>(backend), x);
      default: return node::node_energy(std::get<2>(backend), x);
    }
  }

  [[nodiscard]] double first_derivative(double x, const TermEvalOptions& opt = {}) const {
    switch (backend.index()) {
      case 0: return cann::cann_first_derivative(std::get<0>(backend), x, opt.cann);
      case 1: return icnn::icnn_first_derivative(std::get<1>(backend), x);
      default: return node::node_first_derivative(std::get<2>(backend), x);
    }
  }

  [[nodiscard]] double second_derivative(double x, const TermEvalOptions& opt = {}) const {
    switch (backend.index()) {
      case 0: return cann::cann_second_derivative(std::get<0>(backend), x, opt.cann);
      case 1: return icnn::icnn_second_derivative(std::get<1>(backend), x);
      default: return node::node_second_derivative(std::get<2>(backend), x);
    }
  }

  /// adjoint * d(psi'(x))/d(backend params), accumulated into grad.
  void first_derivative_vjp(double x, double adjoint, std::span<double> grad, const TermEvalOptions& opt = {}) const {
    switch (backend.index()) {
      case 0: cann::cann_first_derivative_vjp(std::get<0>(backend), x, adjoint, grad, opt.cann); break;
      case 1: icnn::icnn_first_derivative_vjp(std::get<1>(backend), x, adjoint, grad); break;
      default: node::node_first_derivative_vjp(std::get<2>(backend), x, adjoint, grad); break;
    }
  }

  /// Restores the backend's structural constraints after an unconstrained update.
  void enforce_constraints() {
    if (auto* c = std::get_if<cann::CannTermParams>(&backend)) c->project();
    if (auto* n = std::get_if<node::NodeParams>(&backend)) n->zero_biases();
  }
};

/// Hidden-layer widths and integrator settings for the network families.
struct BackendConfig
{
  std::vector<int> widths; // empty: family default
  int ode_steps = 20;
};

inline std::vector<int> default_widths(Family f) {
  switch (f) {
    case Family::Icnn: return {4, 4};
    case Family::Node: return {5, 5};
    default: return {};
  }
}

class ConvexTermBank
{
public:
  ConvexTermBank() = default;
  ConvexTermBank(Family family, Ansatz ansatz, NormalizationConstants constants)
      : family_(family), ansatz_(ansatz), constants_(constants) {}

  [[nodiscard]] Family family() const { return family_; }
  [[nodiscard]] Ansatz ansatz() const { return ansatz_; }
  [[nodiscard]] const NormalizationConstants& constants() const { return constants_; }
  void set_constants(const NormalizationConstants& c) { constants_ = c; }

  [[nodiscard]] const std::vector<ConvexScalarTerm>& terms() const { return terms_; }
  [[nodiscard]] std::vector<ConvexScalarTerm>& terms() { return terms_; }

  void add_term(ConvexScalarTerm term) {
    for (const auto& t : terms_)
      if (t.target == term.target) fail(ErrorKind::Config, "duplicate term target " + term.target.label());
    terms_.push_back(std::move(term));
  }

  [[nodiscard]] bool anisotropic() const {
    for (const auto& t : terms_)
      if (t.target.anisotropic()) return true;
    return false;
  }

  [[nodiscard]] bool has_target(const Target& target) const {
    for (const auto& t : terms_)
      if (t.target == target) return true;
    return false;
  }

  /// True if some term depends on invariant k.
  [[nodiscard]] bool uses(Invariant k) const {
    for (const auto& t : terms_)
      if (t.target.first == k || (t.target.second && *t.target.second == k)) return true;
    return false;
  }

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : terms_) n += t.parameter_count();
    return n;
  }

  /// Flat view for optimizers: per term its backend parameters followed by alpha_raw for mixed terms.
  [[nodiscard]] std::vector<double> parameters() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& t : terms_) {
      auto p = t.backend_params();
      out.insert(out.end(), p.begin(), p.end());
      if (t.target.mixed()) out.push_back(t.alpha_raw);
    }
    return out;
  }

  void set_parameters(std::span<const double> values) {
    if (values.size() != parameter_count()) fail(ErrorKind::Config, "parameter vector has the wrong length");
    std::size_t off = 0;
    for (auto& t : terms_) {
      auto p = t.backend_params();
      std::copy(values.begin() + static_cast<std::ptrdiff_t>(off),
                values.begin() + static_cast<std::ptrdiff_t>(off + p.size()), p.begin());
      off += p.size();
      if (t.target.mixed()) t.alpha_raw = values[off++];
    }
  }

  void enforce_constraints() {
    for (auto& t : terms_) t.enforce_constraints();
  }

private:
  Family family_ = Family::Cann;
  Ansatz ansatz_ = Ansatz::Reduced;
  NormalizationConstants constants_;
  std::vector<ConvexScalarTerm> terms_;
};

/// Term menu for each benchmark: rubber {I1, I2}; skin reduced adds K(4a,4s); skin full replaces it with
/// K(1,2), K(1,4a), K(1,4s), K(4a,4s). Isotropic full adds only K(1,2).
inline std::vector<Target> term_menu(Ansatz ansatz, bool anisotropic) {
  using I = Invariant;
  std::vector<Target> out{{I::I1, std::nullopt}, {I::I2, std::nullopt}};
  if (!anisotropic) {
    if (ansatz == Ansatz::Full) out.push_back({I::I1, I::I2});
    return out;
  }
  if (ansatz == Ansatz::Reduced) {
    out.push_back({I::I4a, I::I4s});
  } else {
    out.push_back({I::I1, I::I2});
    out.push_back({I::I1, I::I4a});
    out.push_back({I::I1, I::I4s});
    out.push_back({I::I4a, I::I4s});
  }
  return out;
}

inline Backend make_backend(Family family, const BackendConfig& cfg) {
  const auto widths = cfg.widths.empty() ? default_widths(family) : cfg.widths;
  switch (family) {
    case Family::Cann: return cann::CannTermParams{};
    case Family::Icnn: return icnn::IcnnParams(widths);
    default: return node::NodeParams(widths, cfg.ode_steps);
  }
}

/// Random starting point. CANN weights are uniform in [0, 0.2]. ICNN raw weights have spread 0.5 around
/// kIcnnInputShift (input passthrough) and kIcnnInputShift - ln(fan-in) (layer to layer), biases zero, so that
/// stacked softplus-squared layers start with order-one slopes on inputs in [0, 3]. NODE weights are N(0, 1), wide
/// enough for the field to start with saturating flows.
/// Mixed terms start at alpha = 1/2.
inline constexpr double kIcnnInputShift = -1.0;

template <class Rng>
void initialize(ConvexTermBank& bank, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 0.5);
  std::normal_distribution<double> wide(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 0.2);
  for (auto& t : bank.terms()) {
    t.alpha_raw = 0.0;
    std::visit(
        [&](auto& b) {
          using B = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<B, cann::CannTermParams>) {
            for (double& v : b.params) v = uniform(rng);
          } else if constexpr (std::is_same_v<B, icnn::IcnnParams>) {
            for (const auto& L : icnn::detail::layout(b)) {
              const double wz_shift = kIcnnInputShift - std::log(std::max(1, L.cols));
              for (int k = 0; k < L.rows * L.cols; ++k) b.params[L.wz + k] = wz_shift + normal(rng);
              for (int r = 0; r < L.rows; ++r) {
                b.params[L.wx + r] = kIcnnInputShift + normal(rng);
                b.params[L.b + r] = 0.0;
              }
            }
          } else {
            for (double& v : b.params) v = wide(rng);
            b.zero_biases();
          }
        },
        t.backend);
  }
}

inline ConvexTermBank make_bank(Family family, Ansatz ansatz, bool anisotropic, const NormalizationConstants& constants,
                                const BackendConfig& cfg = {}) {
  ConvexTermBank bank(family, ansatz, constants);
  for (const auto& target : term_menu(ansatz, anisotropic)) bank.add_term({target, make_backend(family, cfg), 0.0});
  return bank;
}

struct EnergyDerivatives
{
  /// d psi / d I_k for k = I1, I2, I4a, I4s.
  std::array<double, 4> first{};
  /// d2 psi / d I_k d I_l, including the cross terms produced by mixed invariants.
  Eigen::Matrix4d second = Eigen::Matrix4d::Zero();

  [[nodiscard]] double d(Invariant k) const { return first[index(k)]; }
  [[nodiscard]] double dd(Invariant k) const { return second(index(k), index(k)); }
};

/// Mixed invariants implied by the bank's mixed terms for a normalized bundle.
inline std::vector<MixedInvariant> mixed_invariants(const ConvexTermBank& bank, const InvariantBundle& bundle) {
  std::vector<MixedInvariant> out;
  for (const auto& t : bank.terms())
    if (t.target.mixed())
      out.push_back(
          mixed_invariant(bundle.hat(t.target.first), bundle.hat(*t.target.second), t.alpha(), t.target.first,
                          *t.target.second));
  return out;
}

namespace detail {

  inline void check_constants(const ConvexTermBank& bank, const InvariantBundle& bundle) {
    if (!bundle.normalized || !bundle.constants)
      fail(ErrorKind::Config, "invariant bundle must be normalized before evaluating the energy");
    if (!(*bundle.constants == bank.constants()))
      fail(ErrorKind::Config, "bundle normalization constants differ from the model's");
  }

  /// Per-term chain factors d(input)/d(raw invariant) as a sparse pair list.
  struct Chain
  {
    std::array<std::size_t, 2> idx{};
    std::array<double, 2> factor{};
    int n = 0;
  };

  inline Chain chain(const ConvexScalarTerm& t, const NormalizationConstants& c) {
    Chain ch;
    const std::size_t i = index(t.target.first);
    if (!t.target.mixed()) {
      ch.idx[0] = i;
      ch.factor[0] = 1.0 / c.b[i];
      ch.n = 1;
      return ch;
    }
    const std::size_t j = index(*t.target.second);
    const double a = t.alpha();
    ch.idx = {i, j};
    ch.factor = {a / c.b[i], (1.0 - a) / c.b[j]};
    ch.n = 2;
    return ch;
  }

} // namespace detail

/// Derivatives of the energy with respect to the raw invariants. Mixed terms are taken from the bank's alphas.
inline EnergyDerivatives energy_derivatives(const ConvexTermBank& bank, const InvariantBundle& bundle,
                                            bool with_second = true, const TermEvalOptions& opt = {}) {
  detail::check_constants(bank, bundle);
  EnergyDerivatives out;
  for (const auto& t : bank.terms()) {
    const double x = t.input(*bundle.normalized);
    const double d1 = t.first_derivative(x, opt);
    const auto ch = detail::chain(t, bank.constants());
    for (int a = 0; a < ch.n; ++a) out.first[ch.idx[a]] += d1 * ch.factor[a];
    if (with_second) {
      const double d2 = t.second_derivative(x, opt);
      for (int a = 0; a < ch.n; ++a)
        for (int b = 0; b < ch.n; ++b) out.second(ch.idx[a], ch.idx[b]) += d2 * ch.factor[a] * ch.factor[b];
    }
  }
  return out;
}

/// Overload that takes the mixed invariants explicitly; their alphas must match the bank's mixed terms in order.
inline EnergyDerivatives energy_derivatives(const ConvexTermBank& bank, const InvariantBundle& bundle,
                                            std::span<const MixedInvariant> mixed) {
  std::size_t m = 0;
  for (const auto& t : bank.terms()) {
    if (!t.target.mixed()) continue;
    if (m >= mixed.size() || mixed[m].first != t.target.first || mixed[m].second != *t.target.second ||
        std::abs(mixed[m].alpha - t.alpha()) > 1e-15)
      fail(ErrorKind::Config, "mixed invariants do not match the model's mixed terms");
    ++m;
  }
  if (m != mixed.size()) fail(ErrorKind::Config, "mixed invariants do not match the model's mixed terms");
  return energy_derivatives(bank, bundle);
}

/// Energy relative to the reference state: sum over terms of psi_t(x_t) - psi_t(0).
inline double energy_value(const ConvexTermBank& bank, const InvariantBundle& bundle) {
  detail::check_constants(bank, bundle);
  double total = 0.0;
  for (const auto& t : bank.terms()) {
    const double x = t.input(*bundle.normalized);
    total += t.value(x) - t.value(0.0);
  }
  if (!std::isfinite(total)) fail(ErrorKind::Numerical, "energy evaluation produced a non-finite value");
  return total;
}

/// Samples every term's first and second derivative on [0, upper] and reports the smallest values seen.
struct ConvexityWitness
{
  double min_first = 0.0;
  double min_second = 0.0;
  [[nodiscard]] bool holds(double tol = 1e-8) const { return min_first >= -tol && min_second >= -tol; }
};

inline ConvexityWitness convexity_witness(const ConvexTermBank& bank, double upper = 4.5, int points = 200) {
  ConvexityWitness w{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  for (const auto& t : bank.terms())
    for (int i = 0; i < points; ++i) {
      const double x = upper * i / (points - 1);
      w.min_first = std::min(w.min_first, t.first_derivative(x));
      w.min_second = std::min(w.min_second, t.second_derivative(x));
    }
  return w;
}

} // namespace polyfit
