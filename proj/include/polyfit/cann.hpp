#pragma once

/**
 * \file cann.hpp
 * \brief Polynomial/exponential convex terms with non-negative weights.
 *
 * A term is psi(x) = sum_{a,b} g_ab f_b(w_ab x^a) with a in {1,2,3},
 * f_identity(t) = t and f_exp(t) = exp(t) - 1. For x >= 0 and non-negative
 * weights every summand is convex and non-decreasing.
 */

#include <polyfit/error.hpp>

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace polyfit::cann {

inline constexpr int kMaxDegree = 3;
inline constexpr std::size_t kPairs = 6; // (degree, activation) combinations
inline constexpr std::size_t kParameterCount = 2 * kPairs;
inline constexpr double kExpArgumentClamp = 50.0;

enum class Activation { Identity, Exp };

/// Layout of one (degree, activation) pair inside the flat parameter vector.
struct Pair
{
  int degree;
  Activation activation;
};

inline constexpr std::array<Pair, kPairs> kPairLayout{{{1, Activation::Identity},
                                                       {1, Activation::Exp},
                                                       {2, Activation::Identity},
                                                       {2, Activation::Exp},
                                                       {3, Activation::Identity},
                                                       {3, Activation::Exp}}};

/// Flat storage: params[2p] is the inner weight w, params[2p+1] the outer weight g of pair p.
struct CannTermParams
{
  std::vector<double> params = std::vector<double>(kParameterCount, 0.0);

  [[nodiscard]] double w(std::size_t pair) const { return params[2 * pair]; }
  [[nodiscard]] double g(std::size_t pair) const { return params[2 * pair + 1]; }
  double& w(std::size_t pair) { return params[2 * pair]; }
  double& g(std::size_t pair) { return params[2 * pair + 1]; }

  [[nodiscard]] std::size_t parameter_count() const { return params.size(); }

  /// Sets the weights of one pair and leaves the rest untouched.
  CannTermParams& set(int degree, Activation act, double w_value, double g_value) {
    for (std::size_t p = 0; p < kPairs; ++p)
      if (kPairLayout[p].degree == degree && kPairLayout[p].activation == act) {
        w(p) = w_value;
        g(p) = g_value;
        return *this;
      }
    fail(ErrorKind::InvalidParameter, "CANN degree must be 1, 2 or 3");
  }

  /// Clips every weight to be non-negative.
  void project() {
    for (double& v : params)
      if (v < 0.0) v = 0.0;
  }
};

/// Controls the overflow guard used while training.
struct EvalOptions
{
  bool clamp_exp = false;
  std::size_t* clamp_counter = nullptr;
};

namespace detail {

  inline void check_domain(double x) {
    if (!(x >= 0.0)) fail(ErrorKind::Domain, "CANN terms are defined for non-negative inputs");
  }

  inline double ipow(double x, int a) {
    switch (a) {
      case 0: return 1.0;
      case 1: return x;
      case 2: return x * x;
      default: return x * x * x;
    }
  }

  inline double guarded_exp(double t, const EvalOptions& opt) {
    if (opt.clamp_exp && t > kExpArgumentClamp) {
      if (opt.clamp_counter) ++*opt.clamp_counter;
      t = kExpArgumentClamp;
    }
    return std::exp(t);
  }

} // namespace detail

inline double cann_value(const CannTermParams& p, double x, const EvalOptions& opt = {}) {
  detail::check_domain(x);
  double sum = 0.0;
  for (std::size_t k = 0; k < kPairs; ++k) {
    const auto [a, act] = kPairLayout[k];
    const double t = p.w(k) * detail::ipow(x, a);
    sum += p.g(k) * (act == Activation::Identity ? t : detail::guarded_exp(t, opt) - 1.0);
  }
  return sum;
}

inline double cann_first_derivative(const CannTermParams& p, double x, const EvalOptions& opt = {}) {
  detail::check_domain(x);
  double sum = 0.0;
  for (std::size_t k = 0; k < kPairs; ++k) {
    const auto [a, act] = kPairLayout[k];
    const double dt = p.w(k) * a * detail::ipow(x, a - 1);
    if (act == Activation::Identity)
      sum += p.g(k) * dt;
    else
      sum += p.g(k) * detail::guarded_exp(p.w(k) * detail::ipow(x, a), opt) * dt;
  }
  return sum;
}

inline double cann_second_derivative(const CannTermParams& p, double x, const EvalOptions& opt = {}) {
  detail::check_domain(x);
  double sum = 0.0;
  for (std::size_t k = 0; k < kPairs; ++k) {
    const auto [a, act] = kPairLayout[k];
    const double dt = p.w(k) * a * detail::ipow(x, a - 1);
    const double ddt = a >= 2 ? p.w(k) * a * (a - 1) * detail::ipow(x, a - 2) : 0.0;
    if (act == Activation::Identity)
      sum += p.g(k) * ddt;
    else
      sum += p.g(k) * detail::guarded_exp(p.w(k) * detail::ipow(x, a), opt) * (dt * dt + ddt);
  }
  return sum;
}

/// Accumulates adjoint * d(psi'(x))/d(params) into grad.
inline void cann_first_derivative_vjp(const CannTermParams& p, double x, double adjoint, std::span<double> grad,
                                      const EvalOptions& opt = {}) {
  for (std::size_t k = 0; k < kPairs; ++k) {
    const auto [a, act] = kPairLayout[k];
    const double xa1 = a * detail::ipow(x, a - 1);
    if (act == Activation::Identity) {
      grad[2 * k] += adjoint * p.g(k) * xa1;
      grad[2 * k + 1] += adjoint * p.w(k) * xa1;
    } else {
      const double t = p.w(k) * detail::ipow(x, a);
      const double e = detail::guarded_exp(t, opt);
      const bool clamped = opt.clamp_exp && t > kExpArgumentClamp;
      grad[2 * k] += adjoint * p.g(k) * xa1 * e * (clamped ? 1.0 : 1.0 + t);
      grad[2 * k + 1] += adjoint * e * p.w(k) * xa1;
    }
  }
}

} // namespace polyfit::cann
