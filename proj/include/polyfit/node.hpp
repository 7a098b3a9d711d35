#pragma once

/**
 * \file node.hpp
 * \brief Monotone energy derivatives as the time-1 flow map of a learned scalar ODE.
 *
 * dy/dw = f(y), y(0) = x, psi'(x) = y(1). The field f is a bias-free
 * feed-forward network with an odd activation, so f(0) = 0 and trajectories
 * started at x >= 0 never cross zero. Integration uses classical RK4 with a
 * fixed number of steps; derivatives are those of the discrete map.
 */

#include <polyfit/error.hpp>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <string>
#include <vector>

namespace polyfit::node {

inline constexpr int kMaxWidth = 64;
inline constexpr std::size_t kMaxDepth = 8;

enum class Activation { Tanh, Identity };

struct NodeParams
{
  std::vector<int> widths{5, 5};
  Activation activation = Activation::Tanh;
  int steps = 20;
  std::vector<double> params;
  /// One zero vector per layer including the output layer; never trained.
  std::vector<std::vector<double>> biases;

  NodeParams() { resize(); }
  NodeParams(std::vector<int> hidden, int ode_steps, Activation act = Activation::Tanh)
      : widths(std::move(hidden)), activation(act), steps(ode_steps) {
    for (int w : widths)
      if (w < 1 || w > kMaxWidth) fail(ErrorKind::Config, "NODE layer widths must lie in [1, 64]");
    if (widths.size() > kMaxDepth) fail(ErrorKind::Config, "NODE fields support at most 8 hidden layers");
    if (steps < 1) fail(ErrorKind::Config, "NODE step count must be positive");
    resize();
  }

  static std::size_t parameter_count_for(const std::vector<int>& widths) {
    std::size_t n = 0;
    int prev = 1;
    for (int w : widths) {
      n += static_cast<std::size_t>(prev) * w;
      prev = w;
    }
    return n + static_cast<std::size_t>(prev);
  }

  [[nodiscard]] std::size_t parameter_count() const { return params.size(); }

  [[nodiscard]] bool biases_are_zero() const {
    for (const auto& b : biases)
      for (double v : b)
        if (v != 0.0) return false;
    return true;
  }

  void zero_biases() {
    for (auto& b : biases) std::fill(b.begin(), b.end(), 0.0);
  }

private:
  void resize() {
    params.assign(parameter_count_for(widths), 0.0);
    biases.clear();
    for (int w : widths) biases.emplace_back(static_cast<std::size_t>(w), 0.0);
    biases.emplace_back(1, 0.0);
  }
};

namespace detail {

  struct Act
  {
    double g;
    double dg;
  };

  inline Act activate(Activation a, double t) {
    if (a == Activation::Identity) return {t, 1.0};
    const double th = std::tanh(t);
    return {th, 1.0 - th * th};
  }

  using Buffer = std::array<double, kMaxWidth>;

  /// Total hidden units; the size of one field record.
  inline std::size_t hidden_units(const NodeParams& p) {
    std::size_t n = 0;
    for (int w : p.widths) n += static_cast<std::size_t>(w);
    return n;
  }

  /// f(y). When act/dact are given, hidden activations and their slopes are recorded there.
  inline double field(const NodeParams& p, double y, double* act = nullptr, double* dact = nullptr) {
    const auto& W = p.params;
    Buffer a{}, b{};
    double* prev = a.data();
    double* cur = b.data();
    prev[0] = y;
    int prev_w = 1;
    std::size_t off = 0, pos = 0;
    for (int w : p.widths) {
      for (int r = 0; r < w; ++r) {
        const double* row = &W[off + static_cast<std::size_t>(r) * prev_w];
        double s = 0.0;
        for (int c = 0; c < prev_w; ++c) s += row[c] * prev[c];
        const auto g = activate(p.activation, s);
        cur[r] = g.g;
        if (act) {
          act[pos + r] = g.g;
          dact[pos + r] = g.dg;
        }
      }
      off += static_cast<std::size_t>(w) * prev_w;
      pos += static_cast<std::size_t>(w);
      std::swap(prev, cur);
      prev_w = w;
    }
    double out = 0.0;
    for (int c = 0; c < prev_w; ++c) out += W[off + c] * prev[c];
    return out;
  }

  /// df/dy by forward tangent propagation.
  inline double field_dy(const NodeParams& p, double y) {
    const auto& W = p.params;
    Buffer prev{}, dprev{};
    prev[0] = y;
    dprev[0] = 1.0;
    int prev_w = 1;
    std::size_t off = 0;
    for (int w : p.widths) {
      Buffer cur{}, dcur{};
      for (int r = 0; r < w; ++r) {
        double s = 0.0, ds = 0.0;
        for (int c = 0; c < prev_w; ++c) {
          const double wrc = W[off + static_cast<std::size_t>(r) * prev_w + c];
          s += wrc * prev[c];
          ds += wrc * dprev[c];
        }
        const auto a = activate(p.activation, s);
        cur[r] = a.g;
        dcur[r] = a.dg * ds;
      }
      off += static_cast<std::size_t>(w) * prev_w;
      prev = cur;
      dprev = dcur;
      prev_w = w;
    }
    double out = 0.0;
    for (int c = 0; c < prev_w; ++c) out += W[off + c] * dprev[c];
    return out;
  }

  /// df/dy from a recorded evaluation.
  inline double field_slope(const NodeParams& p, const double* dact) {
    const auto& W = p.params;
    Buffer a{}, b{};
    double* prev = a.data();
    double* cur = b.data();
    prev[0] = 1.0;
    int prev_w = 1;
    std::size_t off = 0, pos = 0;
    for (int w : p.widths) {
      for (int r = 0; r < w; ++r) {
        const double* row = &W[off + static_cast<std::size_t>(r) * prev_w];
        double s = 0.0;
        for (int c = 0; c < prev_w; ++c) s += row[c] * prev[c];
        cur[r] = dact[pos + r] * s;
      }
      off += static_cast<std::size_t>(w) * prev_w;
      pos += static_cast<std::size_t>(w);
      std::swap(prev, cur);
      prev_w = w;
    }
    double out = 0.0;
    for (int c = 0; c < prev_w; ++c) out += W[off + c] * prev[c];
    return out;
  }

  /// Accumulates kbar * df/dparams into grad from a recorded evaluation at y and returns kbar * df/dy.
  inline double field_vjp(const NodeParams& p, double y, const double* act, const double* dact, double kbar,
                          std::span<double> grad) {
    const auto& W = p.params;
    const std::size_t L = p.widths.size();
    std::array<std::size_t, kMaxDepth + 1> offsets{};
    std::array<std::size_t, kMaxDepth + 1> pos{};
    {
      std::size_t off = 0, units = 0;
      int prev_w = 1;
      for (std::size_t l = 0; l < L; ++l) {
        offsets[l] = off;
        pos[l] = units;
        off += static_cast<std::size_t>(p.widths[l]) * prev_w;
        units += static_cast<std::size_t>(p.widths[l]);
        prev_w = p.widths[l];
      }
      offsets[L] = off;
    }

    const int last_w = L ? p.widths[L - 1] : 1;
    Buffer abar{};
    for (int c = 0; c < last_w; ++c) {
      const double a = L ? act[pos[L - 1] + c] : y;
      grad[offsets[L] + c] += kbar * a;
      abar[c] = kbar * W[offsets[L] + c];
    }
    for (std::size_t l = L; l-- > 0;) {
      const int w = p.widths[l];
      const int prev_w = l ? p.widths[l - 1] : 1;
      Buffer prev_bar{};
      for (int r = 0; r < w; ++r) {
        const double pbar = abar[r] * dact[pos[l] + r];
        const std::size_t row = offsets[l] + static_cast<std::size_t>(r) * prev_w;
        for (int c = 0; c < prev_w; ++c) {
          const double input = l ? act[pos[l - 1] + c] : y;
          grad[row + c] += pbar * input;
          prev_bar[c] += pbar * W[row + c];
        }
      }
      abar = prev_bar;
    }
    return abar[0];
  }

  /// Unrecorded variant: evaluates the field at y first.
  inline double field_vjp(const NodeParams& p, double y, double kbar, std::span<double> grad) {
    std::vector<double> act(hidden_units(p)), dact(act.size());
    field(p, y, act.data(), dact.data());
    return field_vjp(p, y, act.data(), dact.data(), kbar, grad);
  }

  inline void check_finite(double v) {
    if (!std::isfinite(v))
      fail(ErrorKind::Numerical, "non-finite state during NODE integration; reduce the step size");
  }

} // namespace detail

inline void check_domain(double x) {
  if (!(x >= 0.0)) fail(ErrorKind::Domain, "NODE terms are defined for non-negative inputs");
}

/// y(1) of dy/dw = f(y), y(0) = x.
inline double node_first_derivative(const NodeParams& p, double x) {
  check_domain(x);
  const double h = 1.0 / p.steps;
  double y = x;
  for (int n = 0; n < p.steps; ++n) {
    const double k1 = detail::field(p, y);
    const double k2 = detail::field(p, y + 0.5 * h * k1);
    const double k3 = detail::field(p, y + 0.5 * h * k2);
    const double k4 = detail::field(p, y + h * k3);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    detail::check_finite(y);
  }
  return y;
}

/// dy(1)/dy(0), co-integrated with the same RK4 steps (exact slope of the discrete flow map).
inline double node_second_derivative(const NodeParams& p, double x) {
  check_domain(x);
  const double h = 1.0 / p.steps;
  double y = x;
  double s = 1.0;
  for (int n = 0; n < p.steps; ++n) {
    const double y2i = y;
    const double k1 = detail::field(p, y2i);
    const double s1 = detail::field_dy(p, y2i) * s;
    const double ya = y + 0.5 * h * k1;
    const double k2 = detail::field(p, ya);
    const double s2 = detail::field_dy(p, ya) * (s + 0.5 * h * s1);
    const double yb = y + 0.5 * h * k2;
    const double k3 = detail::field(p, yb);
    const double s3 = detail::field_dy(p, yb) * (s + 0.5 * h * s2);
    const double yc = y + h * k3;
    const double k4 = detail::field(p, yc);
    const double s4 = detail::field_dy(p, yc) * (s + h * s3);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    s += h / 6.0 * (s1 + 2.0 * s2 + 2.0 * s3 + s4);
    detail::check_finite(y);
    detail::check_finite(s);
  }
  return s;
}

/// Forward pass of the discrete flow map with every stage input and field record kept for a reverse sweep.
struct Tape
{
  std::vector<double> inputs; // four stage inputs per step
  std::vector<double> act;
  std::vector<double> dact;
  double output = 0.0;
  /// dy(1)/dy(0), filled when requested.
  double slope = 0.0;
};

/// y(1), recording the tape; with_slope also co-integrates dy(1)/dy(0) from the records.
inline double node_forward(const NodeParams& p, double x, Tape& tape, bool with_slope = false) {
  check_domain(x);
  const double h = 1.0 / p.steps;
  const std::size_t units = detail::hidden_units(p);
  const std::size_t evals = 4 * static_cast<std::size_t>(p.steps);
  tape.inputs.resize(evals);
  tape.act.resize(evals * units);
  tape.dact.resize(evals * units);
  double y = x;
  std::size_t e = 0;
  auto stage = [&](double in) {
    tape.inputs[e] = in;
    const double k = detail::field(p, in, tape.act.data() + e * units, tape.dact.data() + e * units);
    ++e;
    return k;
  };
  double s = 1.0;
  auto slope = [&](std::size_t stage_index) { return detail::field_slope(p, tape.dact.data() + stage_index * units); };
  for (int n = 0; n < p.steps; ++n) {
    const double k1 = stage(y);
    const double k2 = stage(y + 0.5 * h * k1);
    const double k3 = stage(y + 0.5 * h * k2);
    const double k4 = stage(y + h * k3);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    detail::check_finite(y);
    if (with_slope) {
      const std::size_t e0 = e - 4;
      const double s1 = slope(e0) * s;
      const double s2 = slope(e0 + 1) * (s + 0.5 * h * s1);
      const double s3 = slope(e0 + 2) * (s + 0.5 * h * s2);
      const double s4 = slope(e0 + 3) * (s + h * s3);
      s += h / 6.0 * (s1 + 2.0 * s2 + 2.0 * s3 + s4);
      detail::check_finite(s);
    }
  }
  tape.output = y;
  tape.slope = with_slope ? s : 0.0;
  return y;
}

/// Accumulates adjoint * d(y(1))/d(params) into grad from a recorded forward pass.
inline void node_reverse(const NodeParams& p, const Tape& tape, double adjoint, std::span<double> grad) {
  const double h = 1.0 / p.steps;
  const std::size_t units = detail::hidden_units(p);
  auto vjp = [&](std::size_t e, double kbar) {
    return detail::field_vjp(p, tape.inputs[e], tape.act.data() + e * units, tape.dact.data() + e * units, kbar,
                             grad);
  };
  double ybar = adjoint;
  for (int n = p.steps; n-- > 0;) {
    const std::size_t e = 4 * static_cast<std::size_t>(n);
    double k1bar = ybar * h / 6.0;
    double k2bar = ybar * h / 3.0;
    double k3bar = ybar * h / 3.0;
    const double k4bar = ybar * h / 6.0;
    double ynbar = ybar;

    const double y4bar = vjp(e + 3, k4bar);
    ynbar += y4bar;
    k3bar += h * y4bar;

    const double y3bar = vjp(e + 2, k3bar);
    ynbar += y3bar;
    k2bar += 0.5 * h * y3bar;

    const double y2bar = vjp(e + 1, k2bar);
    ynbar += y2bar;
    k1bar += 0.5 * h * y2bar;

    ynbar += vjp(e, k1bar);
    ybar = ynbar;
  }
}

/// Accumulates adjoint * d(y(1))/d(params) into grad through the unrolled RK4 steps.
inline void node_first_derivative_vjp(const NodeParams& p, double x, double adjoint, std::span<double> grad) {
  Tape tape;
  node_forward(p, x, tape);
  node_reverse(p, tape, adjoint, grad);
}

/// Energy of the term: integral of y(1) from 0 to x by adaptive 31-point Gauss-Kronrod (the flow map can bend sharply
/// near zero for steep fields).
inline double node_energy(const NodeParams& p, double x) {
  check_domain(x);
  if (x == 0.0) return 0.0;
  const double total = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      [&](double t) { return node_first_derivative(p, t); }, 0.0, x, 15, 1e-10);
  detail::check_finite(total);
  return total;
}

} // namespace polyfit::node
