#pragma once

/**
 * \file icnn.hpp
 * \brief Scalar input-convex network used as one convex non-decreasing energy term.
 *
 * Hidden layer 1:  Z_1 = sp2(x exp(Wx_1) + b_1)
 * Hidden layer i:  Z_i = sp2(exp(Wz_i) Z_{i-1} + x exp(Wx_i) + b_i)
 * Output:          psi = exp(Wz_n)^T Z_{n-1} + x exp(Wx_n) + b_n
 *
 * sp2(t) = log(1 + exp(t))^2 elementwise. All effective weights are exp() of the
 * stored raw values, so the network is convex and non-decreasing in x for any
 * raw parameter vector. Derivatives with respect to x are propagated forward
 * alongside the values; parameter gradients of psi' are computed by a reverse
 * sweep over that forward/tangent pass.
 */

#include <polyfit/error.hpp>

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace polyfit::icnn {

struct Softplus2
{
  double h;   // sp(t)^2
  double dh;  // d/dt
  double ddh; // d2/dt2
};

inline double softplus(double t) { return t > 30.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

inline double logistic(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

inline Softplus2 softplus2(double t) {
  const double s = softplus(t);
  const double sig = logistic(t);
  return {s * s, 2.0 * s * sig, 2.0 * sig * sig + 2.0 * s * sig * (1.0 - sig)};
}

struct IcnnParams
{
  std::vector<int> widths{4, 4};
  std::vector<double> params;

  IcnnParams() { params.assign(parameter_count_for(widths), 0.0); }
  explicit IcnnParams(std::vector<int> hidden) : widths(std::move(hidden)) {
    for (int w : widths)
      if (w < 1) fail(ErrorKind::Config, "ICNN layer widths must be positive");
    params.assign(parameter_count_for(widths), 0.0);
  }

  static std::size_t parameter_count_for(const std::vector<int>& widths) {
    std::size_t n = 0;
    int prev = 0;
    for (int w : widths) {
      n += static_cast<std::size_t>(prev) * w + 2 * static_cast<std::size_t>(w);
      prev = w;
    }
    return n + static_cast<std::size_t>(prev) + 2;
  }

  [[nodiscard]] std::size_t parameter_count() const { return params.size(); }
  [[nodiscard]] std::size_t depth() const { return widths.size(); }
};

namespace detail {

  /// Offsets of the raw blocks of one layer inside the flat vector.
  struct LayerView
  {
    std::size_t wz = 0; // rows x cols, row-major; absent on the first hidden layer
    std::size_t wx = 0;
    std::size_t b = 0;
    int rows = 0;
    int cols = 0;
  };

  inline std::vector<LayerView> layout(const IcnnParams& p) {
    std::vector<LayerView> out;
    std::size_t off = 0;
    int prev = 0;
    for (int w : p.widths) {
      LayerView v;
      v.rows = w;
      v.cols = prev;
      v.wz = off;
      off += static_cast<std::size_t>(prev) * w;
      v.wx = off;
      off += w;
      v.b = off;
      off += w;
      out.push_back(v);
      prev = w;
    }
    LayerView head;
    head.rows = 1;
    head.cols = prev;
    head.wz = off;
    off += prev;
    head.wx = off;
    off += 1;
    head.b = off;
    out.push_back(head);
    return out;
  }

  /// Values, first and second x-tangents of every hidden unit.
  struct Forward
  {
    std::vector<LayerView> layers;
    std::vector<std::vector<double>> u, du, ddu; // pre-activations
    std::vector<std::vector<double>> z, dz, ddz; // activations
    double value = 0.0;
    double first = 0.0;
    double second = 0.0;
  };

  inline Forward forward(const IcnnParams& p, double x) {
    Forward f;
    f.layers = layout(p);
    const auto& raw = p.params;
    const std::size_t hidden = p.widths.size();
    f.u.resize(hidden);
    f.du.resize(hidden);
    f.ddu.resize(hidden);
    f.z.resize(hidden);
    f.dz.resize(hidden);
    f.ddz.resize(hidden);
    for (std::size_t l = 0; l < hidden; ++l) {
      const auto& L = f.layers[l];
      f.u[l].assign(L.rows, 0.0);
      f.du[l].assign(L.rows, 0.0);
      f.ddu[l].assign(L.rows, 0.0);
      f.z[l].resize(L.rows);
      f.dz[l].resize(L.rows);
      f.ddz[l].resize(L.rows);
      for (int r = 0; r < L.rows; ++r) {
        const double ex = std::exp(raw[L.wx + r]);
        double u = x * ex + raw[L.b + r];
        double du = ex;
        double ddu = 0.0;
        for (int c = 0; c < L.cols; ++c) {
          const double a = std::exp(raw[L.wz + static_cast<std::size_t>(r) * L.cols + c]);
          u += a * f.z[l - 1][c];
          du += a * f.dz[l - 1][c];
          ddu += a * f.ddz[l - 1][c];
        }
        const auto act = softplus2(u);
        f.u[l][r] = u;
        f.du[l][r] = du;
        f.ddu[l][r] = ddu;
        f.z[l][r] = act.h;
        f.dz[l][r] = act.dh * du;
        f.ddz[l][r] = act.ddh * du * du + act.dh * ddu;
      }
    }
    const auto& H = f.layers.back();
    const double ex = std::exp(raw[H.wx]);
    f.value = x * ex + raw[H.b];
    f.first = ex;
    f.second = 0.0;
    for (int c = 0; c < H.cols; ++c) {
      const double a = std::exp(raw[H.wz + c]);
      f.value += a * f.z[hidden - 1][c];
      f.first += a * f.dz[hidden - 1][c];
      f.second += a * f.ddz[hidden - 1][c];
    }
    if (!std::isfinite(f.value) || !std::isfinite(f.first) || !std::isfinite(f.second))
      fail(ErrorKind::Numerical, "non-finite value inside ICNN evaluation");
    return f;
  }

} // namespace detail

inline double icnn_value(const IcnnParams& p, double x) { return detail::forward(p, x).value; }
inline double icnn_first_derivative(const IcnnParams& p, double x) { return detail::forward(p, x).first; }
inline double icnn_second_derivative(const IcnnParams& p, double x) { return detail::forward(p, x).second; }

/// Accumulates adjoint * d(psi'(x))/d(raw params) into grad.
inline void icnn_first_derivative_vjp(const IcnnParams& p, double x, double adjoint, std::span<double> grad) {
  const auto f = detail::forward(p, x);
  const auto& raw = p.params;
  const std::size_t hidden = p.widths.size();
  const auto& H = f.layers.back();

  // psi' = sum_c exp(Wz_c) dz_c + exp(Wx)
  grad[H.wx] += adjoint * std::exp(raw[H.wx]);
  if (hidden == 0) return;

  std::vector<double> zbar(H.cols, 0.0);
  std::vector<double> dzbar(H.cols, 0.0);
  for (int c = 0; c < H.cols; ++c) {
    const double a = std::exp(raw[H.wz + c]);
    grad[H.wz + c] += adjoint * f.dz[hidden - 1][c] * a;
    dzbar[c] = adjoint * a;
  }

  for (std::size_t l = hidden; l-- > 0;) {
    const auto& L = f.layers[l];
    std::vector<double> zbar_prev(L.cols, 0.0);
    std::vector<double> dzbar_prev(L.cols, 0.0);
    for (int r = 0; r < L.rows; ++r) {
      const auto act = softplus2(f.u[l][r]);
      const double ubar = zbar[r] * act.dh + dzbar[r] * act.ddh * f.du[l][r];
      const double dubar = dzbar[r] * act.dh;
      const double ex = std::exp(raw[L.wx + r]);
      // u = ... + x exp(Wx) + b ; du = ... + exp(Wx)
      grad[L.wx + r] += (ubar * x + dubar) * ex;
      grad[L.b + r] += ubar;
      for (int c = 0; c < L.cols; ++c) {
        const std::size_t idx = L.wz + static_cast<std::size_t>(r) * L.cols + c;
        const double a = std::exp(raw[idx]);
        grad[idx] += (ubar * f.z[l - 1][c] + dubar * f.dz[l - 1][c]) * a;
        zbar_prev[c] += a * ubar;
        dzbar_prev[c] += a * dubar;
      }
    }
    zbar = std::move(zbar_prev);
    dzbar = std::move(dzbar_prev);
  }
}

} // namespace polyfit::icnn
