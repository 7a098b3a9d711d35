#pragma once

/**
 * \file kinematics.hpp
 * \brief Deformation measures and the invariants the energy expansion is built on.
 *
 * Everything here is a pure function of its inputs. The five invariants are
 * I1 = tr C, I2 = ((tr C)^2 - tr C^2)/2, I3 = det C, I4a = C : a0 x a0 and
 * I4s = C : s0 x s0 with C = F^T F. Only I1, I2, I4a, I4s enter the energy of an
 * incompressible material; I3 is kept for the kinematic checks.
 */

#include <polyfit/error.hpp>

#include <Eigen/Core>
#include <Eigen/LU>

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

namespace polyfit {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// The four invariants that can carry energy, in storage order.
enum class Invariant { I1 = 0, I2 = 1, I4a = 2, I4s = 3 };

inline constexpr std::array<Invariant, 4> kAllInvariants{Invariant::I1, Invariant::I2, Invariant::I4a,
                                                         Invariant::I4s};

constexpr std::size_t index(Invariant k) { return static_cast<std::size_t>(k); }

inline std::string_view name(Invariant k) {
  switch (k) {
    case Invariant::I1: return "I1";
    case Invariant::I2: return "I2";
    case Invariant::I4a: return "I4a";
    case Invariant::I4s: return "I4s";
  }
  return "?";
}

inline Invariant parse_invariant(std::string_view s) {
  for (auto k : kAllInvariants)
    if (name(k) == s) return k;
  fail(ErrorKind::Parse, "unknown invariant '" + std::string(s) + "'");
}

constexpr bool is_anisotropic(Invariant k) { return k == Invariant::I4a || k == Invariant::I4s; }

/// Two unit fiber directions of the material.
struct MaterialFrame
{
  Vec3 a0{1.0, 0.0, 0.0};
  Vec3 s0{0.0, 1.0, 0.0};

  static MaterialFrame make(const Vec3& a0, const Vec3& s0) {
    if (std::abs(a0.norm() - 1.0) > 1e-12 || std::abs(s0.norm() - 1.0) > 1e-12)
      fail(ErrorKind::InvalidParameter, "material frame vectors must have unit length");
    return MaterialFrame{a0, s0};
  }

  [[nodiscard]] MaterialFrame swapped() const { return MaterialFrame{s0, a0}; }
};

/// A deformation gradient with positive determinant.
class DeformationState
{
public:
  static DeformationState from_gradient(const Mat3& F) {
    if (!(F.determinant() > 0.0)) fail(ErrorKind::InvalidDeformation, "det F must be positive");
    return DeformationState(F);
  }

  static DeformationState from_stretches(double lx, double ly, double lz) {
    if (!(lx > 0.0 && ly > 0.0 && lz > 0.0))
      fail(ErrorKind::InvalidDeformation, "principal stretches must be positive");
    Mat3 F = Mat3::Zero();
    F.diagonal() << lx, ly, lz;
    return DeformationState(F);
  }

  /// Volume-preserving state; the through-thickness stretch is 1/(lx*ly).
  static DeformationState incompressible(double lx, double ly) {
    if (!(lx > 0.0 && ly > 0.0)) fail(ErrorKind::InvalidDeformation, "principal stretches must be positive");
    return from_stretches(lx, ly, 1.0 / (lx * ly));
  }

  [[nodiscard]] const Mat3& F() const { return F_; }
  [[nodiscard]] Mat3 C() const { return F_.transpose() * F_; }
  [[nodiscard]] double J() const { return F_.determinant(); }

private:
  explicit DeformationState(const Mat3& F) : F_(F) {}
  Mat3 F_;
};

/// Shift and scale for one invariant: normalized = (raw - a) / b.
struct NormalizationConstants
{
  std::array<double, 4> a{3.0, 3.0, 1.0, 1.0};
  std::array<double, 4> b{1.0, 1.0, 1.0, 1.0};

  [[nodiscard]] double shift(Invariant k) const { return a[index(k)]; }
  [[nodiscard]] double scale(Invariant k) const { return b[index(k)]; }

  /// Scales chosen so the largest observed value maps to 3, floored at 1e-6.
  static NormalizationConstants from_maxima(const std::array<double, 4>& max_raw) {
    NormalizationConstants c;
    for (std::size_t i = 0; i < 4; ++i) c.b[i] = std::max((max_raw[i] - c.a[i]) / 3.0, 1e-6);
    return c;
  }

  friend bool operator==(const NormalizationConstants&, const NormalizationConstants&) = default;
};

struct InvariantBundle
{
  double i1 = 0.0;
  double i2 = 0.0;
  double i3 = 0.0;
  double i4a = 0.0;
  double i4s = 0.0;

  std::optional<std::array<double, 4>> isochoric;
  std::optional<std::array<double, 4>> normalized;
  std::optional<NormalizationConstants> constants;

  [[nodiscard]] double raw(Invariant k) const {
    switch (k) {
      case Invariant::I1: return i1;
      case Invariant::I2: return i2;
      case Invariant::I4a: return i4a;
      case Invariant::I4s: return i4s;
    }
    return 0.0;
  }

  [[nodiscard]] double hat(Invariant k) const {
    if (!normalized) fail(ErrorKind::Config, "invariant bundle has not been normalized");
    return (*normalized)[index(k)];
  }
};

struct MixedInvariant
{
  double value = 0.0;
  double alpha = 1.0;
  Invariant first = Invariant::I1;
  Invariant second = Invariant::I1;
};

/// Derivatives of each invariant with respect to C.
struct InvariantCDerivatives
{
  Mat3 dI1;
  Mat3 dI2;
  Mat3 dI3;
  Mat3 dI4a;
  Mat3 dI4s;
};

inline InvariantBundle invariants_from_C(const Mat3& C, const MaterialFrame& frame) {
  InvariantBundle out;
  const double trC = C.trace();
  out.i1 = trC;
  // Sum of principal 2x2 minors, grouped so that swapping the x and y axes reproduces the value bit for bit.
  auto minor = [&](int i, int j) { return C(i, i) * C(j, j) - C(i, j) * C(j, i); };
  out.i2 = minor(0, 1) + (minor(1, 2) + minor(0, 2));
  out.i3 = C.determinant();
  out.i4a = frame.a0.dot(C * frame.a0);
  out.i4s = frame.s0.dot(C * frame.s0);
  return out;
}

inline InvariantBundle invariants_from_deformation(const DeformationState& state, const MaterialFrame& frame = {}) {
  if (!(state.J() > 0.0)) fail(ErrorKind::InvalidDeformation, "det F must be positive");
  return invariants_from_C(state.C(), frame);
}

inline InvariantBundle isochoric_invariants(InvariantBundle bundle) {
  if (!(bundle.i3 > 0.0)) fail(ErrorKind::InvalidInvariant, "I3 must be positive");
  const double J = std::sqrt(bundle.i3);
  const double j23 = std::pow(J, -2.0 / 3.0);
  const double j43 = std::pow(J, -4.0 / 3.0);
  // J == 1 must reproduce the raw values bit for bit
  if (J == 1.0)
    bundle.isochoric = std::array<double, 4>{bundle.i1, bundle.i2, bundle.i4a, bundle.i4s};
  else
    bundle.isochoric = std::array<double, 4>{j23 * bundle.i1, j43 * bundle.i2, j23 * bundle.i4a, j23 * bundle.i4s};
  return bundle;
}

inline InvariantBundle normalize_invariants(InvariantBundle bundle, const NormalizationConstants& constants) {
  for (double b : constants.b)
    if (!(b > 0.0)) fail(ErrorKind::Config, "normalization scale b must be positive");
  std::array<double, 4> hat{};
  for (auto k : kAllInvariants) hat[index(k)] = (bundle.raw(k) - constants.shift(k)) / constants.scale(k);
  bundle.normalized = hat;
  bundle.constants = constants;
  return bundle;
}

inline MixedInvariant mixed_invariant(double hat_i, double hat_j, double alpha, Invariant i = Invariant::I1,
                                      Invariant j = Invariant::I2) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorKind::InvalidParameter, "mixing weight must lie in [0, 1]");
  return MixedInvariant{alpha * hat_i + (1.0 - alpha) * hat_j, alpha, i, j};
}

inline Mat3 inverse_3x3(const Mat3& C) {
  const double det = C.determinant();
  if (!(std::abs(det) > 1e-14)) fail(ErrorKind::InvalidDeformation, "C is singular");
  Mat3 cof;
  cof(0, 0) = C(1, 1) * C(2, 2) - C(1, 2) * C(2, 1);
  cof(0, 1) = C(0, 2) * C(2, 1) - C(0, 1) * C(2, 2);
  cof(0, 2) = C(0, 1) * C(1, 2) - C(0, 2) * C(1, 1);
  cof(1, 0) = C(1, 2) * C(2, 0) - C(1, 0) * C(2, 2);
  cof(1, 1) = C(0, 0) * C(2, 2) - C(0, 2) * C(2, 0);
  cof(1, 2) = C(0, 2) * C(1, 0) - C(0, 0) * C(1, 2);
  cof(2, 0) = C(1, 0) * C(2, 1) - C(1, 1) * C(2, 0);
  cof(2, 1) = C(0, 1) * C(2, 0) - C(0, 0) * C(2, 1);
  cof(2, 2) = C(0, 0) * C(1, 1) - C(0, 1) * C(1, 0);
  return cof / det;
}

inline InvariantCDerivatives invariant_c_derivatives_from_C(const Mat3& C, const MaterialFrame& frame) {
  const Mat3 I = Mat3::Identity();
  const double i1 = C.trace();
  InvariantCDerivatives d;
  d.dI1 = I;
  d.dI2 = i1 * I - C;
  d.dI3 = C.determinant() * inverse_3x3(C);
  d.dI4a = frame.a0 * frame.a0.transpose();
  d.dI4s = frame.s0 * frame.s0.transpose();
  return d;
}

inline InvariantCDerivatives invariant_c_derivatives(const DeformationState& state, const MaterialFrame& frame = {}) {
  return invariant_c_derivatives_from_C(state.C(), frame);
}

} // namespace polyfit
