#pragma once

/**
 * \file loading.hpp
 * \brief Nominal stress of an incompressible material under the benchmark loading protocols.
 *
 * Every protocol is linear in the energy derivatives dpsi/dI_k, so each one is
 * written once in terms of those derivatives and wrapped for a ConvexTermBank.
 * Biaxial stresses use S = 2 dpsi/dC - p C^-1 with p fixed by sigma_zz = 0.
 */

#include <polyfit/error.hpp>
#include <polyfit/kinematics.hpp>
#include <polyfit/potential.hpp>

#include <array>
#include <string>
#include <string_view>

namespace polyfit {

/// Loading protocols. SX, SY and EB are biaxial with (lambda, 1), (1, lambda) and (lambda, lambda).
enum class Mode { UT, PS, ET, SX, SY, EB };

inline constexpr std::array<Mode, 6> kAllModes{Mode::UT, Mode::PS, Mode::ET, Mode::SX, Mode::SY, Mode::EB};

inline std::string_view name(Mode m) {
  switch (m) {
    case Mode::UT: return "UT";
    case Mode::PS: return "PS";
    case Mode::ET: return "ET";
    case Mode::SX: return "SX";
    case Mode::SY: return "SY";
    case Mode::EB: return "EB";
  }
  return "?";
}

inline Mode parse_mode(std::string_view s) {
  for (auto m : kAllModes)
    if (name(m) == s) return m;
  fail(ErrorKind::Parse, "unknown loading mode '" + std::string(s) + "'");
}

constexpr bool is_biaxial(Mode m) { return m == Mode::SX || m == Mode::SY || m == Mode::EB; }

/// Number of stress components a sample of this mode carries.
constexpr int component_count(Mode m) { return is_biaxial(m) ? 2 : 1; }

/// Principal stretches of the incompressible state for a sample.
inline DeformationState deformation_for(Mode m, double lambda_x, double lambda_y = 1.0) {
  if (!(lambda_x > 0.0 && lambda_y > 0.0)) fail(ErrorKind::Domain, "stretches must be positive");
  switch (m) {
    case Mode::UT: {
      const double t = 1.0 / std::sqrt(lambda_x);
      return DeformationState::from_stretches(lambda_x, t, t);
    }
    case Mode::PS: return DeformationState::from_stretches(lambda_x, 1.0, 1.0 / lambda_x);
    case Mode::ET: return DeformationState::from_stretches(lambda_x, lambda_x, 1.0 / (lambda_x * lambda_x));
    default: return DeformationState::incompressible(lambda_x, lambda_y);
  }
}

struct StressResponse
{
  double p_xx = 0.0;
  double p_yy = 0.0;
  double pressure = 0.0;
  double lambda_z = 1.0;
};

using DerivativeVector = std::array<double, 4>;

inline double uniaxial_stress(const DerivativeVector& d, double lambda) {
  return 2.0 * (lambda - 1.0 / (lambda * lambda)) * (d[0] + d[1] / lambda);
}

inline double pure_shear_stress(const DerivativeVector& d, double lambda) {
  return 2.0 * (lambda - 1.0 / (lambda * lambda * lambda)) * (d[0] + d[1]);
}

inline double equibiaxial_stress(const DerivativeVector& d, double lambda) {
  const double l2 = lambda * lambda;
  return 2.0 * (lambda - 1.0 / (l2 * l2 * lambda)) * (d[0] + l2 * d[1]);
}

/// In-plane nominal stresses for stretches (lx, ly) with plane stress through the thickness.
inline StressResponse biaxial_stress(const DerivativeVector& d, double lx, double ly, const MaterialFrame& frame = {}) {
  if (!(lx > 0.0 && ly > 0.0)) fail(ErrorKind::Domain, "stretches must be positive");
  StressResponse out;
  const double lz = 1.0 / (lx * ly);
  const double i1 = lx * lx + ly * ly + lz * lz;
  const auto& a = frame.a0;
  const auto& s = frame.s0;
  auto coefficient = [&](int axis, double l) {
    return d[0] + d[1] * (i1 - l * l) + d[2] * a[axis] * a[axis] + d[3] * s[axis] * s[axis];
  };
  out.lambda_z = lz;
  out.pressure = 2.0 * lz * lz * coefficient(2, lz);
  out.p_xx = 2.0 * lx * coefficient(0, lx) - out.pressure / lx;
  out.p_yy = 2.0 * ly * coefficient(1, ly) - out.pressure / ly;
  return out;
}

/// dpsi/dI at the given state for a bank, normalized with the bank's constants.
inline DerivativeVector derivatives_at(const ConvexTermBank& bank, const DeformationState& state,
                                       const MaterialFrame& frame = {}, const TermEvalOptions& opt = {}) {
  const auto bundle = normalize_invariants(invariants_from_deformation(state, frame), bank.constants());
  return energy_derivatives(bank, bundle, false, opt).first;
}

namespace detail {
  inline void require_isotropic(const ConvexTermBank& bank, const char* protocol) {
    if (bank.anisotropic())
      fail(ErrorKind::ProtocolMismatch, std::string(protocol) + " stress requires an isotropic model");
  }
} // namespace detail

inline double stress_uniaxial(const ConvexTermBank& bank, double lambda) {
  detail::require_isotropic(bank, "uniaxial");
  return uniaxial_stress(derivatives_at(bank, deformation_for(Mode::UT, lambda)), lambda);
}

inline double stress_pure_shear(const ConvexTermBank& bank, double lambda) {
  detail::require_isotropic(bank, "pure shear");
  return pure_shear_stress(derivatives_at(bank, deformation_for(Mode::PS, lambda)), lambda);
}

inline double stress_equibiaxial(const ConvexTermBank& bank, double lambda) {
  detail::require_isotropic(bank, "equibiaxial");
  return equibiaxial_stress(derivatives_at(bank, deformation_for(Mode::ET, lambda)), lambda);
}

inline StressResponse stress_biaxial(const ConvexTermBank& bank, double lx, double ly,
                                     const MaterialFrame& frame = {}) {
  if (!(lx > 0.0 && ly > 0.0)) fail(ErrorKind::Domain, "stretches must be positive");
  return biaxial_stress(derivatives_at(bank, DeformationState::incompressible(lx, ly), frame), lx, ly, frame);
}

/// Stress components reported for a sample of the given mode, from energy derivatives.
inline std::array<double, 2> mode_stress(Mode m, const DerivativeVector& d, double lx, double ly,
                                         const MaterialFrame& frame = {}) {
  switch (m) {
    case Mode::UT: return {uniaxial_stress(d, lx), 0.0};
    case Mode::PS: return {pure_shear_stress(d, lx), 0.0};
    case Mode::ET: return {equibiaxial_stress(d, lx), 0.0};
    default: {
      const auto r = biaxial_stress(d, lx, ly, frame);
      return {r.p_xx, r.p_yy};
    }
  }
}

/// Stress components the bank predicts for a sample of the given mode.
inline std::array<double, 2> predict(const ConvexTermBank& bank, Mode m, double lx, double ly,
                                     const MaterialFrame& frame = {}) {
  if (!is_biaxial(m)) detail::require_isotropic(bank, std::string(name(m)).c_str());
  return mode_stress(m, derivatives_at(bank, deformation_for(m, lx, ly), frame), lx, ly, frame);
}

} // namespace polyfit
