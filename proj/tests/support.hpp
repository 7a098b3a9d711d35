// Shared helpers for the unit and acceptance suites: independent reference computations and random inputs.
#pragma once

#include <polyfit/data.hpp>
#include <polyfit/kinematics.hpp>
#include <polyfit/loading.hpp>
#include <polyfit/potential.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>

namespace polyfit::testing {

inline double rel_err(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

/// Random F with det F > 0, entries near the identity.
inline Mat3 random_gradient(std::mt19937_64& rng, double spread = 0.4) {
  std::uniform_real_distribution<double> u(-spread, spread);
  for (;;) {
    Mat3 F = Mat3::Identity();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) F(i, j) += u(rng);
    if (F.determinant() > 0.1) return F;
  }
}

/// Random symmetric positive-definite C.
inline Mat3 random_spd(std::mt19937_64& rng) {
  const Mat3 F = random_gradient(rng);
  return F.transpose() * F;
}

/// Random normalization scales in [0.5, 2].
inline NormalizationConstants random_constants(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.5, 2.0);
  NormalizationConstants c;
  for (double& b : c.b) b = u(rng);
  return c;
}

/// A bank with the family's random initialization and random mixing weights.
inline ConvexTermBank random_bank(Family f, Ansatz a, bool anisotropic, std::mt19937_64& rng,
                                  const NormalizationConstants& c = {}) {
  auto bank = make_bank(f, a, anisotropic, c);
  initialize(bank, rng);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& t : bank.terms())
    if (t.target.mixed()) t.alpha_raw = n(rng);
  return bank;
}

/// Nominal stress built at tensor level: S = 2 dpsi/dC - p C^-1 with p from the traction-free z direction
/// (and y for uniaxial tension), pushed forward with P = F S. Independent of the closed-form loading formulas.
struct TensorStress
{
  Mat3 P;
  double pressure;
};

inline TensorStress tensor_stress(const DerivativeVector& d, const DeformationState& state, const MaterialFrame& frame) {
  const auto D = invariant_c_derivatives(state, frame);
  const Mat3 dpsi_dC = d[0] * D.dI1 + d[1] * D.dI2 + d[2] * D.dI4a + d[3] * D.dI4s;
  const Mat3 C = state.C();
  const Mat3 Cinv = C.inverse();
  const double p = 2.0 * dpsi_dC(2, 2) / Cinv(2, 2);
  const Mat3 S = 2.0 * dpsi_dC - p * Cinv;
  return {state.F() * S, p};
}

} // namespace polyfit::testing
