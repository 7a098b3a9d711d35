#include <polyfit/loading.hpp>

#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace polyfit;
using polyfit::testing::random_bank;
using polyfit::testing::random_constants;
using polyfit::testing::rel_err;
using polyfit::testing::tensor_stress;

namespace {

using I = Invariant;

/// Bank whose energy is c1 (I1 - 3) + c2 (I2 - 3) with unit scales.
ConvexTermBank mooney_rivlin(double c1, double c2) {
  ConvexTermBank bank(Family::Cann, Ansatz::Reduced, {});
  cann::CannTermParams p1, p2;
  p1.set(1, cann::Activation::Identity, 1.0, c1);
  p2.set(1, cann::Activation::Identity, 1.0, c2);
  bank.add_term({{I::I1, std::nullopt}, p1, 0.0});
  bank.add_term({{I::I2, std::nullopt}, p2, 0.0});
  return bank;
}

/// dpsi/dI4a = k (I4a - 1), nothing else.
ConvexTermBank fiber_only(double k) {
  ConvexTermBank bank(Family::Cann, Ansatz::Reduced, {});
  cann::CannTermParams p;
  p.set(2, cann::Activation::Identity, 1.0, 0.5 * k);
  bank.add_term({{I::I4a, std::nullopt}, p, 0.0});
  return bank;
}

} // namespace

TEST(Loading, ZeroAtUnitStretch) {
  std::mt19937_64 rng(1);
  for (auto f : {Family::Cann, Family::Icnn, Family::Node}) {
    const auto iso = random_bank(f, Ansatz::Full, false, rng);
    EXPECT_EQ(stress_uniaxial(iso, 1.0), 0.0);
    EXPECT_EQ(stress_pure_shear(iso, 1.0), 0.0);
    EXPECT_EQ(stress_equibiaxial(iso, 1.0), 0.0);
    const auto r = stress_biaxial(iso, 1.0, 1.0);
    EXPECT_NEAR(r.p_xx, 0.0, 1e-15);
    EXPECT_NEAR(r.p_yy, 0.0, 1e-15);
  }
}

TEST(Loading, NeoHookeanValues) {
  const auto nh = mooney_rivlin(0.5, 0.0);
  EXPECT_NEAR(stress_uniaxial(nh, 2.0), 1.75, 1e-14);
  EXPECT_NEAR(stress_pure_shear(nh, 2.0), 1.875, 1e-14);
  EXPECT_NEAR(stress_equibiaxial(nh, 2.0), 1.96875, 1e-14);
}

TEST(Loading, MooneyRivlinMatchesClosedForm) {
  const double c1 = 0.3, c2 = 0.1;
  const auto mr = mooney_rivlin(c1, c2);
  for (double l = 1.05; l <= 3.0; l += 0.1) {
    EXPECT_LE(rel_err(stress_uniaxial(mr, l), 2 * (l - 1 / (l * l)) * (c1 + c2 / l)), 1e-10);
    EXPECT_LE(rel_err(stress_pure_shear(mr, l), 2 * (l - std::pow(l, -3)) * (c1 + c2)), 1e-10);
    EXPECT_LE(rel_err(stress_equibiaxial(mr, l), 2 * (l - std::pow(l, -5)) * (c1 + l * l * c2)), 1e-10);
  }
}

TEST(Loading, BiaxialReducesToEquibiaxial) {
  std::mt19937_64 rng(2);
  for (auto f : {Family::Cann, Family::Icnn, Family::Node}) {
    const auto bank = random_bank(f, Ansatz::Full, false, rng);
    for (double l : {1.1, 1.3, 1.5}) {
      const auto r = stress_biaxial(bank, l, l);
      EXPECT_LE(rel_err(r.p_xx, stress_equibiaxial(bank, l)), 1e-10);
      EXPECT_LE(rel_err(r.p_yy, stress_equibiaxial(bank, l)), 1e-10);
    }
  }
}

TEST(Loading, FiberOnlyStripBiaxial) {
  const double k = 0.7;
  const auto r = stress_biaxial(fiber_only(k), 2.0, 1.0);
  EXPECT_NEAR(r.p_xx, 12.0 * k, 1e-13);
  EXPECT_NEAR(r.p_yy, 0.0, 1e-15);
  EXPECT_NEAR(r.pressure, 0.0, 1e-15);
  EXPECT_NEAR(r.lambda_z, 0.5, 1e-15);
}

TEST(Loading, IncompressibilityOfResponse) {
  const auto r = stress_biaxial(mooney_rivlin(0.3, 0.1), 1.3, 0.7);
  EXPECT_NEAR(1.3 * 0.7 * r.lambda_z, 1.0, 1e-12);
}

TEST(Loading, ScalarProtocolsRejectAnisotropicBanks) {
  try {
    (void)stress_uniaxial(fiber_only(1.0), 1.2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ProtocolMismatch);
  }
  EXPECT_THROW((void)stress_pure_shear(fiber_only(1.0), 1.2), Error);
  EXPECT_THROW((void)stress_equibiaxial(fiber_only(1.0), 1.2), Error);
  EXPECT_THROW((void)predict(fiber_only(1.0), Mode::UT, 1.2, 1.0), Error);
}

TEST(Loading, NonPositiveStretchIsDomainError) {
  try {
    (void)stress_biaxial(mooney_rivlin(1, 0), 0.0, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Domain);
  }
}

TEST(Loading, ScalarFormulasMatchTensorConstruction) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ul(0.6, 2.5);
  for (auto f : {Family::Cann, Family::Icnn, Family::Node}) {
    for (int n = 0; n < 10; ++n) {
      const auto c = random_constants(rng);
      const auto bank = random_bank(f, Ansatz::Full, false, rng, c);
      const double l = ul(rng);
      for (auto m : {Mode::UT, Mode::PS, Mode::ET}) {
        const auto state = deformation_for(m, l);
        const auto d = derivatives_at(bank, state);
        const auto t = tensor_stress(d, state, {});
        EXPECT_LE(rel_err(predict(bank, m, l, 1.0)[0], t.P(0, 0)), 1e-9) << name(f) << " " << name(m);
        if (m == Mode::UT) {
          EXPECT_NEAR(t.P(1, 1), 0.0, 1e-12);
        }
      }
    }
  }
}

TEST(Loading, BiaxialMatchesTensorConstruction) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ul(1.0, 1.5);
  const auto frame = MaterialFrame::make(Vec3(1, 0, 0), Vec3(0, 1, 0));
  for (auto f : {Family::Cann, Family::Icnn, Family::Node}) {
    for (int n = 0; n < 10; ++n) {
      const auto c = random_constants(rng);
      const auto bank = random_bank(f, Ansatz::Full, true, rng, c);
      const double lx = ul(rng), ly = ul(rng);
      const auto state = DeformationState::incompressible(lx, ly);
      const auto t = tensor_stress(derivatives_at(bank, state, frame), state, frame);
      const auto r = stress_biaxial(bank, lx, ly, frame);
      EXPECT_LE(rel_err(r.p_xx, t.P(0, 0), 1e-9), 1e-9);
      EXPECT_LE(rel_err(r.p_yy, t.P(1, 1), 1e-9), 1e-9);
      EXPECT_LE(rel_err(r.pressure, t.pressure, 1e-9), 1e-9);
    }
  }
}

TEST(Loading, PlaneStressResidual) {
  std::mt19937_64 rng(5);
  for (auto f : {Family::Cann, Family::Icnn, Family::Node}) {
    const auto bank = random_bank(f, Ansatz::Full, true, rng);
    const double lx = 1.25, ly = 1.1;
    const auto state = DeformationState::incompressible(lx, ly);
    const auto d = derivatives_at(bank, state);
    const auto r = stress_biaxial(bank, lx, ly);
    const auto D = invariant_c_derivatives(state);
    const Mat3 dpsi = d[0] * D.dI1 + d[1] * D.dI2 + d[2] * D.dI4a + d[3] * D.dI4s;
    const Mat3 S = 2.0 * dpsi - r.pressure * state.C().inverse();
    const Mat3 sigma = state.F() * S * state.F().transpose();
    EXPECT_LE(std::abs(sigma(2, 2)), 1e-10);
  }
}

TEST(Loading, FrameSymmetry) {
  std::mt19937_64 rng(6);
  const MaterialFrame frame;
  for (auto f : {Family::Cann, Family::Icnn, Family::Node}) {
    const auto bank = random_bank(f, Ansatz::Full, true, rng);
    const auto a = stress_biaxial(bank, 1.2, 1.05, frame);
    const auto b = stress_biaxial(bank, 1.05, 1.2, frame.swapped());
    EXPECT_EQ(a.p_xx, b.p_yy);
    EXPECT_EQ(a.p_yy, b.p_xx);
  }
}

TEST(Loading, ModeTagsRoundTrip) {
  for (auto m : kAllModes) EXPECT_EQ(parse_mode(name(m)), m);
  EXPECT_THROW((void)parse_mode("XX"), Error);
  EXPECT_TRUE(is_biaxial(Mode::EB));
  EXPECT_FALSE(is_biaxial(Mode::ET));
}
