#include "support.hpp"

#include <gtest/gtest.h>

using namespace polyfit;
using polyfit::testing::random_gradient;
using polyfit::testing::random_rotation;
using polyfit::testing::random_spd;
using polyfit::testing::rel_err;

namespace {

double invariant(const Mat3& C, int which, const MaterialFrame& frame) {
  const auto b = invariants_from_C(C, frame);
  switch (which) {
    case 0: return b.i1;
    case 1: return b.i2;
    case 2: return b.i3;
    case 3: return b.i4a;
    default: return b.i4s;
  }
}

} // namespace

TEST(Invariants, IdentityGivesReferenceValues) {
  const auto b = invariants_from_deformation(DeformationState::from_stretches(1, 1, 1));
  EXPECT_EQ(b.i1, 3.0);
  EXPECT_EQ(b.i2, 3.0);
  EXPECT_EQ(b.i3, 1.0);
  EXPECT_EQ(b.i4a, 1.0);
  EXPECT_EQ(b.i4s, 1.0);
}

TEST(Invariants, IncompressibleUniaxialStretchTwo) {
  const double t = 1.0 / std::sqrt(2.0);
  const auto b = invariants_from_deformation(DeformationState::from_stretches(2.0, t, t));
  EXPECT_NEAR(b.i1, 5.0, 1e-14);
  EXPECT_NEAR(b.i2, 4.25, 1e-14);
  EXPECT_NEAR(b.i3, 1.0, 1e-14);
  EXPECT_NEAR(b.i4a, 4.0, 1e-14);
}

TEST(Invariants, RotationDoesNotChangeBundle) {
  std::mt19937_64 rng(7);
  for (int n = 0; n < 200; ++n) {
    const Mat3 F = random_gradient(rng);
    const Mat3 Q = random_rotation(rng);
    const auto a = invariants_from_deformation(DeformationState::from_gradient(F));
    const auto b = invariants_from_deformation(DeformationState::from_gradient(Q * F));
    EXPECT_NEAR(a.i1, b.i1, 1e-12);
    EXPECT_NEAR(a.i2, b.i2, 1e-12);
    EXPECT_NEAR(a.i3, b.i3, 1e-12);
    EXPECT_NEAR(a.i4a, b.i4a, 1e-12);
    EXPECT_NEAR(a.i4s, b.i4s, 1e-12);
  }
}

TEST(Invariants, NonPositiveDeterminantRejected) {
  Mat3 F = Mat3::Identity();
  F(0, 0) = -1.0;
  try {
    (void)DeformationState::from_gradient(F);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidDeformation);
  }
  EXPECT_THROW((void)DeformationState::from_stretches(1.0, 0.0, 1.0), Error);
}

TEST(Invariants, AmGmBound) {
  std::mt19937_64 rng(11);
  for (int n = 0; n < 100; ++n) {
    const auto b = invariants_from_deformation(DeformationState::from_gradient(random_gradient(rng)));
    EXPECT_GE(b.i1, 3.0 * std::cbrt(b.i3) - 1e-12);
    EXPECT_GT(b.i3, 0.0);
  }
}

TEST(DeformationStateTest, IncompressibleConstructorHasUnitDeterminant) {
  const auto s = DeformationState::incompressible(1.7, 0.8);
  EXPECT_NEAR(s.J(), 1.0, 1e-10);
  EXPECT_NEAR(s.F()(2, 2), 1.0 / (1.7 * 0.8), 1e-15);
}

TEST(Isochoric, DilationByTwo) {
  const auto b = isochoric_invariants(invariants_from_deformation(DeformationState::from_stretches(2, 2, 2)));
  EXPECT_NEAR((*b.isochoric)[0], 3.0, 1e-12);
  EXPECT_NEAR((*b.isochoric)[1], 3.0, 1e-12);
}

TEST(Isochoric, UnitDeterminantIsIdentityMap) {
  const auto raw = invariants_from_deformation(DeformationState::from_stretches(2.0, 0.5, 1.0));
  ASSERT_EQ(raw.i3, 1.0);
  const auto b = isochoric_invariants(raw);
  EXPECT_EQ((*b.isochoric)[0], raw.i1);
  EXPECT_EQ((*b.isochoric)[1], raw.i2);
  EXPECT_EQ((*b.isochoric)[2], raw.i4a);
  EXPECT_EQ((*b.isochoric)[3], raw.i4s);
}

TEST(Isochoric, AnyDilationMapsToReference) {
  for (double s : {0.3, 1.5, 10.0}) {
    const auto b = isochoric_invariants(invariants_from_deformation(DeformationState::from_stretches(s, s, s)));
    EXPECT_NEAR((*b.isochoric)[0], 3.0, 1e-12);
    EXPECT_NEAR((*b.isochoric)[1], 3.0, 1e-12);
  }
}

TEST(Isochoric, NonPositiveI3Rejected) {
  InvariantBundle b;
  b.i3 = 0.0;
  try {
    (void)isochoric_invariants(b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidInvariant);
  }
}

TEST(Normalize, ShiftsAndScales) {
  InvariantBundle b;
  b.i1 = 5.0;
  b.i2 = 3.0;
  b.i4a = 4.0;
  b.i4s = 1.0;
  NormalizationConstants c;
  c.b = {1.0, 1.0, 3.0, 1.0};
  const auto n = normalize_invariants(b, c);
  EXPECT_DOUBLE_EQ(n.hat(Invariant::I1), 2.0);
  EXPECT_DOUBLE_EQ(n.hat(Invariant::I4a), 1.0);
  EXPECT_EQ(*n.constants, c);
}

TEST(Normalize, ReferenceStateIsZero) {
  const auto n = normalize_invariants(invariants_from_deformation(DeformationState::from_stretches(1, 1, 1)),
                                      NormalizationConstants{});
  for (auto k : kAllInvariants) EXPECT_EQ(n.hat(k), 0.0);
}

TEST(Normalize, NonPositiveScaleIsConfigError) {
  NormalizationConstants c;
  c.b[1] = 0.0;
  try {
    (void)normalize_invariants(InvariantBundle{}, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
}

TEST(Normalize, ScalesFromMaximaAreFloored) {
  const auto c = NormalizationConstants::from_maxima({9.0, 3.0, 1.0, 4.0});
  EXPECT_DOUBLE_EQ(c.b[0], 2.0);
  EXPECT_DOUBLE_EQ(c.b[1], 1e-6);
  EXPECT_DOUBLE_EQ(c.b[3], 1.0);
}

TEST(Mixed, DegenerateAlpha) {
  EXPECT_EQ(mixed_invariant(2.0, 1.0, 1.0).value, 2.0);
  EXPECT_EQ(mixed_invariant(2.0, 1.0, 0.0).value, 1.0);
}

TEST(Mixed, Blend) { EXPECT_NEAR(mixed_invariant(2.0, 1.0, 0.3).value, 1.3, 1e-15); }

TEST(Mixed, EqualInputs) {
  for (double a : {0.0, 0.2, 0.77, 1.0}) EXPECT_NEAR(mixed_invariant(1.4, 1.4, a).value, 1.4, 1e-15);
}

TEST(Mixed, AlphaOutsideUnitIntervalRejected) {
  try {
    (void)mixed_invariant(1.0, 1.0, 1.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidParameter);
  }
  EXPECT_THROW((void)mixed_invariant(1.0, 1.0, -0.1), Error);
}

TEST(CDerivatives, IdentityDeformation) {
  const auto d = invariant_c_derivatives(DeformationState::from_stretches(1, 1, 1));
  EXPECT_TRUE(d.dI1.isApprox(Mat3::Identity()));
  // I2 = ((tr C)^2 - tr C^2) / 2 differentiates to I1 I - C, i.e. 2 I at the identity.
  EXPECT_TRUE(d.dI2.isApprox(2.0 * Mat3::Identity()));
  EXPECT_TRUE(d.dI3.isApprox(Mat3::Identity()));
}

TEST(CDerivatives, FiberOuterProduct) {
  const auto d = invariant_c_derivatives(DeformationState::from_stretches(1.3, 0.9, 1.1));
  Mat3 e = Mat3::Zero();
  e(0, 0) = 1.0;
  EXPECT_EQ(d.dI4a, e);
}

TEST(CDerivatives, MatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  const MaterialFrame frame =
      MaterialFrame::make(Vec3(1, 1, 0).normalized(), Vec3(0, 1, 1).normalized());
  const double h = 1e-6;
  for (int n = 0; n < 50; ++n) {
    const Mat3 C = random_spd(rng);
    const auto d = invariant_c_derivatives_from_C(C, frame);
    const Mat3* analytic[] = {&d.dI1, &d.dI2, &d.dI3, &d.dI4a, &d.dI4s};
    for (int which = 0; which < 5; ++which)
      for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) {
          // Symmetric perturbation; the off-diagonal pair carries the derivative twice.
          Mat3 E = Mat3::Zero();
          E(i, j) = 1.0;
          E(j, i) = 1.0;
          const double fd =
              (invariant(C + h * E, which, frame) - invariant(C - h * E, which, frame)) / (2.0 * h);
          const double expect = i == j ? (*analytic[which])(i, i) : 2.0 * (*analytic[which])(i, j);
          if (std::abs(expect) < 1e-9)
            EXPECT_NEAR(fd, 0.0, 1e-8);
          else
            EXPECT_LE(rel_err(fd, expect), 1e-6) << "invariant " << which << " entry " << i << j;
        }
  }
}

TEST(CDerivatives, SingularCRejected) {
  Mat3 C = Mat3::Zero();
  C(0, 0) = 1.0;
  try {
    (void)invariant_c_derivatives_from_C(C, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidDeformation);
  }
}

TEST(Frame, RequiresUnitVectors) {
  EXPECT_THROW((void)MaterialFrame::make(Vec3(2, 0, 0), Vec3(0, 1, 0)), Error);
  const auto f = MaterialFrame::make(Vec3(0, 1, 0), Vec3(1, 0, 0));
  EXPECT_EQ(f.swapped().a0, Vec3(1, 0, 0));
}
