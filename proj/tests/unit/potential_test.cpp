#include <polyfit/potential.hpp>

#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace polyfit;
using polyfit::testing::random_bank;
using polyfit::testing::random_constants;
using polyfit::testing::rel_err;

namespace {

using I = Invariant;

ConvexScalarTerm linear_cann(Target target, double slope) {
  cann::CannTermParams p;
  p.set(1, cann::Activation::Identity, 1.0, slope);
  return {target, p, 0.0};
}

InvariantBundle bundle_at(const std::array<double, 4>& raw, const NormalizationConstants& c) {
  InvariantBundle b;
  b.i1 = raw[0];
  b.i2 = raw[1];
  b.i3 = 1.0;
  b.i4a = raw[2];
  b.i4s = raw[3];
  return normalize_invariants(b, c);
}

double logit(double a) { return std::log(a / (1.0 - a)); }

} // namespace

TEST(EnergyDerivatives, EmptyBankIsZero) {
  ConvexTermBank bank;
  const auto d = energy_derivatives(bank, bundle_at({5, 4, 2, 1}, {}));
  for (double v : d.first) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(d.second.isZero());
}

TEST(EnergyDerivatives, UnitChainFactor) {
  ConvexTermBank bank(Family::Cann, Ansatz::Reduced, {});
  bank.add_term(linear_cann({I::I1, std::nullopt}, 1.0));
  const auto d = energy_derivatives(bank, bundle_at({5, 4, 2, 1}, {}));
  EXPECT_DOUBLE_EQ(d.d(I::I1), 1.0);
  EXPECT_EQ(d.d(I::I2), 0.0);
  EXPECT_EQ(d.d(I::I4a), 0.0);
  EXPECT_EQ(d.d(I::I4s), 0.0);
}

TEST(EnergyDerivatives, MixedTermSplitsByAlpha) {
  const double c = 1.7;
  ConvexTermBank bank(Family::Cann, Ansatz::Full, {});
  auto term = linear_cann({I::I1, I::I4a}, c);
  term.alpha_raw = logit(0.3);
  bank.add_term(term);
  const auto bundle = bundle_at({4, 4, 2, 1}, {});
  const auto d = energy_derivatives(bank, bundle);
  EXPECT_NEAR(d.d(I::I1), 0.3 * c, 1e-14);
  EXPECT_NEAR(d.d(I::I4a), 0.7 * c, 1e-14);
  EXPECT_EQ(d.d(I::I2), 0.0);
  const auto mixed = mixed_invariants(bank, bundle);
  ASSERT_EQ(mixed.size(), 1u);
  EXPECT_NEAR(mixed[0].alpha, 0.3, 1e-15);
  EXPECT_EQ(energy_derivatives(bank, bundle, std::span<const MixedInvariant>(mixed)).first, d.first);
}

TEST(EnergyDerivatives, ScaleEntersChainFactor) {
  NormalizationConstants c;
  c.b = {2.0, 4.0, 1.0, 1.0};
  ConvexTermBank bank(Family::Cann, Ansatz::Reduced, c);
  bank.add_term(linear_cann({I::I1, std::nullopt}, 1.0));
  bank.add_term(linear_cann({I::I2, std::nullopt}, 1.0));
  const auto d = energy_derivatives(bank, bundle_at({5, 4, 1, 1}, c));
  EXPECT_DOUBLE_EQ(d.d(I::I1), 0.5);
  EXPECT_DOUBLE_EQ(d.d(I::I2), 0.25);
}

TEST(EnergyDerivatives, MismatchedConstantsRejected) {
  NormalizationConstants c;
  c.b[0] = 2.0;
  ConvexTermBank bank(Family::Cann, Ansatz::Reduced, c);
  try {
    (void)energy_derivatives(bank, bundle_at({5, 4, 1, 1}, {}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
  InvariantBundle raw;
  EXPECT_THROW((void)energy_value(bank, raw), Error);
}

TEST(EnergyDerivatives, MixedListMustMatchBank) {
  ConvexTermBank bank(Family::Cann, Ansatz::Full, {});
  bank.add_term(linear_cann({I::I1, I::I2}, 1.0));
  const auto bundle = bundle_at({4, 4, 1, 1}, {});
  std::vector<MixedInvariant> wrong{mixed_invariant(1.0, 1.0, 0.9, I::I1, I::I2)};
  EXPECT_THROW((void)energy_derivatives(bank, bundle, std::span<const MixedInvariant>(wrong)), Error);
}

TEST(EnergyValue, ReferenceStateIsZero) {
  std::mt19937_64 rng(1);
  for (auto f : {Family::Cann, Family::Icnn, Family::Node}) {
    const auto bank = random_bank(f, Ansatz::Full, true, rng);
    EXPECT_EQ(energy_value(bank, bundle_at({3, 3, 1, 1}, {})), 0.0);
  }
}

TEST(EnergyValue, LinearCannTerm) {
  ConvexTermBank bank(Family::Cann, Ansatz::Reduced, {});
  bank.add_term(linear_cann({I::I1, std::nullopt}, 1.0));
  EXPECT_DOUBLE_EQ(energy_value(bank, bundle_at({5, 3, 1, 1}, {})), 2.0);
}

TEST(EnergyValue, Additivity) {
  std::mt19937_64 rng(2);
  for (auto f : {Family::Cann, Family::Icnn, Family::Node}) {
    const auto bank = random_bank(f, Ansatz::Reduced, false, rng);
    ConvexTermBank a(f, Ansatz::Reduced, {}), b(f, Ansatz::Reduced, {});
    a.add_term(bank.terms()[0]);
    b.add_term(bank.terms()[1]);
    const auto bundle = bundle_at({4.2, 5.1, 1, 1}, {});
    EXPECT_NEAR(energy_value(bank, bundle), energy_value(a, bundle) + energy_value(b, bundle), 1e-12);
  }
}

TEST(EnergyValue, DerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.2, 2.5);
  for (auto f : {Family::Cann, Family::Icnn, Family::Node}) {
    for (int n = 0; n < 10; ++n) {
      const auto c = random_constants(rng);
      const auto bank = random_bank(f, Ansatz::Full, true, rng, c);
      std::array<double, 4> raw{};
      for (auto k : kAllInvariants) raw[index(k)] = c.a[index(k)] + c.b[index(k)] * u(rng);
      const auto d = energy_derivatives(bank, bundle_at(raw, c));
      for (auto k : kAllInvariants) {
        const double h = 1e-5 * c.b[index(k)];
        auto up = raw, dn = raw;
        up[index(k)] += h;
        dn[index(k)] -= h;
        const double fd = (energy_value(bank, bundle_at(up, c)) - energy_value(bank, bundle_at(dn, c))) / (2 * h);
        EXPECT_LE(rel_err(fd, d.d(k), 1e-8), 1e-5) << name(f) << " " << name(k);
        // Diagonal second derivative from the first derivatives.
        const double fd2 = (energy_derivatives(bank, bundle_at(up, c)).d(k) -
                            energy_derivatives(bank, bundle_at(dn, c)).d(k)) /
                           (2 * h);
        EXPECT_LE(rel_err(fd2, d.dd(k), 1e-6), 1e-4) << name(f) << " " << name(k);
      }
    }
  }
}

TEST(TermMenu, MatchesBenchmarkAnsatz) {
  EXPECT_EQ(term_menu(Ansatz::Reduced, false).size(), 2u);
  const auto reduced = term_menu(Ansatz::Reduced, true);
  ASSERT_EQ(reduced.size(), 3u);
  EXPECT_EQ(reduced[2], (Target{I::I4a, I::I4s}));
  const auto full = term_menu(Ansatz::Full, true);
  ASSERT_EQ(full.size(), 6u);
  EXPECT_EQ(full[3], (Target{I::I1, I::I4a}));
}

TEST(Bank, DuplicateTargetRejected) {
  ConvexTermBank bank(Family::Cann, Ansatz::Reduced, {});
  bank.add_term(linear_cann({I::I1, std::nullopt}, 1.0));
  EXPECT_THROW(bank.add_term(linear_cann({I::I1, std::nullopt}, 2.0)), Error);
}

TEST(Bank, ParameterRoundTrip) {
  std::mt19937_64 rng(4);
  for (auto f : {Family::Cann, Family::Icnn, Family::Node}) {
    auto bank = random_bank(f, Ansatz::Full, true, rng);
    const auto p = bank.parameters();
    EXPECT_EQ(p.size(), bank.parameter_count());
    auto q = p;
    for (double& v : q) v += 0.25;
    bank.set_parameters(q);
    EXPECT_EQ(bank.parameters(), q);
    EXPECT_THROW(bank.set_parameters(std::vector<double>(3, 0.0)), Error);
  }
}

TEST(Bank, ConstraintsRestored) {
  std::mt19937_64 rng(5);
  auto bank = random_bank(Family::Cann, Ansatz::Reduced, false, rng);
  auto p = bank.parameters();
  for (double& v : p) v = -v;
  bank.set_parameters(p);
  bank.enforce_constraints();
  for (double v : bank.parameters()) EXPECT_GE(v, 0.0);
  auto node_bank = random_bank(Family::Node, Ansatz::Reduced, false, rng);
  std::get<node::NodeParams>(node_bank.terms()[0].backend).biases[0][0] = 1.0;
  node_bank.enforce_constraints();
  EXPECT_TRUE(std::get<node::NodeParams>(node_bank.terms()[0].backend).biases_are_zero());
}

TEST(Bank, AlphaStaysInUnitInterval) {
  ConvexScalarTerm t{{I::I1, I::I2}, cann::CannTermParams{}, 0.0};
  for (double raw : {-1e3, -5.0, 0.0, 5.0, 1e3}) {
    t.alpha_raw = raw;
    EXPECT_GE(t.alpha(), 0.0);
    EXPECT_LE(t.alpha(), 1.0);
  }
}

TEST(Witness, RandomInitializationsAreConvex) {
  std::mt19937_64 rng(6);
  for (auto f : {Family::Cann, Family::Icnn, Family::Node})
    for (int n = 0; n < 5; ++n) EXPECT_TRUE(convexity_witness(random_bank(f, Ansatz::Full, true, rng)).holds());
}

TEST(Family, NamesRoundTrip) {
  for (auto f : {Family::Cann, Family::Icnn, Family::Node}) EXPECT_EQ(parse_family(name(f)), f);
  EXPECT_THROW((void)parse_family("mlp"), Error);
  EXPECT_EQ(parse_ansatz("full"), Ansatz::Full);
}
