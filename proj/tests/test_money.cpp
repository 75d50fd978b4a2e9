#include <gtest/gtest.h>

#include <cmath>

#include "owsg/money.hpp"

using namespace owsg;

TEST(Count, Examples) {
  auto s = orthonormal_money(3);
  std::vector<DensityMatrix> regs(4, s.notes.state(1));
  auto d = count(s, 1, regs);
  ASSERT_EQ(d.size(), 5u);
  EXPECT_NEAR(d[4], 1.0, kExactTol);
  auto z = count(s, 0, regs);
  EXPECT_NEAR(z[0], 1.0, kExactTol);
  auto b = count_distribution({0.9, 0.9, 0.9});
  EXPECT_NEAR(b[3], 0.729, 1e-15);
  EXPECT_THROW(count(s, 0, {DensityMatrix::basis(RegisterShape{{"S", 2}}, 0)}), ShapeError);
}

TEST(Count, ProductEqualsBinomial) {
  auto s = cross_accept_money(0.3);
  std::vector<DensityMatrix> regs(12, s.notes.state(1));
  auto d = count(s, 0, regs);
  for (std::size_t th = 0; th <= 12; ++th) {
    double tail = 0.0;
    for (std::size_t j = th; j <= 12; ++j) tail += d[j];
    EXPECT_NEAR(tail, binomial_count_tail(12, 0.3, th), 1e-12);
  }
}

TEST(BinomialTail, Examples) {
  EXPECT_EQ(binomial_count_tail(10, 1.0, 7), 1.0);
  EXPECT_EQ(binomial_count_tail(10, 0.0, 1), 0.0);
  EXPECT_NEAR(binomial_count_tail(10, 0.5, 5), 0.623046875, 1e-13);
  EXPECT_THROW(binomial_count_tail(10, 1.5, 5), PreconditionError);
}

TEST(BinomialTail, DominatesHoeffding) {
  for (std::size_t p : {1u, 2u, 3u})
    for (std::size_t t : {1u, 2u, 4u}) {
      const std::size_t ell = cloner_copies(p, t);
      const double tail = binomial_count_tail(ell, 1.0 / (8.0 * p), t + 1);
      EXPECT_GE(tail, count_hoeffding_bound(ell, p) - 1e-12);
      EXPECT_GE(count_hoeffding_bound(ell, p), 1.0 - 2.0 * std::exp(-2.0 * p) - 1e-12);
    }
}

TEST(BernoulliStep, Holds) {
  for (std::size_t p = 1; p <= 64; ++p)
    for (std::size_t t = 1; t <= 64; ++t) EXPECT_TRUE(bernoulli_step_holds(p, t)) << p << " " << t;
}

TEST(FidelitySlack, RandomTriples) {
  Rng rng(1);
  for (std::size_t p : {1u, 2u, 4u}) {
    const double floor = 1.0 / (2.0 * p);
    for (int checked = 0; checked < 200;) {
      const std::size_t d = 2 + rng.below(3);
      auto a = haar_random_state(d, rng);
      // b: a perturbed by a random direction, rejected unless the overlap bound holds.
      Vec v = a.amplitudes() + 0.5 * gaussian_vector(d, rng);
      auto b = PureState::normalized(a.shape(), v);
      if (overlap_squared(a, b) < floor) continue;
      Mat u = random_unitary(d, rng);
      Eigen::VectorXcd diag(static_cast<Eigen::Index>(d));
      for (Eigen::Index i = 0; i < diag.size(); ++i) diag(i) = rng.uniform();
      Mat pi = u * diag.asDiagonal() * u.adjoint();
      const double lhs = DensityMatrix::from_pure(a).expectation(pi) - DensityMatrix::from_pure(b).expectation(pi);
      EXPECT_LE(lhs, std::sqrt(1.0 - overlap_squared(a, b)) + kTol);
      EXPECT_LE(lhs, std::sqrt(1.0 - floor) + kTol);
      ++checked;
    }
  }
}

TEST(OwsgFromPureMoney, Examples) {
  auto o = owsg_from_pure_money(orthonormal_money(3));
  EXPECT_NEAR(o.cross(1, 1), 1.0, kExactTol);
  EXPECT_NEAR(o.cross(0, 1), 0.0, kExactTol);
  auto ov = owsg_from_pure_money(overlap_money(0.36));
  EXPECT_NEAR(ov.cross(0, 1), 0.36, 1e-12);
  EXPECT_THROW(owsg_from_pure_money(MoneyScheme(planted_leakage_owsg(2, 0.5).family, planted_leakage_owsg(2, 0.5).effects)),
               PreconditionError);
}

TEST(OwsgFromSymmetricMoney, Examples) {
  EXPECT_NO_THROW(owsg_from_symmetric_money(overlap_money(0.3)));
  EXPECT_THROW(owsg_from_symmetric_money(asymmetric_money()), PreconditionError);
  auto s = cross_accept_money(0.2);
  auto o = owsg_from_symmetric_money(s);
  for (Key a = 0; a < 2; ++a)
    for (Key b = 0; b < 2; ++b) {
      EXPECT_NEAR(o.cross(a, b), s.cross(a, b), 1e-15);
      EXPECT_NEAR(o.cross(a, b), o.cross(b, a), 1e-15);
    }
}

TEST(InverterToCloner, Examples) {
  Rng rng(2);
  auto perfect = inverter_to_cloner(orthonormal_money(4), planted_inverter(4, 1.0), 1, 1, 200, rng);
  EXPECT_EQ(perfect.tail.mean, 1.0);
  auto zero = inverter_to_cloner(orthonormal_money(4), planted_inverter(4, 0.0), 1, 1, 200, rng);
  EXPECT_EQ(zero.tail.mean, 0.0);
  EXPECT_THROW(inverter_to_cloner(orthonormal_money(4), planted_inverter(4, 1.0, 2), 1, 1, 10, rng), UsageError);
}

TEST(InverterToCloner, WeakKeyStillCounterfeits) {
  Rng rng(3);
  for (std::size_t p : {1u, 2u})
    for (std::size_t t : {1u, 2u}) {
      auto s = cross_accept_money(1.0 / (8.0 * p));
      auto rep = inverter_to_cloner(s, swapping_inverter(t), p, t, 50, rng);
      EXPECT_EQ(rep.ell, std::max(16 * p * (t + 1), 256 * p * p * p));
      for (double a : rep.per_copy_accept) EXPECT_NEAR(a, 1.0 / (8.0 * p), 1e-15);
      EXPECT_GE(rep.tail.mean, 1.0 - 2.0 * std::exp(-2.0 * p));
      EXPECT_NEAR(rep.tail.mean, binomial_count_tail(rep.ell, 1.0 / (8.0 * p), t + 1), 1e-12);
    }
}
