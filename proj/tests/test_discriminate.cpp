#include <gtest/gtest.h>

#include <cmath>

#include "owsg/discriminate.hpp"

using namespace owsg;

namespace {

DensityMatrix pure(const Vec& v) { return DensityMatrix::from_pure(PureState::normalized(RegisterShape{{"S", static_cast<std::size_t>(v.size())}}, v)); }

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

// Square-root measurement success computed directly in the t-copy space.
std::vector<double> full_space_success(const std::vector<PureState>& s, std::size_t t) {
  std::vector<DensityMatrix> copies;
  for (const auto& x : s) copies.push_back(DensityMatrix::from_pure(tensor_power(x, t)));
  auto rep = pgm_error_report(Ensemble::uniform(copies));
  std::vector<double> out;
  for (double e : rep.error) out.push_back(1.0 - e);
  return out;
}

}  // namespace

TEST(Helstrom, Examples) {
  auto z0 = pure(v2(1, 0)), z1 = pure(v2(0, 1)), plus = pure(v2(1, 1));
  EXPECT_NEAR(helstrom_advantage(z0, z0), 0.0, kExactTol);
  EXPECT_NEAR(helstrom_advantage(z0, z1), 1.0, kExactTol);
  EXPECT_NEAR(helstrom_advantage(z0, plus), 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(Helstrom, DominatesEveryEffect) {
  Rng rng(21);
  for (int i = 0; i < 20; ++i) {
    const std::size_t d = 2 + rng.below(4);
    auto r = random_density_matrix(d, rng), s = random_density_matrix(d, rng);
    const double adv = helstrom_advantage(r, s);
    for (int j = 0; j < 100; ++j) {
      // Random effect 0 <= E <= I: U diag(u) U†.
      Mat u = random_unitary(d, rng);
      Eigen::VectorXcd diag(static_cast<Eigen::Index>(d));
      for (Eigen::Index k = 0; k < diag.size(); ++k) diag(k) = rng.uniform();
      Mat e = u * diag.asDiagonal() * u.adjoint();
      EXPECT_GE(adv + kTol, std::abs(r.expectation(e) - s.expectation(e)));
    }
  }
}

TEST(Pgm, OrthogonalEnsembleIsProjective) {
  auto ens = Ensemble::uniform({pure(v2(1, 0)), pure(v2(0, 1))});
  auto m = pgm(ens);
  EXPECT_NEAR(m.effects()[0].matrix(0, 0).real(), 1.0, kExactTol);
  EXPECT_NEAR(m.effects()[1].matrix(1, 1).real(), 1.0, kExactTol);
  auto rep = pgm_error_report(ens);
  EXPECT_NEAR(rep.max_error, 0.0, kExactTol);
  EXPECT_NEAR(rep.bound, 0.0, kExactTol);
}

TEST(Pgm, SingleStateGivesSupportProjector) {
  Vec v(3);
  v << 1, 1, 0;
  auto rho = pure(v);
  auto m = pgm(Ensemble::uniform({rho}));
  EXPECT_LE(max_abs(m.effects()[0].matrix - rho.matrix()), 1e-12);
  EXPECT_EQ(m.effects().back().outcome, kOutsideSupport);
}

TEST(Pgm, ZeroPlusWithinBound) {
  auto rep = pgm_error_report(Ensemble::uniform({pure(v2(1, 0)), pure(v2(1, 1))}));
  // Two states with overlap c: success (1 + sqrt(1 - c^2)) / 2 with c^2 = 1/2.
  const double success = 0.5 * (1.0 + std::sqrt(0.5));
  EXPECT_NEAR(1.0 - rep.max_error, success, 1e-12);
  EXPECT_NEAR(rep.bound, 2.0 / std::sqrt(2.0), 1e-9);  // both ordered pairs
  EXPECT_LE(rep.max_error, 1.0 / std::sqrt(2.0));
}

TEST(Pgm, MontanaroBoundOnRandomEnsembles) {
  Rng rng(22);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 2 + rng.below(4), d = 2 + rng.below(5);
    std::vector<DensityMatrix> s;
    for (std::size_t k = 0; k < n; ++k) s.push_back(random_density_matrix(d, rng));
    auto ens = Ensemble::uniform(s);
    auto m = pgm(ens);
    Mat sum = Mat::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (const auto& e : m.effects()) sum += e.matrix;
    EXPECT_LE(max_abs(sum - Mat::Identity(sum.rows(), sum.cols())), kTol);
    auto rep = pgm_error_report(ens);
    EXPECT_LE(rep.max_error, rep.bound + kTol);
  }
}

TEST(Pgm, ThreeRandomPureStatesInDimFour) {
  Rng rng(23);
  for (int i = 0; i < 50; ++i) {
    std::vector<DensityMatrix> s;
    for (int k = 0; k < 3; ++k) s.push_back(DensityMatrix::from_pure(haar_random_state(4, rng)));
    auto rep = pgm_error_report(Ensemble::uniform(s));
    EXPECT_LE(rep.max_error, rep.bound + kTol);
  }
}

TEST(Pgm, ManyCopiesOfNearlyOrthogonalKeys) {
  // kappa = 2: four keys, t copies with pairwise F <= 2^{-6 kappa + 1}.
  const std::size_t kappa = 2, keys = 4;
  std::vector<PureState> s;
  const double eps = 0.1;
  for (std::size_t k = 0; k < keys; ++k) {
    Vec v = Vec::Constant(4, eps);
    v(static_cast<Eigen::Index>(k)) = 1.0;
    s.push_back(PureState::normalized(RegisterShape{{"S", 4}}, v));
  }
  double fmax = 0.0;
  for (std::size_t a = 0; a < keys; ++a)
    for (std::size_t b = 0; b < keys; ++b)
      if (a != b) fmax = std::max(fmax, overlap_squared(s[a], s[b]));
  std::size_t t = 1;
  while (std::pow(fmax, static_cast<double>(t)) > std::pow(2.0, -6.0 * kappa + 1)) ++t;
  ASSERT_LE(t, 4u);
  std::vector<DensityMatrix> copies;
  for (const auto& x : s) copies.push_back(DensityMatrix::from_pure(tensor_power(x, t)));
  auto rep = pgm_error_report(Ensemble::uniform(copies));
  EXPECT_LE(rep.max_error, std::pow(2.0, -static_cast<double>(kappa) + 1));
  EXPECT_LE(rep.max_error, rep.bound + kTol);
}

TEST(GramPgm, OrthogonalStates) {
  std::vector<PureState> s{PureState::basis(RegisterShape{{"S", 3}}, 0), PureState::basis(RegisterShape{{"S", 3}}, 2)};
  for (std::size_t t = 1; t <= 3; ++t) {
    auto r = gram_pgm_success(s, {0.5, 0.5}, t);
    EXPECT_NEAR(r.success[0], 1.0, kExactTol);
    EXPECT_NEAR(r.success[1], 1.0, kExactTol);
  }
}

TEST(GramPgm, TwoStateClosedForm) {
  for (double c : {0.0, 0.3, 0.7, 0.95}) {
    std::vector<PureState> s{PureState::basis(RegisterShape{{"S", 2}}, 0),
                             PureState(RegisterShape{{"S", 2}}, v2(c, std::sqrt(1 - c * c)))};
    for (std::size_t t = 1; t <= 3; ++t) {
      const double ct = std::pow(c, 2.0 * static_cast<double>(t));
      const double closed = 0.5 * (1.0 + std::sqrt(1.0 - ct));
      auto r = gram_pgm_success(s, {0.5, 0.5}, t);
      EXPECT_NEAR(r.success[0], closed, 1e-12);
      EXPECT_NEAR(r.success[1], closed, 1e-12);
      auto full = full_space_success(s, t);
      EXPECT_NEAR(full[0], closed, 1e-9);
    }
  }
}

TEST(GramPgm, AgreesWithFullSpace) {
  Rng rng(24);
  for (std::size_t d = 2; d <= 4; ++d) {
    for (std::size_t t = 1; t <= 4; ++t) {
      for (std::size_t n = 2; n <= 4; ++n) {
        std::vector<PureState> s;
        for (std::size_t k = 0; k < n; ++k) s.push_back(haar_random_state(d, rng));
        auto g = gram_pgm_success(s, std::vector<double>(n, 1.0 / static_cast<double>(n)), t);
        auto f = full_space_success(s, t);
        for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(g.success[k], f[k], 1e-9) << d << " " << t << " " << n;
      }
    }
  }
}

TEST(GramPgm, ZeroPlusFourCopies) {
  std::vector<PureState> s{PureState::basis(RegisterShape{{"S", 2}}, 0),
                           PureState::normalized(RegisterShape{{"S", 2}}, v2(1, 1))};
  auto g = gram_pgm_success(s, {0.5, 0.5}, 4);
  auto f = full_space_success(s, 4);
  EXPECT_NEAR(g.success[0], f[0], 1e-9);
  EXPECT_NEAR(g.success[1], f[1], 1e-9);
}

TEST(GramPgm, RejectsMixedInput) {
  EXPECT_THROW(require_pure({DensityMatrix::maximally_mixed(RegisterShape{{"S", 2}})}), PreconditionError);
}
