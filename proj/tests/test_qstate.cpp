#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "owsg/qstate.hpp"

using namespace owsg;

namespace {

RegisterShape qubit(const std::string& l) { return RegisterShape{{l, 2}}; }

DensityMatrix ket(const std::string& l, double a0, double a1) {
  Vec v(2);
  v << a0, a1;
  return DensityMatrix::from_pure(PureState::normalized(qubit(l), v));
}

// Reference partial trace written with explicit index arithmetic on a
// two-factor space: (Tr_B M)_{ij} = sum_b M_{(i,b),(j,b)}.
Mat trace_out_second(const Mat& m, Eigen::Index da, Eigen::Index db) {
  Mat r = Mat::Zero(da, da);
  for (Eigen::Index i = 0; i < da; ++i)
    for (Eigen::Index j = 0; j < da; ++j)
      for (Eigen::Index b = 0; b < db; ++b) r(i, j) += m(i * db + b, j * db + b);
  return r;
}

}  // namespace

TEST(RegisterShape, RejectsDuplicateLabels) {
  EXPECT_THROW((RegisterShape{{"A", 2}, {"A", 3}}), ShapeError);
  EXPECT_EQ(RegisterShape{}.dim(), 1u);
}

TEST(RegisterShape, CapIsEnforced) {
  ScopedDimensionCap cap(16);
  EXPECT_THROW(RegisterShape::uniform("q", 5), SizingError);
  EXPECT_NO_THROW(RegisterShape::uniform("q", 4));
}

TEST(DensityMatrix, ValidatesInvariants) {
  Mat m(2, 2);
  m << 1, 0, 0, 1;
  EXPECT_THROW(DensityMatrix(qubit("A"), m), PreconditionError);  // trace 2
  m << 1.5, 0, 0, -0.5;
  EXPECT_THROW(DensityMatrix(qubit("A"), m), PreconditionError);  // not PSD
  m << 0.5, 1, 0, 0.5;
  EXPECT_THROW(DensityMatrix(qubit("A"), m), PreconditionError);  // not Hermitian
}

TEST(Tensor, MaximallyMixedProduct) {
  auto r = tensor(DensityMatrix::maximally_mixed(qubit("A")), DensityMatrix::maximally_mixed(qubit("B")));
  EXPECT_LE(max_abs(r.matrix() - Mat::Identity(4, 4) / 4.0), kExactTol);
}

TEST(Tensor, BasisProduct) {
  auto r = tensor(DensityMatrix::basis(qubit("A"), 0), DensityMatrix::basis(qubit("B"), 1));
  EXPECT_NEAR(r.matrix()(1, 1).real(), 1.0, kExactTol);
  EXPECT_NEAR(r.matrix().cwiseAbs().sum(), 1.0, kExactTol);
}

TEST(Tensor, LabelCollision) {
  EXPECT_THROW(tensor(DensityMatrix::maximally_mixed(qubit("A")), DensityMatrix::maximally_mixed(qubit("A"))), ShapeError);
}

TEST(Tensor, PurityIsMultiplicative) {
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    auto a = random_density_matrix(qubit("A"), rng);
    auto b = random_density_matrix(qubit("B"), rng);
    auto r = tensor(a, b);
    const double direct = (r.matrix() * r.matrix()).trace().real();
    EXPECT_NEAR(direct, a.purity() * b.purity(), 1e-12);
  }
}

TEST(Tensor, Associative) {
  Rng rng(2);
  auto a = random_density_matrix(qubit("A"), rng);
  auto b = random_density_matrix(RegisterShape{{"B", 3}}, rng);
  auto c = random_density_matrix(qubit("C"), rng);
  EXPECT_LE(max_abs(tensor(tensor(a, b), c).matrix() - tensor(a, tensor(b, c)).matrix()), kExactTol);
}

TEST(PartialTrace, MaximallyEntangledMarginal) {
  for (std::size_t n = 1; n <= 3; ++n) {
    auto psi = maximally_entangled(n);
    const auto d = static_cast<Eigen::Index>(std::size_t{1} << n);
    auto ra = partial_trace(DensityMatrix::from_pure(psi), {"A"});
    EXPECT_LE(max_abs(ra.matrix() - Mat::Identity(d, d) / static_cast<double>(d)), kExactTol);
    EXPECT_NEAR(DensityMatrix::from_pure(psi).purity(), 1.0, kExactTol);
  }
}

TEST(PartialTrace, ProductStateAndReference) {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    auto a = random_density_matrix(RegisterShape{{"A", 3}}, rng);
    auto b = random_density_matrix(RegisterShape{{"B", 2}}, rng);
    auto ab = tensor(a, b);
    EXPECT_LE(max_abs(partial_trace(ab, {"A"}).matrix() - a.matrix()), kExactTol);
    EXPECT_LE(max_abs(partial_trace(ab, {"B"}).matrix() - b.matrix()), kExactTol);
    auto mixed = random_density_matrix(RegisterShape{{"A", 3}, {"B", 2}}, rng);
    EXPECT_LE(max_abs(partial_trace(mixed, {"A"}).matrix() - trace_out_second(mixed.matrix(), 3, 2)), kExactTol);
  }
}

TEST(PartialTrace, RandomPureMarginalSpectrum) {
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    auto psi = haar_random_state(RegisterShape{{"A", 2}, {"B", 2}}, rng);
    auto r = partial_trace(psi, {"A"});
    auto ev = eigvalsh(r.matrix());
    EXPECT_NEAR(ev.sum(), 1.0, kTol);
    EXPECT_GE(ev.minCoeff(), -kTol);
    EXPECT_LE(ev.maxCoeff(), 1.0 + kTol);
    EXPECT_LE(max_abs(r.matrix() - partial_trace(DensityMatrix::from_pure(psi), {"A"}).matrix()), kExactTol);
  }
}

TEST(PartialTrace, UnknownLabel) {
  EXPECT_THROW(partial_trace(DensityMatrix::maximally_mixed(qubit("A")), {"Z"}), ShapeError);
}

TEST(Permute, MovesFactors) {
  Rng rng(5);
  auto a = random_density_matrix(RegisterShape{{"A", 2}}, rng);
  auto b = random_density_matrix(RegisterShape{{"B", 3}}, rng);
  auto ba = permute(tensor(a, b), {"B", "A"});
  EXPECT_LE(max_abs(ba.matrix() - tensor(b, a).matrix()), kExactTol);
}

TEST(ApplyUnitary, MatchesLiftedKron) {
  Rng rng(6);
  auto rho = random_density_matrix(RegisterShape{{"A", 2}, {"B", 3}, {"C", 2}}, rng);
  Mat u = random_unitary(2, rng);
  // U on C equals I_A (x) I_B (x) U.
  Mat full = kron(Mat::Identity(6, 6), u);
  auto out = apply_unitary(rho, u, {"C"});
  EXPECT_LE(max_abs(out.matrix() - full * rho.matrix() * full.adjoint()), 1e-12);
  // U on A.
  Mat fa = kron(u, Mat::Identity(6, 6));
  EXPECT_LE(max_abs(apply_unitary(rho, u, {"A"}).matrix() - fa * rho.matrix() * fa.adjoint()), 1e-12);
}

TEST(TraceDistance, Examples) {
  auto z0 = ket("A", 1, 0), z1 = ket("A", 0, 1), plus = ket("A", 1, 1);
  EXPECT_NEAR(trace_distance(z0, z0), 0.0, kExactTol);
  EXPECT_NEAR(trace_distance(z0, z1), 1.0, kExactTol);
  EXPECT_NEAR(trace_distance(z0, plus), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_THROW(trace_distance(z0, DensityMatrix::maximally_mixed(RegisterShape{{"A", 3}})), ShapeError);
}

TEST(TraceDistance, UnitaryInvarianceAndTriangle) {
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    const std::size_t d = 2 + rng.below(5);
    auto r = random_density_matrix(d, rng), s = random_density_matrix(d, rng), w = random_density_matrix(d, rng);
    Mat u = random_unitary(d, rng);
    auto ur = DensityMatrix::trusted(r.shape(), u * r.matrix() * u.adjoint());
    auto us = DensityMatrix::trusted(s.shape(), u * s.matrix() * u.adjoint());
    EXPECT_NEAR(trace_distance(ur, us), trace_distance(r, s), kTol);
    EXPECT_LE(trace_distance(r, s), trace_distance(r, w) + trace_distance(w, s) + kTol);
    EXPECT_NEAR(trace_distance(r, s), trace_distance(s, r), kExactTol);
  }
}

TEST(Fidelity, Examples) {
  auto z0 = ket("A", 1, 0), plus = ket("A", 1, 1);
  EXPECT_NEAR(fidelity(z0, z0), 1.0, 1e-12);
  EXPECT_NEAR(fidelity(z0, plus), 0.5, 1e-12);
}

TEST(Fidelity, PureStatesEqualSquaredOverlap) {
  Rng rng(8);
  for (int i = 0; i < 30; ++i) {
    auto a = haar_random_state(4, rng), b = haar_random_state(4, rng);
    const double direct = std::norm(a.amplitudes().dot(b.amplitudes()));
    EXPECT_NEAR(fidelity(DensityMatrix::from_pure(a), DensityMatrix::from_pure(b)), direct, 1e-9);
  }
}

TEST(Fidelity, FuchsVanDeGraaf) {
  Rng rng(9);
  for (int i = 0; i < 500; ++i) {
    const std::size_t d = 2 + rng.below(7);
    auto r = random_density_matrix(d, rng), s = random_density_matrix(d, rng);
    const double f = fidelity(r, s), td = trace_distance(r, s);
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0);
    EXPECT_LE(1.0 - std::sqrt(f), td + kTol);
    EXPECT_LE(td, std::sqrt(1.0 - f) + kTol);
  }
}

TEST(Pauli, Examples) {
  EXPECT_LE(max_abs(pauli_operator({0, 0}, {0, 0}) - Mat::Identity(4, 4)), kExactTol);
  Mat x(2, 2);
  x << 0, 1, 1, 0;
  EXPECT_LE(max_abs(pauli_operator({1}, {0}) - x), kExactTol);
  Mat xz = pauli_operator({1}, {1});
  EXPECT_LE(max_abs(xz * xz + Mat::Identity(2, 2)), kExactTol);
  EXPECT_LE(max_abs(xz * xz.adjoint() - Mat::Identity(2, 2)), kExactTol);
  EXPECT_THROW(pauli_operator({1, 0}, {1}), ShapeError);
}

TEST(MaximallyEntangled, OneQubit) {
  auto psi = maximally_entangled(1);
  const double h = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(psi.amplitudes()(0).real(), h, kExactTol);
  EXPECT_NEAR(psi.amplitudes()(3).real(), h, kExactTol);
  EXPECT_NEAR(std::abs(psi.amplitudes()(1)) + std::abs(psi.amplitudes()(2)), 0.0, kExactTol);
  ScopedDimensionCap cap(16);
  EXPECT_THROW(maximally_entangled(3), SizingError);
}

TEST(Haar, NormAndMoments) {
  Rng rng(10);
  const int n = 100000;
  for (std::size_t dim : {2u, 4u}) {
    double s1 = 0, s1sq = 0, s2 = 0, s2sq = 0;
    Vec xi = Vec::Zero(static_cast<Eigen::Index>(dim));
    xi(0) = 1.0;
    for (int i = 0; i < n; ++i) {
      auto psi = haar_random_state(dim, rng);
      ASSERT_NEAR(psi.amplitudes().norm(), 1.0, 1e-12);
      const double p = std::norm(psi.amplitudes()(0));
      s1 += p;
      s1sq += p * p;
      s2 += p * p;
      s2sq += p * p * p * p;
    }
    const double m1 = s1 / n, se1 = std::sqrt((s1sq / n - m1 * m1) / n);
    EXPECT_NEAR(m1, 1.0 / static_cast<double>(dim), 3 * se1);
    if (dim == 2) {
      const double m2 = s2 / n, se2 = std::sqrt((s2sq / n - m2 * m2) / n);
      EXPECT_NEAR(m2, 1.0 / 3.0, 3 * se2);
    }
  }
}

TEST(PsdSqrt, Examples) {
  auto id = psd_sqrt_and_pinv(Mat::Identity(3, 3));
  EXPECT_LE(max_abs(id.sqrt - Mat::Identity(3, 3)), kExactTol);
  EXPECT_LE(max_abs(id.pinv_sqrt - Mat::Identity(3, 3)), kExactTol);
  Mat d = Mat::Zero(2, 2);
  d(0, 0) = 4;
  auto r = psd_sqrt_and_pinv(d, 1e-12);
  EXPECT_NEAR(r.sqrt(0, 0).real(), 2.0, kExactTol);
  EXPECT_NEAR(r.pinv_sqrt(0, 0).real(), 0.5, kExactTol);
  EXPECT_NEAR(std::abs(r.sqrt(1, 1)) + std::abs(r.pinv_sqrt(1, 1)), 0.0, kExactTol);
  Mat bad(2, 2);
  bad << 0, 1, 0, 0;
  EXPECT_THROW(psd_sqrt_and_pinv(bad), PreconditionError);
  Rng rng(11);
  for (int i = 0; i < 20; ++i) {
    Mat m = random_density_matrix(5, rng).matrix() * 3.0;
    auto s = psd_sqrt_and_pinv(m).sqrt;
    EXPECT_LE(max_abs(s * s - m), kTol);
  }
}

TEST(RandomUnitary, IsUnitary) {
  Rng rng(12);
  for (std::size_t d : {1u, 2u, 5u, 8u}) EXPECT_TRUE(is_unitary(random_unitary(d, rng)));
}

TEST(CompleteToUnitary, KeepsLeadingColumns) {
  Rng rng(13);
  auto a = haar_random_state(4, rng).amplitudes();
  Vec b = gaussian_vector(4, rng);
  b -= a.dot(b) * a;
  b.normalize();
  Mat u = complete_to_unitary({a, b}, 4);
  EXPECT_TRUE(is_unitary(u));
  EXPECT_LE((u.col(0) - a).norm(), kExactTol);
  EXPECT_LE((u.col(1) - b).norm(), kExactTol);
  EXPECT_THROW(complete_to_unitary({a, a}, 4), PreconditionError);
}

TEST(Serialization, RoundTrip) {
  Rng rng(14);
  auto rho = random_density_matrix(RegisterShape{{"A", 2}, {"B", 3}}, rng);
  std::stringstream ss;
  write_density(ss, rho);
  EXPECT_EQ(ss.str().rfind("dims: 2 3\n", 0), 0u);
  auto back = read_density(ss);
  EXPECT_EQ(back.shape().dims(), rho.shape().dims());
  EXPECT_LE(max_abs(back.matrix() - rho.matrix()), 1e-15);

  auto psi = haar_random_state(3, rng);
  std::stringstream sp;
  write_pure(sp, psi);
  auto pb = read_pure(sp);
  EXPECT_LE((pb.amplitudes() - psi.amplitudes()).norm(), 1e-15);
}

TEST(CanonicalPurification, ReducesToInput) {
  Rng rng(15);
  auto rho = random_density_matrix(RegisterShape{{"B", 3}}, rng);
  auto psi = canonical_purification(rho, "A");
  EXPECT_LE(max_abs(partial_trace(psi, {"B"}).matrix() - rho.matrix()), kTol);
}
