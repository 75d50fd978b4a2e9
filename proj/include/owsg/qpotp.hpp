#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "owsg/owsg.hpp"

namespace owsg {

/// Quantum one-time pad style encryption with kappa-bit keys and ell-bit
/// plaintexts; each plaintext bit is carried by n ciphertext qubits.
/// Dec(sk) is the POVM {Pi^sk_x} over x in {0,1}^ell.
struct QpotpScheme {
  std::size_t kappa = 1;
  std::size_t ell = 2;
  std::size_t n = 1;
  std::vector<double> key_probs;  ///< size 2^kappa
  std::function<DensityMatrix(std::uint64_t sk, std::uint64_t x)> enc;
  std::function<Mat(std::uint64_t sk, std::uint64_t x)> dec_effect;
  double eps_corr = 0.0;

  std::size_t keys() const { return std::size_t{1} << kappa; }
  std::size_t plaintexts() const { return std::size_t{1} << ell; }
  bool short_key() const { return kappa < ell; }
  RegisterShape ct_shape() const {
    std::vector<Factor> f;
    for (std::size_t i = 0; i < ell; ++i) f.push_back({"c" + std::to_string(i), std::size_t{1} << n});
    return RegisterShape(std::move(f));
  }
  double dec_probability(std::uint64_t sk, std::uint64_t x, const DensityMatrix& ct) const { return ct.expectation(dec_effect(sk, x)); }
};

/// min over x of sum_sk Pr[sk] Pr[x <- Dec(sk, Enc(sk, x))].
inline double qpotp_correctness(const QpotpScheme& s) {
  double worst = 1.0;
  for (std::uint64_t x = 0; x < s.plaintexts(); ++x) {
    double c = 0.0;
    for (std::uint64_t sk = 0; sk < s.keys(); ++sk) c += s.key_probs[sk] * s.dec_probability(sk, x, s.enc(sk, x));
    worst = std::min(worst, c);
  }
  return worst;
}

/// Checks that every Dec(sk) is a POVM on the ciphertext space.
inline void require_valid(const QpotpScheme& s) {
  if (s.key_probs.size() != s.keys()) throw ShapeError("QpotpScheme: key_probs must have 2^kappa entries");
  const RegisterShape shape = s.ct_shape();
  for (std::uint64_t sk = 0; sk < s.keys(); ++sk) {
    std::vector<Povm::Effect> e;
    for (std::uint64_t x = 0; x < s.plaintexts(); ++x) e.push_back({std::to_string(x), s.dec_effect(sk, x)});
    Povm check(shape, std::move(e));
    (void)check;
  }
}

/// Classical one-time pad on the first kappa plaintext bits, identity on the
/// rest; the ciphertext is the basis state |x xor (sk << (ell - kappa))>
/// with one qubit per bit (n = 1).
inline QpotpScheme toy_qpotp(std::size_t kappa, std::size_t ell) {
  if (kappa < 1 || kappa > ell || ell > 10) throw PreconditionError("toy_qpotp: need 1 <= kappa <= ell <= 10");
  QpotpScheme s;
  s.kappa = kappa;
  s.ell = ell;
  s.n = 1;
  s.key_probs.assign(std::size_t{1} << kappa, 1.0 / static_cast<double>(std::size_t{1} << kappa));
  const RegisterShape shape = s.ct_shape();
  const std::size_t shift = ell - kappa;
  s.enc = [shape, shift](std::uint64_t sk, std::uint64_t x) { return DensityMatrix::basis(shape, x ^ (sk << shift)); };
  const auto d = static_cast<Eigen::Index>(shape.dim());
  s.dec_effect = [d, shift](std::uint64_t sk, std::uint64_t x) {
    Mat m = Mat::Zero(d, d);
    const auto i = static_cast<Eigen::Index>(x ^ (sk << shift));
    m(i, i) = 1.0;
    return m;
  };
  require_valid(s);
  return s;
}

// ---------------------------------------------------------------------------
// OWSG from QPOTP

/// Key (sk, x) with index sk * 2^ell + x, x uniform; phi = ct_{sk,x} (x) |x><x|;
/// Pi_{(sk', x')} = Pi^{sk'}_{x'} (x) |x'><x'|.
inline Owsg owsg_from_qpotp(const QpotpScheme& s) {
  const std::size_t X = s.plaintexts();
  checked_product({s.ct_shape().dim(), X}, "owsg_from_qpotp");
  const RegisterShape tag{{"x", X}};
  std::vector<double> probs;
  std::vector<DensityMatrix> states;
  std::vector<Mat> effects;
  for (std::uint64_t sk = 0; sk < s.keys(); ++sk) {
    for (std::uint64_t x = 0; x < X; ++x) {
      probs.push_back(s.key_probs[sk] / static_cast<double>(X));
      states.push_back(tensor(s.enc(sk, x), DensityMatrix::basis(tag, x)));
      effects.push_back(kron(s.dec_effect(sk, x), DensityMatrix::basis(tag, x).matrix()));
    }
  }
  return Owsg(KeyedStateFamily(std::move(probs), std::move(states)), std::move(effects), s.eps_corr);
}

/// Adversary: given x0, a measurement {A^{x0}_{sk'}} on one ciphertext copy.
using KeyChoiceAdversary = std::function<std::vector<Mat>(std::uint64_t x0)>;

struct WrongMessageBound {
  double lhs = 0.0;            ///< E Pr[adversary picks sk'] Pr[x0 <- Dec(sk', ct_{sk,x1})]
  double sum_over_keys = 0.0;  ///< the same with the adversary replaced by a sum over all sk'
  double rhs = 0.0;            ///< 2^kappa / 2^ell
};

/// Exact average over sk, independent uniform x0, x1.
inline WrongMessageBound wrong_message_bound_check(const QpotpScheme& s, const KeyChoiceAdversary& adv) {
  if (!s.short_key()) throw PreconditionError("wrong_message_bound_check: requires kappa < ell");
  WrongMessageBound r;
  r.rhs = std::ldexp(1.0, static_cast<int>(s.kappa) - static_cast<int>(s.ell));
  const double X = static_cast<double>(s.plaintexts());
  for (std::uint64_t sk = 0; sk < s.keys(); ++sk) {
    for (std::uint64_t x1 = 0; x1 < s.plaintexts(); ++x1) {
      const DensityMatrix ct = s.enc(sk, x1);
      for (std::uint64_t x0 = 0; x0 < s.plaintexts(); ++x0) {
        const auto a = adv(x0);
        if (a.size() != s.keys()) throw ShapeError("wrong_message_bound_check: adversary must give one effect per key");
        const double w = s.key_probs[sk] / (X * X);
        for (std::uint64_t kp = 0; kp < s.keys(); ++kp) {
          const double dec = s.dec_probability(kp, x0, ct);
          r.lhs += w * ct.expectation(a[kp]) * dec;
          r.sum_over_keys += w * dec;
        }
      }
    }
  }
  return r;
}

/// Always picks sk' = c.
inline KeyChoiceAdversary constant_key_adversary(const QpotpScheme& s, std::uint64_t c) {
  const auto d = static_cast<Eigen::Index>(s.ct_shape().dim());
  const std::size_t K = s.keys();
  return [d, K, c](std::uint64_t) {
    std::vector<Mat> a(K, Mat::Zero(d, d));
    a.at(c) = Mat::Identity(d, d);
    return a;
  };
}

/// Toy scheme only: reads the ciphertext and picks the key that decrypts it
/// to x0 when one exists, else key 0.
inline KeyChoiceAdversary matching_key_adversary(const QpotpScheme& s) {
  const std::size_t shift = s.ell - s.kappa, K = s.keys(), D = s.ct_shape().dim();
  const auto d = static_cast<Eigen::Index>(D);
  return [d, K, D, shift](std::uint64_t x0) {
    std::vector<Mat> a(K, Mat::Zero(d, d));
    for (std::size_t c = 0; c < D; ++c) {
      std::uint64_t pick = 0;
      for (std::uint64_t kp = 0; kp < K; ++kp)
        if ((x0 ^ (kp << shift)) == c) pick = kp;
      a[pick](static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c)) = 1.0;
    }
    return a;
  };
}

// ---------------------------------------------------------------------------
// Pauli twirl and EFI

/// Qubit count of a dimension that must be a power of two.
inline std::size_t qubit_count(std::size_t dim) {
  std::size_t n = 0;
  while ((std::size_t{1} << n) < dim) ++n;
  if ((std::size_t{1} << n) != dim) throw ShapeError("expected a power-of-two dimension, got " + std::to_string(dim));
  return n;
}

inline std::vector<int> bits_of(std::uint64_t v, std::size_t n) {
  std::vector<int> b(n);
  for (std::size_t i = 0; i < n; ++i) b[i] = static_cast<int>((v >> (n - 1 - i)) & 1U);
  return b;
}

/// (1/4^n) sum_{x,z} X^x Z^z rho Z^z X^x.
inline DensityMatrix pauli_twirl(const DensityMatrix& rho) {
  const std::size_t n = qubit_count(rho.dim());
  const std::size_t N = std::size_t{1} << n;
  Mat acc = Mat::Zero(rho.matrix().rows(), rho.matrix().cols());
  for (std::uint64_t x = 0; x < N; ++x)
    for (std::uint64_t z = 0; z < N; ++z) {
      const Mat p = pauli_operator(bits_of(x, n), bits_of(z, n));
      acc += p * rho.matrix() * p.adjoint();
    }
  return DensityMatrix::trusted(rho.shape(), acc / static_cast<double>(N * N));
}

/// Two states sharing one shape.
struct EfiPair {
  DensityMatrix rho0, rho1;

  EfiPair() = default;
  EfiPair(DensityMatrix a, DensityMatrix b) : rho0(std::move(a)), rho1(std::move(b)) {
    require_same_shape(rho0.shape(), rho1.shape(), "EfiPair");
  }
  const DensityMatrix& state(int b) const { return b ? rho1 : rho0; }
  double distance() const { return trace_distance(rho0, rho1); }
};

struct QpotpEfi {
  EfiPair pair;
  EfiPair hybrid;  ///< ciphertexts replaced by ct_{sk,(0^n,0^n)}
  std::size_t payload_qubits = 0;
};

/// With 2m = ell and plaintext (x, z) in {0,1}^m x {0,1}^m:
/// rho0 = E ct_{sk,(x,z)} (x) (X^x Z^z (x) I)|Psi><Psi|(X^x Z^z (x) I)^dagger,
/// rho1 = E ct_{sk,(x,z)} (x) X^x Z^z|0^m><0^m|Z^z X^x (x) I/2^m,
/// Psi maximally entangled on m + m qubits. Registers: ct, then P (padded half), Q.
inline QpotpEfi efi_from_qpotp(const QpotpScheme& s) {
  if (s.ell % 2 != 0) throw PreconditionError("efi_from_qpotp: ell must be even");
  const std::size_t m = s.ell / 2, M = std::size_t{1} << m;
  checked_product({s.ct_shape().dim(), M, M}, "efi_from_qpotp");
  const PureState psi = maximally_entangled(m, "P", "Q");
  const DensityMatrix Psi = DensityMatrix::from_pure(psi);
  const RegisterShape p_shape{{"P", M}}, q_shape{{"Q", M}};
  const DensityMatrix zero = DensityMatrix::basis(p_shape, 0);
  const DensityMatrix mixed = DensityMatrix::maximally_mixed(q_shape);
  const RegisterShape full = s.ct_shape().concat(psi.shape());
  const auto D = static_cast<Eigen::Index>(full.dim());
  Mat r0 = Mat::Zero(D, D), r1 = Mat::Zero(D, D), h0 = Mat::Zero(D, D), h1 = Mat::Zero(D, D);
  const double w_xz = 1.0 / static_cast<double>(M * M);
  for (std::uint64_t sk = 0; sk < s.keys(); ++sk) {
    const Mat ct00 = s.enc(sk, 0).matrix();
    for (std::uint64_t x = 0; x < M; ++x)
      for (std::uint64_t z = 0; z < M; ++z) {
        const double w = s.key_probs[sk] * w_xz;
        const Mat p = pauli_operator(bits_of(x, m), bits_of(z, m));
        const Mat pi = kron(p, Mat::Identity(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(M)));
        const Mat pay0 = pi * Psi.matrix() * pi.adjoint();
        const Mat pay1 = kron(Mat(p * zero.matrix() * p.adjoint()), mixed.matrix());
        const Mat ct = s.enc(sk, (x << m) | z).matrix();
        r0 += w * kron(ct, pay0);
        r1 += w * kron(ct, pay1);
        h0 += w * kron(ct00, pay0);
        h1 += w * kron(ct00, pay1);
      }
  }
  QpotpEfi e;
  e.payload_qubits = m;
  e.pair = EfiPair(DensityMatrix(full, r0), DensityMatrix(full, r1));
  e.hybrid = EfiPair(DensityMatrix(full, h0), DensityMatrix(full, h1));
  return e;
}

// ---------------------------------------------------------------------------
// QSKE to QPKE

/// sk unchanged, pk = (Enc(sk, 0), Enc(sk, 1)), Enc(pk, x) = pk_x, Dec unchanged.
struct QpkeScheme {
  QpotpScheme ske;

  std::pair<DensityMatrix, DensityMatrix> pk(std::uint64_t sk) const { return {ske.enc(sk, 0), ske.enc(sk, 1)}; }
  DensityMatrix enc(const std::pair<DensityMatrix, DensityMatrix>& pk, std::uint64_t x) const {
    if (x > 1) throw PreconditionError("QpkeScheme: one-bit messages only");
    return x ? pk.second : pk.first;
  }
  double dec_probability(std::uint64_t sk, std::uint64_t x, const DensityMatrix& ct) const { return ske.dec_probability(sk, x, ct); }
};

inline QpkeScheme qpke_from_qske(const QpotpScheme& s) {
  if (s.ell != 1) throw PreconditionError("qpke_from_qske: needs one-bit messages");
  return QpkeScheme{s};
}

inline double qpke_correctness(const QpkeScheme& p) {
  double worst = 1.0;
  for (std::uint64_t x = 0; x < 2; ++x) {
    double c = 0.0;
    for (std::uint64_t sk = 0; sk < p.ske.keys(); ++sk) c += p.ske.key_probs[sk] * p.dec_probability(sk, x, p.enc(p.pk(sk), x));
    worst = std::min(worst, c);
  }
  return worst;
}

/// One-bit scheme that encrypts x as |x xor sk> rotated by angle theta toward
/// |x xor sk xor 1> and decrypts in the basis; correctness cos^2(theta).
inline QpotpScheme noisy_bit_qske(double theta) {
  QpotpScheme s;
  s.kappa = 1;
  s.ell = 1;
  s.n = 1;
  s.key_probs = {0.5, 0.5};
  const RegisterShape shape = s.ct_shape();
  s.enc = [shape, theta](std::uint64_t sk, std::uint64_t x) {
    Vec v = Vec::Zero(2);
    v(static_cast<Eigen::Index>(x ^ sk)) = std::cos(theta);
    v(static_cast<Eigen::Index>(x ^ sk ^ 1U)) = std::sin(theta);
    return DensityMatrix::from_pure(PureState(shape, v));
  };
  s.dec_effect = [](std::uint64_t sk, std::uint64_t x) {
    Mat m = Mat::Zero(2, 2);
    m(static_cast<Eigen::Index>(x ^ sk), static_cast<Eigen::Index>(x ^ sk)) = 1.0;
    return m;
  };
  s.eps_corr = std::pow(std::sin(theta), 2);
  require_valid(s);
  return s;
}

}  // namespace owsg
