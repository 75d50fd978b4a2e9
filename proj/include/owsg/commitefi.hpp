#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "owsg/discriminate.hpp"
#include "owsg/owsg.hpp"
#include "owsg/qpotp.hpp"

namespace owsg {

// ---------------------------------------------------------------------------
// Canonical commitments

/// Unitaries Q0, Q1 on a register split into commitment labels C and reveal
/// labels R; the committed state is Q_b|0>.
struct CanonicalCommitment {
  RegisterShape shape;
  std::vector<std::string> c_labels, r_labels;
  Mat q0, q1;

  CanonicalCommitment() = default;
  CanonicalCommitment(RegisterShape s, std::vector<std::string> c, std::vector<std::string> r, Mat a, Mat b)
      : shape(std::move(s)), c_labels(std::move(c)), r_labels(std::move(r)), q0(std::move(a)), q1(std::move(b)) {
    const auto d = static_cast<Eigen::Index>(shape.dim());
    if (q0.rows() != d || q0.cols() != d || q1.rows() != d || q1.cols() != d)
      throw ShapeError("CanonicalCommitment: unitaries must match " + shape.str());
    if (!is_unitary(q0) || !is_unitary(q1)) throw PreconditionError("CanonicalCommitment: Q0 and Q1 must be unitary");
    std::vector<std::string> all = c_labels;
    all.insert(all.end(), r_labels.begin(), r_labels.end());
    std::vector<std::string> have = shape.labels();
    std::sort(all.begin(), all.end());
    std::sort(have.begin(), have.end());
    if (all != have || std::adjacent_find(all.begin(), all.end()) != all.end())
      throw ShapeError("CanonicalCommitment: C and R must partition the labels of " + shape.str());
  }

  const Mat& q(int b) const { return b ? q1 : q0; }
  PureState committed(int b) const { return PureState(shape, q(b).col(0)); }
  DensityMatrix c_marginal(int b) const { return partial_trace(committed(b), c_labels); }
  RegisterShape r_shape() const { return shape.select(r_labels); }
};

/// Q_b|0> given as target states; Q_b is the deterministic unitary completion.
inline CanonicalCommitment commitment_from_states(const PureState& s0, const PureState& s1, std::vector<std::string> c,
                                                  std::vector<std::string> r) {
  require_same_shape(s0.shape(), s1.shape(), "commitment_from_states");
  const std::size_t d = s0.dim();
  return CanonicalCommitment(s0.shape(), std::move(c), std::move(r), complete_to_unitary({s0.amplitudes()}, d),
                             complete_to_unitary({s1.amplitudes()}, d));
}

/// Random unitaries on C (dim dc) and R (dim dr).
inline CanonicalCommitment random_commitment(std::size_t dc, std::size_t dr, Rng& rng) {
  RegisterShape s{{"C", dc}, {"R", dr}};
  return CanonicalCommitment(s, {"C"}, {"R"}, random_unitary(dc * dr, rng), random_unitary(dc * dr, rng));
}

/// Trace distance of the C-marginals.
inline double hiding_distance(const CanonicalCommitment& c) { return trace_distance(c.c_marginal(0), c.c_marginal(1)); }

/// sup over U on R (x) Z and |tau> of the binding overlap: sqrt F of the C-marginals.
inline double unbounded_binding_advantage(const CanonicalCommitment& c) {
  return std::sqrt(fidelity(c.c_marginal(0), c.c_marginal(1)));
}

/// || (<0|Q1^dagger)_{C,R} (I_C (x) U_{R,Z}) (Q0|0> (x) |tau>_Z) ||, with U's factor
/// order (R labels in c.r_labels order, then Z).
inline double binding_overlap(const CanonicalCommitment& c, const Mat& u, const PureState& tau) {
  const std::size_t dz = tau.dim();
  const std::size_t dr = c.r_shape().dim();
  if (static_cast<std::size_t>(u.rows()) != dr * dz || u.rows() != u.cols())
    throw ShapeError("binding_overlap: attack unitary must act on R (x) Z of dim " + std::to_string(dr * dz));
  const RegisterShape full = c.shape.concat(RegisterShape{{"Z", dz}});
  Vec v = kron(Vec(c.q0.col(0)), tau.amplitudes());
  std::vector<std::string> on = c.r_labels;
  on.push_back("Z");
  v = apply_operator(v, full, u, on);
  const Vec psi1 = c.q1.col(0);
  const auto D = static_cast<Eigen::Index>(c.shape.dim()), Z = static_cast<Eigen::Index>(dz);
  Vec w = Vec::Zero(Z);
  for (Eigen::Index i = 0; i < D; ++i)
    for (Eigen::Index z = 0; z < Z; ++z) w(z) += std::conj(psi1(i)) * v(i * Z + z);
  return w.norm();
}

/// Amplitude matrix psi(c, r) of a pure state with C labels as rows.
inline Mat split_amplitudes(const PureState& psi, const std::vector<std::string>& c, const std::vector<std::string>& r) {
  std::vector<std::string> order = c;
  order.insert(order.end(), r.begin(), r.end());
  const Vec v = permute_vector(psi.amplitudes(), psi.shape(), order);
  const auto dc = static_cast<Eigen::Index>(psi.shape().select(c).dim());
  const auto dr = static_cast<Eigen::Index>(psi.shape().select(r).dim());
  Mat m(dc, dr);
  for (Eigen::Index i = 0; i < dc; ++i)
    for (Eigen::Index j = 0; j < dr; ++j) m(i, j) = v(i * dr + j);
  return m;
}

/// Attack on R alone (Z trivial) maximizing |<psi1|(I (x) U)|psi0>|: U = V W^dagger
/// from the singular value decomposition of Tr_C |psi0><psi1| = W S V^dagger.
inline Mat polar_binding_attack(const CanonicalCommitment& c) {
  const Mat a0 = split_amplitudes(c.committed(0), c.c_labels, c.r_labels);
  const Mat a1 = split_amplitudes(c.committed(1), c.c_labels, c.r_labels);
  const Mat m = a0.transpose() * a1.conjugate();
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixV() * svd.matrixU().adjoint();
}

// ---------------------------------------------------------------------------
// EFI tensor powers

/// 1 - exp(-n ||rho - sigma||_1 / 4) from the single-copy trace distance.
inline double tensor_power_bound(double trace_dist, std::size_t n) {
  return 1.0 - std::exp(-static_cast<double>(n) * 2.0 * trace_dist / 4.0);
}

/// 1 - F^{n/2}: Fuchs-van de Graaf applied to n copies, F the single-copy fidelity.
inline double tensor_power_fidelity_bound(double fid, std::size_t n) {
  return 1.0 - std::pow(std::sqrt(fid), static_cast<double>(n));
}

inline EfiPair efi_amplify(const EfiPair& e, std::size_t n) {
  if (n < 1) throw PreconditionError("efi_amplify: n must be >= 1");
  checked_product(std::vector<std::size_t>(n, e.rho0.dim()), "efi_amplify");
  if (n == 1) return e;
  return EfiPair(tensor_power(e.rho0, n), tensor_power(e.rho1, n));
}

/// rho0 = |0><0|, rho1 = |+><+|.
inline EfiPair zero_plus_efi() {
  const RegisterShape s{{"S", 2}};
  Vec plus(2);
  plus << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  return EfiPair(DensityMatrix::basis(s, 0), DensityMatrix::from_pure(PureState(s, plus)));
}

/// rho0 = diag(1-a, a), rho1 = diag(a, 1-a).
inline EfiPair biased_coin_efi(double a) {
  if (a < 0.0 || a > 1.0) throw PreconditionError("biased_coin_efi: a must lie in [0,1]");
  const RegisterShape s{{"S", 2}};
  Mat m0 = Mat::Zero(2, 2), m1 = Mat::Zero(2, 2);
  m0(0, 0) = 1.0 - a;
  m0(1, 1) = a;
  m1(0, 0) = a;
  m1(1, 1) = 1.0 - a;
  return EfiPair(DensityMatrix(s, m0), DensityMatrix(s, m1));
}

inline EfiPair orthogonal_efi() {
  const RegisterShape s{{"S", 2}};
  return EfiPair(DensityMatrix::basis(s, 0), DensityMatrix::basis(s, 1));
}

// ---------------------------------------------------------------------------
// SV-SI-OWSGs

inline double min_pairwise_distance(const KeyedStateFamily& f) {
  double m = 1.0;
  for (Key a = 0; a < f.size(); ++a)
    for (Key b = a + 1; b < f.size(); ++b) m = std::min(m, trace_distance(f.state(a), f.state(b)));
  return m;
}

/// Family with purification whose distinct keys are at trace distance >= 1/p.
struct SvSiOwsg {
  KeyedStateFamily family;
  double p = 1.0;

  SvSiOwsg() = default;
  SvSiOwsg(KeyedStateFamily f, double inv_param) : family(std::move(f)), p(inv_param) {
    if (!family.has_purification()) throw PreconditionError("SvSiOwsg: purification required");
    if (p < 1.0) throw PreconditionError("SvSiOwsg: p must be >= 1");
    const double m = min_pairwise_distance(family);
    if (m < 1.0 / p - kTol)
      throw PreconditionError("SvSiOwsg: min distance " + std::to_string(m) + " below 1/p = " + std::to_string(1.0 / p));
  }
  double min_distance() const { return min_pairwise_distance(family); }
};

/// p = 1 / measured min distance; purification added canonically when absent.
inline SvSiOwsg svsi_declared(const KeyedStateFamily& f) {
  const KeyedStateFamily g = f.has_purification() ? f : with_canonical_purification(f);
  const double m = min_pairwise_distance(g);
  if (m <= kTol) throw PreconditionError("svsi_declared: two keys give identical states");
  return SvSiOwsg(g, 1.0 / m);
}

/// Keys k in {0,1}^kappa uniform, phi_k = rho_{k_1} (x) ... (x) rho_{k_kappa}.
inline SvSiOwsg svsi_from_efi(const EfiPair& e, std::size_t kappa) {
  if (kappa < 1 || kappa > 16) throw PreconditionError("svsi_from_efi: kappa must lie in [1,16]");
  checked_product(std::vector<std::size_t>(2 * kappa, e.rho0.dim()), "svsi_from_efi");
  const std::size_t K = std::size_t{1} << kappa;
  std::vector<DensityMatrix> states;
  for (Key k = 0; k < K; ++k) {
    DensityMatrix s = e.state(static_cast<int>((k >> (kappa - 1)) & 1U)).relabeled({"e0"});
    for (std::size_t i = 1; i < kappa; ++i)
      s = tensor(s, e.state(static_cast<int>((k >> (kappa - 1 - i)) & 1U)).relabeled({"e" + std::to_string(i)}));
    states.push_back(std::move(s));
  }
  return svsi_declared(KeyedStateFamily(std::vector<double>(K, 1.0 / static_cast<double>(K)), std::move(states)));
}

/// prod_i F(rho_{k_i}, rho_{k'_i}).
inline double fidelity_product(const EfiPair& e, std::size_t kappa, Key a, Key b) {
  double f = 1.0;
  for (std::size_t i = 0; i < kappa; ++i) {
    const int x = static_cast<int>((a >> (kappa - 1 - i)) & 1U), y = static_cast<int>((b >> (kappa - 1 - i)) & 1U);
    f *= fidelity(e.state(x), e.state(y));
  }
  return f;
}

struct SvsiAmplification {
  SvSiOwsg family;
  std::size_t nominal_copies = 0;  ///< 2pq
  std::size_t copies = 0;          ///< copies actually used
  double min_distance = 0.0;
  double min_bound = 1.0;  ///< min over pairs of 1 - exp(-copies ||phi_k - phi_k'||_1 / 4)
  bool holds = true;       ///< every pair meets its own bound
};

/// phi_k^{(x) copies}; the nominal count 2pq is reported alongside.
inline SvsiAmplification svsi_amplify(const SvSiOwsg& f, std::size_t q, std::size_t copies) {
  if (copies < 1) throw PreconditionError("svsi_amplify: copies must be >= 1");
  checked_product(std::vector<std::size_t>(2 * copies, f.family.shape().dim()), "svsi_amplify");
  SvsiAmplification r;
  r.nominal_copies = static_cast<std::size_t>(std::ceil(2.0 * f.p * static_cast<double>(q)));
  r.copies = copies;
  std::vector<DensityMatrix> powered;
  for (const auto& s : f.family.states()) powered.push_back(tensor_power(s, copies));
  KeyedStateFamily g(f.family.probabilities(), powered);
  r.min_distance = min_pairwise_distance(g);
  for (Key a = 0; a < g.size(); ++a)
    for (Key b = a + 1; b < g.size(); ++b) {
      const double bound = tensor_power_bound(trace_distance(f.family.state(a), f.family.state(b)), copies);
      r.min_bound = std::min(r.min_bound, bound);
      if (trace_distance(g.state(a), g.state(b)) < bound - kTol) r.holds = false;
    }
  r.family = svsi_declared(g);
  return r;
}

struct KeyIdentification {
  Povm povm;                     ///< empty when the Gram path was taken
  std::vector<double> success;   ///< Tr(Pi_k phi_k^{(x) t})
  double average_success = 0.0;  ///< weighted by Pr[k]
  double min_success = 1.0;
  double max_error = 0.0;  ///< max over k of 1 - success
  bool gram = false;
};

/// PGM over {phi_k^{(x) t}}; pure families use the Gram matrix when no POVM is requested.
inline KeyIdentification key_identification_povm(const KeyedStateFamily& f, std::size_t t, bool need_povm = false) {
  if (t < 1) throw PreconditionError("key_identification_povm: t must be >= 1");
  KeyIdentification r;
  if (!need_povm && f.is_pure()) {
    auto g = gram_pgm_success(require_pure(f.states()), f.probabilities(), t);
    r.success = g.success;
    r.gram = true;
  } else {
    std::vector<DensityMatrix> powered;
    for (const auto& s : f.states()) powered.push_back(tensor_power(s, t));
    r.povm = pgm(Ensemble::uniform(powered));
    for (Key k = 0; k < f.size(); ++k) r.success.push_back(r.povm.probability(k, powered[k]));
  }
  for (Key k = 0; k < f.size(); ++k) {
    r.average_success += f.probability(k) * r.success[k];
    r.min_success = std::min(r.min_success, r.success[k]);
  }
  r.max_error = 1.0 - r.min_success;
  return r;
}

/// (s_a + s_b - 1) / t: lower bound on the single-copy distance of keys a, b
/// when a t-copy measurement identifies them with successes s_a, s_b.
inline double distance_from_identification(double s_a, double s_b, std::size_t t) {
  return (s_a + s_b - 1.0) / static_cast<double>(t);
}

/// Secret verification: accepts exactly k' = k.
using SecretVerifier = std::function<bool(Key k_guess, Key k)>;

inline SecretVerifier sv_owsg_ver_canonicalize(const SecretVerifier& = {}) {
  return [](Key a, Key b) { return a == b; };
}

inline SuccessEstimate sv_inversion_success(const KeyedStateFamily& f, const Inverter& inv, const SecretVerifier& ver,
                                            std::size_t trials, Rng& rng) {
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < trials; ++i) {
    Rng r = rng.split(i);
    const Key k = r.categorical(f.probabilities());
    const Key g = inv.invert({std::make_shared<const DensityMatrix>(f.state(k)), inv.budget}, r);
    out.push_back(ver(g, k) ? 1 : 0);
  }
  return summarize(std::move(out));
}

// ---------------------------------------------------------------------------
// Commitment from an SV-SI-OWSG

/// Q_b|0> = sum_k sqrt(Pr[k]) (|k>|mu_k>)_{C1} |psi_k>^{(x) t}_{C2,R2} |b ? k : 0>_{R3};
/// C2 holds the purifier parts, R2 the state parts.
struct SvsiCommitment {
  CanonicalCommitment c;
  KeyedStateFamily family;
  std::size_t t = 1;
  std::vector<std::string> r2_labels;  ///< in tensor_power(phi_k, t) factor order
  std::string r3_label = "R3";
  std::string key_label = "K";
  RegisterShape c1_shape;  ///< K then the mu factors

  std::size_t keys() const { return family.size(); }
  /// |k>|mu_k>|psi_k>^{(x) t}|0>_{R3}.
  Vec keyed_input(Key k) const {
    const auto& pur = family.purification();
    Vec v = Vec::Zero(static_cast<Eigen::Index>(keys()));
    v(static_cast<Eigen::Index>(k)) = 1.0;
    v = kron(v, pur.mu[k].amplitudes());
    for (std::size_t i = 0; i < t; ++i) v = kron(v, pur.psi[k].amplitudes());
    Vec r3 = Vec::Zero(static_cast<Eigen::Index>(keys()));
    r3(0) = 1.0;
    return kron(v, r3);
  }
};

inline SvsiCommitment commitment_from_svsi(const SvSiOwsg& f, std::size_t t) {
  if (t < 1) throw PreconditionError("commitment_from_svsi: t must be >= 1");
  const auto& fam = f.family;
  const auto& pur = fam.purification();
  const std::size_t K = fam.size();
  const RegisterShape mu_shape = pur.mu.front().shape();
  const RegisterShape psi_shape = pur.psi.front().shape();
  std::vector<std::size_t> dims{K, mu_shape.dim(), K};
  for (std::size_t i = 0; i < t; ++i) dims.push_back(psi_shape.dim());
  checked_product(dims, "commitment_from_svsi");

  SvsiCommitment out;
  out.family = fam;
  out.t = t;
  const auto state_labels = fam.shape().labels();
  std::vector<Factor> factors{{out.key_label, K}};
  std::vector<std::string> c_labels{out.key_label}, r_labels;
  for (const auto& fa : mu_shape.factors()) {
    factors.push_back({"mu." + fa.label, fa.dim});
    c_labels.push_back("mu." + fa.label);
  }
  out.c1_shape = RegisterShape(factors);
  for (std::size_t i = 0; i < t; ++i) {
    for (const auto& fa : psi_shape.factors()) {
      const bool is_state = std::find(state_labels.begin(), state_labels.end(), fa.label) != state_labels.end();
      const std::string l = (is_state ? "R2." : "C2.") + fa.label + "#" + std::to_string(i);
      factors.push_back({l, fa.dim});
      (is_state ? r_labels : c_labels).push_back(l);
    }
  }
  for (std::size_t i = 0; i < t; ++i)
    for (const auto& l : state_labels) out.r2_labels.push_back("R2." + l + "#" + std::to_string(i));
  factors.push_back({out.r3_label, K});
  r_labels.push_back(out.r3_label);
  const RegisterShape shape(factors);

  const auto D = static_cast<Eigen::Index>(shape.dim());
  Vec s0 = Vec::Zero(D), s1 = Vec::Zero(D);
  for (Key k = 0; k < K; ++k) {
    const Vec base = out.keyed_input(k);
    const double w = std::sqrt(fam.probability(k));
    s0 += w * base;
    // same vector with R3 moved from |0> to |k>
    const auto r3 = static_cast<Eigen::Index>(K);
    for (Eigen::Index i = 0; i < D / r3; ++i) s1(i * r3 + static_cast<Eigen::Index>(k)) += w * base(i * r3);
  }
  out.c = commitment_from_states(PureState(shape, s0), PureState(shape, s1), c_labels, r_labels);
  return out;
}

/// Unitary on (R2, Z) with Z = outcome register of dim K+1 started in |0>:
/// |x>|0> -> sum_j sqrt(Pi_j)|x> |j>, j = K for the off-support outcome.
inline Mat pgm_dilation(const Povm& m) {
  const std::size_t dr = m.shape().dim(), dz = m.size();
  const auto DR = static_cast<Eigen::Index>(dr), DZ = static_cast<Eigen::Index>(dz);
  std::vector<Mat> roots;
  for (const auto& e : m.effects()) roots.push_back(psd_sqrt(e.matrix));
  std::vector<Vec> cols;
  for (Eigen::Index x = 0; x < DR; ++x) {
    Vec c = Vec::Zero(DR * DZ);
    for (Eigen::Index j = 0; j < DZ; ++j)
      for (Eigen::Index y = 0; y < DR; ++y) c(y * DZ + j) = roots[static_cast<std::size_t>(j)](y, x);
    cols.push_back(c / c.norm());
  }
  const Mat full = complete_to_unitary(cols, dr * dz);
  Mat u(DR * DZ, DR * DZ);
  std::vector<bool> used(static_cast<std::size_t>(DR * DZ), false);
  for (Eigen::Index x = 0; x < DR; ++x) {
    u.col(x * DZ) = full.col(x);
    used[static_cast<std::size_t>(x * DZ)] = true;
  }
  Eigen::Index next = DR;
  for (Eigen::Index i = 0; i < DR * DZ; ++i)
    if (!used[static_cast<std::size_t>(i)]) u.col(i) = full.col(next++);
  return u;
}

/// W = U^dagger COPY U on (R, Z), Z = PGM outcome register of dim K+1 in |0>:
/// U dilates the key-identification PGM on R2 and COPY adds the outcome into
/// R3 modulo K in the computational basis (off-support outcome untouched).
/// Factor order: c.r_labels, then Z. Perfect binding attack when keys are perfectly identifiable.
inline Mat witness_unitary(const SvsiCommitment& s, const KeyIdentification& id) {
  const std::size_t K = s.keys(), dz = K + 1;
  const Mat u = pgm_dilation(id.povm);
  const RegisterShape local = s.c.r_shape().concat(RegisterShape{{"Z", dz}});
  std::vector<std::string> rz = s.r2_labels;
  rz.push_back("Z");
  const auto DZ = static_cast<Eigen::Index>(dz), DK = static_cast<Eigen::Index>(K);
  Mat copy = Mat::Zero(DZ * DK, DZ * DK);
  for (Eigen::Index j = 0; j < DZ; ++j)
    for (Eigen::Index r = 0; r < DK; ++r) copy(j * DK + (j < DK ? (r + j) % DK : r), j * DK + r) = 1.0;
  const Mat lu = lift_operator(u, local, rz);
  return lu.adjoint() * lift_operator(copy, local, {"Z", s.r3_label}) * lu;
}

inline Mat witness_unitary(const SvsiCommitment& s) { return witness_unitary(s, key_identification_povm(s.family, s.t, true)); }

struct HidingWitness {
  double overlap = 0.0;        ///< <0|Q1^dagger <0|_Z W Q0|0>|0>_Z
  double identification = 0.0; ///< sum_k Pr[k] Tr(Pi_k phi_k^{(x) t})
  double pure_bound = 0.0;     ///< sqrt(1 - |overlap|^2) >= hiding_distance
  double hiding = 0.0;
  KeyIdentification id;
};

/// Overlap of W Q0|0>|0>_Z with Q1|0>|0>_Z for the witness W above.
inline HidingWitness hiding_witness(const SvsiCommitment& s) {
  HidingWitness h;
  h.id = key_identification_povm(s.family, s.t, true);
  h.identification = h.id.average_success;
  h.hiding = hiding_distance(s.c);
  const std::size_t dz = s.keys() + 1;
  const RegisterShape full = s.c.shape.concat(RegisterShape{{"Z", dz}});
  std::vector<std::string> rz = s.c.r_labels;
  rz.push_back("Z");
  const Vec zero = Vec::Unit(static_cast<Eigen::Index>(dz), 0);
  const Vec v = apply_operator(kron(Vec(s.c.q0.col(0)), zero), full, witness_unitary(s, h.id), rz);
  h.overlap = std::abs(kron(Vec(s.c.q1.col(0)), zero).dot(v));
  h.pure_bound = std::sqrt(std::max(0.0, 1.0 - h.overlap * h.overlap));
  return h;
}

/// Stages of the binding chain for one attack (U on R (x) Z, |tau> on Z):
/// overlap^2 <= (sum_k Pr[k] ||a_k||)^2 <= sum_k Pr[k] ||a_k||^2 <= sum_k Pr[k] ||<k|_{R3} U ...||^2,
/// a_k = <psi_k|^{(x) t} <k|_{R3} U |psi_k>^{(x) t}|0>_{R3}|tau>.
struct BindingChain {
  double overlap_sq = 0.0;
  double triangle = 0.0;
  double jensen = 0.0;
  double inverter = 0.0;
  std::vector<double> per_key_inverter;
  bool holds(double slack = kTol) const {
    return overlap_sq <= triangle + slack && triangle <= jensen + slack && jensen <= inverter + slack;
  }
};

inline BindingChain binding_chain(const SvsiCommitment& s, const Mat& u, const PureState& tau) {
  BindingChain b;
  const double ov = binding_overlap(s.c, u, tau);
  b.overlap_sq = ov * ov;
  const std::size_t dz = tau.dim(), K = s.keys();
  const RegisterShape full = s.c.shape.concat(RegisterShape{{"Z", dz}});
  std::vector<std::string> on = s.c.r_labels;
  on.push_back("Z");
  const auto Z = static_cast<Eigen::Index>(dz), DK = static_cast<Eigen::Index>(K);
  double tri = 0.0;
  for (Key k = 0; k < K; ++k) {
    const Vec in = s.keyed_input(k);
    const Vec out = apply_operator(kron(in, tau.amplitudes()), full, u, on);
    // project R3 (second to last) onto |k>
    Vec proj = Vec::Zero(out.size());
    const Eigen::Index block = DK * Z;
    for (Eigen::Index i = 0; i < out.size() / block; ++i)
      for (Eigen::Index z = 0; z < Z; ++z) {
        const Eigen::Index idx = i * block + static_cast<Eigen::Index>(k) * Z + z;
        proj(idx) = out(idx);
      }
    const double inv = proj.squaredNorm();
    // a_k: contract with <k|mu_k|psi_k^t|k>, leaving Z
    Vec bra = in;
    Vec moved = Vec::Zero(bra.size());
    for (Eigen::Index i = 0; i < bra.size() / DK; ++i) moved(i * DK + static_cast<Eigen::Index>(k)) = bra(i * DK);
    Vec a = Vec::Zero(Z);
    for (Eigen::Index i = 0; i < moved.size(); ++i)
      for (Eigen::Index z = 0; z < Z; ++z) a(z) += std::conj(moved(i)) * out(i * Z + z);
    const double p = s.family.probability(k);
    tri += p * a.norm();
    b.jensen += p * a.squaredNorm();
    b.inverter += p * inv;
    b.per_key_inverter.push_back(inv);
  }
  b.triangle = tri * tri;
  return b;
}

/// Key-finding adversary from a binding attack: apply U to phi_k^{(x) t} (x) |0>_{R3} (x) |tau>
/// and measure R3. Success is BindingChain::inverter.
inline Inverter binding_attack_to_inverter(const SvsiCommitment& s, const Mat& u, const PureState& tau) {
  const std::size_t K = s.keys(), t = s.t;
  // c.r_labels is R2 in tensor_power order followed by R3, matching U's factor order.
  const RegisterShape local = s.c.r_shape().concat(RegisterShape{{"Z", tau.dim()}});
  const std::size_t dr2 = s.c.shape.select(s.r2_labels).dim();
  const std::string r3 = s.r3_label;
  return {t, [u, tau, local, K, dr2, t, r3](const PuzzleCopies& c, Rng& rng) -> Key {
            if (c.copies != t) throw UsageError("binding inverter: needs exactly t copies");
            const DensityMatrix phi = tensor_power(*c.state, t);
            if (phi.dim() != dr2) throw ShapeError("binding inverter: state dimension mismatch");
            const Vec anc = kron(Vec(Vec::Unit(static_cast<Eigen::Index>(K), 0)), tau.amplitudes());
            Mat rho = kron(phi.matrix(), Mat(anc * anc.adjoint()));
            rho = u * rho * u.adjoint();
            const DensityMatrix r = partial_trace(DensityMatrix::trusted(local, hermitize(rho)), {r3});
            std::vector<double> p;
            for (std::size_t k = 0; k < K; ++k)
              p.push_back(std::max(0.0, r.matrix()(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)).real()));
            return rng.categorical(p);
          }};
}

// ---------------------------------------------------------------------------
// Fixtures

/// K orthonormal basis states with canonical purification.
inline SvSiOwsg orthogonal_svsi(std::size_t K) { return svsi_declared(orthonormal_owsg(K).family); }

/// Two pure keys with |<phi_0|phi_1>| = c.
inline SvSiOwsg overlap_svsi(double c) { return svsi_declared(overlap_owsg(c).family); }

}  // namespace owsg
