#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "owsg/discriminate.hpp"
#include "owsg/puzzles.hpp"
#include "owsg/qstate.hpp"

namespace owsg {

/// Purifying data: U|0> = sum_k sqrt(Pr[k]) |k>|mu_k>, V_k|0> = |psi_k>.
/// psi_k lives on the state's own factors plus one extra factor "A".
struct Purification {
  std::vector<PureState> mu;
  std::vector<PureState> psi;
};

inline const std::string kPurifierLabel = "A";

class KeyedStateFamily {
 public:
  KeyedStateFamily() = default;
  KeyedStateFamily(std::vector<double> probs, std::vector<DensityMatrix> states, std::optional<Purification> pur = std::nullopt)
      : probs_(std::move(probs)), states_(std::move(states)), pur_(std::move(pur)) {
    if (probs_.empty()) throw PreconditionError("KeyedStateFamily: empty key set");
    if (probs_.size() != states_.size()) throw ShapeError("KeyedStateFamily: one state per key required");
    double total = 0.0;
    for (double p : probs_) {
      if (p < 0.0) throw PreconditionError("KeyedStateFamily: negative probability");
      total += p;
    }
    if (std::abs(total - 1.0) > kExactTol) throw PreconditionError("KeyedStateFamily: probabilities do not sum to 1");
    for (const auto& s : states_) require_same_shape(states_.front().shape(), s.shape(), "KeyedStateFamily");
    if (pur_) check_purification();
  }

  std::size_t size() const { return probs_.size(); }
  const std::vector<double>& probabilities() const { return probs_; }
  double probability(Key k) const { return probs_.at(k); }
  const std::vector<DensityMatrix>& states() const { return states_; }
  const DensityMatrix& state(Key k) const { return states_.at(k); }
  const RegisterShape& shape() const { return states_.front().shape(); }
  bool has_purification() const { return pur_.has_value(); }
  const Purification& purification() const {
    if (!pur_) throw PreconditionError("KeyedStateFamily: no purification declared");
    return *pur_;
  }

  bool is_pure(double tol = kTol) const {
    for (const auto& s : states_)
      if (std::abs(s.purity() - 1.0) > tol) return false;
    return true;
  }

  /// U with U|0> = sum_k sqrt(Pr[k]) |k>|mu_k> on (key register, mu register).
  Mat key_unitary() const {
    const auto& p = purification();
    const std::size_t dm = p.mu.front().dim();
    Vec v = Vec::Zero(static_cast<Eigen::Index>(size() * dm));
    for (std::size_t k = 0; k < size(); ++k) {
      Vec e = Vec::Zero(static_cast<Eigen::Index>(size()));
      e(static_cast<Eigen::Index>(k)) = 1.0;
      v += std::sqrt(probs_[k]) * kron(e, p.mu[k].amplitudes());
    }
    return complete_to_unitary({v}, size() * dm);
  }

  /// V_k with V_k|0> = |psi_k>.
  Mat state_unitary(Key k) const {
    const auto& psi = purification().psi.at(k);
    return complete_to_unitary({psi.amplitudes()}, psi.dim());
  }

 private:
  void check_purification() const {
    if (pur_->mu.size() != size() || pur_->psi.size() != size()) throw ShapeError("Purification: one mu and psi per key");
    for (std::size_t k = 0; k < size(); ++k) {
      require_same_shape(pur_->mu.front().shape(), pur_->mu[k].shape(), "Purification mu");
      const auto marg = partial_trace(pur_->psi[k], states_[k].shape().labels());
      if (max_abs(marg.matrix() - states_[k].matrix()) > kTol)
        throw PreconditionError("Purification: psi_" + std::to_string(k) + " does not purify phi_k");
    }
  }

  std::vector<double> probs_;
  std::vector<DensityMatrix> states_;
  std::optional<Purification> pur_;
};

/// Canonical purification of every state with trivial mu.
inline KeyedStateFamily with_canonical_purification(const KeyedStateFamily& f) {
  Purification p;
  for (const auto& s : f.states()) {
    p.mu.push_back(PureState::basis(RegisterShape{{"M", 1}}, 0));
    p.psi.push_back(canonical_purification(s, kPurifierLabel));
  }
  return KeyedStateFamily(f.probabilities(), f.states(), std::move(p));
}

/// Keyed family with a verification effect Pi_{k'} per key.
struct Owsg {
  KeyedStateFamily family;
  std::vector<Mat> effects;
  double eps_corr = 0.0;

  Owsg() = default;
  Owsg(KeyedStateFamily f, std::vector<Mat> e, double eps = 0.0) : family(std::move(f)), effects(std::move(e)), eps_corr(eps) {
    if (effects.size() != family.size()) throw ShapeError("Owsg: one effect per key required");
    const auto d = static_cast<Eigen::Index>(family.shape().dim());
    for (const auto& m : effects) {
      if (m.rows() != d || m.cols() != d) throw ShapeError("Owsg: effect has wrong size");
      if (!is_psd(m) || !is_psd(Mat::Identity(d, d) - m)) throw PreconditionError("Owsg: effect is not between 0 and I");
    }
  }

  double verify(Key k_guess, const DensityMatrix& rho) const { return std::clamp(rho.expectation(effects.at(k_guess)), 0.0, 1.0); }
  double cross(Key k_guess, Key k) const { return verify(k_guess, family.state(k)); }
};

inline double owsg_correctness(const Owsg& o) {
  double s = 0.0;
  for (Key k = 0; k < o.family.size(); ++k) s += o.family.probability(k) * o.cross(k, k);
  return s;
}

/// Checks the declared correctness.
inline void require_correct(const Owsg& o) {
  const double c = owsg_correctness(o);
  if (c < 1.0 - o.eps_corr - kTol)
    throw PreconditionError("Owsg: correctness " + std::to_string(c) + " below 1 - eps_corr");
}

/// n-tuple keys (slot 0 most significant), n-fold tensor states, product effects.
inline Owsg owsg_repetition(const Owsg& o, std::size_t n) {
  if (n < 1) throw PreconditionError("owsg_repetition: n must be >= 1");
  if (n == 1) return o;
  checked_product(std::vector<std::size_t>(n, o.family.shape().dim()), "owsg_repetition");
  const std::size_t K = o.family.size();
  std::size_t keys = 1;
  for (std::size_t i = 0; i < n; ++i) {
    if (keys > (std::size_t{1} << 40) / K) throw SizingError("owsg_repetition: too many keys");
    keys *= K;
  }
  std::vector<double> probs(keys);
  std::vector<DensityMatrix> states;
  std::vector<Mat> effects;
  for (std::size_t key = 0; key < keys; ++key) {
    std::vector<Key> parts(n);
    std::size_t r = key;
    for (std::size_t i = n; i-- > 0;) {
      parts[i] = r % K;
      r /= K;
    }
    double p = 1.0;
    DensityMatrix s;
    Mat e;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::string> l;
      for (const auto& x : o.family.shape().labels()) l.push_back(x + "@" + std::to_string(i));
      auto si = o.family.state(parts[i]).relabeled(l);
      p *= o.family.probability(parts[i]);
      s = i ? tensor(s, si) : si;
      e = i ? kron(e, o.effects[parts[i]]) : o.effects[parts[i]];
    }
    probs[key] = p;
    states.push_back(std::move(s));
    effects.push_back(std::move(e));
  }
  double total = 0.0;
  for (double p : probs) total += p;
  for (double& p : probs) p /= total;
  const double eps = 1.0 - std::pow(1.0 - o.eps_corr, static_cast<double>(n));
  return Owsg(KeyedStateFamily(std::move(probs), std::move(states)), std::move(effects), eps);
}

/// Check keys are the OWSG keys, puzzles phi_k, verify(k', k) = Tr(Pi_{k'} phi_k).
inline WeaklyVerifiablePuzzle owsg_as_puzzle(const Owsg& o) {
  const std::size_t K = o.family.size();
  auto table = std::make_shared<std::vector<double>>(K * K);
  for (Key a = 0; a < K; ++a)
    for (Key k = 0; k < K; ++k) (*table)[a * K + k] = o.cross(a, k);
  return WeaklyVerifiablePuzzle(o.family.probabilities(), o.family.states(), [table, K](Answer a, Key k) {
    return a < K ? (*table)[a * K + k] : 0.0;
  });
}

/// Projective Ver {|phi_k'><phi_k'|, I - |phi_k'><phi_k'|} for pure outputs.
inline Owsg canonical_pure_ver(const Owsg& o) {
  if (!o.family.is_pure()) throw PreconditionError("canonical_pure_ver: outputs must be pure");
  for (Key k = 0; k < o.family.size(); ++k) {
    if (o.cross(k, k) < 1.0 - o.eps_corr - kTol)
      throw PreconditionError("canonical_pure_ver: key " + std::to_string(k) + " fails per-key correctness");
  }
  std::vector<Mat> effects;
  for (const auto& s : o.family.states()) effects.push_back(hermitize(s.matrix()));
  return Owsg(o.family, std::move(effects), 0.0);
}

/// Projective Ver on a pure family.
inline Owsg projective_owsg(const KeyedStateFamily& f) {
  std::vector<Mat> e(f.size(), Mat::Zero(static_cast<Eigen::Index>(f.shape().dim()), static_cast<Eigen::Index>(f.shape().dim())));
  for (Key k = 0; k < f.size(); ++k) e[k] = f.state(k).matrix();
  return canonical_pure_ver(Owsg(f, std::move(e), 1.0));
}

// ---------------------------------------------------------------------------
// PRSG

struct Prsg {
  KeyedStateFamily family;
  std::vector<PureState> outputs;

  explicit Prsg(KeyedStateFamily f) : family(std::move(f)) {
    if (!family.is_pure()) throw PreconditionError("Prsg: outputs must be pure");
    outputs = require_pure(family.states());
  }
  Prsg(std::vector<double> probs, std::vector<PureState> xs) : outputs(std::move(xs)) {
    std::vector<DensityMatrix> s;
    for (const auto& x : outputs) s.push_back(DensityMatrix::from_pure(x));
    family = KeyedStateFamily(std::move(probs), std::move(s));
  }
};

/// |phi_k> = |xi_k>^{(x) r} with projective Ver.
inline Owsg prsg_to_owsg(const Prsg& g, std::size_t r) {
  if (r < 1) throw PreconditionError("prsg_to_owsg: r must be >= 1");
  checked_product(std::vector<std::size_t>(r, g.family.shape().dim()), "prsg_to_owsg");
  std::vector<DensityMatrix> s;
  for (const auto& x : g.outputs) s.push_back(DensityMatrix::from_pure(tensor_power(x, r)));
  return projective_owsg(KeyedStateFamily(g.family.probabilities(), std::move(s)));
}

/// |<xi_a|xi_b>|^{2r}: r-copy cross-acceptance without building the r-copy space.
inline double prsg_cross_acceptance(const Prsg& g, Key a, Key b, std::size_t r) {
  return std::pow(overlap_squared(g.outputs.at(a), g.outputs.at(b)), static_cast<double>(r));
}

struct MonteCarloMean {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

/// E_{psi Haar} sum_k |<xi_k|psi>|^{2r}.
inline MonteCarloMean haar_collision_expectation(const Prsg& g, std::size_t r, std::size_t samples, Rng& rng) {
  if (samples < 1) throw PreconditionError("haar_collision_expectation: samples must be >= 1");
  const std::size_t d = g.family.shape().dim();
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    Rng r_i = rng.split(i);
    const Vec psi = haar_random_state(d, r_i).amplitudes();
    double x = 0.0;
    for (const auto& xi : g.outputs) x += std::pow(std::norm(xi.amplitudes().dot(psi)), static_cast<double>(r));
    s1 += x;
    s2 += x * x;
  }
  const double n = static_cast<double>(samples);
  MonteCarloMean m;
  m.samples = samples;
  m.mean = s1 / n;
  m.std_error = samples > 1 ? std::sqrt(std::max(0.0, (s2 / n - m.mean * m.mean) / (n - 1.0))) : 0.0;
  return m;
}

inline double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

/// K / dim Sym^r(C^d) = K / C(d+r-1, r).
inline double symmetric_collision_exact(std::size_t K, std::size_t d, std::size_t r) {
  return static_cast<double>(K) / binomial(d + r - 1, r);
}

/// K r! / d^r, from dim Sym^r(C^d) >= d^r / r!.
inline double symmetric_collision_bound(std::size_t K, std::size_t d, std::size_t r) {
  double f = 1.0;
  for (std::size_t i = 2; i <= r; ++i) f *= static_cast<double>(i);
  return static_cast<double>(K) * f / std::pow(static_cast<double>(d), static_cast<double>(r));
}

// ---------------------------------------------------------------------------
// Inverters

/// Adversary receiving `budget` copies of phi_k and returning a key guess.
struct Inverter {
  std::size_t budget = 1;
  std::function<Key(const PuzzleCopies&, Rng&)> invert;
};

inline PuzzleSolver inverter_as_solver(const Inverter& inv, std::size_t slots = 1) {
  PuzzleSolver s;
  s.slots = slots;
  s.budget = inv.budget;
  s.solve = [inv](std::span<const PuzzleCopies> in, std::span<Answer> out, Rng& rng) {
    for (std::size_t j = 0; j < in.size(); ++j) out[j] = inv.invert(in[j], rng);
  };
  return s;
}

/// Pr[Ver(k', phi_k) = accept] over k, the inverter and Ver.
inline SuccessEstimate inversion_success(const Owsg& o, const Inverter& inv, std::size_t trials, Rng& rng) {
  return empirical_success(owsg_as_puzzle(o), inverter_as_solver(inv), inv.budget, trials, rng);
}

/// Measures one copy in the computational basis; with probability s returns
/// the outcome, otherwise the next key cyclically. On an orthonormal basis
/// family this succeeds with probability exactly s.
inline Inverter planted_inverter(std::size_t key_count, double s, std::size_t budget = 1) {
  return {budget, [key_count, s](const PuzzleCopies& c, Rng& rng) -> Key {
            const Key k = measure_basis(*c.state, rng) % key_count;
            return rng.bernoulli(s) ? k : (k + 1) % key_count;
          }};
}

// ---------------------------------------------------------------------------
// Fixtures

/// K uniform keys, phi_k = |k><k| on dimension max(K, dim), projective Ver.
inline Owsg orthonormal_owsg(std::size_t K, std::size_t dim = 0) {
  const std::size_t d = std::max(K, dim);
  std::vector<DensityMatrix> s;
  for (std::size_t k = 0; k < K; ++k) s.push_back(DensityMatrix::basis(RegisterShape{{"S", d}}, k));
  return projective_owsg(KeyedStateFamily(std::vector<double>(K, 1.0 / static_cast<double>(K)), std::move(s)));
}

/// Two uniform keys, |0> and c|0> + sqrt(1-c^2)|1>, projective Ver.
inline Owsg overlap_owsg(double c) {
  if (c < 0.0 || c > 1.0) throw PreconditionError("overlap_owsg: c must lie in [0,1]");
  Vec v(2);
  v << c, std::sqrt(1.0 - c * c);
  std::vector<DensityMatrix> s{DensityMatrix::basis(RegisterShape{{"S", 2}}, 0),
                               DensityMatrix::from_pure(PureState(RegisterShape{{"S", 2}}, v))};
  return projective_owsg(KeyedStateFamily({0.5, 0.5}, std::move(s)));
}

/// phi_k = h|k><k| + (1-h)|e><e| on dimension K+1, Pi_k = |k><k|; eps_corr = 1-h.
/// Measuring t copies and guessing on erasure succeeds with h (1 - (1-h)^t (1 - 1/K)).
inline Owsg planted_leakage_owsg(std::size_t K, double h) {
  if (h < 0.0 || h > 1.0) throw PreconditionError("planted_leakage_owsg: h must lie in [0,1]");
  std::vector<DensityMatrix> s;
  std::vector<Mat> e;
  const auto d = static_cast<Eigen::Index>(K + 1);
  for (std::size_t k = 0; k < K; ++k) {
    Mat m = Mat::Zero(d, d);
    m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = h;
    m(d - 1, d - 1) = 1.0 - h;
    s.push_back(DensityMatrix::trusted(RegisterShape{{"S", K + 1}}, m));
    Mat p = Mat::Zero(d, d);
    p(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = 1.0;
    e.push_back(p);
  }
  return Owsg(KeyedStateFamily(std::vector<double>(K, 1.0 / static_cast<double>(K)), std::move(s)), std::move(e), 1.0 - h);
}

/// Measures every copy; returns the first non-erased outcome, else a uniform guess.
inline Inverter leakage_inverter(std::size_t K, std::size_t t) {
  return {t, [K](const PuzzleCopies& c, Rng& rng) -> Key {
            for (std::size_t i = 0; i < c.copies; ++i) {
              const auto o = measure_basis(*c.state, rng);
              if (o < K) return o;
            }
            return rng.below(K);
          }};
}

// ---------------------------------------------------------------------------
// Amplification end to end

struct OwsgAmplification {
  AmplificationParams params;
  double per_slot_success = 0.0;
  double target = 0.0;
  AmplifyRun run;
};

/// q = 2p, delta = 1 - 1/(2p): a planted inverter with per-slot success delta
/// on the orthonormal family, lifted to n slots and amplified.
inline OwsgAmplification owsg_amplification(std::size_t p, std::size_t n, std::size_t K, std::size_t trials, double scale,
                                            Rng& rng) {
  if (p < 1) throw PreconditionError("owsg_amplification: p must be >= 1");
  OwsgAmplification r;
  r.params = {n, 2 * p, 1.0 - 1.0 / (2.0 * static_cast<double>(p)), 1, scale};
  r.per_slot_success = r.params.delta;
  r.target = r.params.target();
  const Owsg o = orthonormal_owsg(K);
  const auto puzzle = owsg_as_puzzle(o);
  const auto solver = inverter_as_solver(planted_inverter(K, r.per_slot_success), n);
  r.run = run_amplification(puzzle, solver, r.params, trials, rng);
  return r;
}

// ---------------------------------------------------------------------------
// Manifest: keys, probabilities and serialized states

inline std::string density_text(const DensityMatrix& rho) {
  std::ostringstream os;
  write_density(os, rho);
  return os.str();
}

inline std::string matrix_text(const std::vector<std::size_t>& dims, const Mat& m) {
  std::ostringstream os;
  write_matrix(os, dims, m);
  return os.str();
}

inline nlohmann::json owsg_manifest(const Owsg& o) {
  nlohmann::json j;
  j["eps_corr"] = o.eps_corr;
  j["keys"] = nlohmann::json::array();
  const auto dims = o.family.shape().dims();
  for (Key k = 0; k < o.family.size(); ++k) {
    j["keys"].push_back({{"key", k},
                         {"probability", o.family.probability(k)},
                         {"state", density_text(o.family.state(k))},
                         {"effect", matrix_text(dims, o.effects[k])}});
  }
  return j;
}

inline Owsg owsg_from_manifest(const nlohmann::json& j) {
  std::vector<double> probs;
  std::vector<DensityMatrix> states;
  std::vector<Mat> effects;
  const auto& keys = j.at("keys");
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto& e = keys[i];
    if (e.at("key").get<std::size_t>() != i) throw ShapeError("manifest: keys must be listed as 0, 1, ...");
    probs.push_back(e.at("probability").get<double>());
    std::istringstream ss(e.at("state").get<std::string>());
    states.push_back(read_density(ss));
    if (e.contains("effect")) {
      std::istringstream es(e.at("effect").get<std::string>());
      const auto dims = detail::read_dims(es);
      const auto d = static_cast<Eigen::Index>(states.back().dim());
      effects.push_back(detail::read_rows(es, d, d));
    }
  }
  KeyedStateFamily f(std::move(probs), std::move(states));
  if (effects.empty()) return projective_owsg(f);
  return Owsg(std::move(f), std::move(effects), j.value("eps_corr", 0.0));
}

}  // namespace owsg
