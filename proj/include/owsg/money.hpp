#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "owsg/owsg.hpp"

namespace owsg {

/// Private-key money: banknote $_k per key and a verification effect per key.
struct MoneyScheme {
  KeyedStateFamily notes;
  std::vector<Mat> effects;
  double eps_corr = 0.0;

  MoneyScheme() = default;
  MoneyScheme(KeyedStateFamily n, std::vector<Mat> e, double eps = 0.0) : notes(std::move(n)), effects(std::move(e)), eps_corr(eps) {
    Owsg check(notes, effects, eps_corr);
    (void)check;
  }

  double verify(Key k, const DensityMatrix& rho) const {
    if (rho.dim() != notes.shape().dim()) throw ShapeError("money verify: register has wrong dimension");
    return std::clamp(rho.expectation(effects.at(k)), 0.0, 1.0);
  }
  /// verify(k, $_{k'}).
  double cross(Key k, Key k_note) const { return verify(k, notes.state(k_note)); }
};

inline double money_correctness(const MoneyScheme& s) {
  double c = 0.0;
  for (Key k = 0; k < s.notes.size(); ++k) c += s.notes.probability(k) * s.cross(k, k);
  return c;
}

/// Projective verification {|$_k><$_k|, I - |$_k><$_k|} on pure notes.
inline MoneyScheme projective_money(const KeyedStateFamily& notes) {
  if (!notes.is_pure()) throw PreconditionError("projective_money: notes must be pure");
  std::vector<Mat> e;
  for (const auto& s : notes.states()) e.push_back(hermitize(s.matrix()));
  return MoneyScheme(notes, std::move(e));
}

/// Distribution of the number of accepted registers when each register j is
/// verified independently with acceptance p_j (product submission).
inline std::vector<double> count_distribution(const std::vector<double>& accept) {
  std::vector<double> dist{1.0};
  for (double p : accept) {
    std::vector<double> next(dist.size() + 1, 0.0);
    for (std::size_t j = 0; j < dist.size(); ++j) {
      next[j] += dist[j] * (1.0 - p);
      next[j + 1] += dist[j] * p;
    }
    dist = std::move(next);
  }
  return dist;
}

inline std::vector<double> count(const MoneyScheme& s, Key k, const std::vector<DensityMatrix>& registers) {
  std::vector<double> acc;
  for (const auto& r : registers) acc.push_back(s.verify(k, r));
  return count_distribution(acc);
}

/// Exact Pr[Bin(ell, p) >= threshold].
inline double binomial_count_tail(std::size_t ell, double p, std::size_t threshold) {
  if (p < 0.0 || p > 1.0) throw PreconditionError("binomial_count_tail: p outside [0,1]");
  if (threshold == 0) return 1.0;
  if (threshold > ell) return 0.0;
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  const double n = static_cast<double>(ell);
  const double lp = std::log(p), lq = std::log1p(-p);
  double tail = 0.0;
  for (std::size_t j = threshold; j <= ell; ++j) {
    const double jd = static_cast<double>(j);
    tail += std::exp(std::lgamma(n + 1) - std::lgamma(jd + 1) - std::lgamma(n - jd + 1) + jd * lp + (n - jd) * lq);
  }
  return std::min(tail, 1.0);
}

/// ell = max(16p(t+1), 16^2 p^3).
inline std::size_t cloner_copies(std::size_t p, std::size_t t) { return std::max(16 * p * (t + 1), 256 * p * p * p); }

/// 1 - 2 exp(-2 ell / (16^2 p^2)): the Hoeffding step for per-copy accept 1/(8p).
inline double count_hoeffding_bound(std::size_t ell, std::size_t p) {
  const double pd = static_cast<double>(p);
  return 1.0 - 2.0 * std::exp(-2.0 * static_cast<double>(ell) / (256.0 * pd * pd));
}

/// (1 - 1/(8p(t+1)))^{t+1} >= 1 - 1/(8p).
inline bool bernoulli_step_holds(std::size_t p, std::size_t t) {
  const double x = 1.0 / (8.0 * static_cast<double>(p) * static_cast<double>(t + 1));
  return std::pow(1.0 - x, static_cast<double>(t + 1)) >= 1.0 - 1.0 / (8.0 * static_cast<double>(p)) - kExactTol;
}

/// Ver(k', $_k) = |<$_k|$_k'>|^2.
inline Owsg owsg_from_pure_money(const MoneyScheme& s) {
  if (!s.notes.is_pure()) throw PreconditionError("owsg_from_pure_money: mint outputs must be pure");
  return projective_owsg(s.notes);
}

/// Ver(k', $_k) = money verify(k', $_k); requires verify(k, $_k') = verify(k', $_k).
inline Owsg owsg_from_symmetric_money(const MoneyScheme& s) {
  const std::size_t K = s.notes.size();
  for (Key a = 0; a < K; ++a)
    for (Key b = a + 1; b < K; ++b) {
      if (std::abs(s.cross(a, b) - s.cross(b, a)) > kTol)
        throw PreconditionError("owsg_from_symmetric_money: keys " + std::to_string(a) + " and " + std::to_string(b) +
                                " are not symmetric (" + std::to_string(s.cross(a, b)) + " vs " + std::to_string(s.cross(b, a)) +
                                ")");
    }
  return Owsg(s.notes, s.effects, s.eps_corr);
}

struct CloneReport {
  std::size_t ell = 0;
  std::size_t threshold = 0;
  MonteCarloMean tail;                 ///< E over k, k' of Pr[Count >= t+1]
  std::vector<double> per_copy_accept; ///< verify(k, $_k') per trial
};

/// Adversary B: invert t copies of $_k to k', mint ell fresh $_k', submit.
/// Count is evaluated exactly per trial; the mean is over sampled (k, k').
inline CloneReport inverter_to_cloner(const MoneyScheme& s, const Inverter& inv, std::size_t p, std::size_t t, std::size_t trials,
                                      Rng& rng) {
  if (p < 1) throw PreconditionError("inverter_to_cloner: p must be >= 1");
  if (inv.budget != t) throw UsageError("inverter_to_cloner: inverter must consume exactly t copies");
  CloneReport rep;
  rep.ell = cloner_copies(p, t);
  rep.threshold = t + 1;
  const auto puzzle = owsg_as_puzzle(Owsg(s.notes, s.effects, s.eps_corr));
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < trials; ++i) {
    Rng r = rng.split(i);
    const Key k = puzzle.sample_base_key(r);
    const Key kp = inv.invert({puzzle.slot_state(k), t}, r);
    const double acc = kp < s.notes.size() ? s.cross(k, kp) : 0.0;
    rep.per_copy_accept.push_back(acc);
    const double tail = binomial_count_tail(rep.ell, acc, rep.threshold);
    s1 += tail;
    s2 += tail * tail;
  }
  const double n = static_cast<double>(trials);
  rep.tail.samples = trials;
  rep.tail.mean = s1 / n;
  rep.tail.std_error = trials > 1 ? std::sqrt(std::max(0.0, (s2 / n - rep.tail.mean * rep.tail.mean) / (n - 1.0))) : 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Fixtures

/// K orthonormal pure notes with projective verification.
inline MoneyScheme orthonormal_money(std::size_t K) { return projective_money(orthonormal_owsg(K).family); }

/// Two pure notes with |<$_0|$_1>|^2 = a.
inline MoneyScheme overlap_money(double a) { return projective_money(overlap_owsg(std::sqrt(a)).family); }

/// Notes |0>, |1>; E_0 = |0><0| + |1><1|/2, E_1 = |1><1|: verify(0, $_1) = 1/2, verify(1, $_0) = 0.
inline MoneyScheme asymmetric_money() {
  std::vector<DensityMatrix> n{DensityMatrix::basis(RegisterShape{{"S", 2}}, 0), DensityMatrix::basis(RegisterShape{{"S", 2}}, 1)};
  Mat e0 = Mat::Zero(2, 2), e1 = Mat::Zero(2, 2);
  e0(0, 0) = 1.0;
  e0(1, 1) = 0.5;
  e1(1, 1) = 1.0;
  return MoneyScheme(KeyedStateFamily({0.5, 0.5}, std::move(n)), {e0, e1});
}

/// Notes |0>, |1>; E_k = |k><k| + a|1-k><1-k|: correct, symmetric, cross-acceptance a.
inline MoneyScheme cross_accept_money(double a) {
  if (a < 0.0 || a > 1.0) throw PreconditionError("cross_accept_money: a must lie in [0,1]");
  std::vector<DensityMatrix> n{DensityMatrix::basis(RegisterShape{{"S", 2}}, 0), DensityMatrix::basis(RegisterShape{{"S", 2}}, 1)};
  Mat e0 = Mat::Zero(2, 2), e1 = Mat::Zero(2, 2);
  e0(0, 0) = 1.0;
  e0(1, 1) = a;
  e1(1, 1) = 1.0;
  e1(0, 0) = a;
  return MoneyScheme(KeyedStateFamily({0.5, 0.5}, std::move(n)), {e0, e1});
}

/// Measures a basis note and answers the other key.
inline Inverter swapping_inverter(std::size_t t) {
  return {t, [](const PuzzleCopies& c, Rng& rng) -> Key { return 1 - measure_basis(*c.state, rng) % 2; }};
}

}  // namespace owsg
