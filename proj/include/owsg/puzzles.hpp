#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "owsg/qstate.hpp"

namespace owsg {

using Key = std::uint64_t;
using Answer = std::uint64_t;

/// Answer meaning "no answer"; every verifier rejects it.
inline constexpr Answer kNoAnswer = std::numeric_limits<Answer>::max();

/// Check-key distribution, puzzle states and an exact-probability verifier.
///
/// A puzzle has `slots()` independent components (1 for a base puzzle, n
/// after parallel repetition). Keys of a repeated puzzle are mixed-radix
/// tuples; slot 0 is the most significant digit.
class WeaklyVerifiablePuzzle {
 public:
  /// Acceptance probability of `answer` for base key `key`.
  using VerifyFn = std::function<double(Answer answer, Key key)>;

  WeaklyVerifiablePuzzle() = default;
  WeaklyVerifiablePuzzle(std::vector<double> key_probs, std::vector<DensityMatrix> states, VerifyFn verify) {
    auto b = std::make_shared<Base>();
    if (key_probs.empty()) throw PreconditionError("puzzle: empty key set");
    if (key_probs.size() != states.size()) throw ShapeError("puzzle: one state per key required");
    double total = 0.0;
    for (double p : key_probs) {
      if (p < 0.0) throw PreconditionError("puzzle: negative key probability");
      total += p;
    }
    if (std::abs(total - 1.0) > kExactTol) throw PreconditionError("puzzle: key probabilities do not sum to 1");
    double c = 0.0;
    for (double p : key_probs) b->cumulative.push_back(c += p);
    b->probs = std::move(key_probs);
    const RegisterShape shape = states.front().shape();
    for (auto& s : states) {
      require_same_shape(shape, s.shape(), "puzzle");
      b->states.push_back(std::make_shared<const DensityMatrix>(std::move(s)));
    }
    b->verify = std::move(verify);
    base_ = std::move(b);
  }

  std::size_t slots() const { return slots_; }
  std::size_t base_key_count() const { return base_->probs.size(); }
  const std::vector<double>& base_probabilities() const { return base_->probs; }
  const RegisterShape& base_shape() const { return base_->states.front()->shape(); }

  std::size_t key_count() const {
    std::size_t k = 1;
    for (std::size_t i = 0; i < slots_; ++i) k *= base_key_count();
    return k;
  }

  std::vector<Key> unpack(Key key) const {
    std::vector<Key> out(slots_);
    const Key K = base_key_count();
    for (std::size_t i = slots_; i-- > 0;) {
      out[i] = key % K;
      key /= K;
    }
    return out;
  }

  Key pack(std::span<const Key> parts) const {
    if (parts.size() != slots_) throw ShapeError("puzzle: key tuple has wrong length");
    Key k = 0;
    for (Key p : parts) {
      if (p >= base_key_count()) throw ShapeError("puzzle: key component out of range");
      k = k * base_key_count() + p;
    }
    return k;
  }

  double key_probability(Key key) const {
    double p = 1.0;
    for (Key k : unpack(key)) p *= base_->probs.at(k);
    return p;
  }

  Key sample_base_key(Rng& rng) const {
    const double u = rng.uniform() * base_->cumulative.back();
    auto it = std::upper_bound(base_->cumulative.begin(), base_->cumulative.end(), u);
    std::size_t i = static_cast<std::size_t>(it - base_->cumulative.begin());
    if (i >= base_key_count()) i = base_key_count() - 1;
    while (base_->probs[i] == 0.0 && i > 0) --i;
    return i;
  }

  Key sample_key(Rng& rng) const {
    Key k = 0;
    for (std::size_t i = 0; i < slots_; ++i) k = k * base_key_count() + sample_base_key(rng);
    return k;
  }

  const std::shared_ptr<const DensityMatrix>& slot_state(Key base_key) const { return base_->states.at(base_key); }

  /// Full tensor-product puzzle; respects the dimension cap.
  DensityMatrix puzzle_state(Key key) const {
    const auto parts = unpack(key);
    DensityMatrix r = slot_state(parts[0])->relabeled(tagged_labels(0));
    for (std::size_t i = 1; i < slots_; ++i) r = tensor(r, slot_state(parts[i])->relabeled(tagged_labels(i)));
    return r;
  }

  double verify_slot(Answer answer, Key base_key) const {
    if (answer == kNoAnswer) return 0.0;
    return std::clamp(base_->verify(answer, base_key), 0.0, 1.0);
  }

  /// Product of the per-slot acceptance probabilities.
  double verify(std::span<const Answer> answers, Key key) const {
    if (answers.size() != slots_) throw ShapeError("puzzle: answer tuple has wrong length");
    const auto parts = unpack(key);
    double p = 1.0;
    for (std::size_t i = 0; i < slots_; ++i) p *= verify_slot(answers[i], parts[i]);
    return p;
  }

  double verify(Answer answer, Key key) const { return verify(std::span<const Answer>(&answer, 1), key); }

  WeaklyVerifiablePuzzle with_slots(std::size_t slots) const {
    WeaklyVerifiablePuzzle p = *this;
    p.slots_ = slots;
    return p;
  }

 private:
  struct Base {
    std::vector<double> probs;
    std::vector<double> cumulative;
    std::vector<std::shared_ptr<const DensityMatrix>> states;
    VerifyFn verify;
  };

  std::vector<std::string> tagged_labels(std::size_t slot) const {
    std::vector<std::string> l;
    for (const auto& x : base_shape().labels()) l.push_back(x + "@" + std::to_string(slot));
    return l;
  }

  std::shared_ptr<const Base> base_;
  std::size_t slots_ = 1;
};

/// n independent copies, accepted iff every component is accepted.
inline WeaklyVerifiablePuzzle parallel_repetition(const WeaklyVerifiablePuzzle& p, std::size_t n) {
  if (n < 1) throw PreconditionError("parallel_repetition: n must be >= 1");
  const std::size_t slots = p.slots() * n;
  std::vector<std::size_t> dims(slots, p.base_shape().dim());
  checked_product(dims, "parallel_repetition");
  const double keys = std::pow(static_cast<double>(p.base_key_count()), static_cast<double>(slots));
  if (keys > 1.8e19) throw SizingError("parallel_repetition: key tuple does not fit in 64 bits");
  return p.with_slots(slots);
}

// ---------------------------------------------------------------------------
// Solvers

/// `copies` identical copies of one puzzle state.
struct PuzzleCopies {
  std::shared_ptr<const DensityMatrix> state;
  std::size_t copies = 1;
};

/// Stochastic solver: one PuzzleCopies per slot in, one answer per slot out.
/// It never sees the check key.
struct PuzzleSolver {
  std::size_t slots = 1;
  std::size_t budget = 1;  ///< copies per slot it expects
  std::function<void(std::span<const PuzzleCopies>, std::span<Answer>, Rng&)> solve;
};

struct SuccessEstimate {
  double rate = 0.0;
  double std_error = 0.0;
  std::size_t trials = 0;
  std::vector<std::uint8_t> outcomes;
};

inline SuccessEstimate summarize(std::vector<std::uint8_t> outcomes) {
  SuccessEstimate e;
  e.trials = outcomes.size();
  std::size_t hits = 0;
  for (auto o : outcomes) hits += o;
  if (e.trials) {
    e.rate = static_cast<double>(hits) / static_cast<double>(e.trials);
    e.std_error = std::sqrt(e.rate * (1.0 - e.rate) / static_cast<double>(e.trials));
  }
  e.outcomes = std::move(outcomes);
  return e;
}

/// Runs the solver on fresh puzzles and Bernoulli-samples the verifier.
inline SuccessEstimate empirical_success(const WeaklyVerifiablePuzzle& p, const PuzzleSolver& solver, std::size_t t,
                                         std::size_t trials, Rng& rng) {
  if (trials < 1) throw PreconditionError("empirical_success: trials must be >= 1");
  if (solver.budget != t) {
    throw UsageError("empirical_success: solver expects " + std::to_string(solver.budget) + " copies, harness gives " +
                     std::to_string(t));
  }
  if (solver.slots != p.slots()) throw UsageError("empirical_success: solver slot count does not match puzzle");
  std::vector<std::uint8_t> out(trials);
  std::vector<PuzzleCopies> inputs(p.slots());
  std::vector<Answer> answers(p.slots());
  for (std::size_t i = 0; i < trials; ++i) {
    Rng r = rng.split(i);
    const Key key = p.sample_key(r);
    const auto parts = p.unpack(key);
    for (std::size_t j = 0; j < p.slots(); ++j) inputs[j] = {p.slot_state(parts[j]), t};
    std::fill(answers.begin(), answers.end(), kNoAnswer);
    solver.solve(inputs, answers, r);
    out[i] = r.bernoulli(p.verify(answers, key)) ? 1 : 0;
  }
  return summarize(std::move(out));
}

// ---------------------------------------------------------------------------
// Synthetic puzzles

struct KeyProfile {
  double prior = 0.0;
  double hint = 1.0;               ///< weight of |k> against the erasure state
  std::vector<Answer> accepted;    ///< empty means {k}
  double accept_prob = 1.0;        ///< acceptance probability of an accepted answer
};

/// Key k is encoded as hint_k |k><k| + (1 - hint_k) |erased><erased| on
/// dimension K + 1, where index K is the erasure symbol.
inline WeaklyVerifiablePuzzle synthetic_puzzle(std::size_t alphabet_size, std::vector<KeyProfile> profile) {
  const std::size_t K = profile.size();
  if (K == 0) throw PreconditionError("synthetic_puzzle: empty profile");
  std::vector<double> priors;
  std::vector<DensityMatrix> states;
  RegisterShape shape{{"P", K + 1}};
  for (std::size_t k = 0; k < K; ++k) {
    auto& pr = profile[k];
    if (pr.hint < 0.0 || pr.hint > 1.0) throw PreconditionError("synthetic_puzzle: hint outside [0,1] for key " + std::to_string(k));
    if (pr.accept_prob < 0.0 || pr.accept_prob > 1.0) throw PreconditionError("synthetic_puzzle: accept_prob outside [0,1]");
    if (pr.accepted.empty()) pr.accepted = {k};
    for (Answer a : pr.accepted) {
      if (a >= alphabet_size) throw PreconditionError("synthetic_puzzle: accepted answer outside the alphabet");
    }
    priors.push_back(pr.prior);
    Mat m = Mat::Zero(static_cast<Eigen::Index>(K + 1), static_cast<Eigen::Index>(K + 1));
    m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = pr.hint;
    m(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K)) += 1.0 - pr.hint;
    states.push_back(DensityMatrix::trusted(shape, m));
  }
  auto table = std::make_shared<std::vector<KeyProfile>>(std::move(profile));
  return WeaklyVerifiablePuzzle(std::move(priors), std::move(states), [table](Answer a, Key k) {
    const auto& pr = (*table)[k];
    return std::find(pr.accepted.begin(), pr.accepted.end(), a) != pr.accepted.end() ? pr.accept_prob : 0.0;
  });
}

/// K equiprobable keys, common hint, accepted answer = the key.
inline WeaklyVerifiablePuzzle uniform_synthetic_puzzle(std::size_t K, double hint) {
  std::vector<KeyProfile> prof(K);
  for (auto& p : prof) {
    p.prior = 1.0 / static_cast<double>(K);
    p.hint = hint;
  }
  return synthetic_puzzle(K, std::move(prof));
}

/// Computational-basis measurement outcome of a state with real diagonal.
inline std::size_t measure_basis(const DensityMatrix& rho, Rng& rng) {
  const Mat& m = rho.matrix();
  double u = rng.uniform();
  const Eigen::Index d = m.rows();
  for (Eigen::Index i = 0; i < d; ++i) {
    u -= m(i, i).real();
    if (u < 0.0) return static_cast<std::size_t>(i);
  }
  return static_cast<std::size_t>(d - 1);
}

/// Measures every copy of every slot; answers the first non-erased outcome.
/// On a synthetic puzzle with hint h and t copies, each slot succeeds with
/// probability 1 - (1 - h)^t, independently across slots.
inline PuzzleSolver basis_measuring_solver(std::size_t slots, std::size_t t) {
  PuzzleSolver s;
  s.slots = slots;
  s.budget = t;
  s.solve = [](std::span<const PuzzleCopies> in, std::span<Answer> out, Rng& rng) {
    for (std::size_t j = 0; j < in.size(); ++j) {
      const auto erased = in[j].state->dim() - 1;
      out[j] = kNoAnswer;
      for (std::size_t c = 0; c < in[j].copies; ++c) {
        const auto o = measure_basis(*in[j].state, rng);
        if (o != erased) {
          out[j] = o;
          break;
        }
      }
    }
  };
  return s;
}

/// With probability s measures everything as above; otherwise answers nothing.
inline PuzzleSolver all_or_nothing_solver(std::size_t slots, std::size_t t, double s) {
  PuzzleSolver inner = basis_measuring_solver(slots, t);
  PuzzleSolver r = inner;
  r.solve = [inner, s](std::span<const PuzzleCopies> in, std::span<Answer> out, Rng& rng) {
    if (rng.bernoulli(s)) {
      inner.solve(in, out, rng);
    } else {
      std::fill(out.begin(), out.end(), kNoAnswer);
    }
  };
  return r;
}

/// Slot j is attempted only if every earlier slot produced an answer.
inline PuzzleSolver chained_solver(std::size_t slots, std::size_t t) {
  PuzzleSolver inner = basis_measuring_solver(1, t);
  PuzzleSolver r;
  r.slots = slots;
  r.budget = t;
  r.solve = [inner](std::span<const PuzzleCopies> in, std::span<Answer> out, Rng& rng) {
    bool alive = true;
    for (std::size_t j = 0; j < in.size(); ++j) {
      out[j] = kNoAnswer;
      if (alive) inner.solve(in.subspan(j, 1), out.subspan(j, 1), rng);
      alive = alive && out[j] != kNoAnswer;
    }
  };
  return r;
}

// ---------------------------------------------------------------------------
// Amplification

struct AmplificationParams {
  std::size_t n = 1;
  std::size_t q = 1;
  double delta = 0.5;
  std::size_t t = 1;
  double scale = 1.0;  ///< multiplies L, N_i, M_i and the t' multiplier; 1 = exact

  void validate() const {
    if (n < 1 || q < 1 || t < 1) throw PreconditionError("amplification: n, q, t must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw PreconditionError("amplification: delta must lie in (0,1)");
    if (!(scale > 0.0)) throw PreconditionError("amplification: scale must be positive");
  }

  std::size_t scaled(double raw) const {
    const double c = std::ceil(raw);
    if (scale == 1.0) return static_cast<std::size_t>(c);
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(scale * c)));
  }

  double dn(std::size_t e) const { return std::pow(delta, static_cast<double>(e)); }
  double qd() const { return static_cast<double>(q); }
  double nd() const { return static_cast<double>(n); }

  std::size_t N_raw(std::size_t i) const {
    return static_cast<std::size_t>(std::ceil(6.0 * qd() / dn(n - i + 1) * std::log(18.0 * qd() * nd() / delta)));
  }
  /// ceil(6q / delta^{n-i+1} ln(18qn/delta)).
  std::size_t N(std::size_t i) const { return scaled(6.0 * qd() / dn(n - i + 1) * std::log(18.0 * qd() * nd() / delta)); }
  /// ceil(84q^2 / delta^{n-i} ln(18qnN_i/delta)), N_i unscaled inside the log.
  std::size_t M(std::size_t i) const {
    const double Ni = static_cast<double>(N_raw(i));
    return scaled(84.0 * qd() * qd() / dn(n - i) * std::log(18.0 * qd() * nd() * Ni / delta));
  }
  /// ceil(6q ln(6q) / delta^{n-v+1}).
  std::size_t L(std::size_t v) const { return scaled(6.0 * qd() * std::log(6.0 * qd()) / dn(n - v + 1)); }
  /// ceil(6q ln(6q) / delta^n) * t.
  std::size_t t_prime() const { return scaled(6.0 * qd() * std::log(6.0 * qd()) / dn(n)) * t; }
  /// delta (1 - 1/q).
  double target() const { return delta * (1.0 - 1.0 / qd()); }
};

/// Copies of the instance puzzle handed to the amplified solver. Holds no key.
class InstanceCopies {
 public:
  InstanceCopies(std::shared_ptr<const DensityMatrix> state, std::size_t budget) : state_(std::move(state)), left_(budget) {}

  PuzzleCopies take(std::size_t t) {
    if (t > left_) throw UsageError("instance copies exhausted: need " + std::to_string(t) + ", have " + std::to_string(left_));
    left_ -= t;
    used_ += t;
    return {state_, t};
  }
  std::size_t used() const { return used_; }
  std::size_t left() const { return left_; }

 private:
  std::shared_ptr<const DensityMatrix> state_;
  std::size_t left_ = 0;
  std::size_t used_ = 0;
};

namespace detail {
inline void check_repeated(const WeaklyVerifiablePuzzle& p, const PuzzleSolver& solver, const AmplificationParams& a) {
  a.validate();
  if (p.slots() != 1) throw UsageError("amplification: base puzzle must have one slot");
  if (solver.slots != a.n) throw UsageError("amplification: repeated solver must have n slots");
  if (solver.budget != a.t) throw UsageError("amplification: repeated solver budget must equal t");
}
}  // namespace detail

/// Fraction of M_i runs in which slots i+1..n all verify, with slots 1..i
/// fixed to `prefix` and the rest fresh.
inline double estimate(const WeaklyVerifiablePuzzle& p, const PuzzleSolver& solver, std::span<const Key> prefix,
                       std::size_t i, const AmplificationParams& a, Rng& rng) {
  detail::check_repeated(p, solver, a);
  if (prefix.size() != i || i < 1 || i > a.n - 1) throw PreconditionError("estimate: prefix length must be i with 1 <= i <= n-1");
  const std::size_t M = a.M(i);
  std::vector<PuzzleCopies> in(a.n);
  std::vector<Key> keys(a.n);
  std::vector<Answer> ans(a.n);
  for (std::size_t j = 0; j < i; ++j) {
    keys[j] = prefix[j];
    in[j] = {p.slot_state(prefix[j]), a.t};
  }
  std::size_t count = 0;
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t j = i; j < a.n; ++j) {
      keys[j] = p.sample_base_key(rng);
      in[j] = {p.slot_state(keys[j]), a.t};
    }
    std::fill(ans.begin(), ans.end(), kNoAnswer);
    solver.solve(in, ans, rng);
    double acc = 1.0;
    for (std::size_t j = i; j < a.n; ++j) acc *= p.verify_slot(ans[j], keys[j]);
    if (rng.bernoulli(acc)) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(M);
}

/// First sampled key whose estimate reaches delta^{n-i}, or nothing after N_i tries.
inline std::optional<Key> extend(const WeaklyVerifiablePuzzle& p, const PuzzleSolver& solver, std::span<const Key> prefix,
                                 std::size_t i, const AmplificationParams& a, Rng& rng) {
  if (prefix.size() + 1 != i) throw PreconditionError("extend: prefix length must be i-1");
  const std::size_t N = a.N(i);
  const double threshold = a.dn(a.n - i);
  std::vector<Key> candidate(prefix.begin(), prefix.end());
  candidate.push_back(0);
  for (std::size_t r = 0; r < N; ++r) {
    candidate.back() = p.sample_base_key(rng);
    if (estimate(p, solver, candidate, i, a, rng) >= threshold) return candidate.back();
  }
  return std::nullopt;
}

struct AmplifyTrace {
  Answer answer = kNoAnswer;
  std::size_t v = 0;
  std::vector<Key> prefix;
  bool aborted = false;
  std::size_t copies_used = 0;
  std::size_t online_iterations = 0;
};

/// One run of the amplified adversary against the instance in `instance`.
inline AmplifyTrace amplify_once(const WeaklyVerifiablePuzzle& p, const PuzzleSolver& solver, const AmplificationParams& a,
                                 InstanceCopies& instance, Rng& rng) {
  detail::check_repeated(p, solver, a);
  AmplifyTrace tr;
  tr.v = a.n;
  for (std::size_t i = 1; i <= a.n - 1; ++i) {
    auto k = extend(p, solver, tr.prefix, i, a, rng);
    if (!k) {
      tr.v = i;
      break;
    }
    tr.prefix.push_back(*k);
  }

  std::vector<PuzzleCopies> in(a.n);
  std::vector<Key> keys(a.n);
  std::vector<Answer> ans(a.n);
  const std::size_t v = tr.v;
  for (std::size_t j = 0; j + 1 < v; ++j) in[j] = {p.slot_state(tr.prefix[j]), a.t};

  if (v == a.n) {
    in[v - 1] = instance.take(a.t);
    std::fill(ans.begin(), ans.end(), kNoAnswer);
    solver.solve(in, ans, rng);
    tr.online_iterations = 1;
    tr.answer = ans[v - 1];
  } else {
    const std::size_t L = a.L(v);
    tr.aborted = true;
    for (std::size_t r = 0; r < L; ++r) {
      ++tr.online_iterations;
      in[v - 1] = instance.take(a.t);
      for (std::size_t j = v; j < a.n; ++j) {
        keys[j] = p.sample_base_key(rng);
        in[j] = {p.slot_state(keys[j]), a.t};
      }
      std::fill(ans.begin(), ans.end(), kNoAnswer);
      solver.solve(in, ans, rng);
      double acc = 1.0;
      for (std::size_t j = v; j < a.n; ++j) acc *= p.verify_slot(ans[j], keys[j]);
      if (rng.bernoulli(acc)) {
        tr.answer = ans[v - 1];
        tr.aborted = false;
        break;
      }
    }
  }
  tr.copies_used = instance.used();
  return tr;
}

/// Single-slot solver with budget t' built from a solver for the n-fold repetition.
inline PuzzleSolver amplified_solver(const WeaklyVerifiablePuzzle& p, const PuzzleSolver& repeated, const AmplificationParams& a) {
  detail::check_repeated(p, repeated, a);
  PuzzleSolver s;
  s.slots = 1;
  s.budget = a.t_prime();
  s.solve = [p, repeated, a](std::span<const PuzzleCopies> in, std::span<Answer> out, Rng& rng) {
    InstanceCopies inst(in[0].state, in[0].copies);
    out[0] = amplify_once(p, repeated, a, inst, rng).answer;
  };
  return s;
}

struct AmplifyRun {
  SuccessEstimate success;
  double abort_rate = 0.0;
  std::size_t max_copies_used = 0;
  std::vector<AmplifyTrace> traces;
};

/// Success of the amplified adversary on fresh instances, keeping traces.
inline AmplifyRun run_amplification(const WeaklyVerifiablePuzzle& p, const PuzzleSolver& repeated,
                                    const AmplificationParams& a, std::size_t trials, Rng& rng) {
  detail::check_repeated(p, repeated, a);
  AmplifyRun run;
  std::vector<std::uint8_t> out(trials);
  std::size_t aborts = 0;
  const std::size_t tp = a.t_prime();
  for (std::size_t i = 0; i < trials; ++i) {
    Rng r = rng.split(i);
    const Key key = p.sample_key(r);
    InstanceCopies inst(p.slot_state(key), tp);
    auto tr = amplify_once(p, repeated, a, inst, r);
    out[i] = r.bernoulli(p.verify_slot(tr.answer, key)) ? 1 : 0;
    aborts += tr.aborted ? 1 : 0;
    run.max_copies_used = std::max(run.max_copies_used, tr.copies_used);
    run.traces.push_back(std::move(tr));
  }
  run.success = summarize(std::move(out));
  run.abort_rate = trials ? static_cast<double>(aborts) / static_cast<double>(trials) : 0.0;
  return run;
}

}  // namespace owsg
