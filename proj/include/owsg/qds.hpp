#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "owsg/owsg.hpp"

namespace owsg {

using Message = std::uint64_t;
using SecretKey = std::vector<Key>;
using Signature = std::vector<std::uint64_t>;
using PublicKey = std::vector<std::shared_ptr<const DensityMatrix>>;

inline constexpr Message kNoMessage = std::numeric_limits<Message>::max();

/// Signature scheme with a classical secret key, a quantum public key kept as
/// a list of tensor factors, and an exact-probability verifier.
struct QdsScheme {
  std::size_t messages = 2;
  std::size_t sk_size = 0;   ///< keys per secret key
  std::size_t sig_size = 0;  ///< words per signature
  double eps_corr = 0.0;

  std::function<SecretKey(Rng&)> sk_gen;
  std::function<PublicKey(const SecretKey&)> pk_gen;
  std::function<Signature(const SecretKey&, Message, Rng&)> sign;
  std::function<double(const PublicKey&, Message, const Signature&)> verify;

  /// Full secret-key distribution, when small enough to enumerate.
  std::function<std::vector<std::pair<SecretKey, double>>()> sk_support;
  /// Acceptance effect on the tensor of the pk factors.
  std::function<Mat(Message, const Signature&)> verify_effect;
};

/// Honest acceptance averaged over keys: exact when the key support is
/// enumerable, otherwise over `samples` sampled keys. Minimum over messages.
inline double qds_correctness(const QdsScheme& s, Rng& rng, std::size_t samples = 1000) {
  double worst = 1.0;
  for (Message m = 0; m < s.messages; ++m) {
    double acc = 0.0;
    if (s.sk_support) {
      for (const auto& [sk, p] : s.sk_support()) acc += p * s.verify(s.pk_gen(sk), m, s.sign(sk, m, rng));
    } else {
      for (std::size_t i = 0; i < samples; ++i) {
        const auto sk = s.sk_gen(rng);
        acc += s.verify(s.pk_gen(sk), m, s.sign(sk, m, rng));
      }
      acc /= static_cast<double>(samples);
    }
    worst = std::min(worst, acc);
  }
  return worst;
}

/// Lamport-style one-time scheme: sk = (k_{i,b}) for i < bits, b in {0,1};
/// sign(m) = (k_{i,m_i})_i; verify runs OWSG.Ver on each selected pk factor.
/// bits = 1 gives sk = (k_0, k_1), pk = (phi_{k_0}, phi_{k_1}), sign(m) = k_m.
inline QdsScheme qds_from_owsg(const Owsg& o, std::size_t message_bits = 1) {
  if (message_bits < 1 || message_bits > 16) throw PreconditionError("qds_from_owsg: message_bits must lie in [1,16]");
  auto ow = std::make_shared<const Owsg>(o);
  auto states = std::make_shared<std::vector<std::shared_ptr<const DensityMatrix>>>();
  for (const auto& st : o.family.states()) states->push_back(std::make_shared<const DensityMatrix>(st));
  const std::size_t L = message_bits;
  QdsScheme s;
  s.messages = std::size_t{1} << L;
  s.sk_size = 2 * L;
  s.sig_size = L;
  s.eps_corr = 1.0 - std::pow(1.0 - o.eps_corr, static_cast<double>(L));
  auto bit = [L](Message m, std::size_t i) { return static_cast<std::size_t>((m >> (L - 1 - i)) & 1U); };
  s.sk_gen = [ow, L](Rng& rng) {
    const auto puzzle = owsg_as_puzzle(*ow);
    SecretKey sk(2 * L);
    for (auto& k : sk) k = puzzle.sample_base_key(rng);
    return sk;
  };
  s.pk_gen = [states](const SecretKey& sk) {
    PublicKey pk;
    for (Key k : sk) pk.push_back(states->at(k));
    return pk;
  };
  s.sign = [L, bit](const SecretKey& sk, Message m, Rng&) {
    Signature sig(L);
    for (std::size_t i = 0; i < L; ++i) sig[i] = sk.at(2 * i + bit(m, i));
    return sig;
  };
  s.verify = [ow, L, bit](const PublicKey& pk, Message m, const Signature& sig) {
    if (sig.size() != L || pk.size() != 2 * L) return 0.0;
    double p = 1.0;
    for (std::size_t i = 0; i < L; ++i) {
      if (sig[i] >= ow->family.size()) return 0.0;
      p *= ow->verify(sig[i], *pk[2 * i + bit(m, i)]);
    }
    return p;
  };
  if (std::pow(static_cast<double>(o.family.size()), 2.0 * static_cast<double>(L)) <= 1e6) {
    s.sk_support = [ow, L]() {
      const std::size_t K = ow->family.size();
      std::size_t total = 1;
      for (std::size_t i = 0; i < 2 * L; ++i) total *= K;
      std::vector<std::pair<SecretKey, double>> out;
      for (std::size_t x = 0; x < total; ++x) {
        SecretKey sk(2 * L);
        double p = 1.0;
        std::size_t r = x;
        for (std::size_t i = 2 * L; i-- > 0;) {
          sk[i] = r % K;
          r /= K;
          p *= ow->family.probability(sk[i]);
        }
        out.emplace_back(std::move(sk), p);
      }
      return out;
    };
  }
  s.verify_effect = [ow, L, bit](Message m, const Signature& sig) {
    const auto d = static_cast<Eigen::Index>(ow->family.shape().dim());
    const Mat id = Mat::Identity(d, d);
    Mat e = Mat::Identity(1, 1);
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t b = 0; b < 2; ++b) {
        const Mat& f = b == bit(m, i) ? ow->effects.at(sig.at(i)) : id;
        e = kron(e, f);
      }
    }
    return e;
  };
  return s;
}

/// k = sk, phi_k = pk, Ver(k', phi) = DS.Ver(phi, 1, Sign(k', 1)).
/// Needs an enumerable key support and the effect form of verification; the
/// signer is called with a fixed stream and must be deterministic.
inline Owsg owsg_from_qds(const QdsScheme& s) {
  if (!s.sk_support || !s.verify_effect) throw PreconditionError("owsg_from_qds: scheme needs sk_support and verify_effect");
  std::vector<double> probs;
  std::vector<DensityMatrix> states;
  std::vector<Mat> effects;
  for (const auto& [sk, p] : s.sk_support()) {
    probs.push_back(p);
    const auto pk = s.pk_gen(sk);
    std::vector<std::size_t> dims;
    for (const auto& f : pk) dims.push_back(f->dim());
    checked_product(dims, "owsg_from_qds");
    DensityMatrix phi = pk.front()->relabeled({"pk0"});
    for (std::size_t i = 1; i < pk.size(); ++i) phi = tensor(phi, pk[i]->relabeled({"pk" + std::to_string(i)}));
    states.push_back(std::move(phi));
    Rng fixed(0);
    effects.push_back(s.verify_effect(1, s.sign(sk, 1, fixed)));
  }
  return Owsg(KeyedStateFamily(std::move(probs), std::move(states)), std::move(effects), s.eps_corr);
}

// ---------------------------------------------------------------------------
// Security game

/// t copies of each public-key factor.
struct PkCopies {
  PublicKey factors;
  std::size_t copies = 1;
};

struct Forgery {
  Message message = kNoMessage;
  Signature signature;
};

struct ForgerInput {
  PkCopies pk;
  std::function<Signature(Message)> sign;  ///< signing oracle; throws UsageError past the query budget
  const SecretKey* leaked_sk = nullptr;    ///< set only in harness sanity runs
};

struct Forger {
  std::function<Forgery(const ForgerInput&, Rng&)> forge;
};

struct GameTranscript {
  std::uint64_t seed = 0;  ///< trial stream index
  std::size_t t = 0;
  std::vector<Message> queried;
  Forgery forgery;
  bool aborted = false;
  bool outcome = false;
};

struct GameResult {
  SuccessEstimate win;
  std::vector<GameTranscript> transcripts;
};

/// pk^{(x) t} and a q-query signing oracle to the forger; wins iff the
/// forged message is fresh and verification accepts.
inline GameResult forgery_game(const QdsScheme& s, const Forger& forger, std::size_t q, std::size_t t, std::size_t trials,
                               Rng& rng, bool leak_sk = false) {
  if (trials < 1 || t < 1) throw PreconditionError("forgery_game: trials and t must be >= 1");
  GameResult res;
  std::vector<std::uint8_t> out(trials);
  for (std::size_t i = 0; i < trials; ++i) {
    Rng r = rng.split(i);
    GameTranscript tr;
    tr.seed = i;
    tr.t = t;
    const SecretKey sk = s.sk_gen(r);
    const PublicKey pk = s.pk_gen(sk);
    Rng sign_rng = r.split(1);
    ForgerInput in;
    in.pk = {pk, t};
    in.sign = [&](Message m) {
      if (tr.queried.size() >= q) throw UsageError("forgery_game: forger exceeded its " + std::to_string(q) + "-query budget");
      if (m >= s.messages) throw UsageError("forgery_game: message outside the message space");
      tr.queried.push_back(m);
      return s.sign(sk, m, sign_rng);
    };
    if (leak_sk) in.leaked_sk = &sk;
    Rng fr = r.split(2);
    tr.forgery = forger.forge(in, fr);
    tr.aborted = tr.forgery.message == kNoMessage;
    const auto& f = tr.forgery;
    const bool fresh = std::find(tr.queried.begin(), tr.queried.end(), f.message) == tr.queried.end();
    if (!tr.aborted && fresh && f.message < s.messages) tr.outcome = r.bernoulli(s.verify(pk, f.message, f.signature));
    out[i] = tr.outcome ? 1 : 0;
    res.transcripts.push_back(std::move(tr));
  }
  res.win = summarize(std::move(out));
  return res;
}

namespace detail {
struct Abort {};
}  // namespace detail

/// Forger that knows the secret key (harness sanity check).
inline Forger omniscient_forger(const QdsScheme& s, Message target) {
  return {[s, target](const ForgerInput& in, Rng& rng) {
    if (!in.leaked_sk) throw UsageError("omniscient_forger: no leaked key");
    return Forgery{target, s.sign(*in.leaked_sk, target, rng)};
  }};
}

/// Queries `replay` and forges the same message.
inline Forger replay_forger(Message replay) {
  return {[replay](const ForgerInput& in, Rng&) { return Forgery{replay, in.sign(replay)}; }};
}

/// One-bit scheme over a basis family: queries 0, measures the pk factor of
/// message 1 and with probability w submits the measured key, otherwise the
/// next key. Wins with probability exactly w on the orthonormal family.
inline Forger planted_forger(std::size_t key_count, double w) {
  return {[key_count, w](const ForgerInput& in, Rng& rng) {
    in.sign(0);
    const Key k = measure_basis(*in.pk.factors.at(1), rng) % key_count;
    return Forgery{1, {rng.bernoulli(w) ? k : (k + 1) % key_count}};
  }};
}

/// Guesses a uniformly random key for message 1 without queries.
inline Forger key_guessing_forger(std::size_t key_count) {
  return {[key_count](const ForgerInput&, Rng& rng) { return Forgery{1, {rng.below(key_count)}}; }};
}

/// Inverter B from a one-time forger for qds_from_owsg(o): the challenge sits
/// at position r, the other position gets a fresh key k'; a query on r
/// aborts, a query on 1-r is answered with k', and the forgery's signature
/// is the key guess when it targets r.
inline Inverter owsg_breaker_from_forger(const Owsg& o, const Forger& forger, std::size_t t) {
  auto puzzle = std::make_shared<const WeaklyVerifiablePuzzle>(owsg_as_puzzle(o));
  return {t, [puzzle, forger, t](const PuzzleCopies& challenge, Rng& rng) -> Key {
            const Message r = rng.below(2);
            const Key kp = puzzle->sample_base_key(rng);
            PublicKey pk(2);
            pk[r] = challenge.state;
            pk[1 - r] = puzzle->slot_state(kp);
            bool used = false;
            ForgerInput in;
            in.pk = {pk, t};
            in.sign = [&](Message m) -> Signature {
              if (used) throw UsageError("one-time forger queried twice");
              used = true;
              if (m == r) throw detail::Abort{};
              return {kp};
            };
            try {
              const Forgery f = forger.forge(in, rng);
              if (f.message != r || f.signature.size() != 1) return kNoAnswer;
              return f.signature[0];
            } catch (const detail::Abort&) {
              return kNoAnswer;
            }
          }};
}

/// Forger from an inverter for qds_from_owsg(o): no queries; inverts the pk
/// factor of message 1 and signs with the recovered key.
inline Forger forger_from_owsg_breaker(const Inverter& inv) {
  return {[inv](const ForgerInput& in, Rng& rng) {
    if (in.pk.copies != inv.budget) throw UsageError("forger_from_owsg_breaker: copy count does not match inverter budget");
    const Key k = inv.invert({in.pk.factors.at(1), in.pk.copies}, rng);
    return Forgery{1, {k}};
  }};
}

// ---------------------------------------------------------------------------
// One-time to q-time

struct QTimeLayout {
  std::size_t q = 1;
  std::size_t lambda = 1;
  std::size_t columns() const { return q * q; }
  std::size_t components() const { return lambda * columns(); }
  std::size_t index(std::size_t a, std::size_t b) const { return a * columns() + b; }
};

/// lambda x q^2 component keys; sign draws b_a <- [q^2] per row a and emits
/// (b_a, sigma_a) for every row; verify checks all rows. The pk is the list
/// of all component pk factors, row-major.
inline QdsScheme one_time_to_q_time(const QdsScheme& s, std::size_t q, std::size_t lambda) {
  if (q < 1 || lambda < 1) throw PreconditionError("one_time_to_q_time: q and lambda must be >= 1");
  const QTimeLayout lay{q, lambda};
  {
    Rng probe(0);
    const auto pk = s.pk_gen(s.sk_gen(probe));
    for (const auto& f : pk) check_dim(f->dim(), "one_time_to_q_time pk factor");
    if (pk.size() * lay.components() > (std::size_t{1} << 16)) throw SizingError("one_time_to_q_time: too many pk factors");
  }
  const std::size_t C = lay.components(), sks = s.sk_size, sgs = s.sig_size;
  auto base = std::make_shared<const QdsScheme>(s);
  auto component = [sks](const SecretKey& sk, std::size_t c) {
    return SecretKey(sk.begin() + static_cast<std::ptrdiff_t>(c * sks), sk.begin() + static_cast<std::ptrdiff_t>((c + 1) * sks));
  };
  QdsScheme r;
  r.messages = s.messages;
  r.sk_size = C * sks;
  r.sig_size = lambda * (1 + sgs);
  r.eps_corr = 1.0 - std::pow(1.0 - s.eps_corr, static_cast<double>(lambda));
  r.sk_gen = [base, C](Rng& rng) {
    SecretKey sk;
    for (std::size_t c = 0; c < C; ++c) {
      auto x = base->sk_gen(rng);
      sk.insert(sk.end(), x.begin(), x.end());
    }
    return sk;
  };
  r.pk_gen = [base, C, component](const SecretKey& sk) {
    PublicKey pk;
    for (std::size_t c = 0; c < C; ++c) {
      auto x = base->pk_gen(component(sk, c));
      pk.insert(pk.end(), x.begin(), x.end());
    }
    return pk;
  };
  r.sign = [base, lay, component](const SecretKey& sk, Message m, Rng& rng) {
    Signature sig;
    for (std::size_t a = 0; a < lay.lambda; ++a) {
      const std::size_t b = rng.below(lay.columns());
      sig.push_back(b);
      auto x = base->sign(component(sk, lay.index(a, b)), m, rng);
      sig.insert(sig.end(), x.begin(), x.end());
    }
    return sig;
  };
  r.verify = [base, lay, sgs](const PublicKey& pk, Message m, const Signature& sig) {
    if (sig.size() != lay.lambda * (1 + sgs)) return 0.0;
    const std::size_t per = pk.size() / lay.components();
    double p = 1.0;
    for (std::size_t a = 0; a < lay.lambda; ++a) {
      const auto off = a * (1 + sgs);
      const std::size_t b = sig[off];
      if (b >= lay.columns()) return 0.0;
      const std::size_t c = lay.index(a, b);
      PublicKey part(pk.begin() + static_cast<std::ptrdiff_t>(c * per), pk.begin() + static_cast<std::ptrdiff_t>((c + 1) * per));
      Signature sa(sig.begin() + static_cast<std::ptrdiff_t>(off + 1), sig.begin() + static_cast<std::ptrdiff_t>(off + 1 + sgs));
      p *= base->verify(part, m, sa);
    }
    return p;
  };
  return r;
}

/// 1 - prod_{j<q} (q^2 - j) / q^2: some index repeats among q draws from [q^2].
inline double bad_row_probability(std::size_t q) {
  const double n = static_cast<double>(q) * static_cast<double>(q);
  double p = 1.0;
  for (std::size_t j = 0; j < q; ++j) p *= (n - static_cast<double>(j)) / n;
  return 1.0 - p;
}

struct GoodEvent {
  double analytic = 0.0;
  double bound = 0.0;  ///< 1 - (1 - e^{-1})^lambda
  SuccessEstimate monte_carlo;
};

/// Good: at least one row whose q drawn indices are pairwise distinct.
inline GoodEvent good_event_probability(std::size_t q, std::size_t lambda, std::size_t trials, Rng& rng) {
  if (q < 1 || lambda < 1) throw PreconditionError("good_event_probability: q and lambda must be >= 1");
  GoodEvent g;
  g.analytic = 1.0 - std::pow(bad_row_probability(q), static_cast<double>(lambda));
  g.bound = 1.0 - std::pow(1.0 - std::exp(-1.0), static_cast<double>(lambda));
  std::vector<std::uint8_t> out(trials);
  const std::size_t cols = q * q;
  std::vector<std::uint8_t> seen(cols);
  for (std::size_t i = 0; i < trials; ++i) {
    Rng r = rng.split(i);
    bool good = false;
    for (std::size_t a = 0; a < lambda; ++a) {
      std::fill(seen.begin(), seen.end(), 0);
      bool distinct = true;
      for (std::size_t j = 0; j < q; ++j) {
        const auto b = r.below(cols);
        distinct = distinct && !seen[b];
        seen[b] = 1;
      }
      good = good || distinct;
    }
    out[i] = good ? 1 : 0;
  }
  g.monte_carlo = summarize(std::move(out));
  return g;
}

/// One-time forger B from a q-time forger: embeds the challenge pk at a
/// random component (a*, b*), signs every other component itself, uses the
/// external oracle at most once for (a*, b*) and aborts on a second need,
/// and forwards row a* of the forgery only when it used column b*.
inline Forger one_time_forger_from_q_time(const QdsScheme& base, std::size_t q, std::size_t lambda, const Forger& qforger) {
  auto bs = std::make_shared<const QdsScheme>(base);
  const QTimeLayout lay{q, lambda};
  return {[bs, lay, qforger](const ForgerInput& in, Rng& rng) -> Forgery {
    const std::size_t a_star = rng.below(lay.lambda), b_star = rng.below(lay.columns());
    const std::size_t c_star = lay.index(a_star, b_star);
    const std::size_t sgs = bs->sig_size;
    std::vector<SecretKey> sks(lay.components());
    PublicKey pk;
    for (std::size_t c = 0; c < lay.components(); ++c) {
      if (c == c_star) {
        pk.insert(pk.end(), in.pk.factors.begin(), in.pk.factors.end());
      } else {
        sks[c] = bs->sk_gen(rng);
        auto x = bs->pk_gen(sks[c]);
        pk.insert(pk.end(), x.begin(), x.end());
      }
    }
    bool external_used = false;
    ForgerInput qin;
    qin.pk = {pk, in.pk.copies};
    qin.sign = [&](Message m) {
      Signature sig;
      for (std::size_t a = 0; a < lay.lambda; ++a) {
        const std::size_t b = rng.below(lay.columns());
        sig.push_back(b);
        Signature x;
        if (lay.index(a, b) == c_star) {
          if (external_used) throw detail::Abort{};
          external_used = true;
          x = in.sign(m);
        } else {
          x = bs->sign(sks[lay.index(a, b)], m, rng);
        }
        sig.insert(sig.end(), x.begin(), x.end());
      }
      return sig;
    };
    try {
      const Forgery f = qforger.forge(qin, rng);
      if (f.message == kNoMessage || f.signature.size() != lay.lambda * (1 + sgs)) return {};
      const auto off = a_star * (1 + sgs);
      if (f.signature[off] != b_star) return {};
      return {f.message, Signature(f.signature.begin() + static_cast<std::ptrdiff_t>(off + 1),
                                   f.signature.begin() + static_cast<std::ptrdiff_t>(off + 1 + sgs))};
    } catch (const detail::Abort&) {
      return {};
    }
  }};
}

/// q-time forger against one_time_to_q_time(qds_from_owsg(o, bits), q, lambda)
/// on a basis family: makes q signing queries on messages 0..q-1, then forges
/// message q by picking b_a uniformly and measuring the needed pk factors.
/// With probability w the measured keys are submitted, otherwise the
/// signature is corrupted in every row.
inline Forger planted_q_time_forger(std::size_t key_count, std::size_t message_bits, std::size_t q, std::size_t lambda,
                                    double w) {
  const QTimeLayout lay{q, lambda};
  const std::size_t L = message_bits;
  return {[key_count, L, lay, w](const ForgerInput& in, Rng& rng) -> Forgery {
    for (Message m = 0; m < lay.q; ++m) in.sign(m);
    const Message target = lay.q;
    const bool honest = rng.bernoulli(w);
    const std::size_t per = 2 * L;
    Signature sig;
    for (std::size_t a = 0; a < lay.lambda; ++a) {
      const std::size_t b = rng.below(lay.columns());
      sig.push_back(b);
      const std::size_t c = lay.index(a, b);
      for (std::size_t i = 0; i < L; ++i) {
        const std::size_t bit = (target >> (L - 1 - i)) & 1U;
        const Key k = measure_basis(*in.pk.factors.at(c * per + 2 * i + bit), rng) % key_count;
        sig.push_back(honest ? k : (k + 1) % key_count);
      }
    }
    return {target, sig};
  }};
}

}  // namespace owsg
