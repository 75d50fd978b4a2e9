#include <gtest/gtest.h>

#include <cmath>

#include "owsg/qds.hpp"

using namespace owsg;

namespace {

double sigma(double p, std::size_t n) { return std::sqrt(p * (1.0 - p) / static_cast<double>(n)); }

QdsScheme reject_all(QdsScheme s) {
  s.verify = [](const PublicKey&, Message, const Signature&) { return 0.0; };
  auto inner = s.verify_effect;
  s.verify_effect = [inner](Message m, const Signature& sig) {
    Mat e = inner(m, sig);
    return Mat(Mat::Zero(e.rows(), e.cols()));
  };
  return s;
}

// Pr[at most one of q draws from [q^2] hits a fixed column].
double single_use_probability(std::size_t q) {
  const double p = 1.0 / static_cast<double>(q * q);
  const double qd = static_cast<double>(q);
  return std::pow(1 - p, qd) + qd * p * std::pow(1 - p, qd - 1);
}

}  // namespace

TEST(QdsFromOwsg, Correctness) {
  Rng rng(1);
  auto s = qds_from_owsg(orthonormal_owsg(3));
  EXPECT_NEAR(qds_correctness(s, rng), 1.0, kExactTol);
  auto l = qds_from_owsg(planted_leakage_owsg(2, 0.7));
  EXPECT_NEAR(qds_correctness(l, rng), 0.7, 1e-12);
  auto s2 = qds_from_owsg(orthonormal_owsg(2), 2);
  EXPECT_EQ(s2.messages, 4u);
  EXPECT_NEAR(qds_correctness(s2, rng), 1.0, kExactTol);
}

TEST(QdsFromOwsg, Structure) {
  Rng rng(2);
  auto o = orthonormal_owsg(3);
  auto s = qds_from_owsg(o);
  auto sk = s.sk_gen(rng);
  ASSERT_EQ(sk.size(), 2u);
  auto pk = s.pk_gen(sk);
  ASSERT_EQ(pk.size(), 2u);
  for (Message m = 0; m < 2; ++m) {
    auto sig = s.sign(sk, m, rng);
    ASSERT_EQ(sig.size(), 1u);
    EXPECT_EQ(sig[0], sk[m]);
    EXPECT_LE(max_abs(pk[m]->matrix() - o.family.state(sk[m]).matrix()), 0.0);
  }
  SecretKey distinct{0, 1};
  auto pk2 = s.pk_gen(distinct);
  EXPECT_EQ(s.verify(pk2, 1, {0}), 0.0);
  EXPECT_EQ(s.verify(pk2, 0, {0}), 1.0);
}

TEST(QdsFromOwsg, OverlapCrossAcceptance) {
  const double c = 0.6;
  auto s = qds_from_owsg(overlap_owsg(c));
  auto pk = s.pk_gen({0, 1});
  EXPECT_NEAR(s.verify(pk, 1, {0}), c * c, 1e-12);
  EXPECT_NEAR(s.verify(pk, 0, {1}), c * c, 1e-12);
}

TEST(OwsgFromQds, Examples) {
  auto s = qds_from_owsg(orthonormal_owsg(2));
  auto o = owsg_from_qds(s);
  EXPECT_EQ(o.family.size(), 4u);
  EXPECT_NEAR(owsg_correctness(o), 1.0, kExactTol);
  EXPECT_NEAR(owsg_correctness(owsg_from_qds(reject_all(s))), 0.0, kExactTol);

  const double c = 0.6;
  auto ov = owsg_from_qds(qds_from_owsg(overlap_owsg(c)));
  // keys (k0, k1): Ver(k', phi_k) checks k'_1 against the second factor.
  for (Key a = 0; a < 4; ++a)
    for (Key k = 0; k < 4; ++k) {
      const double expect = (a % 2) == (k % 2) ? 1.0 : c * c;
      EXPECT_NEAR(ov.cross(a, k), expect, 1e-12);
    }
  Rng rng(3);
  EXPECT_NEAR(owsg_correctness(owsg_from_qds(qds_from_owsg(planted_leakage_owsg(2, 0.7)))),
              qds_correctness(qds_from_owsg(planted_leakage_owsg(2, 0.7)), rng), 1e-12);
}

TEST(ForgeryGame, Sanity) {
  Rng rng(4);
  auto s = qds_from_owsg(orthonormal_owsg(3));
  EXPECT_EQ(forgery_game(s, replay_forger(1), 1, 1, 200, rng).win.rate, 0.0);
  EXPECT_EQ(forgery_game(s, omniscient_forger(s, 1), 1, 1, 200, rng, true).win.rate, 1.0);
  Forger greedy{[](const ForgerInput& in, Rng&) {
    in.sign(0);
    in.sign(1);
    return Forgery{};
  }};
  EXPECT_THROW(forgery_game(s, greedy, 1, 1, 1, rng), UsageError);
}

TEST(ForgeryGame, KeyGuessingMatchesCrossAcceptance) {
  Rng rng(5);
  const double c = 0.6;
  auto s = qds_from_owsg(overlap_owsg(c));
  // Uniform guess against a uniform key: (1 + c^2) / 2.
  const double expect = 0.5 * (1.0 + c * c);
  const std::size_t n = 20000;
  auto g = forgery_game(s, key_guessing_forger(2), 1, 1, n, rng);
  EXPECT_NEAR(g.win.rate, expect, 3 * sigma(expect, n));
  for (const auto& tr : g.transcripts) {
    if (tr.outcome) {
      EXPECT_FALSE(tr.aborted);
      EXPECT_TRUE(std::find(tr.queried.begin(), tr.queried.end(), tr.forgery.message) == tr.queried.end());
    }
  }
}

TEST(ForgeryGame, OwnSignerMeasuresCrossAcceptance) {
  // Sign 0 with the true key, submit it for 1: acceptance is Tr(Pi_{k0} phi_{k1}).
  Rng rng(6);
  const double c = 0.8;
  auto s = qds_from_owsg(overlap_owsg(c));
  Forger swap{[](const ForgerInput& in, Rng&) { return Forgery{1, in.sign(0)}; }};
  const double expect = 0.5 * (1.0 + c * c);
  const std::size_t n = 20000;
  EXPECT_NEAR(forgery_game(s, swap, 1, 1, n, rng).win.rate, expect, 3 * sigma(expect, n));
}

TEST(Reduction, BreakerHalvesForgerSuccess) {
  Rng rng(7);
  const std::size_t K = 3, n = 10000;
  auto o = orthonormal_owsg(K);
  auto s = qds_from_owsg(o);
  for (double w : {0.0, 0.25, 0.5, 1.0}) {
    auto f = planted_forger(K, w);
    const double win = forgery_game(s, f, 1, 1, n, rng).win.rate;
    EXPECT_NEAR(win, w, 3 * sigma(w, n) + 1e-12);
    auto inv = owsg_breaker_from_forger(o, f, 1);
    const double inv_rate = inversion_success(o, inv, n, rng).rate;
    EXPECT_NEAR(inv_rate, w / 2, 3 * sigma(w / 2, n) + 1e-12) << w;
  }
}

TEST(Reduction, ForgerFromPerfectBreaker) {
  Rng rng(8);
  auto o = planted_leakage_owsg(3, 0.6);
  auto s = qds_from_owsg(o);
  // Reads the key directly off the unerased part: perfect whenever possible.
  auto inv = leakage_inverter(3, 4);
  const double expect = inversion_success(o, inv, 20000, rng).rate;
  const std::size_t n = 20000;
  EXPECT_NEAR(forgery_game(s, forger_from_owsg_breaker(inv), 1, 4, n, rng).win.rate, expect,
              3 * std::sqrt(2.0) * sigma(expect, n));
  auto perfect = planted_inverter(3, 1.0);
  EXPECT_EQ(forgery_game(qds_from_owsg(orthonormal_owsg(3)), forger_from_owsg_breaker(perfect), 1, 1, 500, rng).win.rate, 1.0);
}

TEST(QTime, Structure) {
  Rng rng(9);
  auto base = qds_from_owsg(orthonormal_owsg(2), 2);
  auto s = one_time_to_q_time(base, 2, 3);
  auto sk = s.sk_gen(rng);
  EXPECT_EQ(sk.size(), 3u * 4u * 4u);
  auto pk = s.pk_gen(sk);
  EXPECT_EQ(pk.size(), 3u * 4u * 4u);
  auto sig = s.sign(sk, 2, rng);
  ASSERT_EQ(sig.size(), 3u * 3u);
  for (std::size_t a = 0; a < 3; ++a) EXPECT_LT(sig[a * 3], 4u);
  EXPECT_EQ(s.verify(pk, 2, sig), 1.0);
  EXPECT_NEAR(qds_correctness(s, rng, 200), 1.0, kExactTol);

  auto one = one_time_to_q_time(base, 1, 2);
  for (int i = 0; i < 20; ++i) {
    auto x = one.sign(one.sk_gen(rng), 1, rng);
    EXPECT_EQ(x[0], 0u);
    EXPECT_EQ(x[3], 0u);
  }
}

TEST(QTime, HonestAcceptanceIsPower) {
  Rng rng(10);
  const double h = 0.8;
  auto base = qds_from_owsg(planted_leakage_owsg(2, h));
  for (std::size_t lambda : {1u, 2u, 3u}) {
    auto s = one_time_to_q_time(base, 2, lambda);
    for (int i = 0; i < 10; ++i) {
      auto sk = s.sk_gen(rng);
      EXPECT_NEAR(s.verify(s.pk_gen(sk), 1, s.sign(sk, 1, rng)), std::pow(h, static_cast<double>(lambda)), 1e-12);
    }
  }
}

TEST(QTime, CapIsEnforced) {
  auto base = qds_from_owsg(orthonormal_owsg(3));
  ScopedDimensionCap cap(2);
  EXPECT_THROW(one_time_to_q_time(base, 2, 1), SizingError);
}

TEST(GoodEvent, Examples) {
  Rng rng(11);
  EXPECT_EQ(good_event_probability(1, 4, 10, rng).analytic, 1.0);
  EXPECT_NEAR(bad_row_probability(2), 0.25, 1e-15);
  EXPECT_NEAR(good_event_probability(2, 3, 10, rng).analytic, 63.0 / 64.0, 1e-15);
  for (auto [q, l] : {std::pair{2u, 3u}, {3u, 5u}, {4u, 4u}}) {
    auto g = good_event_probability(q, l, 100000, rng);
    EXPECT_NEAR(g.monte_carlo.rate, g.analytic, 3 * sigma(g.analytic, 100000) + 1e-12);
    EXPECT_GE(g.analytic, g.bound);
  }
}

TEST(QTimeReduction, EmbeddingRatio) {
  Rng rng(12);
  const std::size_t K = 2, bits = 2, q = 2, lambda = 2, n = 20000;
  auto base = qds_from_owsg(orthonormal_owsg(K), bits);
  auto qs = one_time_to_q_time(base, q, lambda);
  const double good = 1.0 - std::pow(bad_row_probability(q), static_cast<double>(lambda));
  for (double w : {0.5, 1.0}) {
    auto qf = planted_q_time_forger(K, bits, q, lambda, w);
    const double qwin = forgery_game(qs, qf, q, 1, 2000, rng).win.rate;
    EXPECT_NEAR(qwin, w, 3 * sigma(w, 2000) + 1e-12);
    auto res = forgery_game(base, one_time_forger_from_q_time(base, q, lambda, qf), 1, 1, n, rng);
    for (const auto& tr : res.transcripts) EXPECT_LE(tr.queried.size(), 1u);
    const double exact = w * single_use_probability(q) / static_cast<double>(q * q);
    EXPECT_NEAR(res.win.rate, exact, 3 * sigma(exact, n));
    EXPECT_GE(res.win.rate, w * good / static_cast<double>(q * q * lambda) - 3 * sigma(exact, n));
  }
}
