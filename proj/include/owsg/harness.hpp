#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "owsg/commitefi.hpp"
#include "owsg/discriminate.hpp"
#include "owsg/money.hpp"
#include "owsg/owsg.hpp"
#include "owsg/puzzles.hpp"
#include "owsg/qds.hpp"
#include "owsg/qpotp.hpp"

namespace owsg {

struct ExperimentConfig {
  std::string name;
  nlohmann::json params = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::size_t cap = 4096;
  bool timing = true;

  double num(const std::string& key, double fallback) const {
    if (!params.contains(key)) return fallback;
    const auto& v = params.at(key);
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
      try {
        return std::stod(v.get<std::string>());
      } catch (const std::exception&) {
        throw UsageError("parameter '" + key + "' is not a number");
      }
    }
    throw UsageError("parameter '" + key + "' is not a number");
  }
  std::size_t count(const std::string& key, std::size_t fallback) const {
    const double v = num(key, static_cast<double>(fallback));
    if (v < 0 || v != std::floor(v)) throw UsageError("parameter '" + key + "' must be a non-negative integer");
    return static_cast<std::size_t>(v);
  }
  std::string str(const std::string& key, const std::string& fallback) const {
    if (!params.contains(key)) return fallback;
    const auto& v = params.at(key);
    return v.is_string() ? v.get<std::string>() : v.dump();
  }
};

/// Comparators: "<=" and ">=" pass within `tol`; "~" passes when |value - reference| <= tol
/// (tol = 3 sigma for stochastic rows); ">" is strict; "info" always passes.
struct ReportRow {
  std::string experiment;
  std::string param_json;
  std::string metric;
  double value = 0.0;
  double reference = 0.0;
  std::string comparator = "info";
  double tol = 0.0;
  bool pass = true;
  double ms = 0.0;
};

inline bool recompute_pass(const std::string& comparator, double value, double reference, double tol) {
  if (std::isnan(value)) return false;
  if (comparator == "<=") return value <= reference + tol;
  if (comparator == ">=") return value >= reference - tol;
  if (comparator == ">") return value > reference;
  if (comparator == "~") return std::abs(value - reference) <= tol;
  if (comparator == "info") return true;
  throw UsageError("unknown comparator '" + comparator + "'");
}

inline bool recompute_pass(const ReportRow& r) { return recompute_pass(r.comparator, r.value, r.reference, r.tol); }

inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Comparator column text, e.g. "<=+1e-09" or "~0.0123" or "info".
inline std::string comparator_text(const ReportRow& r) {
  if (r.comparator == "info" || r.comparator == ">") return r.comparator;
  return r.comparator + (r.comparator == "~" ? "" : "+") + fmt17(r.tol);
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline const char* kCsvHeader = "experiment,param_json,metric,value,reference,comparator,pass,ms";

inline std::string to_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << kCsvHeader << "\n";
  for (const auto& r : rows) {
    os << csv_field(r.experiment) << "," << csv_field(r.param_json) << "," << csv_field(r.metric) << "," << fmt17(r.value) << ","
       << fmt17(r.reference) << "," << csv_field(comparator_text(r)) << "," << (r.pass ? "true" : "false") << "," << fmt17(r.ms)
       << "\n";
  }
  return os.str();
}

inline nlohmann::json to_json(const std::vector<ReportRow>& rows) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& r : rows) {
    a.push_back({{"experiment", r.experiment},
                 {"params", nlohmann::json::parse(r.param_json)},
                 {"metric", r.metric},
                 {"value", r.value},
                 {"reference", r.reference},
                 {"comparator", r.comparator},
                 {"tol", r.tol},
                 {"pass", r.pass},
                 {"ms", r.ms}});
  }
  return a;
}

/// Collects rows for one experiment; every row embeds the full config.
class Report {
 public:
  explicit Report(const ExperimentConfig& c) : cfg_(c) {
    nlohmann::json p = c.params;
    p["seed"] = c.seed;
    p["cap"] = c.cap;
    base_ = p;
  }

  void add(const std::string& metric, double value, double reference, const std::string& cmp, double tol = 0.0,
           const nlohmann::json& extra = nullptr) {
    ReportRow r;
    r.experiment = cfg_.name;
    nlohmann::json p = base_;
    if (!extra.is_null())
      for (auto it = extra.begin(); it != extra.end(); ++it) p[it.key()] = it.value();
    r.param_json = p.dump();
    r.metric = metric;
    r.value = value;
    r.reference = reference;
    r.comparator = cmp;
    r.tol = tol;
    r.pass = recompute_pass(r);
    rows_.push_back(std::move(r));
  }
  void info(const std::string& metric, double value, const nlohmann::json& extra = nullptr) {
    add(metric, value, 0.0, "info", 0.0, extra);
  }
  /// Stochastic row: |value - reference| <= 3 sigma, with trials and sigma in the params.
  void near3s(const std::string& metric, double value, double reference, double sigma, std::size_t trials,
              nlohmann::json extra = nlohmann::json::object()) {
    extra["trials"] = trials;
    extra["std_error"] = sigma;
    add(metric, value, reference, "~", 3.0 * sigma, extra);
  }

  std::vector<ReportRow>& rows() { return rows_; }

 private:
  const ExperimentConfig& cfg_;
  nlohmann::json base_;
  std::vector<ReportRow> rows_;
};

inline double bernoulli_sigma(double p, std::size_t n) { return std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(n)); }

// ---------------------------------------------------------------------------
// Experiments

namespace experiments {

inline void fvdg(const ExperimentConfig& c, Report& rep, Rng& rng) {
  const std::size_t pairs = c.count("pairs", 1000);
  double lower = -1.0, upper = -1.0;
  for (std::size_t i = 0; i < pairs; ++i) {
    Rng r = rng.split(i);
    const std::size_t d = 2 + r.below(7);
    const auto a = random_density_matrix(d, r, 1 + r.below(d));
    const auto b = random_density_matrix(d, r, 1 + r.below(d));
    const double td = trace_distance(a, b), f = fidelity(a, b);
    lower = std::max(lower, (1.0 - std::sqrt(f)) - td);
    upper = std::max(upper, td - std::sqrt(std::max(0.0, 1.0 - f)));
  }
  rep.add("max(1-sqrtF - T)", lower, 0.0, "<=", kTol, {{"pairs", pairs}});
  rep.add("max(T - sqrt(1-F))", upper, 0.0, "<=", kTol, {{"pairs", pairs}});
}

inline void twirl(const ExperimentConfig& c, Report& rep, Rng& rng) {
  const std::size_t states = c.count("states", 100);
  double worst = 0.0;
  for (std::size_t i = 0; i < states; ++i) {
    Rng r = rng.split(i);
    const std::size_t n = 1 + r.below(2);
    const std::size_t d = std::size_t{1} << n;
    const auto rho = random_density_matrix(d, r, 1 + r.below(d));
    const auto t = pauli_twirl(rho);
    const auto dd = static_cast<Eigen::Index>(d);
    worst = std::max(worst, trace_norm(t.matrix() - Mat::Identity(dd, dd) / static_cast<double>(d)));
  }
  rep.add("max ||twirl(rho) - I/d||_1", worst, 0.0, "<=", kExactTol, {{"states", states}});
  const auto e = efi_from_qpotp(toy_qpotp(c.count("kappa", 1), c.count("ell", 2)));
  rep.add("||rho0' - rho1'||_1", trace_norm(e.hybrid.rho0.matrix() - e.hybrid.rho1.matrix()), 0.0, "<=", kExactTol);
}

inline void pgm_check(const ExperimentConfig& c, Report& rep, Rng& rng) {
  const std::size_t ensembles = c.count("ensembles", 200);
  double slack = -1.0;
  for (std::size_t i = 0; i < ensembles; ++i) {
    Rng r = rng.split(i);
    const std::size_t d = 2 + r.below(3), m = 2 + r.below(3);
    std::vector<DensityMatrix> st;
    for (std::size_t j = 0; j < m; ++j) st.push_back(random_density_matrix(d, r, 1 + r.below(d)));
    const auto pr = pgm_error_report(Ensemble::uniform(st));
    slack = std::max(slack, pr.max_error - pr.bound);
  }
  rep.add("max(pgm error - sum sqrtF)", slack, 0.0, "<=", kTol, {{"ensembles", ensembles}});
  double gram = 0.0;
  std::size_t instances = 0;
  for (std::size_t d = 2; d <= 4; ++d)
    for (std::size_t t = 1; t <= 4; ++t) {
      Rng r = rng.split(1000 + d * 10 + t);
      std::vector<PureState> ps;
      std::vector<DensityMatrix> powered;
      for (std::size_t j = 0; j < 3; ++j) {
        ps.push_back(haar_random_state(d, r));
        powered.push_back(tensor_power(DensityMatrix::from_pure(ps.back()), t));
      }
      const auto g = gram_pgm_success(ps, std::vector<double>(3, 1.0 / 3.0), t);
      const Povm full = pgm(Ensemble::uniform(powered));
      for (std::size_t j = 0; j < 3; ++j) gram = std::max(gram, std::abs(g.success[j] - full.probability(j, powered[j])));
      ++instances;
    }
  rep.add("max |gram - full pgm|", gram, 0.0, "<=", kTol, {{"instances", instances}});
}

inline void sym_subspace(const ExperimentConfig& c, Report& rep, Rng& rng) {
  const std::size_t samples = c.count("samples", 200000);
  const std::vector<std::array<std::size_t, 3>> cases{{2, 2, 1}, {4, 2, 3}, {4, 3, 2}};
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto [d, r, K] = cases[i];
    std::vector<PureState> xi;
    for (std::size_t k = 0; k < K; ++k) xi.push_back(PureState::basis(RegisterShape{{"S", d}}, k));
    const Prsg g(std::vector<double>(K, 1.0 / static_cast<double>(K)), xi);
    Rng s = rng.split(i);
    const auto m = haar_collision_expectation(g, r, samples, s);
    const double exact = symmetric_collision_exact(K, d, r);
    const nlohmann::json p{{"d", d}, {"r", r}, {"K", K}};
    rep.near3s("E sum |<xi|psi>|^2r", m.mean, exact, m.std_error, samples, p);
    rep.add("exact <= K r!/d^r", exact, symmetric_collision_bound(K, d, r), "<=", kExactTol, p);
  }
}

inline void amplify(const ExperimentConfig& c, Report& rep, Rng& rng) {
  const std::size_t n = c.count("n", 2), q = c.count("q", 3), trials = c.count("trials", 2000);
  const double delta = c.num("delta", 0.75), scale = c.num("scale", 1.0);
  const std::size_t K = c.count("K", 4);
  // hint h per slot with t = 1: repeated-solver success h^n = delta^n
  const auto p = uniform_synthetic_puzzle(K, delta);
  const auto solver = basis_measuring_solver(n, 1);
  const AmplificationParams a{n, q, delta, 1, scale};
  const auto run = run_amplification(p, solver, a, trials, rng);
  rep.info("L(1)", static_cast<double>(a.L(1)));
  rep.info("N_1", static_cast<double>(a.N(1)));
  rep.info("M_1", static_cast<double>(a.M(1)));
  rep.info("t'", static_cast<double>(a.t_prime()));
  rep.info("abort_rate", run.abort_rate, {{"trials", trials}});
  rep.add("max copies used <= t'", static_cast<double>(run.max_copies_used), static_cast<double>(a.t_prime()), "<=", 0.0);
  const double se = bernoulli_sigma(run.success.rate, trials);
  if (n == 1) {
    rep.near3s("success vs repeated solver", run.success.rate, delta, bernoulli_sigma(delta, trials), trials);
  } else {
    rep.add("success >= delta(1-1/q) - 3 sigma", run.success.rate, a.target(), ">=", 3.0 * se,
            {{"trials", trials}, {"std_error", se}});
  }
}

inline void qds_game(const ExperimentConfig& c, Report& rep, Rng& rng) {
  const std::size_t K = c.count("K", 3), trials = c.count("trials", 10000);
  const auto o = orthonormal_owsg(K);
  const auto s = qds_from_owsg(o);
  std::size_t i = 0;
  for (double w : {0.25, 0.5, 1.0}) {
    Rng r = rng.split(i++);
    const auto f = planted_forger(K, w);
    const double win = forgery_game(s, f, 1, 1, trials, r).win.rate;
    const double inv = inversion_success(o, owsg_breaker_from_forger(o, f, 1), trials, r).rate;
    rep.near3s("forger win", win, w, bernoulli_sigma(w, trials), trials, {{"w", w}});
    rep.near3s("inverter success = w/2", inv, w / 2.0, bernoulli_sigma(w / 2.0, trials), trials, {{"w", w}});
  }
}

inline void good_event(const ExperimentConfig& c, Report& rep, Rng& rng) {
  const std::size_t trials = c.count("trials", 100000);
  std::size_t i = 0;
  for (auto [q, l] : std::vector<std::pair<std::size_t, std::size_t>>{{2, 3}, {3, 5}, {4, 4}}) {
    Rng r = rng.split(i++);
    const auto g = good_event_probability(q, l, trials, r);
    const nlohmann::json p{{"q", q}, {"lambda", l}};
    rep.near3s("Good monte carlo", g.monte_carlo.rate, g.analytic, bernoulli_sigma(g.analytic, trials), trials, p);
    rep.add("analytic >= 1-(1-1/e)^lambda", g.analytic, g.bound, ">=", kExactTol, p);
  }
}

inline void money_clone(const ExperimentConfig& c, Report& rep, Rng& rng) {
  const std::size_t trials = c.count("trials", 50);
  for (std::size_t p : {1u, 2u})
    for (std::size_t t : {1u, 2u}) {
      const double a = 1.0 / (8.0 * static_cast<double>(p));
      const std::size_t ell = cloner_copies(p, t);
      const double tail = binomial_count_tail(ell, a, t + 1);
      const nlohmann::json par{{"p", p}, {"t", t}, {"ell", ell}};
      rep.add("Pr[Count >= t+1] >= 1-2e^{-2p}", tail, 1.0 - 2.0 * std::exp(-2.0 * static_cast<double>(p)), ">=", 0.0, par);
      Rng r = rng.split(p * 10 + t);
      const auto cr = inverter_to_cloner(cross_accept_money(a), swapping_inverter(t), p, t, trials, r);
      rep.add("cloner tail = binomial tail", cr.tail.mean, tail, "~", kExactTol, par);
    }
}

inline void qpotp_efi(const ExperimentConfig& c, Report& rep, Rng& rng) {
  const std::size_t kappa = c.count("kappa", 1), ell = c.count("ell", 2);
  const auto s = toy_qpotp(kappa, ell);
  const auto e = efi_from_qpotp(s);
  rep.info("dim", static_cast<double>(e.pair.rho0.dim()));
  rep.add("trace_distance(rho0, rho1)", e.pair.distance(), c.num("threshold", 0.05), ">");
  rep.add("||rho0' - rho1'||_1", trace_norm(e.hybrid.rho0.matrix() - e.hybrid.rho1.matrix()), 0.0, "<=", kExactTol);
  const auto payload = partial_trace(e.pair.rho0, {"P", "Q"});
  const auto M = static_cast<Eigen::Index>(payload.dim());
  rep.add("||Tr_ct rho0 - I/d||_1", trace_norm(payload.matrix() - Mat::Identity(M, M) / static_cast<double>(M)), 0.0, "<=", kExactTol);
  Rng r = rng.split(0);
  const auto rho = random_density_matrix(2, r);
  rep.add("twirl residual", trace_norm(pauli_twirl(rho).matrix() - Mat::Identity(2, 2) / 2.0), 0.0, "<=", kExactTol);
  if (s.short_key()) {
    const auto w = wrong_message_bound_check(s, matching_key_adversary(s));
    rep.add("wrong-message lhs <= 2^k/2^l", w.lhs, w.rhs, "<=", kExactTol);
  }
}

inline void wrong_msg(const ExperimentConfig&, Report& rep, Rng&) {
  for (auto [k, l] : std::vector<std::pair<std::size_t, std::size_t>>{{1, 2}, {1, 3}, {2, 3}, {1, 4}, {2, 4}, {3, 4}}) {
    const auto s = toy_qpotp(k, l);
    const nlohmann::json p{{"kappa", k}, {"ell", l}};
    double worst = 0.0, rhs = 0.0;
    for (std::uint64_t key = 0; key < s.keys(); ++key) {
      const auto w = wrong_message_bound_check(s, constant_key_adversary(s, key));
      worst = std::max(worst, w.lhs);
      rhs = w.rhs;
    }
    const auto m = wrong_message_bound_check(s, matching_key_adversary(s));
    worst = std::max(worst, m.lhs);
    rep.add("max lhs <= 2^k/2^l", worst, rhs, "<=", kExactTol, p);
    rep.add("sum over keys = 2^k/2^l", m.sum_over_keys, rhs, "~", kExactTol, p);
  }
}

inline void commit_metrics(const ExperimentConfig& c, Report& rep, Rng& rng) {
  const std::size_t n = c.count("commitments", 100), attacks = c.count("attacks", 50);
  double polar = 0.0, dominance = -1.0, fvdg = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    Rng r = rng.split(i);
    const auto cm = random_commitment(2 + r.below(2), 2 + r.below(2), r);
    const double adv = unbounded_binding_advantage(cm);
    const double h = hiding_distance(cm);
    fvdg = std::max({fvdg, (1.0 - adv) - h, h - std::sqrt(std::max(0.0, 1.0 - adv * adv))});
    polar = std::max(polar, std::abs(binding_overlap(cm, polar_binding_attack(cm), PureState::basis(RegisterShape{{"Z", 1}}, 0)) - adv));
    for (std::size_t j = 0; j < attacks; ++j) {
      const std::size_t dz = 1 + r.below(3);
      const Mat u = random_unitary(cm.r_shape().dim() * dz, r);
      dominance = std::max(dominance, binding_overlap(cm, u, haar_random_state(RegisterShape{{"Z", dz}}, r)) - adv);
    }
  }
  rep.add("max |polar attack - sqrtF|", polar, 0.0, "<=", 1e-6, {{"commitments", n}});
  rep.add("max(binding_overlap - sqrtF)", dominance, 0.0, "<=", kTol, {{"commitments", n}, {"attacks", attacks}});
  rep.add("max hiding outside [1-sqrtF, sqrt(1-F)]", fvdg, 0.0, "<=", kTol, {{"commitments", n}});
}

inline void commit_from_svsi(const ExperimentConfig& c, Report& rep, Rng& rng) {
  const std::size_t t = c.count("t", 1), samples = c.count("attacks", 50);
  const std::string fixture = c.str("fixture", "orthogonal");
  SvSiOwsg f;
  if (fixture == "orthogonal") f = orthogonal_svsi(c.count("K", 2));
  else if (fixture == "overlap") f = overlap_svsi(c.num("c", 0.5));
  else throw UsageError("commit from-svsi: unknown fixture '" + fixture + "'");
  const auto s = commitment_from_svsi(f, t);
  const auto w = hiding_witness(s);
  rep.info("dim", static_cast<double>(s.c.shape.dim()));
  if (fixture == "orthogonal") rep.add("hiding_distance", w.hiding, 0.0, "<=", 1e-6);
  else rep.info("hiding_distance", w.hiding);
  rep.add("witness overlap = sum Pr[k](1-eps_k)", w.overlap, w.identification, "~", kTol);
  rep.add("hiding <= sqrt(1-overlap^2)", w.hiding, w.pure_bound, "<=", kTol);
  rep.info("2 max eps", 2.0 * w.id.max_error);
  double worst = -1.0;
  for (std::size_t i = 0; i < samples; ++i) {
    Rng r = rng.split(i);
    const std::size_t dz = 1 + r.below(2);
    const Mat u = random_unitary(s.c.r_shape().dim() * dz, r);
    const auto ch = binding_chain(s, u, haar_random_state(RegisterShape{{"Z", dz}}, r));
    worst = std::max({worst, ch.overlap_sq - ch.triangle, ch.triangle - ch.jensen, ch.jensen - ch.inverter});
  }
  rep.add("max Jensen-chain step violation", worst, 0.0, "<=", kTol, {{"attacks", samples}});
}

inline std::vector<std::pair<std::string, EfiPair>> efi_fixtures() {
  return {{"zero-plus", zero_plus_efi()}, {"orthogonal", orthogonal_efi()}, {"coin-0.3", biased_coin_efi(0.3)},
          {"coin-0.45", biased_coin_efi(0.45)}};
}

inline void efi_amplify_exp(const ExperimentConfig& c, Report& rep, Rng&) {
  const std::size_t max_n = c.count("copies", 4);
  const auto fits = [&](const SvSiOwsg& f, std::size_t n) {
    double d = 1.0;
    for (std::size_t i = 0; i < 2 * n; ++i) d *= static_cast<double>(f.family.shape().dim());
    return d <= static_cast<double>(dimension_cap());
  };
  for (const auto& [name, e] : efi_fixtures()) {
    const double d1 = e.distance(), f = fidelity(e.rho0, e.rho1);
    for (std::size_t n = 1; n <= max_n; ++n) {
      const double d = efi_amplify(e, n).distance();
      const nlohmann::json p{{"fixture", name}, {"n", n}};
      rep.add("EFI remark 1-exp(-n||.||_1/4)", d, tensor_power_bound(d1, n), ">=", kTol, p);
      rep.add("1-F^{n/2}", d, tensor_power_fidelity_bound(f, n), ">=", kTol, p);
    }
    const auto sv = svsi_from_efi(e, 1);
    for (std::size_t n = 1; n <= max_n && fits(sv, n); ++n) {
      const auto a = svsi_amplify(sv, 1, n);
      rep.add("SV-SI lemma min distance >= bound", a.holds ? 1.0 : 0.0, 1.0, ">=", 0.0,
              {{"fixture", "svsi:" + name}, {"copies", n}, {"nominal_copies", a.nominal_copies}, {"min_distance", a.min_distance},
               {"min_bound", a.min_bound}});
    }
  }
  for (const auto& [name, f] : std::vector<std::pair<std::string, SvSiOwsg>>{{"svsi:orthogonal3", orthogonal_svsi(3)},
                                                                               {"svsi:overlap0.6", overlap_svsi(0.6)}}) {
    for (std::size_t n = 1; n <= max_n && fits(f, n); ++n) {
      const auto a = svsi_amplify(f, 1, n);
      rep.add("SV-SI lemma min distance >= bound", a.holds ? 1.0 : 0.0, 1.0, ">=", 0.0,
              {{"fixture", name}, {"copies", n}, {"nominal_copies", a.nominal_copies}, {"min_distance", a.min_distance},
               {"min_bound", a.min_bound}});
    }
  }
}

/// Always fails: exercises the nonzero exit path.
inline void planted_negative(const ExperimentConfig&, Report& rep, Rng&) { rep.add("planted failure", 1.0, 0.0, "<=", 0.0); }

}  // namespace experiments

using ExperimentFn = std::function<void(const ExperimentConfig&, Report&, Rng&)>;

inline const std::map<std::string, ExperimentFn>& registry() {
  static const std::map<std::string, ExperimentFn> r{
      {"check fvdg", experiments::fvdg},
      {"check twirl", experiments::twirl},
      {"check pgm", experiments::pgm_check},
      {"check sym-subspace", experiments::sym_subspace},
      {"check negative", experiments::planted_negative},
      {"amplify", experiments::amplify},
      {"qds game", experiments::qds_game},
      {"qds good-event", experiments::good_event},
      {"money clone", experiments::money_clone},
      {"qpotp efi", experiments::qpotp_efi},
      {"qpotp wrong-msg", experiments::wrong_msg},
      {"commit metrics", experiments::commit_metrics},
      {"commit from-svsi", experiments::commit_from_svsi},
      {"efi amplify", experiments::efi_amplify_exp},
  };
  return r;
}

/// The default suite: every registered experiment except the planted negative.
inline std::vector<std::string> default_suite() {
  std::vector<std::string> names;
  for (const auto& [k, v] : registry())
    if (k != "check negative") names.push_back(k);
  return names;
}

inline std::vector<ReportRow> run(const ExperimentConfig& c) {
  const auto& reg = registry();
  const auto it = reg.find(c.name);
  if (it == reg.end()) throw UsageError("unknown experiment '" + c.name + "'");
  ScopedDimensionCap cap(c.cap);
  Rng rng(c.seed);
  Report rep(c);
  const auto start = std::chrono::steady_clock::now();
  it->second(c, rep, rng);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  for (auto& r : rep.rows()) r.ms = c.timing ? std::round(ms * 1000.0) / 1000.0 : 0.0;
  return std::move(rep.rows());
}

struct SuiteResult {
  std::vector<ReportRow> rows;
  bool all_pass = true;
};

/// Runs each experiment with seed xor index; structural errors propagate.
inline SuiteResult suite(const std::vector<std::string>& names, const ExperimentConfig& base) {
  SuiteResult s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    ExperimentConfig c = base;
    c.name = names[i];
    c.seed = base.seed ^ static_cast<std::uint64_t>(i);
    for (auto& r : run(c)) {
      s.all_pass = s.all_pass && r.pass;
      s.rows.push_back(std::move(r));
    }
  }
  return s;
}

/// Flat "key = value" lines; '#' starts a comment.
inline nlohmann::json parse_config_text(const std::string& text) {
  nlohmann::json out = nlohmann::json::object();
  std::istringstream is(text);
  std::string line;
  std::size_t no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++no;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw UsageError("config line " + std::to_string(no) + ": empty key");
    out[key] = value;
  }
  return out;
}

/// Appends the whole CSV text in one write.
inline void append_report(const std::string& path, const std::vector<ReportRow>& rows) {
  std::ifstream probe(path);
  const bool fresh = !probe.good() || probe.peek() == std::ifstream::traits_type::eof();
  probe.close();
  std::string text = to_csv(rows);
  if (!fresh) text = text.substr(text.find('\n') + 1);
  std::ofstream os(path, std::ios::app | std::ios::binary);
  if (!os) throw UsageError("cannot open output file '" + path + "'");
  os << text;
}

}  // namespace owsg
