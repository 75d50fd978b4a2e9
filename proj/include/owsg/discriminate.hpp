#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "owsg/qstate.hpp"

namespace owsg {

/// Weighted list of states on one shape.
class Ensemble {
 public:
  struct Item {
    std::string label;
    double weight = 0.0;
    DensityMatrix state;
  };

  Ensemble() = default;
  explicit Ensemble(std::vector<Item> items) : items_(std::move(items)) {
    if (items_.empty()) throw PreconditionError("Ensemble: no items");
    double total = 0.0;
    for (const auto& it : items_) {
      if (it.weight < 0.0) throw PreconditionError("Ensemble: negative weight for '" + it.label + "'");
      require_same_shape(items_.front().state.shape(), it.state.shape(), "Ensemble");
      total += it.weight;
    }
    if (std::abs(total - 1.0) > kTol) throw PreconditionError("Ensemble: weights do not sum to 1");
  }

  /// Equal weights, labels "0", "1", ...
  static Ensemble uniform(const std::vector<DensityMatrix>& states) {
    std::vector<Item> items;
    for (std::size_t i = 0; i < states.size(); ++i) {
      items.push_back({std::to_string(i), 1.0 / static_cast<double>(states.size()), states[i]});
    }
    return Ensemble(std::move(items));
  }

  const std::vector<Item>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  const RegisterShape& shape() const { return items_.front().state.shape(); }

 private:
  std::vector<Item> items_;
};

/// Best two-outcome distinguishing advantage, i.e. the trace distance.
inline double helstrom_advantage(const DensityMatrix& rho, const DensityMatrix& sigma) {
  return trace_distance(rho, sigma);
}

inline const std::string kOutsideSupport = "⊥";

/// Pretty-good measurement mu_i = S^{-1/2} rho_i S^{-1/2} with S = sum_i rho_i
/// (unweighted). The projector off the support of S is the extra outcome "⊥".
inline Povm pgm(const Ensemble& ens, double cutoff = 1e-12) {
  const auto d = static_cast<Eigen::Index>(ens.shape().dim());
  Mat sigma = Mat::Zero(d, d);
  for (const auto& it : ens.items()) sigma += it.state.matrix();
  Eigen::SelfAdjointEigenSolver<Mat> es(hermitize(sigma));
  Eigen::VectorXcd inv(d), outside(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double ev = es.eigenvalues()(i);
    inv(i) = ev > cutoff ? 1.0 / std::sqrt(ev) : 0.0;
    outside(i) = ev > cutoff ? 0.0 : 1.0;
  }
  const Mat& v = es.eigenvectors();
  const Mat s = v * inv.asDiagonal() * v.adjoint();
  std::vector<Povm::Effect> effects;
  for (const auto& it : ens.items()) effects.push_back({it.label, hermitize(s * it.state.matrix() * s)});
  effects.push_back({kOutsideSupport, v * outside.asDiagonal() * v.adjoint()});
  return Povm(ens.shape(), std::move(effects));
}

struct PgmReport {
  std::vector<double> error;  ///< 1 - Tr(mu_i rho_i) per label
  double max_error = 0.0;
  double average_error = 0.0;  ///< weighted by the ensemble weights
  double bound = 0.0;          ///< sum over i != j of sqrt(F(rho_i, rho_j))
};

inline PgmReport pgm_error_report(const Ensemble& ens) {
  const Povm m = pgm(ens);
  PgmReport r;
  const auto& items = ens.items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    const double e = 1.0 - m.probability(i, items[i].state);
    r.error.push_back(e);
    r.max_error = std::max(r.max_error, e);
    r.average_error += items[i].weight * e;
    for (std::size_t j = 0; j < items.size(); ++j) {
      if (i != j) r.bound += std::sqrt(fidelity(items[i].state, items[j].state));
    }
  }
  return r;
}

struct GramPgmResult {
  std::vector<double> success;
  double average_success = 0.0;
};

/// Square-root measurement on {|phi_k>^{(x) t}} from the Gram matrix
/// G_kk' = <phi_k|phi_k'>^t: success_k = |(sqrt G)_kk|^2. Weights only enter
/// the average.
inline GramPgmResult gram_pgm_success(const std::vector<PureState>& states, const std::vector<double>& weights,
                                      std::size_t t) {
  if (t < 1) throw PreconditionError("gram_pgm_success: t must be >= 1");
  if (weights.size() != states.size()) throw ShapeError("gram_pgm_success: weight count mismatch");
  const auto n = static_cast<Eigen::Index>(states.size());
  Mat g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      require_same_shape(states[i].shape(), states[j].shape(), "gram_pgm_success");
      const cplx c = states[i].amplitudes().dot(states[j].amplitudes());
      cplx p = 1.0;
      for (std::size_t s = 0; s < t; ++s) p *= c;
      g(i, j) = p;
    }
  }
  const Mat root = psd_sqrt(g);
  GramPgmResult r;
  for (Eigen::Index k = 0; k < n; ++k) {
    r.success.push_back(std::norm(root(k, k)));
    r.average_success += weights[k] * r.success.back();
  }
  return r;
}

/// Mixed input is rejected here rather than silently purified.
inline std::vector<PureState> require_pure(const std::vector<DensityMatrix>& states) {
  std::vector<PureState> out;
  for (const auto& s : states) {
    if (std::abs(s.purity() - 1.0) > kTol) throw PreconditionError("expected pure states, got purity " + std::to_string(s.purity()));
    Eigen::SelfAdjointEigenSolver<Mat> es(s.matrix());
    out.emplace_back(s.shape(), Vec(es.eigenvectors().col(es.eigenvectors().cols() - 1)));
  }
  return out;
}

}  // namespace owsg
