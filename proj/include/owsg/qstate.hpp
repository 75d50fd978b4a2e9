#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "owsg/rng.hpp"

namespace owsg {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

inline constexpr double kTol = 1e-9;
inline constexpr double kExactTol = 1e-12;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
/// Label collisions, unknown labels, mismatched shapes.
struct ShapeError : Error {
  using Error::Error;
};
/// A dimension exceeded the configured cap.
struct SizingError : Error {
  using Error::Error;
};
/// Input violates a documented precondition (non-PSD, asymmetric scheme, ...).
struct PreconditionError : Error {
  using Error::Error;
};
/// Caller broke an interface contract (copy budgets, query budgets, ...).
struct UsageError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Dimension cap

namespace detail {
inline std::atomic<std::size_t>& dim_cap_storage() {
  static std::atomic<std::size_t> cap{4096};
  return cap;
}
}  // namespace detail

inline std::size_t dimension_cap() { return detail::dim_cap_storage().load(); }
inline void set_dimension_cap(std::size_t cap) { detail::dim_cap_storage().store(cap); }

/// Temporarily replaces the dimension cap; restores the old value on exit.
class ScopedDimensionCap {
 public:
  explicit ScopedDimensionCap(std::size_t cap) : saved_(dimension_cap()) { set_dimension_cap(cap); }
  ~ScopedDimensionCap() { set_dimension_cap(saved_); }
  ScopedDimensionCap(const ScopedDimensionCap&) = delete;
  ScopedDimensionCap& operator=(const ScopedDimensionCap&) = delete;

 private:
  std::size_t saved_;
};

inline void check_dim(std::size_t dim, const std::string& what) {
  if (dim > dimension_cap()) {
    throw SizingError(what + ": dimension " + std::to_string(dim) + " exceeds cap " +
                      std::to_string(dimension_cap()));
  }
}

/// Product of dims with overflow and cap checking.
inline std::size_t checked_product(const std::vector<std::size_t>& dims, const std::string& what) {
  std::size_t d = 1;
  for (std::size_t x : dims) {
    if (x != 0 && d > std::numeric_limits<std::size_t>::max() / x) {
      throw SizingError(what + ": dimension overflow");
    }
    d *= x;
    check_dim(d, what);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Register shapes

struct Factor {
  std::string label;
  std::size_t dim = 1;
  bool operator==(const Factor&) const = default;
};

/// Ordered tensor factors. The first factor is the most significant digit of
/// a basis index (Kronecker order).
class RegisterShape {
 public:
  RegisterShape() = default;
  RegisterShape(std::vector<Factor> factors) : factors_(std::move(factors)) { validate(); }
  RegisterShape(std::initializer_list<Factor> factors) : factors_(factors) { validate(); }

  /// `n` factors of dimension `d` labelled prefix0, prefix1, ...
  static RegisterShape uniform(const std::string& prefix, std::size_t n, std::size_t d = 2) {
    std::vector<Factor> f;
    for (std::size_t i = 0; i < n; ++i) f.push_back({prefix + std::to_string(i), d});
    return RegisterShape(std::move(f));
  }

  const std::vector<Factor>& factors() const { return factors_; }
  std::size_t size() const { return factors_.size(); }
  std::size_t dim() const {
    std::size_t d = 1;
    for (const auto& f : factors_) d *= f.dim;
    return d;
  }
  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> d;
    for (const auto& f : factors_) d.push_back(f.dim);
    return d;
  }
  std::vector<std::string> labels() const {
    std::vector<std::string> l;
    for (const auto& f : factors_) l.push_back(f.label);
    return l;
  }

  bool has(const std::string& label) const {
    return std::any_of(factors_.begin(), factors_.end(), [&](const Factor& f) { return f.label == label; });
  }

  std::size_t index_of(const std::string& label) const {
    for (std::size_t i = 0; i < factors_.size(); ++i) {
      if (factors_[i].label == label) return i;
    }
    throw ShapeError("unknown register label '" + label + "'");
  }

  RegisterShape concat(const RegisterShape& other) const {
    std::vector<Factor> f = factors_;
    f.insert(f.end(), other.factors_.begin(), other.factors_.end());
    return RegisterShape(std::move(f));
  }

  /// Sub-shape with the given labels, in the given order.
  RegisterShape select(const std::vector<std::string>& labels) const {
    std::vector<Factor> f;
    for (const auto& l : labels) f.push_back(factors_[index_of(l)]);
    return RegisterShape(std::move(f));
  }

  /// Same dims, labels prefixed (used to keep tensor powers collision free).
  RegisterShape prefixed(const std::string& prefix) const {
    std::vector<Factor> f = factors_;
    for (auto& x : f) x.label = prefix + x.label;
    return RegisterShape(std::move(f));
  }

  /// Same dims, new labels.
  RegisterShape relabeled(const std::vector<std::string>& labels) const {
    if (labels.size() != factors_.size()) throw ShapeError("relabel: label count mismatch");
    std::vector<Factor> f = factors_;
    for (std::size_t i = 0; i < f.size(); ++i) f[i].label = labels[i];
    return RegisterShape(std::move(f));
  }

  bool operator==(const RegisterShape&) const = default;

  std::string str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < factors_.size(); ++i) {
      if (i) s += ",";
      s += factors_[i].label + ":" + std::to_string(factors_[i].dim);
    }
    return s + "]";
  }

 private:
  void validate() const {
    for (std::size_t i = 0; i < factors_.size(); ++i) {
      if (factors_[i].dim < 1) throw ShapeError("factor '" + factors_[i].label + "' has dim 0");
      for (std::size_t j = 0; j < i; ++j) {
        if (factors_[i].label == factors_[j].label) {
          throw ShapeError("duplicate register label '" + factors_[i].label + "'");
        }
      }
    }
    checked_product(dims(), "shape " + str());
  }

  std::vector<Factor> factors_;
};

inline void require_same_shape(const RegisterShape& a, const RegisterShape& b, const char* what) {
  if (a.dims() != b.dims()) throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

// ---------------------------------------------------------------------------
// Small linear-algebra helpers

inline Mat hermitize(const Mat& m) { return (m + m.adjoint()) * 0.5; }

inline double max_abs(const Mat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

inline Mat kron(const Mat& a, const Mat& b) {
  Mat r(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      r.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return r;
}

inline Vec kron(const Vec& a, const Vec& b) {
  Vec r(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) r.segment(i * b.size(), b.size()) = a(i) * b;
  return r;
}

/// Eigenvalues of the Hermitian part, ascending.
inline Eigen::VectorXd eigvalsh(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(hermitize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline bool is_hermitian(const Mat& m, double tol = kTol) {
  return m.rows() == m.cols() && max_abs(m - m.adjoint()) <= tol;
}

inline bool is_psd(const Mat& m, double tol = kTol) {
  if (!is_hermitian(m, tol)) return false;
  return m.rows() == 0 || eigvalsh(m).minCoeff() >= -tol;
}

inline bool is_unitary(const Mat& u, double tol = kTol) {
  return u.rows() == u.cols() && max_abs(u.adjoint() * u - Mat::Identity(u.rows(), u.cols())) <= tol;
}

/// Apply f to the eigenvalues of a Hermitian matrix.
template <class F>
Mat hermitian_function(const Mat& m, F&& f) {
  Eigen::SelfAdjointEigenSolver<Mat> es(hermitize(m));
  Eigen::VectorXd ev = es.eigenvalues();
  Eigen::VectorXcd fv(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) fv(i) = f(ev(i));
  return es.eigenvectors() * fv.asDiagonal() * es.eigenvectors().adjoint();
}

struct SqrtPinv {
  Mat sqrt;
  Mat pinv_sqrt;
};

/// Square root, and inverse square root restricted to eigenvalues above `cutoff`.
inline SqrtPinv psd_sqrt_and_pinv(const Mat& m, double cutoff = 1e-12) {
  if (!is_hermitian(m)) throw PreconditionError("psd_sqrt_and_pinv: matrix is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Mat> es(hermitize(m));
  const Eigen::VectorXd ev = es.eigenvalues();
  if (ev.size() && ev.minCoeff() < -kTol) throw PreconditionError("psd_sqrt_and_pinv: matrix is not PSD");
  Eigen::VectorXcd s(ev.size()), p(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    const double x = std::max(ev(i), 0.0);
    s(i) = std::sqrt(x);
    p(i) = ev(i) > cutoff ? 1.0 / std::sqrt(ev(i)) : 0.0;
  }
  const Mat& v = es.eigenvectors();
  return {v * s.asDiagonal() * v.adjoint(), v * p.asDiagonal() * v.adjoint()};
}

/// Sum of singular values.
inline double trace_norm(const Mat& m) {
  if (m.rows() == m.cols() && is_hermitian(m, 1e-12)) return eigvalsh(m).cwiseAbs().sum();
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues().sum();
}

// ---------------------------------------------------------------------------
// States

class PureState {
 public:
  PureState() = default;
  PureState(RegisterShape shape, Vec amplitudes) : shape_(std::move(shape)), amp_(std::move(amplitudes)) {
    if (static_cast<std::size_t>(amp_.size()) != shape_.dim()) {
      throw ShapeError("PureState: amplitude length " + std::to_string(amp_.size()) + " != dim " +
                       std::to_string(shape_.dim()));
    }
    if (std::abs(amp_.norm() - 1.0) > kTol) throw PreconditionError("PureState: amplitudes are not unit norm");
  }

  static PureState basis(RegisterShape shape, std::size_t index) {
    Vec v = Vec::Zero(static_cast<Eigen::Index>(shape.dim()));
    if (index >= shape.dim()) throw ShapeError("PureState::basis: index out of range");
    v(static_cast<Eigen::Index>(index)) = 1.0;
    return PureState(std::move(shape), std::move(v));
  }

  /// Normalizes `v` first.
  static PureState normalized(RegisterShape shape, const Vec& v) {
    const double n = v.norm();
    if (n == 0.0) throw PreconditionError("PureState::normalized: zero vector");
    return PureState(std::move(shape), v / n);
  }

  const RegisterShape& shape() const { return shape_; }
  const Vec& amplitudes() const { return amp_; }
  std::size_t dim() const { return shape_.dim(); }

  PureState relabeled(const std::vector<std::string>& labels) const {
    PureState s = *this;
    s.shape_ = shape_.relabeled(labels);
    return s;
  }

 private:
  RegisterShape shape_;
  Vec amp_;
};

class DensityMatrix {
 public:
  DensityMatrix() = default;
  /// Validates Hermiticity, unit trace and PSD within 1e-9.
  DensityMatrix(RegisterShape shape, Mat m) : shape_(std::move(shape)), m_(std::move(m)) {
    check_square();
    if (!is_hermitian(m_)) throw PreconditionError("DensityMatrix: not Hermitian");
    if (std::abs(m_.trace() - cplx(1.0)) > kTol) throw PreconditionError("DensityMatrix: trace is not 1");
    m_ = hermitize(m_);
    if (eigvalsh(m_).minCoeff() < -kTol) throw PreconditionError("DensityMatrix: not PSD");
  }

  /// Skips the eigenvalue check; for results of trace-preserving maps on valid states.
  static DensityMatrix trusted(RegisterShape shape, Mat m) {
    DensityMatrix d;
    d.shape_ = std::move(shape);
    d.m_ = std::move(m);
    d.check_square();
    return d;
  }

  static DensityMatrix from_pure(const PureState& psi) {
    const Vec& a = psi.amplitudes();
    return trusted(psi.shape(), a * a.adjoint());
  }

  static DensityMatrix basis(RegisterShape shape, std::size_t index) {
    return from_pure(PureState::basis(std::move(shape), index));
  }

  static DensityMatrix maximally_mixed(RegisterShape shape) {
    const auto d = static_cast<Eigen::Index>(shape.dim());
    return trusted(std::move(shape), Mat::Identity(d, d) / static_cast<double>(d));
  }

  const RegisterShape& shape() const { return shape_; }
  const Mat& matrix() const { return m_; }
  std::size_t dim() const { return shape_.dim(); }
  double purity() const { return (m_ * m_).trace().real(); }

  DensityMatrix relabeled(const std::vector<std::string>& labels) const {
    return trusted(shape_.relabeled(labels), m_);
  }

  /// Re(Tr(E rho)).
  double expectation(const Mat& effect) const {
    if (effect.rows() != m_.rows() || effect.cols() != m_.cols()) throw ShapeError("expectation: effect size mismatch");
    return (effect.cwiseProduct(m_.transpose())).sum().real();
  }

 private:
  void check_square() const {
    const auto d = static_cast<Eigen::Index>(shape_.dim());
    if (m_.rows() != d || m_.cols() != d) {
      throw ShapeError("DensityMatrix: matrix is " + std::to_string(m_.rows()) + "x" + std::to_string(m_.cols()) +
                       ", shape dim " + std::to_string(d));
    }
  }

  RegisterShape shape_;
  Mat m_;
};

/// Finite POVM; effects PSD and summing to the identity within 1e-9.
class Povm {
 public:
  struct Effect {
    std::string outcome;
    Mat matrix;
  };

  Povm() = default;
  Povm(RegisterShape shape, std::vector<Effect> effects) : shape_(std::move(shape)), effects_(std::move(effects)) {
    const auto d = static_cast<Eigen::Index>(shape_.dim());
    Mat sum = Mat::Zero(d, d);
    for (const auto& e : effects_) {
      if (e.matrix.rows() != d || e.matrix.cols() != d) throw ShapeError("Povm: effect '" + e.outcome + "' has wrong size");
      if (!is_psd(e.matrix)) throw PreconditionError("Povm: effect '" + e.outcome + "' is not PSD");
      sum += e.matrix;
    }
    if (max_abs(sum - Mat::Identity(d, d)) > kTol) throw PreconditionError("Povm: effects do not sum to identity");
  }

  const RegisterShape& shape() const { return shape_; }
  const std::vector<Effect>& effects() const { return effects_; }
  std::size_t size() const { return effects_.size(); }

  std::size_t index_of(const std::string& outcome) const {
    for (std::size_t i = 0; i < effects_.size(); ++i) {
      if (effects_[i].outcome == outcome) return i;
    }
    throw ShapeError("Povm: unknown outcome '" + outcome + "'");
  }

  double probability(std::size_t i, const DensityMatrix& rho) const { return rho.expectation(effects_.at(i).matrix); }

  std::vector<double> distribution(const DensityMatrix& rho) const {
    std::vector<double> p;
    for (std::size_t i = 0; i < effects_.size(); ++i) p.push_back(probability(i, rho));
    return p;
  }

 private:
  RegisterShape shape_;
  std::vector<Effect> effects_;
};

// ---------------------------------------------------------------------------
// Index bookkeeping

namespace detail {

/// For a subset `sel` of factor positions, returns a table T with
/// T[a * rest_dim + r] = full index whose `sel` digits spell a (in `sel`
/// order) and whose remaining digits spell r (in original order).
inline std::vector<std::size_t> split_table(const std::vector<std::size_t>& dims, const std::vector<std::size_t>& sel,
                                            std::size_t& sel_dim, std::size_t& rest_dim) {
  const std::size_t n = dims.size();
  std::vector<bool> in_sel(n, false);
  for (std::size_t s : sel) in_sel[s] = true;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < n; ++i) {
    if (!in_sel[i]) rest.push_back(i);
  }
  sel_dim = 1;
  for (std::size_t s : sel) sel_dim *= dims[s];
  rest_dim = 1;
  for (std::size_t r : rest) rest_dim *= dims[r];

  std::vector<std::size_t> stride(n, 1);
  for (std::size_t i = n; i-- > 1;) stride[i - 1] = stride[i] * dims[i];

  std::vector<std::size_t> sel_off(sel_dim, 0), rest_off(rest_dim, 0);
  for (std::size_t a = 0; a < sel_dim; ++a) {
    std::size_t x = a, off = 0;
    for (std::size_t j = sel.size(); j-- > 0;) {
      off += (x % dims[sel[j]]) * stride[sel[j]];
      x /= dims[sel[j]];
    }
    sel_off[a] = off;
  }
  for (std::size_t r = 0; r < rest_dim; ++r) {
    std::size_t x = r, off = 0;
    for (std::size_t j = rest.size(); j-- > 0;) {
      off += (x % dims[rest[j]]) * stride[rest[j]];
      x /= dims[rest[j]];
    }
    rest_off[r] = off;
  }
  std::vector<std::size_t> table(sel_dim * rest_dim);
  for (std::size_t a = 0; a < sel_dim; ++a) {
    for (std::size_t r = 0; r < rest_dim; ++r) table[a * rest_dim + r] = sel_off[a] + rest_off[r];
  }
  return table;
}

inline std::vector<std::size_t> positions(const RegisterShape& shape, const std::vector<std::string>& labels) {
  std::vector<std::size_t> pos;
  for (const auto& l : labels) {
    const std::size_t p = shape.index_of(l);
    if (std::find(pos.begin(), pos.end(), p) != pos.end()) throw ShapeError("repeated label '" + l + "'");
    pos.push_back(p);
  }
  return pos;
}

/// M' = (op on rows restricted to `sel` factors) * M.
inline Mat apply_left(const Mat& m, const Mat& op, const std::vector<std::size_t>& dims,
                      const std::vector<std::size_t>& sel) {
  std::size_t sd = 0, rd = 0;
  const auto table = split_table(dims, sel, sd, rd);
  if (static_cast<std::size_t>(op.rows()) != sd || static_cast<std::size_t>(op.cols()) != sd) {
    throw ShapeError("apply: operator is " + std::to_string(op.rows()) + "x" + std::to_string(op.cols()) +
                     ", registers have dim " + std::to_string(sd));
  }
  Mat out(m.rows(), m.cols());
  Mat block(static_cast<Eigen::Index>(sd), m.cols());
  for (std::size_t r = 0; r < rd; ++r) {
    for (std::size_t a = 0; a < sd; ++a) block.row(static_cast<Eigen::Index>(a)) = m.row(static_cast<Eigen::Index>(table[a * rd + r]));
    const Mat res = op * block;
    for (std::size_t a = 0; a < sd; ++a) out.row(static_cast<Eigen::Index>(table[a * rd + r])) = res.row(static_cast<Eigen::Index>(a));
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Operations

inline DensityMatrix tensor(const DensityMatrix& a, const DensityMatrix& b) {
  RegisterShape s = a.shape().concat(b.shape());
  return DensityMatrix::trusted(std::move(s), kron(a.matrix(), b.matrix()));
}

inline PureState tensor(const PureState& a, const PureState& b) {
  RegisterShape s = a.shape().concat(b.shape());
  return PureState(std::move(s), kron(a.amplitudes(), b.amplitudes()));
}

/// n-fold tensor power with labels suffixed "#i".
inline DensityMatrix tensor_power(const DensityMatrix& rho, std::size_t n) {
  if (n == 0) return DensityMatrix::trusted(RegisterShape{}, Mat::Identity(1, 1));
  auto tagged = [&](std::size_t i) {
    std::vector<std::string> l;
    for (const auto& x : rho.shape().labels()) l.push_back(x + "#" + std::to_string(i));
    return rho.relabeled(l);
  };
  DensityMatrix r = tagged(0);
  for (std::size_t i = 1; i < n; ++i) r = tensor(r, tagged(i));
  return r;
}

inline PureState tensor_power(const PureState& psi, std::size_t n) {
  if (n == 0) return PureState(RegisterShape{}, Vec::Ones(1));
  auto tagged = [&](std::size_t i) {
    std::vector<std::string> l;
    for (const auto& x : psi.shape().labels()) l.push_back(x + "#" + std::to_string(i));
    return psi.relabeled(l);
  };
  PureState r = tagged(0);
  for (std::size_t i = 1; i < n; ++i) r = tensor(r, tagged(i));
  return r;
}

/// Keeps `keep` (in the original factor order).
inline DensityMatrix partial_trace(const DensityMatrix& rho, const std::vector<std::string>& keep) {
  const RegisterShape& s = rho.shape();
  auto pos = detail::positions(s, keep);
  std::sort(pos.begin(), pos.end());
  std::size_t kd = 0, td = 0;
  const auto table = detail::split_table(s.dims(), pos, kd, td);
  Mat out = Mat::Zero(static_cast<Eigen::Index>(kd), static_cast<Eigen::Index>(kd));
  const Mat& m = rho.matrix();
  for (std::size_t i = 0; i < kd; ++i) {
    for (std::size_t j = 0; j < kd; ++j) {
      cplx acc = 0.0;
      for (std::size_t t = 0; t < td; ++t) {
        acc += m(static_cast<Eigen::Index>(table[i * td + t]), static_cast<Eigen::Index>(table[j * td + t]));
      }
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = acc;
    }
  }
  std::vector<std::string> kept;
  for (std::size_t p : pos) kept.push_back(s.factors()[p].label);
  return DensityMatrix::trusted(s.select(kept), out);
}

/// Reduced state of a pure state; cheaper than forming the full projector.
inline DensityMatrix partial_trace(const PureState& psi, const std::vector<std::string>& keep) {
  const RegisterShape& s = psi.shape();
  auto pos = detail::positions(s, keep);
  std::sort(pos.begin(), pos.end());
  std::size_t kd = 0, td = 0;
  const auto table = detail::split_table(s.dims(), pos, kd, td);
  Mat a(static_cast<Eigen::Index>(kd), static_cast<Eigen::Index>(td));
  for (std::size_t i = 0; i < kd; ++i) {
    for (std::size_t t = 0; t < td; ++t) {
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = psi.amplitudes()(static_cast<Eigen::Index>(table[i * td + t]));
    }
  }
  std::vector<std::string> kept;
  for (std::size_t p : pos) kept.push_back(s.factors()[p].label);
  return DensityMatrix::trusted(s.select(kept), a * a.adjoint());
}

/// Reorders factors to `order` (a permutation of the labels).
inline Vec permute_vector(const Vec& v, const RegisterShape& shape, const std::vector<std::string>& order) {
  if (order.size() != shape.size()) throw ShapeError("permute: order must list every label");
  const auto pos = detail::positions(shape, order);
  std::size_t sd = 0, rd = 0;
  const auto table = detail::split_table(shape.dims(), pos, sd, rd);
  Vec out(v.size());
  for (std::size_t a = 0; a < sd; ++a) out(static_cast<Eigen::Index>(a)) = v(static_cast<Eigen::Index>(table[a]));
  return out;
}

inline PureState permute(const PureState& psi, const std::vector<std::string>& order) {
  return PureState(psi.shape().select(order), permute_vector(psi.amplitudes(), psi.shape(), order));
}

inline DensityMatrix permute(const DensityMatrix& rho, const std::vector<std::string>& order) {
  if (order.size() != rho.shape().size()) throw ShapeError("permute: order must list every label");
  const auto pos = detail::positions(rho.shape(), order);
  std::size_t sd = 0, rd = 0;
  const auto table = detail::split_table(rho.shape().dims(), pos, sd, rd);
  const auto d = static_cast<Eigen::Index>(sd);
  Mat out(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      out(i, j) = rho.matrix()(static_cast<Eigen::Index>(table[i]), static_cast<Eigen::Index>(table[j]));
    }
  }
  return DensityMatrix::trusted(rho.shape().select(order), out);
}

/// op acting on the listed registers (op's factor order = `labels` order).
inline Vec apply_operator(const Vec& v, const RegisterShape& shape, const Mat& op, const std::vector<std::string>& labels) {
  const auto pos = detail::positions(shape, labels);
  Mat m = v;
  return detail::apply_left(m, op, shape.dims(), pos).col(0);
}

inline PureState apply_unitary(const PureState& psi, const Mat& u, const std::vector<std::string>& labels) {
  return PureState(psi.shape(), apply_operator(psi.amplitudes(), psi.shape(), u, labels));
}

/// U rho U† with U on the listed registers.
inline DensityMatrix apply_unitary(const DensityMatrix& rho, const Mat& u, const std::vector<std::string>& labels) {
  const auto pos = detail::positions(rho.shape(), labels);
  const auto dims = rho.shape().dims();
  Mat left = detail::apply_left(rho.matrix(), u, dims, pos);
  Mat both = detail::apply_left(left.adjoint(), u, dims, pos).adjoint();
  return DensityMatrix::trusted(rho.shape(), hermitize(both));
}

/// Full-space matrix of `op` acting on `labels` (identity elsewhere).
inline Mat lift_operator(const Mat& op, const RegisterShape& shape, const std::vector<std::string>& labels) {
  const auto d = static_cast<Eigen::Index>(shape.dim());
  return detail::apply_left(Mat::Identity(d, d), op, shape.dims(), detail::positions(shape, labels));
}

/// Half the trace norm of rho - sigma.
inline double trace_distance(const DensityMatrix& rho, const DensityMatrix& sigma) {
  require_same_shape(rho.shape(), sigma.shape(), "trace_distance");
  const double v = 0.5 * eigvalsh(rho.matrix() - sigma.matrix()).cwiseAbs().sum();
  return std::clamp(v, 0.0, 1.0);
}

/// Square root with eigenvalues below `floor` treated as zero; the floor
/// keeps rounding noise in rank-deficient inputs from surfacing as ~1e-8.
inline Mat psd_sqrt(const Mat& m, double floor = 1e-14) {
  return hermitian_function(m, [floor](double x) { return x > floor ? std::sqrt(x) : 0.0; });
}

/// Uhlmann fidelity (squared convention): ||sqrt(rho) sqrt(sigma)||_1^2.
inline double fidelity(const DensityMatrix& rho, const DensityMatrix& sigma) {
  require_same_shape(rho.shape(), sigma.shape(), "fidelity");
  if (!is_psd(rho.matrix()) || !is_psd(sigma.matrix())) throw PreconditionError("fidelity: non-PSD input");
  const Mat a = psd_sqrt(rho.matrix()) * psd_sqrt(sigma.matrix());
  Eigen::JacobiSVD<Mat> svd(a);
  const double s = svd.singularValues().sum();
  return std::clamp(s * s, 0.0, 1.0);
}

/// |<a|b>|^2.
inline double overlap_squared(const PureState& a, const PureState& b) {
  require_same_shape(a.shape(), b.shape(), "overlap");
  return std::norm(a.amplitudes().dot(b.amplitudes()));
}

/// X^{x_1} Z^{z_1} (x) ... (x) X^{x_n} Z^{z_n}.
inline Mat pauli_operator(const std::vector<int>& x_bits, const std::vector<int>& z_bits) {
  if (x_bits.size() != z_bits.size()) throw ShapeError("pauli_operator: x and z lengths differ");
  check_dim(std::size_t{1} << x_bits.size(), "pauli_operator");
  Mat r = Mat::Identity(1, 1);
  for (std::size_t i = 0; i < x_bits.size(); ++i) {
    Mat x = Mat::Identity(2, 2), z = Mat::Identity(2, 2);
    if (x_bits[i]) x << 0, 1, 1, 0;
    if (z_bits[i]) z << 1, 0, 0, -1;
    r = kron(r, Mat(x * z));
  }
  return r;
}

/// (1/sqrt(2^n)) sum_i |i>_A |i>_B with A, B each n qubits (single factors of dim 2^n).
inline PureState maximally_entangled(std::size_t n, const std::string& a = "A", const std::string& b = "B") {
  if (n < 1) throw PreconditionError("maximally_entangled: n must be >= 1");
  if (n >= 32) throw SizingError("maximally_entangled: n too large");
  const std::size_t d = std::size_t{1} << n;
  RegisterShape s{{a, d}, {b, d}};
  Vec v = Vec::Zero(static_cast<Eigen::Index>(d * d));
  for (std::size_t i = 0; i < d; ++i) v(static_cast<Eigen::Index>(i * d + i)) = 1.0 / std::sqrt(static_cast<double>(d));
  return PureState(std::move(s), std::move(v));
}

inline Vec gaussian_vector(std::size_t dim, Rng& rng) {
  Vec v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double re = rng.normal();
    const double im = rng.normal();
    v(i) = cplx(re, im);
  }
  return v;
}

/// Normalized complex Gaussian vector.
inline PureState haar_random_state(const RegisterShape& shape, Rng& rng) {
  check_dim(shape.dim(), "haar_random_state");
  Vec v = gaussian_vector(shape.dim(), rng);
  return PureState(shape, v / v.norm());
}

inline PureState haar_random_state(std::size_t dim, Rng& rng) {
  return haar_random_state(RegisterShape{{"S", dim}}, rng);
}

/// Haar unitary via QR of a Ginibre matrix with the phase correction.
inline Mat random_unitary(std::size_t dim, Rng& rng) {
  check_dim(dim, "random_unitary");
  const auto d = static_cast<Eigen::Index>(dim);
  Mat g(d, d);
  for (Eigen::Index j = 0; j < d; ++j) g.col(j) = gaussian_vector(dim, rng);
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(d, d);
  const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j) {
    const cplx x = r(j, j);
    const double a = std::abs(x);
    if (a > 0) q.col(j) *= x / a;
  }
  return q;
}

/// rank 0 picks a uniformly random rank in [1, dim].
inline DensityMatrix random_density_matrix(const RegisterShape& shape, Rng& rng, std::size_t rank = 0) {
  const std::size_t d = shape.dim();
  check_dim(d, "random_density_matrix");
  if (rank == 0) rank = 1 + rng.below(d);
  Mat g(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(rank));
  for (Eigen::Index j = 0; j < g.cols(); ++j) g.col(j) = gaussian_vector(d, rng);
  Mat m = g * g.adjoint();
  m /= m.trace().real();
  return DensityMatrix::trusted(shape, hermitize(m));
}

inline DensityMatrix random_density_matrix(std::size_t dim, Rng& rng, std::size_t rank = 0) {
  return random_density_matrix(RegisterShape{{"S", dim}}, rng, rank);
}

/// sum_i sqrt(p_i) |e_i>_S |e_i>_P from the eigendecomposition of rho.
inline PureState canonical_purification(const DensityMatrix& rho, const std::string& purifier = "P") {
  Eigen::SelfAdjointEigenSolver<Mat> es(hermitize(rho.matrix()));
  const std::size_t d = rho.dim();
  RegisterShape shape = rho.shape().concat(RegisterShape{{purifier, d}});
  Vec v = Vec::Zero(static_cast<Eigen::Index>(d * d));
  for (std::size_t i = 0; i < d; ++i) {
    const double p = std::max(es.eigenvalues()(static_cast<Eigen::Index>(i)), 0.0);
    Vec e = Vec::Zero(static_cast<Eigen::Index>(d));
    e(static_cast<Eigen::Index>(i)) = 1.0;
    v += std::sqrt(p) * kron(Vec(es.eigenvectors().col(static_cast<Eigen::Index>(i))), e);
  }
  return PureState::normalized(std::move(shape), v);
}

/// Unitary whose first columns are the given orthonormal vectors; the rest
/// is completed by Gram-Schmidt against the standard basis, in order.
inline Mat complete_to_unitary(const std::vector<Vec>& columns, std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  Mat u(d, d);
  Eigen::Index filled = 0;
  auto push = [&](Vec v) {
    for (Eigen::Index j = 0; j < filled; ++j) v -= u.col(j).dot(v) * u.col(j);
    for (Eigen::Index j = 0; j < filled; ++j) v -= u.col(j).dot(v) * u.col(j);
    const double n = v.norm();
    if (n < 1e-8) return false;
    u.col(filled++) = v / n;
    return true;
  };
  for (std::size_t i = 0; i < columns.size(); ++i) {
    const Vec& c = columns[i];
    if (c.size() != d) throw ShapeError("complete_to_unitary: column has wrong length");
    bool ok = std::abs(c.norm() - 1.0) <= 1e-8;
    for (std::size_t j = 0; j < i && ok; ++j) ok = std::abs(columns[j].dot(c)) <= 1e-8;
    if (!ok) throw PreconditionError("complete_to_unitary: columns are not orthonormal");
    push(c);
  }
  for (Eigen::Index i = 0; i < d && filled < d; ++i) {
    Vec e = Vec::Zero(d);
    e(i) = 1.0;
    push(e);
  }
  return u;
}

// ---------------------------------------------------------------------------
// Text serialization: "dims: d1 d2 ...", then one row per line of "re,im" entries.

inline void write_matrix(std::ostream& os, const std::vector<std::size_t>& dims, const Mat& m) {
  os << "dims:";
  for (auto d : dims) os << ' ' << d;
  os << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      os << m(i, j).real() << ',' << m(i, j).imag();
    }
    os << '\n';
  }
}

inline void write_density(std::ostream& os, const DensityMatrix& rho) { write_matrix(os, rho.shape().dims(), rho.matrix()); }

/// One amplitude per line.
inline void write_pure(std::ostream& os, const PureState& psi) {
  write_matrix(os, psi.shape().dims(), Mat(psi.amplitudes()));
}

namespace detail {
inline std::vector<std::size_t> read_dims(std::istream& is) {
  std::string line;
  while (std::getline(is, line) && line.find_first_not_of(" \t\r") == std::string::npos) {
  }
  if (line.rfind("dims:", 0) != 0) throw ShapeError("serialized matrix: missing 'dims:' header");
  std::istringstream ss(line.substr(5));
  std::vector<std::size_t> dims;
  std::size_t d = 0;
  while (ss >> d) dims.push_back(d);
  return dims;
}

inline Mat read_rows(std::istream& is, Eigen::Index rows, Eigen::Index cols) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    std::string line;
    if (!std::getline(is, line)) throw ShapeError("serialized matrix: too few rows");
    std::istringstream ss(line);
    for (Eigen::Index j = 0; j < cols; ++j) {
      std::string tok;
      if (!(ss >> tok)) throw ShapeError("serialized matrix: too few entries in row " + std::to_string(i));
      const auto comma = tok.find(',');
      if (comma == std::string::npos) throw ShapeError("serialized matrix: entry '" + tok + "' is not re,im");
      m(i, j) = cplx(std::stod(tok.substr(0, comma)), std::stod(tok.substr(comma + 1)));
    }
  }
  return m;
}

inline RegisterShape shape_from_dims(const std::vector<std::size_t>& dims) {
  std::vector<Factor> f;
  for (std::size_t i = 0; i < dims.size(); ++i) f.push_back({"r" + std::to_string(i), dims[i]});
  return RegisterShape(std::move(f));
}
}  // namespace detail

/// Factors are labelled r0, r1, ...
inline DensityMatrix read_density(std::istream& is) {
  const auto shape = detail::shape_from_dims(detail::read_dims(is));
  const auto d = static_cast<Eigen::Index>(shape.dim());
  return DensityMatrix(shape, detail::read_rows(is, d, d));
}

inline PureState read_pure(std::istream& is) {
  const auto shape = detail::shape_from_dims(detail::read_dims(is));
  return PureState(shape, detail::read_rows(is, static_cast<Eigen::Index>(shape.dim()), 1).col(0));
}

}  // namespace owsg
