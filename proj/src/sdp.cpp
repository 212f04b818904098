#include "koopstab/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>

#include "koopstab/json_io.hpp"
#include "koopstab/sdp_kernels.hpp"

namespace koopstab::sdp {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kUnboundedNorm = 1e12;

}  // namespace

int VarSpec::scalar_count() const {
  switch (kind) {
    case VarKind::SymMatrix: return dim * (dim + 1) / 2;
    case VarKind::Vector: return dim;
    case VarKind::Scalar: return 1;
  }
  return 0;
}

std::string_view to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "Optimal";
    case Status::Feasible: return "Feasible";
    case Status::Infeasible: return "Infeasible";
    case Status::MaxIter: return "MaxIter";
    case Status::NumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

// ---------------------------------------------------------------------------
// SparseSym

void SparseSym::add_symmetric(int r, int c, double v) {
  entries_.push_back({r, c, v});
  if (r != c) entries_.push_back({c, r, v});
}

void SparseSym::add_raw(int r, int c, double v) { entries_.push_back({r, c, v}); }

void SparseSym::finalize() {
  std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<Entry> merged;
  merged.reserve(entries_.size());
  for (const Entry& e : entries_) {
    if (!merged.empty() && merged.back().row == e.row && merged.back().col == e.col) {
      merged.back().value += e.value;
    } else {
      merged.push_back(e);
    }
  }
  merged.erase(std::remove_if(merged.begin(), merged.end(),
                              [](const Entry& e) { return e.value == 0.0; }),
               merged.end());
  entries_ = std::move(merged);
  rows_.clear();
  for (const Entry& e : entries_) {
    if (rows_.empty() || rows_.back() != e.row) rows_.push_back(e.row);
  }
}

void SparseSym::scale(double factor) {
  for (Entry& e : entries_) e.value *= factor;
}

Mat SparseSym::dense() const {
  Mat m = Mat::Zero(dim_, dim_);
  for (const Entry& e : entries_) m(e.row, e.col) += e.value;
  return m;
}

double SparseSym::frobenius_norm() const {
  double acc = 0.0;
  for (const Entry& e : entries_) acc += e.value * e.value;
  return std::sqrt(acc);
}

double Lmi::scale() const {
  double s = constant.norm();
  for (const SparseSym& c : coeffs) s = std::max(s, c.frobenius_norm());
  return s > 0.0 ? s : 1.0;
}

// ---------------------------------------------------------------------------
// LmiProblem

int LmiProblem::add_variable(VarSpec spec) {
  if (spec.dim <= 0) throw Error(ErrorKind::InvalidArgument, "variable dimension must be positive");
  if (spec.kind == VarKind::Scalar) spec.dim = 1;
  offsets_.push_back(num_scalars_);
  num_scalars_ += spec.scalar_count();
  vars_.push_back(std::move(spec));
  for (Lmi& l : lmis_) l.coeffs.resize(static_cast<std::size_t>(num_scalars_), SparseSym(l.dim));
  if (objective_) objective_->conservativeResize(num_scalars_);
  return static_cast<int>(vars_.size()) - 1;
}

int LmiProblem::add_constraint(std::string name, int dim) {
  if (dim <= 0) throw Error(ErrorKind::InvalidArgument, "constraint dimension must be positive");
  Lmi l;
  l.name = std::move(name);
  l.dim = dim;
  l.constant = Mat::Zero(dim, dim);
  l.coeffs.assign(static_cast<std::size_t>(num_scalars_), SparseSym(dim));
  lmis_.push_back(std::move(l));
  return static_cast<int>(lmis_.size()) - 1;
}

void LmiProblem::check_lmi(int lmi) const {
  if (lmi < 0 || lmi >= static_cast<int>(lmis_.size())) {
    throw Error(ErrorKind::InvalidArgument, "unknown constraint handle");
  }
}

void LmiProblem::place(int lmi, int row0, int col0, int scalar_index, const Mat& block) {
  Lmi& l = lmis_[static_cast<std::size_t>(lmi)];
  if (row0 < 0 || col0 < 0 || row0 + block.rows() > l.dim || col0 + block.cols() > l.dim) {
    throw Error(ErrorKind::DimensionMismatch, "term does not fit in constraint " + l.name);
  }
  SparseSym& target = l.coeffs[static_cast<std::size_t>(scalar_index)];
  const bool diagonal = row0 == col0;
  for (Eigen::Index i = 0; i < block.rows(); ++i) {
    for (Eigen::Index j = 0; j < block.cols(); ++j) {
      const double v = block(i, j);
      if (v == 0.0) continue;
      const int r = row0 + static_cast<int>(i);
      const int c = col0 + static_cast<int>(j);
      if (diagonal) {
        target.add_raw(r, c, v);
      } else {
        target.add_raw(r, c, v);
        target.add_raw(c, r, v);
      }
    }
  }
}

void LmiProblem::add_sym_term(int lmi, int row0, int col0, int var, const Mat& left,
                              const Mat& right) {
  check_lmi(lmi);
  const VarSpec& v = vars_.at(static_cast<std::size_t>(var));
  if (v.kind != VarKind::SymMatrix) throw Error(ErrorKind::InvalidArgument, "not a symmetric variable");
  if (left.cols() != v.dim || right.rows() != v.dim) {
    throw Error(ErrorKind::DimensionMismatch, "sym term factors do not match " + v.name);
  }
  int idx = offsets_[static_cast<std::size_t>(var)];
  for (int a = 0; a < v.dim; ++a) {
    for (int b = a; b < v.dim; ++b, ++idx) {
      Mat block;
      if (a == b) {
        block = left.col(a) * right.row(a);
      } else {
        block = (left.col(a) * right.row(b) + left.col(b) * right.row(a)) / kSqrt2;
      }
      place(lmi, row0, col0, idx, block);
    }
  }
}

void LmiProblem::add_vec_term(int lmi, int row0, int col0, int var, const Mat& left,
                              const Mat& right, bool transposed) {
  check_lmi(lmi);
  const VarSpec& v = vars_.at(static_cast<std::size_t>(var));
  if (v.kind != VarKind::Vector) throw Error(ErrorKind::InvalidArgument, "not a vector variable");
  const int base = offsets_[static_cast<std::size_t>(var)];
  for (int i = 0; i < v.dim; ++i) {
    Mat block;
    if (!transposed) {
      if (left.cols() != v.dim || right.rows() != 1) {
        throw Error(ErrorKind::DimensionMismatch, "vec term factors do not match " + v.name);
      }
      block = left.col(i) * right;
    } else {
      if (left.cols() != 1 || right.rows() != v.dim) {
        throw Error(ErrorKind::DimensionMismatch, "vec^T term factors do not match " + v.name);
      }
      block = left * right.row(i);
    }
    place(lmi, row0, col0, base + i, block);
  }
}

void LmiProblem::add_scalar_term(int lmi, int row0, int col0, int var, const Mat& coeff) {
  check_lmi(lmi);
  const VarSpec& v = vars_.at(static_cast<std::size_t>(var));
  if (v.kind != VarKind::Scalar) throw Error(ErrorKind::InvalidArgument, "not a scalar variable");
  place(lmi, row0, col0, offsets_[static_cast<std::size_t>(var)], coeff);
}

void LmiProblem::add_constant(int lmi, int row0, int col0, const Mat& block) {
  check_lmi(lmi);
  Lmi& l = lmis_[static_cast<std::size_t>(lmi)];
  if (row0 < 0 || col0 < 0 || row0 + block.rows() > l.dim || col0 + block.cols() > l.dim) {
    throw Error(ErrorKind::DimensionMismatch, "constant does not fit in constraint " + l.name);
  }
  l.constant.block(row0, col0, block.rows(), block.cols()) += block;
  if (row0 != col0) l.constant.block(col0, row0, block.cols(), block.rows()) += block.transpose();
}

Vec LmiProblem::trace_objective(int var) const {
  const VarSpec& v = vars_.at(static_cast<std::size_t>(var));
  if (v.kind != VarKind::SymMatrix) throw Error(ErrorKind::InvalidArgument, "trace of non-matrix");
  Vec c = Vec::Zero(num_scalars_);
  int idx = offsets_[static_cast<std::size_t>(var)];
  for (int a = 0; a < v.dim; ++a) {
    for (int b = a; b < v.dim; ++b, ++idx) {
      if (a == b) c(idx) = 1.0;
    }
  }
  return c;
}

void LmiProblem::finalize() {
  for (Lmi& l : lmis_) {
    for (SparseSym& c : l.coeffs) c.finalize();
    linalg::require_finite(l.constant, "constraint constant");
  }
}

Mat LmiProblem::evaluate(int lmi, const Vec& x) const {
  check_lmi(lmi);
  if (x.size() != num_scalars_) throw Error(ErrorKind::DimensionMismatch, "evaluate: wrong x length");
  const Lmi& l = lmis_[static_cast<std::size_t>(lmi)];
  Mat f = l.constant;
  for (int i = 0; i < num_scalars_; ++i) {
    if (x(i) == 0.0) continue;
    for (const Entry& e : l.coeffs[static_cast<std::size_t>(i)].entries()) {
      f(e.row, e.col) += x(i) * e.value;
    }
  }
  return f;
}

Mat LmiProblem::unpack_sym(int var, const Vec& x) const {
  const VarSpec& v = vars_.at(static_cast<std::size_t>(var));
  Mat m(v.dim, v.dim);
  int idx = offsets_[static_cast<std::size_t>(var)];
  for (int a = 0; a < v.dim; ++a) {
    for (int b = a; b < v.dim; ++b, ++idx) {
      const double val = a == b ? x(idx) : x(idx) / kSqrt2;
      m(a, b) = val;
      m(b, a) = val;
    }
  }
  return m;
}

void LmiProblem::pack_sym(int var, const Mat& value, Vec& x) const {
  const VarSpec& v = vars_.at(static_cast<std::size_t>(var));
  int idx = offsets_[static_cast<std::size_t>(var)];
  for (int a = 0; a < v.dim; ++a) {
    for (int b = a; b < v.dim; ++b, ++idx) {
      x(idx) = a == b ? value(a, b) : 0.5 * (value(a, b) + value(b, a)) * kSqrt2;
    }
  }
}

Vec LmiProblem::unpack_vec(int var, const Vec& x) const {
  const VarSpec& v = vars_.at(static_cast<std::size_t>(var));
  return x.segment(offsets_[static_cast<std::size_t>(var)], v.dim);
}

void LmiProblem::pack_vec(int var, const Vec& value, Vec& x) const {
  const VarSpec& v = vars_.at(static_cast<std::size_t>(var));
  x.segment(offsets_[static_cast<std::size_t>(var)], v.dim) = value;
}

double LmiProblem::unpack_scalar(int var, const Vec& x) const {
  return x(offsets_.at(static_cast<std::size_t>(var)));
}

void LmiProblem::pack_scalar(int var, double value, Vec& x) const {
  x(offsets_.at(static_cast<std::size_t>(var))) = value;
}

// ---------------------------------------------------------------------------
// Certificate evaluation

std::vector<double> check_solution(const LmiProblem& p, const Vec& x) {
  if (x.size() != p.num_scalars()) {
    throw Error(ErrorKind::DimensionMismatch, "check_solution: x has " + std::to_string(x.size()) +
                                                  " entries, problem has " +
                                                  std::to_string(p.num_scalars()));
  }
  std::vector<double> out;
  out.reserve(p.constraints().size());
  for (int j = 0; j < static_cast<int>(p.constraints().size()); ++j) {
    out.push_back(linalg::min_eig(linalg::symmetrize(p.evaluate(j, x))));
  }
  return out;
}

std::vector<double> check_margins(const LmiProblem& p, const Vec& x) {
  std::vector<double> eigs = check_solution(p, x);
  for (std::size_t j = 0; j < eigs.size(); ++j) eigs[j] /= p.constraints()[j].scale();
  return eigs;
}

// ---------------------------------------------------------------------------
// Barrier method

namespace {

using kernels::ActiveBlock;

struct Normalized {
  std::vector<ActiveBlock> blocks;
  std::vector<double> scales;
};

// Per-block normalization F/s - delta*I, keeping only variables that enter.
Normalized normalize(const LmiProblem& p) {
  Normalized out;
  for (const Lmi& l : p.constraints()) {
    const double s = l.scale();
    ActiveBlock b;
    b.dim = l.dim;
    b.constant = linalg::symmetrize(l.constant) / s - p.delta() * Mat::Identity(l.dim, l.dim);
    for (int i = 0; i < p.num_scalars(); ++i) {
      const SparseSym& c = l.coeffs[static_cast<std::size_t>(i)];
      if (c.empty()) continue;
      SparseSym scaled = c;
      scaled.scale(1.0 / s);
      b.vars.push_back(i);
      b.coeffs.push_back(std::move(scaled));
    }
    out.blocks.push_back(std::move(b));
    out.scales.push_back(s);
  }
  return out;
}

enum class CenterOutcome { Centered, EarlyExit, Budget, Stalled, Singular, Unbounded };

class BarrierPath {
 public:
  BarrierPath(const std::vector<ActiveBlock>& blocks, int m, Vec c, const SolverOptions& opt,
              int& iterations)
      : blocks_(blocks), m_(m), c_(std::move(c)), opt_(opt), iterations_(iterations) {}

  /// Adds -log(R^2 - |x_{0..count}|^2) to the barrier.
  void set_ball(int count, double radius) {
    ball_count_ = count;
    ball_r2_ = radius * radius;
  }

  // -sum log det S_j(x) (plus the ball term); nullopt outside the cone.
  std::optional<double> barrier(const Vec& x) const {
    double f = 0.0;
    if (ball_count_ > 0) {
      const double slack = ball_r2_ - x.head(ball_count_).squaredNorm();
      if (!(slack > 0.0)) return std::nullopt;
      f -= std::log(slack);
    }
    for (const ActiveBlock& b : blocks_) {
      Eigen::LLT<Mat> llt(kernels::evaluate_block(b, x));
      if (llt.info() != Eigen::Success) return std::nullopt;
      const auto diag = llt.matrixLLT().diagonal();
      for (Eigen::Index i = 0; i < diag.size(); ++i) {
        if (!(diag(i) > 0.0)) return std::nullopt;
        f -= 2.0 * std::log(diag(i));
      }
    }
    return std::isfinite(f) ? std::optional<double>(f) : std::nullopt;
  }

  double min_slack_eig(const Vec& x) const {
    double lo = std::numeric_limits<double>::infinity();
    for (const ActiveBlock& b : blocks_) {
      lo = std::min(lo, linalg::min_eig(linalg::symmetrize(kernels::evaluate_block(b, x))));
    }
    return lo;
  }

  /// Hessian and gradient of the barrier alone at x; false outside the cone.
  bool barrier_derivatives(const Vec& x, Mat& h, Vec& grad) const {
    w_cache_.clear();
    ball_head_ = x.head(ball_count_);
    h = Mat::Zero(m_, m_);
    Vec trace_grad = Vec::Zero(m_);
    for (const ActiveBlock& b : blocks_) {
      Eigen::LLT<Mat> llt(kernels::evaluate_block(b, x));
      if (llt.info() != Eigen::Success) return false;
      w_cache_.push_back(linalg::symmetrize(llt.solve(Mat::Identity(b.dim, b.dim))));
      const Mat& w = w_cache_.back();
      if (opt_.parallel) {
        kernels::accumulate_newton(b, w, h, trace_grad);
      } else {
        kernels::accumulate_newton_reference(b, w, h, trace_grad);
      }
    }
    h = h.selfadjointView<Eigen::Upper>();
    grad = -trace_grad;
    if (ball_count_ > 0) {
      const auto head = x.head(ball_count_);
      const double slack = ball_r2_ - head.squaredNorm();
      grad.head(ball_count_) += (2.0 / slack) * head;
      h.topLeftCorner(ball_count_, ball_count_).diagonal().array() += 2.0 / slack;
      h.topLeftCorner(ball_count_, ball_count_).noalias() +=
          (4.0 / (slack * slack)) * head * head.transpose();
    }
    return true;
  }

  /// Barrier weight that makes x closest to central: minimizes the Newton
  /// decrement of t c^T x + barrier over t.
  double initial_t(const Vec& x) const {
    Mat h;
    Vec g;
    if (!barrier_derivatives(x, h, g)) return 1.0;
    Vec hc, hg;
    if (!solve_newton(h, -c_, hc) || !solve_newton(h, -g, hg)) return 1.0;
    const double denom = c_.dot(hc);
    if (!(denom > 0.0)) return 1.0;
    return c_.dot(hg) / denom;  // t* = c^T H^-1 g / c^T H^-1 c
  }

  template <typename EarlyExit>
  CenterOutcome center(Vec& x, double t, const EarlyExit& early_exit) {
    for (;;) {
      if (iterations_ >= opt_.max_iterations) return CenterOutcome::Budget;

      Mat h;
      Vec barrier_grad;
      if (!barrier_derivatives(x, h, barrier_grad)) return CenterOutcome::Singular;
      const Vec grad = -t * c_ + barrier_grad;

      Vec dx;
      if (!solve_newton(h, grad, dx)) return CenterOutcome::Singular;
      refine(h, grad, dx);
      const double slope = grad.dot(dx);
      const double decrement_sq = -slope;
      ++iterations_;

      if (opt_.verbosity > 0) {
        std::ostream& os = opt_.log ? *opt_.log : std::cerr;
        os << std::setprecision(6) << iterations_ << ", " << 1.0 / t << ", " << min_slack_eig(x)
           << ", " << c_.dot(x) << "\n";
      }

      if (decrement_sq / 2.0 <= opt_.centering_tol) return CenterOutcome::Centered;

      // Merit change -t c^T (alpha dx) + barrier difference, formed as a
      // difference so large t c^T x does not swamp it.
      const auto phi0 = barrier(x);
      if (!phi0) return CenterOutcome::Singular;
      const double lin = -t * c_.dot(dx);
      double alpha = 1.0;
      bool accepted = false;
      while (alpha > 1e-14) {
        const Vec trial = x + alpha * dx;
        if (trial == x) break;  // step below rounding
        const auto phi = barrier(trial);
        if (phi) {
          const double change = alpha * lin + (*phi - *phi0);
          if (change < 0.0 && change <= 0.25 * alpha * slope) {
            x = trial;
            accepted = true;
            break;
          }
        }
        alpha *= 0.5;
      }
      if (!accepted) {
        // Newton decrement is already small: accept the point as centered.
        return decrement_sq < 1e-6 ? CenterOutcome::Centered : CenterOutcome::Stalled;
      }
      if (x.lpNorm<Eigen::Infinity>() > kUnboundedNorm) return CenterOutcome::Unbounded;
      if (early_exit(x)) return CenterOutcome::EarlyExit;
    }
  }

  const Vec& objective() const { return c_; }

 private:
  int ball_count_ = 0;
  double ball_r2_ = 0.0;
  mutable std::vector<Mat> w_cache_;  // S_j^{-1} at the last derivative point
  mutable Vec ball_head_;

  // Jacobi-scaled Cholesky with an escalating ridge for rank-deficient H.
  // Exact barrier Hessian times v at the point of the last
  // barrier_derivatives call: (Hv)_i = tr(F_i W F(v) W).
  Vec hessian_product(const Vec& v) const {
    Vec out = Vec::Zero(m_);
    for (std::size_t j = 0; j < blocks_.size(); ++j) {
      const ActiveBlock& b = blocks_[j];
      const Mat& w = w_cache_[j];
      Mat fv = Mat::Zero(b.dim, b.dim);
      for (std::size_t i = 0; i < b.vars.size(); ++i) {
        const double vi = v(b.vars[i]);
        if (vi == 0.0) continue;
        for (const Entry& e : b.coeffs[i].entries()) fv(e.row, e.col) += vi * e.value;
      }
      const Mat mid = w * fv * w;
      for (std::size_t i = 0; i < b.vars.size(); ++i) {
        double acc = 0.0;
        for (const Entry& e : b.coeffs[i].entries()) acc += e.value * mid(e.col, e.row);
        out(b.vars[i]) += acc;
      }
    }
    if (ball_count_ > 0) {
      const double slack = ball_r2_ - ball_head_.squaredNorm();
      const auto vh = v.head(ball_count_);
      out.head(ball_count_) += (2.0 / slack) * vh + (4.0 / (slack * slack)) * ball_head_.dot(vh) * ball_head_;
    }
    return out;
  }

  // Preconditioned CG on H dx = -grad with the factored H as preconditioner.
  // The assembled H loses about cond(S)^2 digits; the product above does not.
  void refine(const Mat& h, const Vec& grad, Vec& dx) const {
    const Vec b = -grad;
    const double bnorm = b.norm();
    if (!(bnorm > 0.0)) return;
    Vec r = b - hessian_product(dx);
    Vec z;
    if (!solve_newton(h, -r, z)) return;
    Vec p = z;
    double rz = r.dot(z);
    for (int it = 0; it < kRefineSteps && r.norm() > 1e-13 * bnorm; ++it) {
      const Vec hp = hessian_product(p);
      const double php = p.dot(hp);
      if (!(php > 0.0) || !(rz > 0.0)) break;
      const double alpha = rz / php;
      dx += alpha * p;
      r -= alpha * hp;
      if (!solve_newton(h, -r, z)) break;
      const double rz_next = r.dot(z);
      p = z + (rz_next / rz) * p;
      rz = rz_next;
    }
  }

  static constexpr int kRefineSteps = 8;

  static bool solve_newton(const Mat& h, const Vec& grad, Vec& dx) {
    const Eigen::Index m = h.rows();
    Vec d(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double hii = h(i, i);
      d(i) = hii > 0.0 ? 1.0 / std::sqrt(hii) : 1.0;
    }
    Mat hs = d.asDiagonal() * h * d.asDiagonal();
    for (double ridge = 0.0; ridge <= 1e-2; ridge = ridge == 0.0 ? 1e-14 : ridge * 100.0) {
      Mat reg = hs;
      reg.diagonal().array() += ridge;
      Eigen::LLT<Mat> llt(reg);
      if (llt.info() != Eigen::Success) continue;
      Vec z = llt.solve(-(d.asDiagonal() * grad));
      if (!z.allFinite()) continue;
      dx = d.asDiagonal() * z;
      return true;
    }
    return false;
  }

  const std::vector<ActiveBlock>& blocks_;
  int m_;
  Vec c_;
  const SolverOptions& opt_;
  int& iterations_;
};

Status outcome_status(CenterOutcome o) {
  switch (o) {
    case CenterOutcome::Budget: return Status::MaxIter;
    default: return Status::NumericalFailure;
  }
}

std::string outcome_message(CenterOutcome o) {
  switch (o) {
    case CenterOutcome::Budget: return "Newton iteration cap reached";
    case CenterOutcome::Stalled: return "line search stalled";
    case CenterOutcome::Singular: return "Newton system singular";
    case CenterOutcome::Unbounded: return "iterates diverge; objective appears unbounded (add a cap)";
    default: return "";
  }
}

// Runs the central path at increasing t until the duality measure nu / t
// drops below gap_tol relative to the objective.
template <typename EarlyExit>
CenterOutcome follow_path(BarrierPath& path, Vec& x, double t0, double nu, const SolverOptions& opt,
                          double& final_t, const EarlyExit& early_exit) {
  double t = t0;
  for (;;) {
    const CenterOutcome o = path.center(x, t, early_exit);
    final_t = t;
    if (o != CenterOutcome::Centered) return o;
    if (nu / t <= opt.gap_tol * std::max(1.0, std::abs(path.objective().dot(x)))) {
      return CenterOutcome::Centered;
    }
    t /= opt.barrier_reduction;
  }
}

struct PhaseOne {
  bool interior = false;
  double margin = 0.0;  // -shift at exit
  CenterOutcome outcome = CenterOutcome::Centered;
};

// Minimizes a common shift s with S_j(x) + s I > 0 and s > -1.
PhaseOne phase_one(const Normalized& norm, int m, Vec& x, const SolverOptions& opt,
                   int& iterations) {
  std::vector<ActiveBlock> blocks = norm.blocks;
  double worst = std::numeric_limits<double>::infinity();
  for (const ActiveBlock& b : blocks) {
    worst = std::min(worst, linalg::min_eig(linalg::symmetrize(kernels::evaluate_block(b, x))));
  }
  PhaseOne result;
  if (worst >= opt.phase1_target) {
    result.interior = true;
    result.margin = worst;
    return result;
  }
  for (ActiveBlock& b : blocks) {
    SparseSym shift(b.dim);
    for (int i = 0; i < b.dim; ++i) shift.add_raw(i, i, 1.0);
    shift.finalize();
    b.vars.push_back(m);
    b.coeffs.push_back(std::move(shift));
  }
  ActiveBlock floor;
  floor.dim = 1;
  floor.constant = Mat::Ones(1, 1);
  SparseSym one(1);
  one.add_raw(0, 0, 1.0);
  one.finalize();
  floor.vars.push_back(m);
  floor.coeffs.push_back(std::move(one));
  blocks.push_back(std::move(floor));

  Vec xs(m + 1);
  xs.head(m) = x;
  xs(m) = std::max(0.0, -worst) + 1.0;
  Vec c = Vec::Zero(m + 1);
  c(m) = -1.0;

  BarrierPath path(blocks, m + 1, c, opt, iterations);
  // bounded phase I: homogeneous problems have recession directions
  if (xs.head(m).norm() >= opt.phase1_radius) {
    throw Error(ErrorKind::InvalidArgument, "phase I start lies outside the phase I ball");
  }
  path.set_ball(m, opt.phase1_radius);
  const double target = opt.phase1_target;
  // Exit on the original blocks: along a recession direction the shift can
  // stall near zero while the slack itself grows without bound.
  const auto interior = [&norm, m, target](const Vec& v) {
    if (v(m) <= -target) return true;
    const Vec head = v.head(m);
    for (const ActiveBlock& b : norm.blocks) {
      Mat s = kernels::evaluate_block(b, head);
      s.diagonal().array() -= target;
      if (Eigen::LLT<Mat>(s).info() != Eigen::Success) return false;
    }
    return true;
  };
  // After each centering the shift is within nu / t of its minimum over the
  // ball, so a positive lower bound certifies infeasibility.
  double nu = 2.0;
  for (const ActiveBlock& b : norm.blocks) nu += b.dim;
  const double t_final = 1.0 / opt.gap_tol;
  double t = 1.0;
  for (;;) {
    result.outcome = path.center(xs, t, interior);
    if (result.outcome != CenterOutcome::Centered) break;
    // a centered point with negative shift is already strictly interior
    if (xs(m) < 0.0 || xs(m) - nu / t > 0.0 || t >= t_final) break;
    t = std::min(t / opt.barrier_reduction, t_final);
  }
  x = xs.head(m);
  double margin = std::numeric_limits<double>::infinity();
  for (const ActiveBlock& b : norm.blocks) {
    margin = std::min(margin, linalg::min_eig(linalg::symmetrize(kernels::evaluate_block(b, x))));
  }
  result.margin = margin;
  result.interior = margin > 0.0 && (result.outcome == CenterOutcome::EarlyExit ||
                                     result.outcome == CenterOutcome::Centered);
  return result;
}

SdpSolution finish(const LmiProblem& p, SdpSolution sol) {
  sol.min_eigs = check_solution(p, sol.x);
  sol.margins = check_margins(p, sol.x);
  if (p.objective()) sol.objective = p.objective()->dot(sol.x);
  if (sol.ok()) {
    for (std::size_t j = 0; j < sol.margins.size(); ++j) {
      if (!(sol.margins[j] >= p.delta())) {
        sol.status = Status::NumericalFailure;
        sol.message = "certificate check failed for constraint " + p.constraints()[j].name;
        break;
      }
    }
  }
  return sol;
}

SdpSolution solve(const LmiProblem& p, const SolverOptions& opt, bool optimize) {
  for (const Lmi& l : p.constraints()) {
    linalg::require_finite(l.constant, "constraint constant");
    for (const SparseSym& c : l.coeffs) {
      for (const Entry& e : c.entries()) {
        if (!std::isfinite(e.value)) throw Error(ErrorKind::NonFinite, "constraint coefficient");
      }
    }
  }
  if (!(p.delta() > 0.0)) throw Error(ErrorKind::InvalidArgument, "strictness margin must be positive");
  const int m = p.num_scalars();
  const Normalized norm = normalize(p);

  SdpSolution sol;
  sol.x = Vec::Zero(m);
  int iterations = 0;

  const PhaseOne p1 = phase_one(norm, m, sol.x, opt, iterations);
  sol.phase1_margin = p1.margin;
  sol.iterations = iterations;
  if (!p1.interior) {
    if (p1.outcome == CenterOutcome::Centered || p1.outcome == CenterOutcome::Stalled) {
      sol.status = Status::Infeasible;
      sol.message = "phase I optimum has no interior margin";
    } else {
      sol.status = outcome_status(p1.outcome);
      sol.message = "phase I: " + outcome_message(p1.outcome);
    }
    return finish(p, sol);
  }

  if (!optimize || !p.objective() || p.objective()->norm() == 0.0) {
    sol.status = Status::Feasible;
    return finish(p, sol);
  }

  Vec c = *p.objective();
  if (c.size() != m) throw Error(ErrorKind::DimensionMismatch, "objective length");
  c /= c.norm();

  BarrierPath path(norm.blocks, m, c, opt, iterations);
  // start where the phase I point is closest to central
  double nu = 0.0;
  for (const ActiveBlock& b : norm.blocks) nu += b.dim;
  const double t0 = std::clamp(path.initial_t(sol.x), 1e-8, 1e8);
  double final_t = t0;
  const Vec x_feasible = sol.x;
  const CenterOutcome o = follow_path(path, sol.x, t0, nu, opt, final_t, [](const Vec&) { return false; });
  sol.iterations = iterations;
  sol.final_mu = 1.0 / final_t;
  if (o == CenterOutcome::Centered) {
    sol.status = Status::Optimal;
  } else if (o == CenterOutcome::Stalled || o == CenterOutcome::Budget ||
             o == CenterOutcome::Singular) {
    // Every phase II iterate is strictly inside the cone, so the last one is
    // still a valid (if not optimal) answer; finish() re-checks the margins.
    sol.status = Status::Feasible;
    sol.message = "phase II stopped early: " + outcome_message(o);
  } else {
    sol.status = outcome_status(o);
    sol.message = "phase II: " + outcome_message(o);
    if (o == CenterOutcome::Unbounded) sol.x = x_feasible;
  }
  return finish(p, sol);
}

}  // namespace

SdpSolution solve_feasibility(const LmiProblem& p, const SolverOptions& opt) {
  return solve(p, opt, false);
}

SdpSolution maximize_linear(const LmiProblem& p, const SolverOptions& opt) {
  if (!p.objective()) throw Error(ErrorKind::InvalidArgument, "maximize_linear needs an objective");
  return solve(p, opt, true);
}

// ---------------------------------------------------------------------------
// JSON

namespace {

std::string_view kind_name(VarKind k) {
  switch (k) {
    case VarKind::SymMatrix: return "symmetric";
    case VarKind::Vector: return "vector";
    case VarKind::Scalar: return "scalar";
  }
  return "scalar";
}

VarKind kind_from_name(const std::string& s) {
  if (s == "symmetric") return VarKind::SymMatrix;
  if (s == "vector") return VarKind::Vector;
  if (s == "scalar") return VarKind::Scalar;
  throw Error(ErrorKind::Config, "unknown variable kind " + s);
}

}  // namespace

nlohmann::json to_json(const LmiProblem& p) {
  using nlohmann::json;
  json vars = json::array();
  for (const VarSpec& v : p.variables()) {
    vars.push_back({{"kind", kind_name(v.kind)}, {"dim", v.dim}, {"name", v.name}});
  }
  json cons = json::array();
  for (const Lmi& l : p.constraints()) {
    json terms = json::array();
    for (int i = 0; i < p.num_scalars(); ++i) {
      const SparseSym& c = l.coeffs[static_cast<std::size_t>(i)];
      if (c.empty()) continue;
      json entries = json::array();
      for (const Entry& e : c.entries()) entries.push_back({e.row, e.col, e.value});
      terms.push_back({{"index", i}, {"entries", std::move(entries)}});
    }
    cons.push_back({{"name", l.name},
                    {"dim", l.dim},
                    {"constant", io::mat_to_json(l.constant)},
                    {"terms", std::move(terms)}});
  }
  json j{{"variables", std::move(vars)}, {"constraints", std::move(cons)}, {"delta", p.delta()}};
  if (p.objective()) {
    j["objective"] = std::vector<double>(p.objective()->data(),
                                         p.objective()->data() + p.objective()->size());
  } else {
    j["objective"] = nullptr;
  }
  return j;
}

LmiProblem lmi_problem_from_json(const nlohmann::json& j) {
  LmiProblem p;
  try {
    for (const auto& v : j.at("variables")) {
      p.add_variable({kind_from_name(v.at("kind").get<std::string>()), v.at("dim").get<int>(),
                      v.value("name", std::string{})});
    }
    for (const auto& c : j.at("constraints")) {
      const int id = p.add_constraint(c.at("name").get<std::string>(), c.at("dim").get<int>());
      Lmi& l = p.mutable_constraints()[static_cast<std::size_t>(id)];
      l.constant = io::mat_from_json(c.at("constant"));
      if (l.constant.rows() != l.dim || l.constant.cols() != l.dim) {
        throw Error(ErrorKind::DimensionMismatch, "constant size for " + l.name);
      }
      for (const auto& t : c.at("terms")) {
        const int idx = t.at("index").get<int>();
        if (idx < 0 || idx >= p.num_scalars()) throw Error(ErrorKind::Config, "term index out of range");
        SparseSym& target = l.coeffs[static_cast<std::size_t>(idx)];
        for (const auto& e : t.at("entries")) {
          const int r = e.at(0).get<int>(), col = e.at(1).get<int>();
          if (r < 0 || col < 0 || r >= l.dim || col >= l.dim) {
            throw Error(ErrorKind::Config, "entry out of range in " + l.name);
          }
          target.add_raw(r, col, e.at(2).get<double>());
        }
      }
    }
    p.set_delta(j.at("delta").get<double>());
    if (!j.at("objective").is_null()) {
      const auto c = j.at("objective").get<std::vector<double>>();
      if (static_cast<int>(c.size()) != p.num_scalars()) {
        throw Error(ErrorKind::DimensionMismatch, "objective length");
      }
      p.set_objective(Eigen::Map<const Vec>(c.data(), static_cast<Eigen::Index>(c.size())));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("LMI problem JSON: ") + e.what());
  }
  p.finalize();
  return p;
}

}  // namespace koopstab::sdp
