#include "koopstab/synthesis.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "koopstab/rng.hpp"

namespace koopstab::synthesis {

bool RegionSpec::is_centered_ball() const {
  return s.norm() == 0.0 && q == -Mat::Identity(dim(), dim());
}

RegionSpec make_region(const Mat& q, const Vec& s, double r) {
  const Eigen::Index n = q.rows();
  if (q.cols() != n || s.size() != n) throw Error(ErrorKind::DimensionMismatch, "region blocks");
  linalg::require_finite(q, "region Q");
  linalg::require_finite(s, "region S");
  if (!std::isfinite(r)) throw Error(ErrorKind::NonFinite, "region R");
  if (!linalg::is_symmetric(q)) throw Error(ErrorKind::InvalidRegion, "Q must be symmetric");
  if (!(linalg::max_eig(q) < 0.0)) throw Error(ErrorKind::InvalidRegion, "Q must be negative definite");
  if (!(r > 0.0)) throw Error(ErrorKind::InvalidRegion, "R must be positive");
  Mat full(n + 1, n + 1);
  full << q, s, s.transpose(), r;
  const Eigen::FullPivLU<Mat> lu(full);
  if (!lu.isInvertible()) throw Error(ErrorKind::InvalidRegion, "region matrix is singular");
  const Mat inv = linalg::symmetrize(lu.inverse());
  const double resid = (full * inv - Mat::Identity(n + 1, n + 1)).norm();
  if (!(resid <= 1e-8 * (1.0 + full.norm() * inv.norm()))) {
    throw Error(ErrorKind::InvalidRegion, "region matrix is too ill-conditioned to invert");
  }
  RegionSpec reg;
  reg.q = linalg::symmetrize(q);
  reg.s = s;
  reg.r = r;
  reg.q_inv = inv.topLeftCorner(n, n);
  reg.s_inv = inv.topRightCorner(n, 1);
  reg.r_inv = inv(n, n);
  return reg;
}

RegionSpec region_ball(int n, double c_z) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "region dimension must be >= 1");
  if (!(c_z > 0.0) || !std::isfinite(c_z)) throw Error(ErrorKind::InvalidRegion, "c_z must be positive");
  RegionSpec reg;
  reg.q = -Mat::Identity(n, n);
  reg.s = Vec::Zero(n);
  reg.r = c_z;
  reg.q_inv = -Mat::Identity(n, n);
  reg.s_inv = Vec::Zero(n);
  reg.r_inv = 1.0 / c_z;
  return reg;
}

namespace {

using sdp::VarKind;

// Decrease condition of the nominal (2N+1) or robust (3N+1) design. When
// search_region is set the region inverse is a variable with S = 0, R = 1.
SynthesisProblem build(const BilinearModel& model, const RegionSpec& region, Mode mode,
                       double l_eps, const SynthesisOptions& opt, bool search_region) {
  model.validate();
  const int N = model.dim();
  if (!search_region && region.dim() != N) {
    throw Error(ErrorKind::DimensionMismatch, "region dimension " + std::to_string(region.dim()) +
                                                  " differs from model dimension " + std::to_string(N));
  }
  if (!(l_eps >= 0.0) || !std::isfinite(l_eps)) throw Error(ErrorKind::InvalidArgument, "L_eps must be >= 0");
  if (!(opt.beta > 0.0)) throw Error(ErrorKind::InvalidArgument, "beta must be positive");
  const bool robust = mode == Mode::Robust;
  if (opt.pinned_tau && !(*opt.pinned_tau > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "pinned multiplier must be positive");
  }

  SynthesisProblem sp;
  sdp::LmiProblem& p = sp.lmi;
  p.set_delta(opt.delta);
  sp.p_var = p.add_variable({VarKind::SymMatrix, N, "P"});
  sp.y_var = p.add_variable({VarKind::Vector, N, "y"});
  const bool tau_free = robust && !opt.pinned_tau;
  if (tau_free) sp.tau_var = p.add_variable({VarKind::Scalar, 1, "tau"});
  if (search_region) sp.q_var = p.add_variable({VarKind::SymMatrix, N, "Q_inv"});

  const Mat eye = Mat::Identity(N, N);
  const Mat one = Mat::Ones(1, 1);
  const Mat b0 = model.b0;
  const Mat& b1 = model.b1;

  const int pos = p.add_constraint("P", N);
  p.add_sym_term(pos, 0, 0, sp.p_var, eye, eye);
  if (tau_free) {
    const int t = p.add_constraint("tau", 1);
    p.add_scalar_term(t, 0, 0, sp.tau_var, one);
  }

  const int dim = robust ? 3 * N + 1 : 2 * N + 1;
  const int last = robust ? 2 * N + 1 : N + 1;  // offset of the trailing P block
  sp.main_dim = dim;
  sp.main_block = p.add_constraint("decrease", dim);
  const int m = sp.main_block;
  // (1,1)
  p.add_sym_term(m, 0, 0, sp.p_var, eye, eye);
  if (search_region) {
    p.add_sym_term(m, 0, 0, sp.q_var, b1, b1.transpose());
  } else {
    p.add_constant(m, 0, 0, b1 * region.q_inv * b1.transpose());
    // (1,2)
    p.add_constant(m, 0, N, -b1 * region.s_inv);
  }
  // (2,2)
  p.add_constant(m, N, N, Mat::Constant(1, 1, search_region ? 1.0 : region.r_inv));
  // (1,last) = A P + B0 y^T, (2,last) = y^T, (last,last) = P
  p.add_sym_term(m, 0, last, sp.p_var, model.a, eye);
  p.add_vec_term(m, 0, last, sp.y_var, b0, eye, true);
  p.add_vec_term(m, N, last, sp.y_var, one, eye, true);
  p.add_sym_term(m, last, last, sp.p_var, eye, eye);
  if (robust) {
    const int mid = N + 1;
    if (tau_free) {
      p.add_scalar_term(m, 0, 0, sp.tau_var, -eye);
      p.add_scalar_term(m, mid, mid, sp.tau_var, eye);
    } else {
      p.add_constant(m, 0, 0, -*opt.pinned_tau * eye);
      p.add_constant(m, mid, mid, *opt.pinned_tau * eye);
    }
    if (l_eps > 0.0) p.add_sym_term(m, mid, last, sp.p_var, l_eps * eye, eye);
  }

  const int cap = p.add_constraint("cap", N);
  p.add_constant(cap, 0, 0, opt.beta * eye);
  p.add_sym_term(cap, 0, 0, sp.p_var, -eye, eye);

  Vec objective = p.trace_objective(sp.p_var);
  if (search_region) {
    const int neg = p.add_constraint("Q_inv", N);
    p.add_sym_term(neg, 0, 0, sp.q_var, -eye, eye);
    const int floor = p.add_constraint("Q_inv floor", N);
    p.add_constant(floor, 0, 0, opt.beta * eye);
    p.add_sym_term(floor, 0, 0, sp.q_var, eye, eye);
    objective -= p.trace_objective(sp.q_var);
  }
  p.set_objective(objective);
  p.finalize();

  const int expected = N * (N + 1) / 2 + N + (tau_free ? 1 : 0) + (search_region ? N * (N + 1) / 2 : 0);
  if (p.num_scalars() != expected) {
    throw Error(ErrorKind::NumericalFailure, "synthesis builder produced an unexpected variable count");
  }
  return sp;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

SynthesisResult run(const SynthesisProblem& sp, const BilinearModel& model, const RegionSpec* region,
                    Mode mode, double l_eps, const SynthesisOptions& opt, RegionSpec* region_out) {
  SynthesisResult res;
  res.lmi_dim = sp.main_dim;
  res.num_vars = sp.lmi.num_scalars();
  const auto t0 = std::chrono::steady_clock::now();
  res.solution = sdp::maximize_linear(sp.lmi, opt.solver);
  const double elapsed = seconds_since(t0);
  if (!res.solution.ok()) return res;

  const Vec& x = res.solution.x;
  Controller c;
  c.p = sp.lmi.unpack_sym(sp.p_var, x);
  c.y = sp.lmi.unpack_vec(sp.y_var, x);
  Eigen::LLT<Mat> llt(c.p);
  if (llt.info() != Eigen::Success) {
    res.solution.status = sdp::Status::NumericalFailure;
    res.solution.message = "P is not positive definite at the solution";
    return res;
  }
  c.k = llt.solve(c.y);
  c.mode = mode;
  c.l_eps = mode == Mode::Robust ? l_eps : 0.0;
  if (mode == Mode::Robust) c.tau = sp.tau_var >= 0 ? sp.lmi.unpack_scalar(sp.tau_var, x) : *opt.pinned_tau;
  c.beta = opt.beta;
  c.delta = opt.delta;
  c.status = std::string(sdp::to_string(res.solution.status));
  c.iterations = res.solution.iterations;
  c.lmi_dim = res.lmi_dim;
  c.num_vars = res.num_vars;
  c.objective = res.solution.objective;
  c.min_margin = *std::min_element(res.solution.margins.begin(), res.solution.margins.end());
  c.solve_seconds = elapsed;
  c.model_hash = edmd::model_hash(model);

  if (sp.q_var >= 0) {
    const Mat q_inv = sp.lmi.unpack_sym(sp.q_var, x);
    *region_out = make_region(linalg::spd_inverse(-q_inv) * -1.0, Vec::Zero(model.dim()), 1.0);
    region = region_out;
  }
  c.c = compute_roa(c.p, *region);
  res.controller = std::move(c);
  return res;
}

Controller unwrap(SynthesisResult res) {
  if (res.controller) return std::move(*res.controller);
  const sdp::SdpSolution& s = res.solution;
  if (s.status == sdp::Status::Infeasible) {
    throw Error(ErrorKind::InfeasibleSynthesis,
                "no certificate exists for this model and region (phase I margin " +
                    std::to_string(s.phase1_margin) + ")");
  }
  throw Error(ErrorKind::NumericalFailure,
              std::string("solver ended with ") + std::string(sdp::to_string(s.status)) + ": " + s.message);
}

}  // namespace

SynthesisProblem build_nominal_lmi(const BilinearModel& model, const RegionSpec& region,
                                   const SynthesisOptions& opt) {
  return build(model, region, Mode::Nominal, 0.0, opt, false);
}

SynthesisProblem build_robust_lmi(const BilinearModel& model, const RegionSpec& region,
                                  double l_eps, const SynthesisOptions& opt) {
  return build(model, region, Mode::Robust, l_eps, opt, false);
}

SynthesisResult try_synthesize(const BilinearModel& model, const RegionSpec& region, Mode mode,
                               double l_eps, const SynthesisOptions& opt) {
  const SynthesisProblem sp = build(model, region, mode, l_eps, opt, false);
  return run(sp, model, &region, mode, l_eps, opt, nullptr);
}

Controller synthesize(const BilinearModel& model, const RegionSpec& region, Mode mode,
                      double l_eps, const SynthesisOptions& opt) {
  return unwrap(try_synthesize(model, region, mode, l_eps, opt));
}

Controller synthesize_with_region(const BilinearModel& model, Mode mode, double l_eps,
                                  RegionSpec& region_out, const SynthesisOptions& opt) {
  const SynthesisProblem sp = build(model, RegionSpec{}, mode, l_eps, opt, true);
  return unwrap(run(sp, model, nullptr, mode, l_eps, opt, &region_out));
}

// ---------------------------------------------------------------------------
// Region of attraction

namespace {

// max over lambda in [0, R/c] of min_eig [[Q + lambda W, S], [S^T, R - lambda c]].
// The objective is concave in lambda, so golden-section search finds it.
double sprocedure_margin(const Mat& w, const RegionSpec& reg, double c) {
  const Eigen::Index n = w.rows();
  const auto margin = [&](double lambda) {
    Mat m(n + 1, n + 1);
    m << reg.q + lambda * w, reg.s, reg.s.transpose(), reg.r - lambda * c;
    return linalg::min_eig(m);
  };
  double lo = 0.0, hi = reg.r / c;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
  double fa = margin(a), fb = margin(b);
  for (int it = 0; it < 200 && hi - lo > 1e-14 * (1.0 + hi); ++it) {
    if (fa < fb) {
      lo = a;
      a = b;
      fa = fb;
      b = lo + g * (hi - lo);
      fb = margin(b);
    } else {
      hi = b;
      b = a;
      fb = fa;
      a = hi - g * (hi - lo);
      fa = margin(a);
    }
  }
  return std::max({fa, fb, margin(lo), margin(hi)});
}

}  // namespace

bool roa_contained(const Mat& p_inv, const RegionSpec& region, double c) {
  if (!(c > 0.0)) return true;
  const double scale = 1.0 + std::max({region.q.norm(), p_inv.norm() * c, std::abs(region.r)});
  return sprocedure_margin(p_inv, region, c) >= -1e-12 * scale;
}

double compute_roa(const Mat& p, const RegionSpec& region) {
  if (p.rows() != region.dim() || p.cols() != region.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "compute_roa: P and region dimensions differ");
  }
  if (!linalg::is_positive_definite(p)) throw Error(ErrorKind::InvalidArgument, "compute_roa: P must be > 0");
  if (!(linalg::max_eig(region.q) < 0.0) || !(region.r > 0.0)) {
    throw Error(ErrorKind::InvalidRegion, "compute_roa: region needs Q < 0 and R > 0");
  }
  const double lmax = linalg::max_eig(p);
  if (region.is_centered_ball()) return region.r / lmax;

  // Z is the ellipsoid (z - z0)^T (-Q) (z - z0) <= rho around z0 = -Q^{-1} S.
  const Mat neg_q = -region.q;
  const Vec z0 = linalg::spd_solve(neg_q, region.s);
  const double rho = region.r + region.s.dot(z0);
  const double rmax = z0.norm() + std::sqrt(rho / linalg::min_eig(neg_q));
  const Mat p_inv = linalg::spd_inverse(p);
  double lo = 0.0, hi = rmax * rmax / lmax;
  if (roa_contained(p_inv, region, hi)) return hi;
  for (int it = 0; it < 60 && hi - lo > kRoaRelTol * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (roa_contained(p_inv, region, mid) ? lo : hi) = mid;
  }
  if (!(lo > 0.0)) throw Error(ErrorKind::InvalidRegion, "compute_roa: no positive level fits the region");
  return lo;
}

// ---------------------------------------------------------------------------
// Verification

double worst_case_quadratic(const linalg::SymEig& w, const Vec& m, double rho) {
  const Vec& lam = w.eigenvalues;
  const Vec mh = w.eigenvectors.transpose() * m;
  const Eigen::Index n = lam.size();
  const double base = mh.dot(lam.cwiseProduct(mh));
  if (!(rho > 0.0)) return base;
  const double wmax = lam(n - 1);
  const double tol = 1e-12 * std::max(1.0, std::abs(wmax));

  // |e(lambda)|^2 with e_i = w_i m_i / (lambda - w_i), decreasing on (wmax, inf)
  const auto norm_sq = [&](double l) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e = lam(i) * mh(i) / (l - lam(i));
      s += e * e;
    }
    return s;
  };
  const auto value = [&](double l) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = mh(i) * l / (l - lam(i));
      s += lam(i) * t * t;
    }
    return s;
  };

  double top_weight = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (wmax - lam(i) <= tol) top_weight += mh(i) * mh(i);
  }
  const double mnorm = mh.norm();
  if (top_weight <= 1e-28 * (1.0 + mnorm * mnorm)) {
    // Degenerate case: m has no component on the top eigenspace. If the
    // remaining components cannot use up the radius, the rest goes along
    // the top eigenvector.
    double rest_sq = 0.0, rest_val = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (wmax - lam(i) <= tol) continue;
      const double e = lam(i) * mh(i) / (wmax - lam(i));
      rest_sq += e * e;
      const double t = mh(i) + e;
      rest_val += lam(i) * t * t;
    }
    if (rest_sq <= rho * rho) return rest_val + wmax * (rho * rho - rest_sq);
  }
  // Secular equation |e(lambda)| = rho on (wmax, wmax + |W m| / rho].
  double lo = wmax, hi = wmax + (lam.cwiseProduct(mh)).norm() / rho + tol;
  while (norm_sq(hi) > rho * rho) hi = wmax + 2.0 * (hi - wmax);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (norm_sq(mid) > rho * rho ? lo : hi) = mid;
  }
  return value(hi);
}

namespace {

// Uniform sample in { z^T P^{-1} z <= c } \ {0}, drawn from its own stream.
Vec sample_ellipsoid(const Mat& chol_l, double c, std::uint64_t seed, int index) {
  rng::SplitMix64 g(rng::derive(seed, static_cast<std::uint64_t>(index)));
  const Eigen::Index n = chol_l.rows();
  Vec v(n);
  for (;;) {
    for (Eigen::Index i = 0; i < n; ++i) v(i) = g.normal();
    const double nv = v.norm();
    const double r = std::pow(g.uniform(), 1.0 / static_cast<double>(n));
    if (nv > 0.0 && r > 0.0) {
      v *= r / nv;
      break;
    }
  }
  return std::sqrt(c) * (chol_l * v);
}

struct SampleOutcome {
  bool violated = false;
  double relative = 0.0;
};

struct VerifyContext {
  const BilinearModel& model;
  const Controller& ctrl;
  Mat chol_l;
  Mat w;
  linalg::SymEig w_eig;
  double l_eps;
  std::uint64_t seed;

  SampleOutcome evaluate(int i) const {
    const Vec z = sample_ellipsoid(chol_l, ctrl.c, seed, i);
    const double u = ctrl.k.dot(z);
    const Vec next = model.step(z, u);
    const double v = z.dot(w * z);
    const double vn = l_eps > 0.0 ? worst_case_quadratic(w_eig, next, l_eps * z.norm()) : next.dot(w * next);
    const double diff = vn - v;
    return {!(diff < 0.0), diff / v};
  }
};

}  // namespace

Mat schur_form(const BilinearModel& model, const Controller& ctrl, const RegionSpec& region,
               double l_eps) {
  const int N = model.dim();
  const bool robust = ctrl.mode == Mode::Robust;
  const Mat acl = model.a + model.b0 * ctrl.k.transpose();
  const Mat eye = Mat::Identity(N, N);
  const int cols = robust ? 2 * N + 1 : N + 1;
  const int rows = robust ? 5 * N + 1 : 3 * N + 1;
  Mat m = Mat::Zero(rows, cols);
  m.block(0, 0, N, N) = acl.transpose();
  m.block(0, N, N, 1) = ctrl.k;
  m.block(N, 0, N, N) = -eye;
  m.block(2 * N, 0, N, N) = model.b1.transpose();
  m(3 * N, N) = -1.0;
  Mat mid = Mat::Zero(rows, rows);
  mid.block(0, 0, N, N) = -ctrl.p;
  mid.block(N, N, N, N) = ctrl.p;
  mid.block(2 * N, 2 * N, N, N) = region.q_inv;
  mid.block(2 * N, 3 * N, N, 1) = region.s_inv;
  mid.block(3 * N, 2 * N, 1, N) = region.s_inv.transpose();
  mid(3 * N, 3 * N) = region.r_inv;
  if (robust) {
    m.block(0, N + 1, N, N) = l_eps * eye;
    m.block(3 * N + 1, N + 1, N, N) = -eye;
    m.block(4 * N + 1, 0, N, N) = eye;
    mid.block(3 * N + 1, 3 * N + 1, N, N) = ctrl.tau * eye;
    mid.block(4 * N + 1, 4 * N + 1, N, N) = -ctrl.tau * eye;
  }
  return linalg::symmetrize(m.transpose() * mid * m);
}

Mat dual_form(const BilinearModel& model, const Controller& ctrl, const RegionSpec& region,
              double l_eps) {
  const int N = model.dim();
  const bool robust = ctrl.mode == Mode::Robust;
  const Mat acl = model.a + model.b0 * ctrl.k.transpose();
  const Mat eye = Mat::Identity(N, N);
  const int cols = robust ? 3 * N : 2 * N;
  const int rows = robust ? 5 * N + 1 : 3 * N + 1;
  Mat m = Mat::Zero(rows, cols);
  m.block(0, 0, N, N) = eye;
  m.block(N, 0, N, N) = acl;
  m.block(N, N, N, N) = model.b1;
  m.block(2 * N, N, N, N) = eye;
  m.block(3 * N, 0, 1, N) = ctrl.k.transpose();
  const Mat p_inv = linalg::spd_inverse(ctrl.p);
  Mat mid = Mat::Zero(rows, rows);
  mid.block(0, 0, N, N) = -p_inv;
  mid.block(N, N, N, N) = p_inv;
  mid.block(2 * N, 2 * N, N, N) = region.q;
  mid.block(2 * N, 3 * N, N, 1) = region.s;
  mid.block(3 * N, 2 * N, 1, N) = region.s.transpose();
  mid(3 * N, 3 * N) = region.r;
  if (robust) {
    m.block(N, 2 * N, N, N) = eye;
    m.block(3 * N + 1, 0, N, N) = l_eps * eye;
    m.block(4 * N + 1, 2 * N, N, N) = eye;
    mid.block(3 * N + 1, 3 * N + 1, N, N) = eye / ctrl.tau;
    mid.block(4 * N + 1, 4 * N + 1, N, N) = -eye / ctrl.tau;
  }
  return linalg::symmetrize(m.transpose() * mid * m);
}

VerifyReport verify_certificate(const BilinearModel& model, const Controller& ctrl,
                                const RegionSpec& region, double l_eps, const VerifyOptions& opt) {
  model.validate();
  const int N = model.dim();
  if (ctrl.p.rows() != N || ctrl.k.size() != N || region.dim() != N) {
    throw Error(ErrorKind::DimensionMismatch, "verify: controller, model and region disagree");
  }
  if (opt.samples < 0) throw Error(ErrorKind::InvalidArgument, "verify: negative sample count");
  Eigen::LLT<Mat> llt(ctrl.p);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::InvalidArgument, "verify: P is not > 0");

  VerifyReport rep;
  rep.robust = ctrl.mode == Mode::Robust;
  rep.l_eps = l_eps;
  rep.samples = opt.samples;
  rep.gain_residual = (ctrl.p * ctrl.k - ctrl.y).norm() / std::max(ctrl.y.norm(), 1e-300);
  rep.schur_form_margin = linalg::min_eig(schur_form(model, ctrl, region, l_eps));
  {
    // Diagonal congruence keeps the inertia; without it the 1/tau blocks
    // set the absolute eigenvalue error well above the margin.
    Mat d = dual_form(model, ctrl, region, l_eps);
    const Vec s = d.diagonal().cwiseAbs().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    d = s.asDiagonal() * d * s.asDiagonal();
    rep.dual_form_margin = linalg::max_eig(linalg::symmetrize(d));
  }

  const Mat w = linalg::spd_inverse(ctrl.p);
  const VerifyContext ctx{model, ctrl, llt.matrixL(), w, linalg::sym_eig(w), l_eps, opt.seed};
  int violations = 0;
  double worst = -std::numeric_limits<double>::infinity();
  if (opt.parallel) {
#pragma omp parallel for schedule(static) reduction(+ : violations) reduction(max : worst)
    for (int i = 0; i < opt.samples; ++i) {
      const SampleOutcome o = ctx.evaluate(i);
      violations += o.violated ? 1 : 0;
      worst = std::max(worst, o.relative);
    }
  } else {
    for (int i = 0; i < opt.samples; ++i) {
      const SampleOutcome o = ctx.evaluate(i);
      violations += o.violated ? 1 : 0;
      worst = std::max(worst, o.relative);
    }
  }
  rep.violations = violations;
  rep.worst_relative_decrease = opt.samples > 0 ? worst : 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization

std::string_view to_string(Mode m) { return m == Mode::Nominal ? "nominal" : "robust"; }

io::json to_json(const Controller& c) {
  return {{"P", io::mat_to_json(c.p)},
          {"y", io::vec_to_json(c.y)},
          {"k", io::vec_to_json(c.k)},
          {"tau_sproc", c.tau},
          {"c", c.c},
          {"mode", std::string(to_string(c.mode))},
          {"L_eps", c.l_eps},
          {"beta", c.beta},
          {"delta", c.delta},
          {"model_hash", c.model_hash},
          {"solver",
           {{"status", c.status},
            {"iterations", c.iterations},
            {"lmi_dim", c.lmi_dim},
            {"num_vars", c.num_vars},
            {"objective", c.objective},
            {"min_margin", c.min_margin}}}};
}

Controller controller_from_json(const io::json& j) {
  Controller c;
  try {
    c.p = io::mat_from_json(j.at("P"));
    c.y = io::vec_from_json(j.at("y"));
    c.k = io::vec_from_json(j.at("k"));
    c.tau = j.value("tau_sproc", 0.0);
    c.c = j.at("c").get<double>();
    const std::string mode = j.at("mode").get<std::string>();
    if (mode != "nominal" && mode != "robust") throw Error(ErrorKind::Config, "controller mode " + mode);
    c.mode = mode == "nominal" ? Mode::Nominal : Mode::Robust;
    c.l_eps = j.value("L_eps", 0.0);
    c.beta = j.value("beta", 0.0);
    c.delta = j.value("delta", 0.0);
    c.model_hash = j.value("model_hash", "");
    if (j.contains("solver")) {
      const io::json& s = j["solver"];
      c.status = s.value("status", "");
      c.iterations = s.value("iterations", 0);
      c.lmi_dim = s.value("lmi_dim", 0);
      c.num_vars = s.value("num_vars", 0);
      c.objective = s.value("objective", 0.0);
      c.min_margin = s.value("min_margin", 0.0);
    }
  } catch (const io::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("controller JSON: ") + e.what());
  }
  const Eigen::Index n = c.p.rows();
  if (c.p.cols() != n || c.y.size() != n || c.k.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "controller JSON: P, y and k sizes differ");
  }
  return c;
}

io::json to_json(const RegionSpec& r) {
  if (r.is_centered_ball()) return {{"c_z", r.r}};
  return {{"Q", io::mat_to_json(r.q)}, {"S", io::vec_to_json(r.s)}, {"R", r.r}};
}

RegionSpec region_from_json(const io::json& j, int n) {
  try {
    if (j.contains("c_z")) return region_ball(n, j.at("c_z").get<double>());
    return make_region(io::mat_from_json(j.at("Q")), io::vec_from_json(j.at("S")), j.at("R").get<double>());
  } catch (const io::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("region JSON: ") + e.what());
  }
}

io::json to_json(const VerifyReport& r) {
  return {{"samples", r.samples},
          {"violations", r.violations},
          {"worst_relative_decrease", r.worst_relative_decrease},
          {"schur_form_min_eig", r.schur_form_margin},
          {"dual_form_max_eig", r.dual_form_margin},
          {"gain_residual", r.gain_residual},
          {"robust", r.robust},
          {"L_eps", r.l_eps},
          {"passed", r.passed()}};
}

}  // namespace koopstab::synthesis
