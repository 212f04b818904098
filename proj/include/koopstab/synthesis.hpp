#pragma once

// State-feedback synthesis u = k^T z for the lifted bilinear model, region
// of attraction estimation and numerical certificate checks.
//
// The validity region is Z = { z : z^T Q z + 2 S^T z + R >= 0 }.

#include <cstdint>
#include <optional>
#include <string>

#include "koopstab/edmd.hpp"
#include "koopstab/sdp.hpp"

namespace koopstab::synthesis {

using edmd::BilinearModel;

struct RegionSpec {
  Mat q;
  Vec s;
  double r = 1.0;
  // blocks of [[Q, S], [S^T, R]]^{-1}
  Mat q_inv;
  Vec s_inv;
  double r_inv = 1.0;

  int dim() const { return static_cast<int>(q.rows()); }
  bool contains(const Vec& z) const { return z.dot(q * z) + 2.0 * s.dot(z) + r >= 0.0; }
  bool is_centered_ball() const;
};

/// Validates Q < 0, R > 0 and invertibility, then fills the inverse blocks.
RegionSpec make_region(const Mat& q, const Vec& s, double r);
RegionSpec region_ball(int n, double c_z);

enum class Mode { Nominal, Robust };

struct SynthesisOptions {
  double beta = 1e3;    // cap beta I - P > 0
  double delta = 1e-6;  // strictness margin
  /// Fix the multiplier instead of searching it (robust mode only).
  std::optional<double> pinned_tau;
  sdp::SolverOptions solver;
};

/// Layout of a synthesis problem. Variables are P, y and, in robust mode
/// without a pinned multiplier, tau.
struct SynthesisProblem {
  sdp::LmiProblem lmi;
  int p_var = -1;
  int y_var = -1;
  int tau_var = -1;
  int q_var = -1;       // region variable Q_inv when the region is searched
  int main_block = -1;  // index of the decrease condition among the constraints
  int main_dim = 0;
};

SynthesisProblem build_nominal_lmi(const BilinearModel& model, const RegionSpec& region,
                                   const SynthesisOptions& opt = {});
SynthesisProblem build_robust_lmi(const BilinearModel& model, const RegionSpec& region,
                                  double l_eps, const SynthesisOptions& opt = {});

struct Controller {
  Mat p;
  Vec y;
  Vec k;
  double tau = 0.0;
  double c = 0.0;
  Mode mode = Mode::Nominal;
  double l_eps = 0.0;
  double beta = 0.0;
  double delta = 0.0;
  // solver diagnostics
  std::string status;
  int iterations = 0;
  int lmi_dim = 0;
  int num_vars = 0;
  double objective = 0.0;
  double min_margin = 0.0;
  double solve_seconds = 0.0;  // wall clock, kept out of the JSON
  std::string model_hash;
};

struct SynthesisResult {
  std::optional<Controller> controller;
  sdp::SdpSolution solution;
  int lmi_dim = 0;
  int num_vars = 0;
};

/// Solves the LMI maximizing tr(P) and returns the raw outcome without
/// throwing on infeasibility.
SynthesisResult try_synthesize(const BilinearModel& model, const RegionSpec& region, Mode mode,
                               double l_eps, const SynthesisOptions& opt = {});

/// As try_synthesize but throws InfeasibleSynthesis or NumericalFailure.
Controller synthesize(const BilinearModel& model, const RegionSpec& region, Mode mode,
                      double l_eps = 0.0, const SynthesisOptions& opt = {});

/// Optional design variant: search a region with S = 0, R = 1 by minimizing
/// tr(Q_inv) subject to -beta I <= Q_inv < 0. Returns the controller and
/// writes the found region.
Controller synthesize_with_region(const BilinearModel& model, Mode mode, double l_eps,
                                  RegionSpec& region_out, const SynthesisOptions& opt = {});

inline constexpr double kRoaRelTol = 1e-6;

/// Largest c with { z^T P^{-1} z <= c } inside the region.
double compute_roa(const Mat& p, const RegionSpec& region);

/// Whether the S-procedure certifies { z^T P^{-1} z <= c } inside the region.
bool roa_contained(const Mat& p_inv, const RegionSpec& region, double c);

struct VerifyOptions {
  int samples = 10000;
  std::uint64_t seed = 1;
  bool parallel = true;
};

struct VerifyReport {
  int samples = 0;
  int violations = 0;
  /// Largest (V(z+) - V(z)) / V(z) over samples; negative when all decrease.
  double worst_relative_decrease = -1.0;
  double schur_form_margin = 0.0;  // min eig, positive required
  double dual_form_margin = 0.0;   // max eig, negative required
  double gain_residual = 0.0;      // |P k - y| / |y|
  bool robust = false;
  double l_eps = 0.0;
  bool passed() const { return violations == 0 && schur_form_margin > 0.0 && dual_form_margin < 0.0; }
};

/// Largest value of (m + e)^T W (m + e) over |e| <= rho for W > 0 given as an
/// eigendecomposition. Exact, including the degenerate case.
double worst_case_quadratic(const linalg::SymEig& w, const Vec& m, double rho);

VerifyReport verify_certificate(const BilinearModel& model, const Controller& ctrl,
                                const RegionSpec& region, double l_eps,
                                const VerifyOptions& opt = {});

/// Proof-level matrices at a controller: the Schur-complement form (> 0)
/// and the dual form built from P^{-1}, Q, S, R (< 0).
Mat schur_form(const BilinearModel& model, const Controller& ctrl, const RegionSpec& region,
               double l_eps);
Mat dual_form(const BilinearModel& model, const Controller& ctrl, const RegionSpec& region,
              double l_eps);

io::json to_json(const Controller& c);
Controller controller_from_json(const io::json& j);
io::json to_json(const RegionSpec& r);
RegionSpec region_from_json(const io::json& j, int n);
io::json to_json(const VerifyReport& r);
std::string_view to_string(Mode m);

}  // namespace koopstab::synthesis
