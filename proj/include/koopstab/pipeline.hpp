#pragma once

// End-to-end pipeline: collect -> fit -> synthesize -> simulate -> verify,
// driven by one JSON configuration. Every stage is a pure function of the
// configuration and its input artifacts; the writers put artifacts under the
// output directory with content hashes of their inputs.
//
// Seeds: stage s of a run with config seed S draws from rng::derive(S, s)
// with s = kSeedExcitation, kSeedVerify + lifting index, ...

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "koopstab/edmd.hpp"
#include "koopstab/sim.hpp"
#include "koopstab/synthesis.hpp"

namespace koopstab::pipeline {

inline constexpr std::uint64_t kSeedExcitation = 0;
inline constexpr std::uint64_t kSeedVerify = 16;  // + lifting index

struct SystemConfig {
  std::string name = "vanderpol";
  double mu = 1.0;
};

struct DataConfig {
  double tau_s = 0.01;
  double duration = 20.0;  // seconds of forced data after the warm-up
  std::uint64_t seed = 1;
  double u_lo = -1.0;
  double u_hi = 1.0;
  Vec x0;
  /// Unforced steps recorded before the excitation. Negative: the largest
  /// history among the configured liftings.
  int warmup = -1;
};

/// Either a centered ball of radius^2 c_z or explicit Q, S, R.
struct RegionConfig {
  double c_z = 1.0;
  std::optional<Mat> q;
  std::optional<Vec> s;
  std::optional<double> r;
  bool search = false;  // design the region instead (S = 0, R = 1)
};

enum class LSource { Fixed, Estimated };

struct SynthesisConfig {
  synthesis::Mode mode = synthesis::Mode::Nominal;
  LSource l_source = LSource::Fixed;
  double l_eps = 0.0;
  double inflation = edmd::kDefaultInflation;
  double beta = 1e3;
  double delta = 1e-6;
  int max_iterations = 200;
};

/// One lifting pipeline. region / synthesis override the shared sections
/// when present.
struct LiftingConfig {
  std::string label;
  lifting::LiftingSpec spec;
  std::optional<RegionConfig> region;
  std::optional<SynthesisConfig> synthesis;
};

struct SimulationConfig {
  Vec x0;
  double duration = 20.0;
  double convergence_tol = 1e-2;
};

struct VerificationConfig {
  int samples = 10000;
};

/// Robust threshold probe on one lifting, reported but never fatal.
struct RobustProbeConfig {
  bool enabled = true;
  std::string lifting = "monomial";
  double l_eps = 1e-5;
  bool bisect = true;
  double bisect_lo = 1e-8;
  double bisect_hi = 1e-3;
  int bisect_steps = 8;
};

struct PipelineConfig {
  SystemConfig system;
  DataConfig data;
  std::vector<LiftingConfig> liftings;
  RegionConfig region;
  SynthesisConfig synthesis;
  SimulationConfig simulation;
  VerificationConfig verification;
  RobustProbeConfig robust_probe;
  std::filesystem::path output_dir = "out";

  /// Throws Config on a malformed configuration.
  void validate() const;
  const LiftingConfig& lifting(const std::string& label) const;
  int lifting_index(const std::string& label) const;
  SynthesisConfig synthesis_for(const LiftingConfig& l) const;
  RegionConfig region_for(const LiftingConfig& l) const;
  int data_steps() const;
  int simulation_steps() const;
  int warmup_steps() const;
};

/// The pinned Van der Pol setup with both liftings.
PipelineConfig vdp_default_config();

io::json to_json(const PipelineConfig& c);
PipelineConfig config_from_json(const io::json& j);
PipelineConfig load_config(const std::filesystem::path& path);
/// Hash of the canonical serialization without output_dir.
std::string config_hash(const PipelineConfig& c);

sim::SystemDef make_system(const SystemConfig& s);

// ---------------------------------------------------------------------------
// Stages

/// Throws EmptyRun when the configured duration gives no samples.
edmd::Dataset collect(const PipelineConfig& cfg);

struct FitResult {
  edmd::BilinearModel model;
  edmd::ErrorReport errors;
  edmd::FitDiagnostics diagnostics;
};

/// Full fit for monomial liftings, structured fit for delay liftings.
FitResult fit(const PipelineConfig& cfg, const LiftingConfig& lift, const edmd::Dataset& ds);

synthesis::RegionSpec make_region(const RegionConfig& r, int n);

struct SynthesizeOutcome {
  synthesis::SynthesisResult result;
  synthesis::RegionSpec region;
  double l_eps = 0.0;
  bool l_eps_heuristic = false;
};

/// Never throws on infeasibility; result.controller is empty instead.
/// `l_hat` feeds the estimated L_eps source.
SynthesizeOutcome synthesize(const PipelineConfig& cfg, const LiftingConfig& lift,
                             const edmd::BilinearModel& model, double l_hat);

struct SimulationResult {
  sim::Trajectory closed;
  sim::Trajectory open;
  int convergence_step = -1;  // first k with |x_k| <= tol, -1 if never
  double final_norm = 0.0;
};

SimulationResult simulate(const PipelineConfig& cfg, const LiftingConfig& lift, const Vec& gain);

struct VerifyOutcome {
  synthesis::VerifyReport certificate;
  /// Model closed loop from RoA samples: steps where V did not decrease.
  int model_steps = 0;
  int model_increases = 0;
  /// Physical closed loop, steps inside the RoA where V did not decrease.
  /// Reported only: the nominal design ignores the truncation error.
  int plant_steps_in_roa = 0;
  int plant_increases = 0;
  bool passed() const { return certificate.passed() && model_increases == 0; }
};

VerifyOutcome verify(const PipelineConfig& cfg, const LiftingConfig& lift, const edmd::BilinearModel& model,
                     const synthesis::Controller& ctrl, const synthesis::RegionSpec& region, double l_eps,
                     const sim::Trajectory* closed = nullptr);

struct ProbeResult {
  std::string lifting;
  double l_eps = 0.0;
  std::string status;
  bool feasible = false;
  /// Largest feasible L_eps found by bisection, 0 if none.
  std::optional<double> max_feasible;
};

ProbeResult robust_probe(const PipelineConfig& cfg, const edmd::BilinearModel& model);

/// Largest L in [lo, hi] (log bisection) with feasible robust synthesis;
/// 0 when lo is already infeasible.
double max_feasible_l_eps(const PipelineConfig& cfg, const LiftingConfig& lift,
                          const edmd::BilinearModel& model, double lo, double hi, int steps);

// ---------------------------------------------------------------------------
// Whole run

struct LiftingSummary {
  std::string label;
  int n_lifted = 0;
  int lmi_dim = 0;
  int num_vars = 0;
  std::string status;
  bool feasible = false;
  double roa_level = 0.0;
  double gain_norm = 0.0;
  int convergence_step = -1;
  bool diverged = false;
  bool verified = false;
  int violations = 0;
  double solve_seconds = 0.0;
  // robust layout for the same lifting, reported for comparison
  int robust_lmi_dim = 0;
  int robust_num_vars = 0;
};

struct RunSummary {
  std::vector<LiftingSummary> rows;
  std::optional<ProbeResult> probe;
  bool all_converged() const;
  bool all_verified() const;
};

std::string format_table(const RunSummary& s);
io::json to_json(const RunSummary& s);

/// Runs every stage for every lifting and writes the artifact tree when
/// write is set.
RunSummary run_all(const PipelineConfig& cfg, bool write, std::ostream* log = nullptr);

// ---------------------------------------------------------------------------
// Artifact layout under output_dir

struct Layout {
  std::filesystem::path root;
  std::filesystem::path data_csv() const { return root / "data.csv"; }
  std::filesystem::path data_meta() const { return root / "data.meta.json"; }
  std::filesystem::path dir(const std::string& label) const { return root / label; }
  std::filesystem::path model(const std::string& label) const { return dir(label) / "model.json"; }
  std::filesystem::path errors(const std::string& label) const { return dir(label) / "errors.json"; }
  std::filesystem::path controller(const std::string& label) const { return dir(label) / "controller.json"; }
  std::filesystem::path trajectory(const std::string& label) const { return dir(label) / "closed_loop.csv"; }
  std::filesystem::path open_loop(const std::string& label) const { return dir(label) / "open_loop.csv"; }
  std::filesystem::path phase(const std::string& label) const { return dir(label) / "phase_portrait.csv"; }
  std::filesystem::path report(const std::string& label) const { return dir(label) / "verify.json"; }
  std::filesystem::path summary_txt() const { return root / "summary.txt"; }
  std::filesystem::path summary_json() const { return root / "summary.json"; }
};

void write_dataset(const Layout& out, const PipelineConfig& cfg, const edmd::Dataset& ds);
edmd::Dataset read_dataset(const std::filesystem::path& csv, const std::filesystem::path& meta);

io::json fit_json(const FitResult& f, const PipelineConfig& cfg, double inflation);
io::json controller_json(const SynthesizeOutcome& s, const PipelineConfig& cfg, const FitResult* fit = nullptr);
io::json verify_json(const VerifyOutcome& v);

}  // namespace koopstab::pipeline
