#include "koopstab/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "koopstab/rng.hpp"

namespace koopstab::pipeline {

namespace {

Error config_error(const std::string& what) { return Error(ErrorKind::Config, what); }

Vec vec_of(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

io::json vec_list(const Vec& v) {
  io::json a = io::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Vec list_vec(const io::json& a) {
  if (!a.is_array()) throw config_error("expected a list of numbers");
  Vec v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

int steps_of(double duration, double tau_s) {
  return static_cast<int>(std::llround(duration / tau_s));
}

std::string_view to_string(LSource s) { return s == LSource::Fixed ? "fixed" : "estimated"; }

// -- JSON sections ----------------------------------------------------------

io::json region_json(const RegionConfig& r) {
  if (r.search) return {{"search", true}};
  if (r.q) {
    return {{"Q", io::mat_to_json(*r.q)}, {"S", io::vec_to_json(r.s.value_or(Vec::Zero(r.q->rows())))},
            {"R", r.r.value_or(1.0)}};
  }
  return {{"c_z", r.c_z}};
}

RegionConfig region_from(const io::json& j) {
  RegionConfig r;
  if (j.value("search", false)) {
    r.search = true;
    return r;
  }
  if (j.contains("Q")) {
    r.q = io::mat_from_json(j.at("Q"));
    r.s = j.contains("S") ? io::vec_from_json(j.at("S")) : Vec::Zero(r.q->rows());
    r.r = j.value("R", 1.0);
    return r;
  }
  r.c_z = j.value("c_z", 1.0);
  return r;
}

io::json synthesis_json(const SynthesisConfig& s) {
  io::json l = {{"source", std::string(to_string(s.l_source))}};
  if (s.l_source == LSource::Fixed) l["value"] = s.l_eps;
  else l["inflation"] = s.inflation;
  return {{"mode", std::string(synthesis::to_string(s.mode))},
          {"L_eps", l},
          {"beta", s.beta},
          {"delta", s.delta},
          {"max_iterations", s.max_iterations}};
}

SynthesisConfig synthesis_from(const io::json& j, const SynthesisConfig& base) {
  SynthesisConfig s = base;
  if (j.contains("mode")) {
    const std::string m = j.at("mode").get<std::string>();
    if (m != "nominal" && m != "robust") throw config_error("synthesis.mode must be nominal or robust");
    s.mode = m == "nominal" ? synthesis::Mode::Nominal : synthesis::Mode::Robust;
  }
  if (j.contains("L_eps")) {
    const io::json& l = j.at("L_eps");
    const std::string src = l.value("source", "fixed");
    if (src == "fixed") {
      s.l_source = LSource::Fixed;
      s.l_eps = l.value("value", 0.0);
    } else if (src == "estimated") {
      s.l_source = LSource::Estimated;
      s.inflation = l.value("inflation", edmd::kDefaultInflation);
    } else {
      throw config_error("synthesis.L_eps.source must be fixed or estimated");
    }
  }
  s.beta = j.value("beta", s.beta);
  s.delta = j.value("delta", s.delta);
  s.max_iterations = j.value("max_iterations", s.max_iterations);
  return s;
}

// -- stage helpers -----------------------------------------------------------

synthesis::SynthesisOptions options_for(const SynthesisConfig& s) {
  synthesis::SynthesisOptions o;
  o.beta = s.beta;
  o.delta = s.delta;
  o.solver.max_iterations = s.max_iterations;
  return o;
}

double quad(const Mat& w, const Vec& z) { return z.dot(w * z); }

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void PipelineConfig::validate() const {
  if (system.name != "vanderpol") throw config_error("system.name must be vanderpol");
  if (!std::isfinite(system.mu)) throw config_error("system.mu must be finite");
  if (!(data.tau_s > 0.0)) throw config_error("data.tau_s must be positive");
  if (!(data.duration >= 0.0)) throw config_error("data.duration must be >= 0");
  if (!(data.u_lo <= data.u_hi)) throw config_error("data.input_range must satisfy lo <= hi");
  if (data.x0.size() != 2) throw config_error("data.x0 must have 2 entries");
  if (simulation.x0.size() != 2) throw config_error("simulation.x0 must have 2 entries");
  if (!(simulation.duration >= 0.0)) throw config_error("simulation.duration must be >= 0");
  if (!(simulation.convergence_tol > 0.0)) throw config_error("simulation.convergence_tol must be positive");
  if (verification.samples < 0) throw config_error("verification.samples must be >= 0");
  if (liftings.empty()) throw config_error("at least one lifting is required");
  for (std::size_t i = 0; i < liftings.size(); ++i) {
    const LiftingConfig& l = liftings[i];
    if (l.label.empty() || l.label.find_first_of("/\\.") != std::string::npos) {
      throw config_error("lifting label must be a plain non-empty name");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (liftings[j].label == l.label) throw config_error("duplicate lifting label " + l.label);
    }
    try {
      l.spec.validate();
    } catch (const Error& e) {
      throw config_error(std::string("lifting ") + l.label + ": " + e.what());
    }
    if (l.spec.n != 2) throw config_error("lifting " + l.label + ": n must match the system (2)");
    const SynthesisConfig s = synthesis_for(l);
    if (!(s.beta > 0.0) || !(s.delta > 0.0)) throw config_error("synthesis beta and delta must be positive");
    if (!(s.l_eps >= 0.0) || !(s.inflation > 0.0)) throw config_error("synthesis L_eps must be >= 0");
    if (s.max_iterations < 1) throw config_error("synthesis.max_iterations must be >= 1");
    const RegionConfig r = region_for(l);
    if (!r.search && !r.q && !(r.c_z > 0.0)) throw config_error("region.c_z must be positive");
  }
  if (!region.search && !region.q && !(region.c_z > 0.0)) throw config_error("region.c_z must be positive");
  int history = 0;
  for (const LiftingConfig& l : liftings) history = std::max(history, l.spec.history());
  if (data.warmup >= 0 && data.warmup < history) {
    throw config_error("data.warmup is shorter than the longest lifting history");
  }
  if (robust_probe.enabled) {
    lifting(robust_probe.lifting);
    if (!(robust_probe.l_eps >= 0.0)) throw config_error("robust_probe.l_eps must be >= 0");
    if (!(robust_probe.bisect_lo > 0.0 && robust_probe.bisect_lo < robust_probe.bisect_hi)) {
      throw config_error("robust_probe bisection range must satisfy 0 < lo < hi");
    }
    if (robust_probe.bisect_steps < 0) throw config_error("robust_probe.bisect_steps must be >= 0");
  }
}

const LiftingConfig& PipelineConfig::lifting(const std::string& label) const {
  return liftings[static_cast<std::size_t>(lifting_index(label))];
}

int PipelineConfig::lifting_index(const std::string& label) const {
  for (std::size_t i = 0; i < liftings.size(); ++i) {
    if (liftings[i].label == label) return static_cast<int>(i);
  }
  throw config_error("no lifting labelled " + label);
}

SynthesisConfig PipelineConfig::synthesis_for(const LiftingConfig& l) const {
  return l.synthesis.value_or(synthesis);
}

RegionConfig PipelineConfig::region_for(const LiftingConfig& l) const { return l.region.value_or(region); }

int PipelineConfig::data_steps() const { return steps_of(data.duration, data.tau_s); }

int PipelineConfig::simulation_steps() const { return steps_of(simulation.duration, data.tau_s); }

int PipelineConfig::warmup_steps() const {
  if (data.warmup >= 0) return data.warmup;
  int h = 0;
  for (const LiftingConfig& l : liftings) h = std::max(h, l.spec.history());
  return h;
}

PipelineConfig vdp_default_config() {
  PipelineConfig c;
  c.data.x0 = vec_of({-0.128, -0.948});
  c.simulation.x0 = vec_of({1.0, -0.6});

  LiftingConfig mono;
  mono.label = "monomial";
  mono.spec = lifting::LiftingSpec::monomial(2, 5);
  RegionConfig mono_region;
  mono_region.c_z = 1e-3;
  mono.region = mono_region;
  SynthesisConfig mono_syn;
  mono_syn.beta = 1e5;
  mono_syn.delta = 3e-7;
  mono.synthesis = mono_syn;

  LiftingConfig delay;
  delay.label = "delay";
  delay.spec = lifting::LiftingSpec::delay(2, 15, 0);
  RegionConfig delay_region;
  delay_region.c_z = 1e-3;
  delay.region = delay_region;
  SynthesisConfig delay_syn;
  delay_syn.beta = 1e4;
  delay_syn.delta = 1e-5;
  delay.synthesis = delay_syn;

  c.liftings = {mono, delay};
  return c;
}

io::json to_json(const PipelineConfig& c) {
  io::json lifts = io::json::array();
  for (const LiftingConfig& l : c.liftings) {
    io::json e = {{"label", l.label}, {"spec", lifting::to_json(l.spec)}};
    if (l.region) e["region"] = region_json(*l.region);
    if (l.synthesis) e["synthesis"] = synthesis_json(*l.synthesis);
    lifts.push_back(e);
  }
  const RobustProbeConfig& p = c.robust_probe;
  return {{"system", {{"name", c.system.name}, {"mu", c.system.mu}}},
          {"data",
           {{"tau_s", c.data.tau_s},
            {"duration", c.data.duration},
            {"seed", c.data.seed},
            {"input_range", {c.data.u_lo, c.data.u_hi}},
            {"x0", vec_list(c.data.x0)},
            {"warmup", c.data.warmup}}},
          {"liftings", lifts},
          {"region", region_json(c.region)},
          {"synthesis", synthesis_json(c.synthesis)},
          {"simulation",
           {{"x0", vec_list(c.simulation.x0)},
            {"duration", c.simulation.duration},
            {"convergence_tol", c.simulation.convergence_tol}}},
          {"verification", {{"samples", c.verification.samples}}},
          {"robust_probe",
           {{"enabled", p.enabled},
            {"lifting", p.lifting},
            {"L_eps", p.l_eps},
            {"bisect", p.bisect},
            {"bisect_range", {p.bisect_lo, p.bisect_hi}},
            {"bisect_steps", p.bisect_steps}}},
          {"output_dir", c.output_dir.string()}};
}

// Missing sections keep the Van der Pol defaults.
PipelineConfig config_from_json(const io::json& j) {
  PipelineConfig c = vdp_default_config();
  try {
    if (!j.is_object()) throw config_error("config must be a JSON object");
    if (j.contains("system")) {
      c.system.name = j["system"].value("name", c.system.name);
      c.system.mu = j["system"].value("mu", c.system.mu);
    }
    if (j.contains("data")) {
      const io::json& d = j["data"];
      c.data.tau_s = d.value("tau_s", c.data.tau_s);
      c.data.duration = d.value("duration", c.data.duration);
      c.data.seed = d.value("seed", c.data.seed);
      if (d.contains("input_range")) {
        const io::json& r = d["input_range"];
        if (!r.is_array() || r.size() != 2) throw config_error("data.input_range must be [lo, hi]");
        c.data.u_lo = r[0].get<double>();
        c.data.u_hi = r[1].get<double>();
      }
      if (d.contains("x0")) c.data.x0 = list_vec(d["x0"]);
      c.data.warmup = d.value("warmup", c.data.warmup);
    }
    if (j.contains("region")) c.region = region_from(j["region"]);
    if (j.contains("synthesis")) c.synthesis = synthesis_from(j["synthesis"], SynthesisConfig{});
    if (j.contains("liftings")) {
      c.liftings.clear();
      for (const io::json& e : j["liftings"]) {
        LiftingConfig l;
        l.label = e.at("label").get<std::string>();
        l.spec = lifting::spec_from_json(e.at("spec"));
        if (e.contains("region")) l.region = region_from(e["region"]);
        if (e.contains("synthesis")) l.synthesis = synthesis_from(e["synthesis"], c.synthesis);
        c.liftings.push_back(l);
      }
    }
    if (j.contains("simulation")) {
      const io::json& s = j["simulation"];
      if (s.contains("x0")) c.simulation.x0 = list_vec(s["x0"]);
      c.simulation.duration = s.value("duration", c.simulation.duration);
      c.simulation.convergence_tol = s.value("convergence_tol", c.simulation.convergence_tol);
    }
    if (j.contains("verification")) c.verification.samples = j["verification"].value("samples", 10000);
    if (j.contains("robust_probe")) {
      const io::json& p = j["robust_probe"];
      RobustProbeConfig& r = c.robust_probe;
      r.enabled = p.value("enabled", r.enabled);
      r.lifting = p.value("lifting", r.lifting);
      r.l_eps = p.value("L_eps", r.l_eps);
      r.bisect = p.value("bisect", r.bisect);
      if (p.contains("bisect_range")) {
        r.bisect_lo = p["bisect_range"].at(0).get<double>();
        r.bisect_hi = p["bisect_range"].at(1).get<double>();
      }
      r.bisect_steps = p.value("bisect_steps", r.bisect_steps);
    }
    c.output_dir = j.value("output_dir", c.output_dir.string());
  } catch (const io::json::exception& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) { return config_from_json(io::read_json_file(path)); }

// The output location does not change any artifact, so it stays out of the hash.
std::string config_hash(const PipelineConfig& c) {
  io::json j = to_json(c);
  j.erase("output_dir");
  return io::fnv1a_hex(j.dump());
}

sim::SystemDef make_system(const SystemConfig& s) {
  if (s.name != "vanderpol") throw config_error("unknown system " + s.name);
  return sim::vanderpol(s.mu);
}

// ---------------------------------------------------------------------------
// Stages

edmd::Dataset collect(const PipelineConfig& cfg) {
  cfg.validate();
  const int L = cfg.data_steps();
  if (L < 1) throw Error(ErrorKind::EmptyRun, "data.duration gives no samples");
  const auto sys = make_system(cfg.system);
  const Vec u = sim::generate_excitation(rng::derive(cfg.data.seed, kSeedExcitation), cfg.data.u_lo,
                                         cfg.data.u_hi, L);
  const sim::Trajectory t = sim::simulate_open(sys, cfg.data.x0, u, cfg.data.tau_s, cfg.warmup_steps());
  if (t.diverged) throw Error(ErrorKind::NonFinite, "data collection diverged");
  return sim::to_dataset(t, cfg.data.seed, sys.label + " open loop, uniform excitation");
}

FitResult fit(const PipelineConfig&, const LiftingConfig& lift, const edmd::Dataset& ds) {
  const edmd::DataMatrices dm = edmd::build_data_matrices(ds, lift.spec);
  FitResult r;
  r.model = lift.spec.kind == lifting::Kind::Delay
                ? edmd::fit_structured(dm.x_plus, dm.y, lift.spec, &r.diagnostics)
                : edmd::fit_full(dm.z_plus, dm.y, lift.spec, &r.diagnostics);
  r.model.data_hash = io::fnv1a_hex(edmd::to_csv(ds));
  r.errors = edmd::residuals(r.model, dm);
  return r;
}

synthesis::RegionSpec make_region(const RegionConfig& r, int n) {
  if (r.q) {
    if (r.q->rows() != n) throw config_error("region Q has the wrong size for this lifting");
    return synthesis::make_region(*r.q, r.s.value_or(Vec::Zero(n)), r.r.value_or(1.0));
  }
  return synthesis::region_ball(n, r.c_z);
}

SynthesizeOutcome synthesize(const PipelineConfig& cfg, const LiftingConfig& lift,
                             const edmd::BilinearModel& model, double l_hat) {
  const SynthesisConfig s = cfg.synthesis_for(lift);
  const RegionConfig rc = cfg.region_for(lift);
  SynthesizeOutcome out;
  if (s.mode == synthesis::Mode::Robust) {
    out.l_eps_heuristic = s.l_source == LSource::Estimated;
    out.l_eps = out.l_eps_heuristic ? s.inflation * l_hat : s.l_eps;
  }
  const synthesis::SynthesisOptions opt = options_for(s);
  if (!rc.search) {
    out.region = make_region(rc, model.dim());
    out.result = synthesis::try_synthesize(model, out.region, s.mode, out.l_eps, opt);
    return out;
  }
  try {
    synthesis::Controller c = synthesis::synthesize_with_region(model, s.mode, out.l_eps, out.region, opt);
    out.result.lmi_dim = c.lmi_dim;
    out.result.num_vars = c.num_vars;
    out.result.solution.iterations = c.iterations;
    out.result.solution.status = c.status == "optimal" ? sdp::Status::Optimal : sdp::Status::Feasible;
    out.result.controller = std::move(c);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::InfeasibleSynthesis && e.kind() != ErrorKind::NumericalFailure) throw;
    out.result.solution.status = e.kind() == ErrorKind::InfeasibleSynthesis ? sdp::Status::Infeasible
                                                                           : sdp::Status::NumericalFailure;
    out.result.solution.message = e.what();
  }
  return out;
}

SimulationResult simulate(const PipelineConfig& cfg, const LiftingConfig& lift, const Vec& gain) {
  const auto sys = make_system(cfg.system);
  const int steps = cfg.simulation_steps();
  SimulationResult r;
  r.closed = sim::simulate_closed(sys, lift.spec, gain, cfg.simulation.x0, steps, cfg.data.tau_s);
  r.open = sim::simulate_open(sys, cfg.simulation.x0, Vec::Zero(steps), cfg.data.tau_s, lift.spec.history());
  r.open.controller_id = "open loop";
  for (int k = 0; k <= r.closed.steps(); ++k) {
    if (r.closed.state(k).norm() <= cfg.simulation.convergence_tol) {
      r.convergence_step = k;
      break;
    }
  }
  r.final_norm = r.closed.state(r.closed.steps()).norm();
  return r;
}

VerifyOutcome verify(const PipelineConfig& cfg, const LiftingConfig& lift, const edmd::BilinearModel& model,
                     const synthesis::Controller& ctrl, const synthesis::RegionSpec& region, double l_eps,
                     const sim::Trajectory* closed) {
  const std::uint64_t seed =
      rng::derive(cfg.data.seed, kSeedVerify + static_cast<std::uint64_t>(cfg.lifting_index(lift.label)));
  synthesis::VerifyOptions vo;
  vo.samples = cfg.verification.samples;
  vo.seed = seed;
  VerifyOutcome out;
  out.certificate = synthesis::verify_certificate(model, ctrl, region, l_eps, vo);

  const Mat w = linalg::spd_inverse(ctrl.p);
  const Mat l = Eigen::LLT<Mat>(ctrl.p).matrixL();
  const int n = model.dim();

  // Rollouts of the identified closed loop from near the RoA boundary.
  constexpr int kRollouts = 32;
  constexpr int kRolloutSteps = 200;
  rng::SplitMix64 g(rng::derive(seed, 1));
  for (int r = 0; r < kRollouts; ++r) {
    Vec d(n);
    for (int i = 0; i < n; ++i) d(i) = g.normal();
    Vec z = l * (0.999 * std::sqrt(ctrl.c) / d.norm() * d);
    const double v0 = quad(w, z);
    double v = v0;
    for (int k = 0; k < kRolloutSteps && v > 1e-14 * v0; ++k) {
      z = model.step(z, ctrl.k.dot(z));
      const double next = quad(w, z);
      ++out.model_steps;
      if (!(next < v)) ++out.model_increases;
      v = next;
    }
  }

  if (closed != nullptr && !closed->diverged) {
    const Mat z = sim::lifted_states(*closed, lift.spec);
    for (Eigen::Index k = 0; k + 1 < z.cols(); ++k) {
      const double v = quad(w, z.col(k));
      if (!(v <= ctrl.c) || v == 0.0) continue;
      ++out.plant_steps_in_roa;
      if (!(quad(w, z.col(k + 1)) < v)) ++out.plant_increases;
    }
  }
  return out;
}

double max_feasible_l_eps(const PipelineConfig& cfg, const LiftingConfig& lift,
                          const edmd::BilinearModel& model, double lo, double hi, int steps) {
  const synthesis::SynthesisOptions opt = options_for(cfg.synthesis_for(lift));
  const synthesis::RegionSpec region = make_region(cfg.region_for(lift), model.dim());
  const auto feasible = [&](double l) {
    return synthesis::try_synthesize(model, region, synthesis::Mode::Robust, l, opt).controller.has_value();
  };
  if (feasible(hi)) return hi;
  if (!feasible(lo)) return 0.0;
  for (int i = 0; i < steps; ++i) {
    const double mid = std::sqrt(lo * hi);
    (feasible(mid) ? lo : hi) = mid;
  }
  return lo;
}

ProbeResult robust_probe(const PipelineConfig& cfg, const edmd::BilinearModel& model) {
  const RobustProbeConfig& p = cfg.robust_probe;
  const LiftingConfig& lift = cfg.lifting(p.lifting);
  const synthesis::SynthesisOptions opt = options_for(cfg.synthesis_for(lift));
  const synthesis::RegionSpec region = make_region(cfg.region_for(lift), model.dim());
  ProbeResult r;
  r.lifting = p.lifting;
  r.l_eps = p.l_eps;
  const auto res = synthesis::try_synthesize(model, region, synthesis::Mode::Robust, p.l_eps, opt);
  r.status = std::string(sdp::to_string(res.solution.status));
  r.feasible = res.controller.has_value();
  if (p.bisect) r.max_feasible = max_feasible_l_eps(cfg, lift, model, p.bisect_lo, p.bisect_hi, p.bisect_steps);
  return r;
}

// ---------------------------------------------------------------------------
// Whole run

bool RunSummary::all_converged() const {
  for (const auto& r : rows) {
    if (r.convergence_step < 0) return false;
  }
  return !rows.empty();
}

bool RunSummary::all_verified() const {
  for (const auto& r : rows) {
    if (!r.verified) return false;
  }
  return !rows.empty();
}

std::string format_table(const RunSummary& s) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %4s %10s %10s %-10s %12s %10s %8s %8s\n", "lifting", "N", "nominal",
                "robust", "status", "c", "|k|", "conv", "verify");
  out += line;
  for (const auto& r : s.rows) {
    const std::string nom = std::to_string(r.lmi_dim) + "/" + std::to_string(r.num_vars);
    const std::string rob = std::to_string(r.robust_lmi_dim) + "/" + std::to_string(r.robust_num_vars);
    const std::string conv = r.convergence_step >= 0 ? std::to_string(r.convergence_step)
                                                     : (r.diverged ? "diverged" : "no");
    std::snprintf(line, sizeof line, "%-10s %4d %10s %10s %-10s %12.4g %10.4g %8s %8s\n", r.label.c_str(),
                  r.n_lifted, nom.c_str(), rob.c_str(), r.status.c_str(), r.roa_level, r.gain_norm, conv.c_str(),
                  !r.feasible ? "-" : (r.verified ? "pass" : "FAIL"));
    out += line;
  }
  if (s.probe) {
    const ProbeResult& p = *s.probe;
    std::snprintf(line, sizeof line, "robust %s at L_eps = %g: %s\n", p.lifting.c_str(), p.l_eps, p.status.c_str());
    out += line;
    if (p.max_feasible) {
      std::snprintf(line, sizeof line, "largest feasible L_eps (bisection): %g\n", *p.max_feasible);
      out += line;
    }
  }
  return out;
}

io::json to_json(const RunSummary& s) {
  io::json rows = io::json::array();
  for (const auto& r : s.rows) {
    rows.push_back({{"lifting", r.label},
                    {"N", r.n_lifted},
                    {"nominal_lmi", {r.lmi_dim, r.num_vars}},
                    {"robust_lmi", {r.robust_lmi_dim, r.robust_num_vars}},
                    {"status", r.status},
                    {"feasible", r.feasible},
                    {"c", r.roa_level},
                    {"gain_norm", r.gain_norm},
                    {"convergence_step", r.convergence_step},
                    {"diverged", r.diverged},
                    {"verified", r.verified},
                    {"violations", r.violations}});
  }
  io::json j = {{"rows", rows}};
  if (s.probe) {
    j["robust_probe"] = {{"lifting", s.probe->lifting},
                         {"L_eps", s.probe->l_eps},
                         {"status", s.probe->status},
                         {"feasible", s.probe->feasible}};
    if (s.probe->max_feasible) j["robust_probe"]["max_feasible_L_eps"] = *s.probe->max_feasible;
  }
  return j;
}

RunSummary run_all(const PipelineConfig& cfg, bool write, std::ostream* log) {
  cfg.validate();
  const Layout out{cfg.output_dir};
  const edmd::Dataset ds = collect(cfg);
  if (write) write_dataset(out, cfg, ds);
  if (log) *log << "collected " << ds.samples() << " samples (+" << ds.warmup << " warm-up)\n";

  RunSummary summary;
  for (const LiftingConfig& lift : cfg.liftings) {
    LiftingSummary row;
    row.label = lift.label;
    const FitResult f = fit(cfg, lift, ds);
    row.n_lifted = f.model.dim();
    if (write) {
      std::filesystem::create_directories(out.dir(lift.label));
      io::write_json_file(out.model(lift.label), [&] {
        io::json m = edmd::to_json(f.model);
        m["provenance"]["config_hash"] = config_hash(cfg);
        return m;
      }());
      io::write_json_file(out.errors(lift.label), fit_json(f, cfg, cfg.synthesis_for(lift).inflation));
    }
    if (log) *log << lift.label << ": N = " << row.n_lifted << ", rank(Y) " << f.diagnostics.rank_y << "/"
                  << f.diagnostics.rows_y << ", L_hat " << f.errors.l_hat << "\n";

    const auto robust = synthesis::build_robust_lmi(f.model, synthesis::region_ball(f.model.dim(), 1.0), 1e-5);
    row.robust_lmi_dim = robust.main_dim;
    row.robust_num_vars = robust.lmi.num_scalars();

    const SynthesizeOutcome syn = synthesize(cfg, lift, f.model, f.errors.l_hat);
    row.lmi_dim = syn.result.lmi_dim;
    row.num_vars = syn.result.num_vars;
    row.status = std::string(sdp::to_string(syn.result.solution.status));
    row.feasible = syn.result.controller.has_value();
    if (write) io::write_json_file(out.controller(lift.label), controller_json(syn, cfg, &f));
    if (log) *log << lift.label << ": synthesis " << row.status << " after " << syn.result.solution.iterations
                  << " iterations\n";
    if (row.feasible) {
      const synthesis::Controller& c = *syn.result.controller;
      row.roa_level = c.c;
      row.gain_norm = c.k.norm();
      row.solve_seconds = c.solve_seconds;
      const SimulationResult sr = simulate(cfg, lift, c.k);
      row.convergence_step = sr.convergence_step;
      row.diverged = sr.closed.diverged;
      const VerifyOutcome v = verify(cfg, lift, f.model, c, syn.region, syn.l_eps, &sr.closed);
      row.verified = v.passed();
      row.violations = v.certificate.violations + v.model_increases;
      if (write) {
        io::write_text_file(out.trajectory(lift.label), sim::to_csv(sr.closed));
        io::write_text_file(out.open_loop(lift.label), sim::to_csv(sr.open));
        io::write_text_file(out.phase(lift.label), sim::phase_portrait_csv({&sr.closed, &sr.open}));
        io::write_json_file(out.report(lift.label), verify_json(v));
      }
    }
    summary.rows.push_back(row);

    if (cfg.robust_probe.enabled && cfg.robust_probe.lifting == lift.label) {
      summary.probe = robust_probe(cfg, f.model);
    }
  }
  if (write) {
    io::write_text_file(out.summary_txt(), format_table(summary));
    io::write_json_file(out.summary_json(), to_json(summary));
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Artifacts

void write_dataset(const Layout& out, const PipelineConfig& cfg, const edmd::Dataset& ds) {
  std::filesystem::create_directories(out.root);
  io::write_text_file(out.data_csv(), edmd::to_csv(ds));
  io::json meta = edmd::meta_to_json(ds);
  meta["config_hash"] = config_hash(cfg);
  meta["input_range"] = {cfg.data.u_lo, cfg.data.u_hi};
  meta["excitation_seed"] = rng::derive(cfg.data.seed, kSeedExcitation);
  io::write_json_file(out.data_meta(), meta);
}

edmd::Dataset read_dataset(const std::filesystem::path& csv, const std::filesystem::path& meta) {
  edmd::Dataset ds = edmd::dataset_from_csv(io::read_text_file(csv));
  const io::json m = io::read_json_file(meta);
  try {
    ds.tau_s = m.at("tau_s").get<double>();
    ds.seed = m.value("seed", std::uint64_t{0});
    ds.source = m.value("source", "");
  } catch (const io::json::exception& e) {
    throw config_error(std::string("dataset meta: ") + e.what());
  }
  ds.validate();
  return ds;
}

io::json fit_json(const FitResult& f, const PipelineConfig& cfg, double inflation) {
  io::json j = edmd::to_json(f.errors, inflation);
  j["rank_Y"] = f.diagnostics.rank_y;
  j["rows_Y"] = f.diagnostics.rows_y;
  j["full_row_rank"] = f.diagnostics.full_row_rank();
  j["data_hash"] = f.model.data_hash;
  j["config_hash"] = config_hash(cfg);
  return j;
}

io::json controller_json(const SynthesizeOutcome& s, const PipelineConfig& cfg, const FitResult* fit) {
  io::json j;
  if (s.result.controller) {
    synthesis::Controller c = *s.result.controller;
    if (fit) c.model_hash = edmd::model_hash(fit->model);
    j = synthesis::to_json(c);
  } else {
    j = {{"solver", {{"lmi_dim", s.result.lmi_dim}, {"num_vars", s.result.num_vars}}}};
  }
  j["feasible"] = s.result.controller.has_value();
  j["solver"]["status"] = std::string(sdp::to_string(s.result.solution.status));
  j["solver"]["iterations"] = s.result.solution.iterations;
  j["solver"]["message"] = s.result.solution.message;
  j["solver"]["phase1_margin"] = s.result.solution.phase1_margin;
  j["region"] = synthesis::to_json(s.region);
  j["L_eps"] = s.l_eps;
  j["L_eps_heuristic"] = s.l_eps_heuristic;
  j["config_hash"] = config_hash(cfg);
  return j;
}

io::json verify_json(const VerifyOutcome& v) {
  io::json j = synthesis::to_json(v.certificate);
  j["model_rollout_steps"] = v.model_steps;
  j["model_rollout_increases"] = v.model_increases;
  j["plant_steps_in_roa"] = v.plant_steps_in_roa;
  j["plant_increases_in_roa"] = v.plant_increases;
  j["passed"] = v.passed();
  return j;
}

}  // namespace koopstab::pipeline
