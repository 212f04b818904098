// koopstab: collect, fit, synthesize, simulate, verify, repro-vdp.
//
// Exit codes: 0 success, 2 no controller (infeasible synthesis), 3 failed
// verification or divergent/non-converging closed loop, 4 I/O or config
// error, 1 anything else.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "koopstab/pipeline.hpp"

namespace {

using namespace koopstab;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitVerify = 3;
constexpr int kExitIo = 4;

struct Options {
  std::string config;
  std::string out;
  bool verbose = false;
  std::string lifting;  // empty: every configured lifting
  std::string data;
  std::string model;
  std::string controller;
};

pipeline::PipelineConfig load(const Options& o) {
  pipeline::PipelineConfig cfg = o.config.empty() ? pipeline::vdp_default_config() : pipeline::load_config(o.config);
  if (!o.out.empty()) cfg.output_dir = o.out;
  cfg.validate();
  return cfg;
}

std::vector<const pipeline::LiftingConfig*> selected(const pipeline::PipelineConfig& cfg, const Options& o) {
  std::vector<const pipeline::LiftingConfig*> out;
  if (!o.lifting.empty()) {
    out.push_back(&cfg.lifting(o.lifting));
    return out;
  }
  for (const auto& l : cfg.liftings) out.push_back(&l);
  return out;
}

// Explicit file paths only make sense for a single lifting.
void require_single(const std::string& flag, std::size_t count) {
  if (!flag.empty() && count != 1) throw Error(ErrorKind::Config, "explicit file paths need --lifting");
}

fs::path pick(const std::string& flag, const fs::path& fallback) { return flag.empty() ? fallback : fs::path(flag); }

edmd::Dataset load_dataset(const pipeline::Layout& out, const Options& o) {
  const fs::path csv = pick(o.data, out.data_csv());
  fs::path meta = out.data_meta();
  if (!o.data.empty()) meta = fs::path(o.data).replace_extension(".meta.json");
  return pipeline::read_dataset(csv, meta);
}

int cmd_collect(const Options& o) {
  const auto cfg = load(o);
  const edmd::Dataset ds = pipeline::collect(cfg);
  const pipeline::Layout out{cfg.output_dir};
  pipeline::write_dataset(out, cfg, ds);
  std::cout << "wrote " << out.data_csv().string() << ": " << ds.samples() << " samples, " << ds.warmup
            << " warm-up steps\n";
  return kExitOk;
}

int cmd_fit(const Options& o) {
  const auto cfg = load(o);
  const pipeline::Layout out{cfg.output_dir};
  const edmd::Dataset ds = load_dataset(out, o);
  for (const auto* lift : selected(cfg, o)) {
    const pipeline::FitResult f = pipeline::fit(cfg, *lift, ds);
    if (!f.diagnostics.full_row_rank()) {
      std::cerr << "warning: " << lift->label << ": rank(Y) = " << f.diagnostics.rank_y << " < "
                << f.diagnostics.rows_y << ", EDMD solution is not unique\n";
    }
    fs::create_directories(out.dir(lift->label));
    io::json m = edmd::to_json(f.model);
    m["provenance"]["config_hash"] = pipeline::config_hash(cfg);
    io::write_json_file(out.model(lift->label), m);
    io::write_json_file(out.errors(lift->label), pipeline::fit_json(f, cfg, cfg.synthesis_for(*lift).inflation));
    std::cout << lift->label << ": N = " << f.model.dim() << ", L_hat = " << f.errors.l_hat
              << " (heuristic), rms = " << f.errors.rms << "\n";
  }
  return kExitOk;
}

int cmd_synthesize(const Options& o) {
  const auto cfg = load(o);
  const pipeline::Layout out{cfg.output_dir};
  const auto lifts = selected(cfg, o);
  require_single(o.model, lifts.size());
  int code = kExitOk;
  for (const auto* lift : lifts) {
    const fs::path model_path = pick(o.model, out.model(lift->label));
    const edmd::BilinearModel model = edmd::model_from_json(io::read_json_file(model_path));
    if (!(model.spec == lift->spec)) throw Error(ErrorKind::Config, "model lifting differs from config " + lift->label);
    double l_hat = 0.0;
    const fs::path errors_path = model_path.parent_path() / "errors.json";
    if (cfg.synthesis_for(*lift).l_source == pipeline::LSource::Estimated) {
      l_hat = io::read_json_file(errors_path).at("L_hat").get<double>();
    }
    const pipeline::SynthesizeOutcome s = pipeline::synthesize(cfg, *lift, model, l_hat);
    fs::create_directories(out.dir(lift->label));
    io::json j = pipeline::controller_json(s, cfg);
    if (s.result.controller) j["model_hash"] = edmd::model_hash(model);
    io::write_json_file(out.controller(lift->label), j);
    std::cout << lift->label << ": LMI " << s.result.lmi_dim << "x" << s.result.lmi_dim << ", "
              << s.result.num_vars << " variables, " << sdp::to_string(s.result.solution.status) << " after "
              << s.result.solution.iterations << " iterations";
    if (s.result.controller) {
      std::cout << ", c = " << s.result.controller->c << ", |k| = " << s.result.controller->k.norm() << ", "
                << s.result.controller->solve_seconds << " s";
    } else {
      code = kExitInfeasible;
    }
    if (s.l_eps_heuristic) std::cout << " [L_eps = " << s.l_eps << " estimated, heuristic]";
    std::cout << "\n";
    if (o.verbose && !s.result.solution.message.empty()) std::cout << "  " << s.result.solution.message << "\n";
  }
  return code;
}

synthesis::Controller load_controller(const fs::path& path, io::json* raw = nullptr) {
  const io::json j = io::read_json_file(path);
  if (!j.value("feasible", true)) throw Error(ErrorKind::InfeasibleSynthesis, path.string() + " holds no controller");
  if (raw) *raw = j;
  return synthesis::controller_from_json(j);
}

int cmd_simulate(const Options& o) {
  const auto cfg = load(o);
  const pipeline::Layout out{cfg.output_dir};
  const auto lifts = selected(cfg, o);
  require_single(o.controller, lifts.size());
  int code = kExitOk;
  for (const auto* lift : lifts) {
    const synthesis::Controller c = load_controller(pick(o.controller, out.controller(lift->label)));
    const pipeline::SimulationResult r = pipeline::simulate(cfg, *lift, c.k);
    fs::create_directories(out.dir(lift->label));
    io::write_text_file(out.trajectory(lift->label), sim::to_csv(r.closed));
    io::write_text_file(out.open_loop(lift->label), sim::to_csv(r.open));
    io::write_text_file(out.phase(lift->label), sim::phase_portrait_csv({&r.closed, &r.open}));
    std::cout << lift->label << ": ";
    if (r.closed.diverged) {
      std::cout << "closed loop diverged after " << r.closed.steps() << " steps\n";
      code = kExitVerify;
    } else if (r.convergence_step < 0) {
      std::cout << "no convergence, |x| = " << r.final_norm << " at the end\n";
      code = kExitVerify;
    } else {
      std::cout << "|x_k| <= " << cfg.simulation.convergence_tol << " from step " << r.convergence_step << "\n";
    }
  }
  return code;
}

int cmd_verify(const Options& o) {
  const auto cfg = load(o);
  const pipeline::Layout out{cfg.output_dir};
  const auto lifts = selected(cfg, o);
  require_single(o.model + o.controller, lifts.size());
  // Load every input first so a missing file leaves no partial report.
  struct Job {
    const pipeline::LiftingConfig* lift;
    edmd::BilinearModel model;
    synthesis::Controller ctrl;
    synthesis::RegionSpec region;
  };
  std::vector<Job> jobs;
  for (const auto* lift : lifts) {
    Job job{lift, edmd::model_from_json(io::read_json_file(pick(o.model, out.model(lift->label)))), {}, {}};
    io::json raw;
    job.ctrl = load_controller(pick(o.controller, out.controller(lift->label)), &raw);
    if (job.ctrl.p.rows() != job.model.dim()) throw Error(ErrorKind::DimensionMismatch, "controller vs model size");
    job.region = raw.contains("region") ? synthesis::region_from_json(raw["region"], job.model.dim())
                                        : pipeline::make_region(cfg.region_for(*lift), job.model.dim());
    jobs.push_back(std::move(job));
  }
  int code = kExitOk;
  for (const Job& job : jobs) {
    const pipeline::SimulationResult sr = pipeline::simulate(cfg, *job.lift, job.ctrl.k);
    const pipeline::VerifyOutcome v =
        pipeline::verify(cfg, *job.lift, job.model, job.ctrl, job.region, job.ctrl.l_eps, &sr.closed);
    io::write_json_file(out.report(job.lift->label), pipeline::verify_json(v));
    std::cout << job.lift->label << ": " << (v.passed() ? "pass" : "FAIL") << ", " << v.certificate.violations
              << "/" << v.certificate.samples << " decrease violations, schur min eig "
              << v.certificate.schur_form_margin << ", dual max eig " << v.certificate.dual_form_margin
              << ", rollout increases " << v.model_increases << "/" << v.model_steps << "\n";
    if (!v.passed()) code = kExitVerify;
  }
  return code;
}

int cmd_repro(const Options& o) {
  const auto cfg = load(o);
  const pipeline::RunSummary s = pipeline::run_all(cfg, true, o.verbose ? &std::cerr : nullptr);
  std::cout << pipeline::format_table(s);
  for (const auto& r : s.rows) {
    if (!r.feasible) return kExitInfeasible;
  }
  return s.all_verified() && s.all_converged() ? kExitOk : kExitVerify;
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::InfeasibleSynthesis:
      return kExitInfeasible;
    case ErrorKind::Io:
    case ErrorKind::Config:
    case ErrorKind::EmptyRun:
      return kExitIo;
    default:
      return kExitOther;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman bilinear identification and LMI state-feedback synthesis"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "pipeline configuration (JSON); default: built-in Van der Pol setup");
  app.add_option("--out", o.out, "output directory, overrides output_dir");
  app.add_flag("--verbose", o.verbose, "extra diagnostics");

  const auto add_lifting = [&](CLI::App* c) { c->add_option("--lifting", o.lifting, "restrict to one lifting label"); };
  CLI::App* collect = app.add_subcommand("collect", "simulate the excitation run, write data.csv");
  CLI::App* fit = app.add_subcommand("fit", "EDMD fit per lifting, write model.json and errors.json");
  add_lifting(fit);
  fit->add_option("--data", o.data, "dataset CSV (meta JSON next to it)");
  CLI::App* syn = app.add_subcommand("synthesize", "solve the LMI, write controller.json");
  add_lifting(syn);
  syn->add_option("--model", o.model, "model JSON");
  CLI::App* simc = app.add_subcommand("simulate", "closed-loop run, write trajectory CSVs");
  add_lifting(simc);
  simc->add_option("--controller", o.controller, "controller JSON");
  CLI::App* ver = app.add_subcommand("verify", "check the certificate, write verify.json");
  add_lifting(ver);
  ver->add_option("--model", o.model, "model JSON");
  ver->add_option("--controller", o.controller, "controller JSON");
  CLI::App* repro = app.add_subcommand("repro-vdp", "every stage for every lifting plus a summary table");
  for (CLI::App* c : {collect, fit, syn, simc, ver, repro}) {
    c->add_option("--config", o.config, "pipeline configuration (JSON)");
    c->add_option("--out", o.out, "output directory");
    c->add_flag("--verbose", o.verbose, "extra diagnostics");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitIo;
  }

  try {
    if (*collect) return cmd_collect(o);
    if (*fit) return cmd_fit(o);
    if (*syn) return cmd_synthesize(o);
    if (*simc) return cmd_simulate(o);
    if (*ver) return cmd_verify(o);
    if (*repro) return cmd_repro(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
