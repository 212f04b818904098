#include "koopstab/sim.hpp"

#include <cmath>

#include "koopstab/rng.hpp"

namespace koopstab::sim {

SystemDef vanderpol(double mu) {
  if (!std::isfinite(mu)) throw Error(ErrorKind::NonFinite, "vanderpol: mu");
  SystemDef s;
  s.n = 2;
  s.f = [mu](const Vec& x) {
    Vec dx(2);
    dx(0) = x(1);
    dx(1) = mu * (1.0 - x(0) * x(0)) * x(1) - x(0);
    return dx;
  };
  s.g = [](const Vec&) { return Vec::Unit(2, 1); };
  s.label = "vanderpol";
  return s;
}

SystemDef linear(const Mat& a, const Vec& b, std::string label) {
  if (a.rows() != a.cols() || b.size() != a.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "linear system: a must be n x n and b length n");
  }
  SystemDef s;
  s.n = static_cast<int>(a.rows());
  s.f = [a](const Vec& x) { return Vec(a * x); };
  s.g = [b](const Vec&) { return b; };
  s.label = std::move(label);
  return s;
}

Vec euler_step(const SystemDef& sys, const Vec& x, double u, double tau_s) {
  if (x.size() != sys.n) throw Error(ErrorKind::DimensionMismatch, "euler_step: state size");
  return x + tau_s * (sys.f(x) + sys.g(x) * u);
}

Vec generate_excitation(std::uint64_t seed, double lo, double hi, int length) {
  if (!(lo <= hi)) throw Error(ErrorKind::InvalidArgument, "excitation: need lo <= hi");
  if (length < 0) throw Error(ErrorKind::InvalidArgument, "excitation: negative length");
  rng::SplitMix64 gen(seed);
  Vec u(length);
  for (int i = 0; i < length; ++i) u(i) = gen.uniform(lo, hi);
  return u;
}

namespace {

bool escaped(const Vec& x) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x(i)) || std::abs(x(i)) > kDivergenceLimit) return true;
  }
  return false;
}

// Drops everything after column `last` (inclusive bound on states).
void truncate(Trajectory& t, Eigen::Index last) {
  t.states.conservativeResize(Eigen::NoChange, last + 1);
  t.inputs.conservativeResize(last);
  t.diverged = true;
}

}  // namespace

Trajectory simulate_open(const SystemDef& sys, const Vec& x0, const Vec& inputs, double tau_s,
                         int warmup) {
  if (x0.size() != sys.n) throw Error(ErrorKind::DimensionMismatch, "simulate_open: x0 size");
  if (warmup < 0) throw Error(ErrorKind::InvalidArgument, "simulate_open: negative warm-up");
  Trajectory t;
  t.tau_s = tau_s;
  t.warmup = warmup;
  t.kind = TrajectoryKind::OpenLoop;
  const Eigen::Index total = warmup + inputs.size();
  t.inputs = Vec::Zero(total);
  t.inputs.tail(inputs.size()) = inputs;
  t.states = Mat(sys.n, total + 1);
  t.states.col(0) = x0;
  for (Eigen::Index j = 0; j < total; ++j) {
    const Vec next = euler_step(sys, t.states.col(j), t.inputs(j), tau_s);
    t.states.col(j + 1) = next;
    if (escaped(next)) {
      truncate(t, j + 1);
      break;
    }
  }
  return t;
}

Trajectory simulate_closed(const SystemDef& sys, const lifting::LiftingSpec& spec, const Vec& gain,
                           const Vec& x0, int steps, double tau_s) {
  spec.validate();
  if (spec.n != sys.n) throw Error(ErrorKind::DimensionMismatch, "simulate_closed: spec.n vs system");
  if (gain.size() != lifting::dimension(spec)) {
    throw Error(ErrorKind::DimensionMismatch, "simulate_closed: gain does not match the lifting");
  }
  if (steps < 0) throw Error(ErrorKind::InvalidArgument, "simulate_closed: negative step count");
  Trajectory t = simulate_open(sys, x0, Vec(), tau_s, spec.history());
  t.kind = TrajectoryKind::ClosedLoop;
  if (t.diverged) return t;
  const int warm = t.warmup;
  t.states.conservativeResize(Eigen::NoChange, warm + steps + 1);
  t.inputs.conservativeResize(warm + steps);
  for (int k = 0; k < steps; ++k) {
    const int j = warm + k;
    const double u = gain.dot(lifting::lift_at(spec, t.states, t.inputs, warm, k));
    t.inputs(j) = u;
    const Vec next = euler_step(sys, t.states.col(j), u, tau_s);
    t.states.col(j + 1) = next;
    if (!std::isfinite(u) || escaped(next)) {
      truncate(t, j + 1);
      break;
    }
  }
  return t;
}

Mat lifted_states(const Trajectory& traj, const lifting::LiftingSpec& spec) {
  if (traj.warmup < spec.history()) {
    throw Error(ErrorKind::InsufficientData, "lifted_states: warm-up shorter than the lifting history");
  }
  const int count = traj.steps() + 1;
  Mat z(lifting::dimension(spec), count);
  for (int k = 0; k < count; ++k) z.col(k) = lifting::lift_at(spec, traj.states, traj.inputs, traj.warmup, k);
  return z;
}

edmd::Dataset to_dataset(const Trajectory& traj, std::uint64_t seed, std::string source) {
  edmd::Dataset ds;
  ds.states = traj.states;
  ds.inputs = traj.inputs;
  ds.warmup = traj.warmup;
  ds.tau_s = traj.tau_s;
  ds.seed = seed;
  ds.source = std::move(source);
  ds.validate();
  return ds;
}

std::string to_csv(const Trajectory& traj) {
  std::string out = "k,t";
  for (int i = 0; i < traj.n(); ++i) out += ",x" + std::to_string(i + 1);
  out += ",u\n";
  for (Eigen::Index j = 0; j < traj.states.cols(); ++j) {
    const long long k = static_cast<long long>(j) - traj.warmup;
    out += std::to_string(k) + "," + io::format_real(static_cast<double>(k) * traj.tau_s);
    for (int i = 0; i < traj.n(); ++i) out += "," + io::format_real(traj.states(i, j));
    out += ",";
    if (j < traj.inputs.size()) out += io::format_real(traj.inputs(j));
    out += "\n";
  }
  return out;
}

std::string phase_portrait_csv(const std::vector<const Trajectory*>& series) {
  std::string out;
  if (series.empty()) return out;
  for (int i = 0; i < series.front()->n(); ++i) out += (i ? ",x" : "x") + std::to_string(i + 1);
  out += "\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    if (s > 0) out += "\n";
    const Trajectory& t = *series[s];
    for (Eigen::Index j = 0; j < t.states.cols(); ++j) {
      for (int i = 0; i < t.n(); ++i) out += (i ? "," : "") + io::format_real(t.states(i, j));
      out += "\n";
    }
  }
  return out;
}

}  // namespace koopstab::sim
