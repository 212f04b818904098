#pragma once

// Control-affine benchmark systems x' = f(x) + g(x) u, discretized with
// forward Euler, and open/closed-loop runs.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "koopstab/edmd.hpp"
#include "koopstab/lifting.hpp"

namespace koopstab::sim {

struct SystemDef {
  int n = 0;
  std::function<Vec(const Vec&)> f;
  std::function<Vec(const Vec&)> g;
  std::string label;
};

/// x1' = x2, x2' = mu (1 - x1^2) x2 - x1 + u.
SystemDef vanderpol(double mu);

/// x' = a x + b u.
SystemDef linear(const Mat& a, const Vec& b, std::string label = "linear");

Vec euler_step(const SystemDef& sys, const Vec& x, double u, double tau_s);

/// L i.i.d. uniform samples on [lo, hi] from splitmix64(seed).
Vec generate_excitation(std::uint64_t seed, double lo, double hi, int length);

inline constexpr double kDivergenceLimit = 1e6;

enum class TrajectoryKind { OpenLoop, ClosedLoop };

/// Column j of `states` is time k = j - warmup; inputs(j) is applied at the
/// same time. A diverged run is truncated at the first state past the limit.
struct Trajectory {
  double tau_s = 0.0;
  Mat states;
  Vec inputs;
  int warmup = 0;
  TrajectoryKind kind = TrajectoryKind::OpenLoop;
  std::string controller_id;
  bool diverged = false;

  int n() const { return static_cast<int>(states.rows()); }
  int steps() const { return static_cast<int>(inputs.size()) - warmup; }
  Vec state(int k) const { return states.col(k + warmup); }
};

/// Runs `warmup` unforced steps from x0, then applies `inputs`.
Trajectory simulate_open(const SystemDef& sys, const Vec& x0, const Vec& inputs, double tau_s,
                         int warmup = 0);

/// u_k = k^T lift(history at k). Delay liftings first run spec.dx unforced
/// steps from x0 to fill the history buffer.
Trajectory simulate_closed(const SystemDef& sys, const lifting::LiftingSpec& spec, const Vec& gain,
                           const Vec& x0, int steps, double tau_s);

/// Lifted states z_k for k = 0 .. steps as columns.
Mat lifted_states(const Trajectory& traj, const lifting::LiftingSpec& spec);

edmd::Dataset to_dataset(const Trajectory& traj, std::uint64_t seed, std::string source);

/// Header k,t,x1..xn,u with t = k tau_s; the last row leaves u empty.
std::string to_csv(const Trajectory& traj);

/// x1..xn rows per trajectory, series separated by a blank line.
std::string phase_portrait_csv(const std::vector<const Trajectory*>& series);

}  // namespace koopstab::sim
