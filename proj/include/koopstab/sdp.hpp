#pragma once

// Dense interior-point solver for strict linear matrix inequalities
//
//   F_j(x) = F_j0 + sum_i x_i F_ji  >  0,   j = 1..J
//
// over a flat vector x assembled from structured decision variables
// (symmetric matrices, vectors, scalars). Each block is normalized by its
// coefficient scale s_j and the strict inequality is enforced as
// F_j(x) / s_j - delta * I >= 0. Phase I minimizes a shared shift variable to
// find an interior point; phase II follows the log-det central path of a
// linear objective.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "koopstab/linalg.hpp"

namespace koopstab::sdp {

enum class VarKind { SymMatrix, Vector, Scalar };

struct VarSpec {
  VarKind kind = VarKind::Scalar;
  int dim = 1;
  std::string name;

  /// d(d+1)/2 for symmetric matrices, d for vectors, 1 for scalars.
  int scalar_count() const;
};

struct Entry {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

/// Symmetric sparse coefficient matrix, both triangles stored.
class SparseSym {
 public:
  SparseSym() = default;
  explicit SparseSym(int dim) : dim_(dim) {}

  int dim() const { return dim_; }
  bool empty() const { return entries_.empty(); }
  const std::vector<Entry>& entries() const { return entries_; }
  /// Distinct row indices touched by entries(), ascending.
  const std::vector<int>& rows() const { return rows_; }

  /// Adds v at (r, c) and at (c, r) when r != c.
  void add_symmetric(int r, int c, double v);
  /// Adds v at (r, c) only; the caller is responsible for the mirror entry.
  void add_raw(int r, int c, double v);
  /// Merges duplicates, drops exact zeros, rebuilds rows().
  void finalize();
  void scale(double factor);

  Mat dense() const;
  double frobenius_norm() const;

 private:
  int dim_ = 0;
  std::vector<Entry> entries_;
  std::vector<int> rows_;
};

struct Lmi {
  std::string name;
  int dim = 0;
  Mat constant;                 // F_0, dim x dim
  std::vector<SparseSym> coeffs;  // one per scalar decision variable

  /// Largest Frobenius norm over F_0 and all coefficients; 1 when all vanish.
  double scale() const;
};

/// Affine LMI problem over structured variables. Builders place terms into
/// block positions; off-diagonal placements are mirrored automatically.
class LmiProblem {
 public:
  /// Returns the variable handle (index into variables()).
  int add_variable(VarSpec spec);
  /// Returns the constraint handle.
  int add_constraint(std::string name, int dim);

  /// left * X * right placed at (row0, col0) for a symmetric matrix variable X.
  void add_sym_term(int lmi, int row0, int col0, int var, const Mat& left, const Mat& right);
  /// left * y * right (or left * y^T * right when transposed) for a vector y.
  void add_vec_term(int lmi, int row0, int col0, int var, const Mat& left, const Mat& right,
                    bool transposed);
  /// coeff * t for a scalar variable t.
  void add_scalar_term(int lmi, int row0, int col0, int var, const Mat& coeff);
  void add_constant(int lmi, int row0, int col0, const Mat& block);

  /// Coefficients for a linear objective (maximized). Length num_scalars().
  void set_objective(Vec c) { objective_ = std::move(c); }
  void clear_objective() { objective_.reset(); }
  /// Objective vector equal to trace of a symmetric matrix variable.
  Vec trace_objective(int var) const;

  /// Merges duplicate entries in every coefficient. Call after building.
  void finalize();

  const std::vector<VarSpec>& variables() const { return vars_; }
  const std::vector<Lmi>& constraints() const { return lmis_; }
  std::vector<Lmi>& mutable_constraints() { return lmis_; }
  const std::optional<Vec>& objective() const { return objective_; }
  int num_scalars() const { return num_scalars_; }
  int offset(int var) const { return offsets_.at(var); }

  double delta() const { return delta_; }
  void set_delta(double delta) { delta_ = delta; }

  /// F_j(x) evaluated densely.
  Mat evaluate(int lmi, const Vec& x) const;

  /// Unpack a symmetric matrix variable (with sqrt(2) off-diagonal scaling).
  Mat unpack_sym(int var, const Vec& x) const;
  Vec unpack_vec(int var, const Vec& x) const;
  double unpack_scalar(int var, const Vec& x) const;
  /// Inverse of unpack_sym, writes into x.
  void pack_sym(int var, const Mat& value, Vec& x) const;
  void pack_vec(int var, const Vec& value, Vec& x) const;
  void pack_scalar(int var, double value, Vec& x) const;

 private:
  void place(int lmi, int row0, int col0, int scalar_index, const Mat& block);
  void check_lmi(int lmi) const;

  std::vector<VarSpec> vars_;
  std::vector<int> offsets_;
  std::vector<Lmi> lmis_;
  std::optional<Vec> objective_;
  int num_scalars_ = 0;
  double delta_ = 1e-6;
};

enum class Status { Optimal, Feasible, Infeasible, MaxIter, NumericalFailure };

std::string_view to_string(Status s);

struct SolverOptions {
  int max_iterations = 200;     // Newton steps, both phases combined
  double barrier_reduction = 0.2;  // mu <- factor * mu after each centering
  double gap_tol = 1e-8;        // final duality measure mu
  double centering_tol = 1e-6;  // Newton decrement^2 / 2
  double phase1_target = 1e-2;  // early exit once the normalized shift <= -target
  double phase1_radius = 1e6;   // phase I searches |x| < radius
  int verbosity = 0;
  std::ostream* log = nullptr;  // defaults to std::cerr when verbosity > 0
  bool parallel = true;         // OpenMP Newton-system kernel vs serial reference
};

struct SdpSolution {
  Vec x;
  Status status = Status::NumericalFailure;
  std::vector<double> min_eigs;  // raw smallest eigenvalue of F_j(x)
  std::vector<double> margins;   // min_eigs[j] / scale_j
  int iterations = 0;
  double objective = 0.0;
  /// Best normalized interior margin reached in phase I (negative shift).
  /// Positive means an interior point was found.
  double phase1_margin = 0.0;
  double final_mu = 0.0;
  std::string message;

  bool ok() const { return status == Status::Optimal || status == Status::Feasible; }
};

SdpSolution solve_feasibility(const LmiProblem& p, const SolverOptions& opt = {});
SdpSolution maximize_linear(const LmiProblem& p, const SolverOptions& opt = {});

/// Smallest eigenvalue of every F_j(x), computed directly from the problem
/// data through linalg. Independent of solver internals.
std::vector<double> check_solution(const LmiProblem& p, const Vec& x);

/// check_solution divided by each block's scale.
std::vector<double> check_margins(const LmiProblem& p, const Vec& x);

nlohmann::json to_json(const LmiProblem& p);
LmiProblem lmi_problem_from_json(const nlohmann::json& j);

}  // namespace koopstab::sdp
