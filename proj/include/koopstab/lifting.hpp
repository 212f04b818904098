#pragma once

// Observable dictionaries z = lift(x, history). In both kinds the physical
// state occupies the first n coordinates of z.

#include <vector>

#include "koopstab/json_io.hpp"
#include "koopstab/linalg.hpp"

namespace koopstab::lifting {

enum class Kind { Monomial, Delay };

struct LiftingSpec {
  Kind kind = Kind::Monomial;
  int n = 1;
  int degree = 1;  // monomial
  int dx = 0;      // delay: past states
  int du = 0;      // delay: past inputs, du <= dx

  static LiftingSpec monomial(int n, int degree);
  static LiftingSpec delay(int n, int dx, int du);

  /// Throws InvalidArgument on a malformed spec.
  void validate() const;
  /// Number of past states the lifting consumes (0 for monomials).
  int history() const { return kind == Kind::Delay ? dx : 0; }
  bool operator==(const LiftingSpec&) const = default;
};

int dimension(const LiftingSpec& spec);

/// Exponent tuples in graded lexicographic order, degree 1 first.
std::vector<std::vector<int>> monomial_exponents(int n, int degree);

Vec monomial_lift(const Vec& x, int degree);

/// x_hist holds x_{k-dx}, ..., x_k (oldest first), u_hist holds
/// u_{k-du}, ..., u_{k-1}.
Vec delay_lift(const std::vector<Vec>& x_hist, const std::vector<double>& u_hist,
               const LiftingSpec& spec);

/// Lifts sample k of a recorded run. states is n x T, column j is time
/// j - offset; inputs(j) is the input applied at the same time index.
Vec lift_at(const LiftingSpec& spec, const Mat& states, const Vec& inputs, int offset, int k);

struct DelayStructure {
  Mat a_k;   // (N-n) x N
  Mat b0_k;  // (N-n) x 1
  Mat b1_k;  // (N-n) x N
};

/// Known bottom rows of the delay dynamics. WrongKind for monomials.
DelayStructure structure_matrices(const LiftingSpec& spec);

Vec recover_state(const Vec& z, const LiftingSpec& spec);

io::json to_json(const LiftingSpec& spec);
LiftingSpec spec_from_json(const io::json& j);

}  // namespace koopstab::lifting
