#pragma once

// Newton-system assembly for the log-det barrier. For one normalized LMI block
// with slack S and W = S^{-1}:
//
//   g_i += tr(W F_i)              (gradient of -log det S, sign folded by caller)
//   H_ik += tr(W F_i W F_k)       (upper triangle only, i <= k by variable id)
//
// accumulate_newton is the OpenMP kernel used by the solver. The serial
// reference forms every coefficient densely and is kept for testing and
// benchmarking only.

#include <vector>

#include "koopstab/linalg.hpp"
#include "koopstab/sdp.hpp"

namespace koopstab::sdp::kernels {

/// A constraint block restricted to the variables that actually enter it.
/// vars is strictly increasing; coeffs[i] belongs to vars[i].
struct ActiveBlock {
  int dim = 0;
  Mat constant;
  std::vector<int> vars;
  std::vector<SparseSym> coeffs;
};

void accumulate_newton(const ActiveBlock& block, const Mat& w, Mat& hessian, Vec& trace_grad);

void accumulate_newton_reference(const ActiveBlock& block, const Mat& w, Mat& hessian,
                                 Vec& trace_grad);

/// S(x) = constant + sum_i x[vars[i]] * coeffs[i].
Mat evaluate_block(const ActiveBlock& block, const Vec& x);

}  // namespace koopstab::sdp::kernels
