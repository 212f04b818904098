#include "koopstab/sdp_kernels.hpp"

#include <omp.h>

namespace koopstab::sdp::kernels {

namespace {

// tr(M F) for symmetric M and sparse symmetric F.
double trace_product(const Mat& m, const SparseSym& f) {
  double acc = 0.0;
  for (const Entry& e : f.entries()) acc += m(e.col, e.row) * e.value;
  return acc;
}

// out = W F W using only the rows F touches: F W has nonzero rows R, so
// W F W = W(:, R) * (F W)(R, :).
void sandwich(const Mat& w, const SparseSym& f, Mat& fw_rows, Mat& out) {
  const auto& rows = f.rows();
  const Eigen::Index n = w.rows();
  const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
  fw_rows.setZero(r, n);
  // entries are sorted by row, so walk them alongside rows
  Eigen::Index slot = 0;
  for (const Entry& e : f.entries()) {
    while (rows[static_cast<std::size_t>(slot)] != e.row) ++slot;
    fw_rows.row(slot).noalias() += e.value * w.row(e.col);
  }
  Mat w_cols(n, r);
  for (Eigen::Index k = 0; k < r; ++k) w_cols.col(k) = w.col(rows[static_cast<std::size_t>(k)]);
  out.noalias() = w_cols * fw_rows;
}

}  // namespace

Mat evaluate_block(const ActiveBlock& block, const Vec& x) {
  Mat s = block.constant;
  for (std::size_t i = 0; i < block.vars.size(); ++i) {
    const double xi = x(block.vars[i]);
    if (xi == 0.0) continue;
    for (const Entry& e : block.coeffs[i].entries()) s(e.row, e.col) += xi * e.value;
  }
  return s;
}

void accumulate_newton(const ActiveBlock& block, const Mat& w, Mat& hessian, Vec& trace_grad) {
  const int nv = static_cast<int>(block.vars.size());

#pragma omp parallel
  {
    Mat fw_rows;
    Mat wfw(w.rows(), w.cols());
#pragma omp for schedule(dynamic, 4)
    for (int i = 0; i < nv; ++i) {
      const SparseSym& fi = block.coeffs[static_cast<std::size_t>(i)];
      const int vi = block.vars[static_cast<std::size_t>(i)];
      trace_grad(vi) += trace_product(w, fi);
      sandwich(w, fi, fw_rows, wfw);
      // each i owns row vi of the upper triangle
      for (int k = i; k < nv; ++k) {
        const int vk = block.vars[static_cast<std::size_t>(k)];
        hessian(vi, vk) += trace_product(wfw, block.coeffs[static_cast<std::size_t>(k)]);
      }
    }
  }
}

void accumulate_newton_reference(const ActiveBlock& block, const Mat& w, Mat& hessian,
                                 Vec& trace_grad) {
  const std::size_t nv = block.vars.size();
  std::vector<Mat> wf(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    wf[i] = w * block.coeffs[i].dense();
    trace_grad(block.vars[i]) += wf[i].trace();
  }
  for (std::size_t i = 0; i < nv; ++i) {
    for (std::size_t k = i; k < nv; ++k) {
      // tr(A B) = sum_ij A_ij B_ji
      hessian(block.vars[i], block.vars[k]) += wf[i].cwiseProduct(wf[k].transpose()).sum();
    }
  }
}

}  // namespace koopstab::sdp::kernels
