#include "koopstab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace koopstab::linalg {

void require_finite(const Mat& m, const char* what) {
  if (!m.allFinite()) {
    throw Error(ErrorKind::NonFinite, std::string(what) + " contains NaN or Inf");
  }
}

bool is_symmetric(const Mat& m, double tol) {
  if (m.rows() != m.cols()) return false;
  return (m - m.transpose()).norm() <= tol * (1.0 + m.norm());
}

Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

Mat pinv(const Mat& m, double rtol) {
  require_finite(m, "pinv input");
  if (m.size() == 0) return Mat::Zero(m.cols(), m.rows());
  Eigen::BDCSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  const double cutoff = rtol * (s.size() > 0 ? s(0) : 0.0);
  Vec inv = Vec::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) inv(i) = 1.0 / s(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

int numerical_rank(const Mat& m, double rtol) {
  require_finite(m, "rank input");
  if (m.size() == 0) return 0;
  Eigen::BDCSVD<Mat> svd(m);
  const Vec& s = svd.singularValues();
  const double cutoff = rtol * s(0);
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) ++rank;
  }
  return rank;
}

SymEig sym_eig(const Mat& m) {
  require_finite(m, "sym_eig input");
  if (!is_symmetric(m)) {
    throw Error(ErrorKind::NotSymmetric,
                "matrix of size " + std::to_string(m.rows()) + "x" +
                    std::to_string(m.cols()) + " is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m));
  if (es.info() != Eigen::Success) {
    throw Error(ErrorKind::NumericalFailure, "symmetric eigensolver did not converge");
  }
  return {es.eigenvalues(), es.eigenvectors()};
}

double min_eig(const Mat& m) {
  require_finite(m, "min_eig input");
  if (!is_symmetric(m)) throw Error(ErrorKind::NotSymmetric, "min_eig input");
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

double max_eig(const Mat& m) {
  require_finite(m, "max_eig input");
  if (!is_symmetric(m)) throw Error(ErrorKind::NotSymmetric, "max_eig input");
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

bool is_positive_definite(const Mat& m) {
  if (m.rows() != m.cols() || !m.allFinite()) return false;
  Eigen::LLT<Mat> llt(symmetrize(m));
  return llt.info() == Eigen::Success;
}

Mat kron(const Mat& a, const Mat& b) {
  require_finite(a, "kron lhs");
  require_finite(b, "kron rhs");
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

Vec spd_solve(const Mat& p, const Vec& b) {
  if (p.rows() != p.cols() || p.rows() != b.size()) {
    throw Error(ErrorKind::DimensionMismatch, "spd_solve");
  }
  Eigen::LLT<Mat> llt(symmetrize(p));
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::NumericalFailure, "spd_solve: matrix is not positive definite");
  }
  return llt.solve(b);
}

Mat spd_inverse(const Mat& p) {
  Eigen::LLT<Mat> llt(symmetrize(p));
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::NumericalFailure, "spd_inverse: matrix is not positive definite");
  }
  return symmetrize(llt.solve(Mat::Identity(p.rows(), p.cols())));
}

Mat block_diag(std::initializer_list<const Mat*> blocks) {
  Eigen::Index rows = 0, cols = 0;
  for (const Mat* b : blocks) {
    rows += b->rows();
    cols += b->cols();
  }
  Mat out = Mat::Zero(rows, cols);
  Eigen::Index r = 0, c = 0;
  for (const Mat* b : blocks) {
    out.block(r, c, b->rows(), b->cols()) = *b;
    r += b->rows();
    c += b->cols();
  }
  return out;
}

Mat assemble(const std::vector<std::vector<Mat>>& grid) {
  if (grid.empty()) return Mat(0, 0);
  const std::size_t ncols = grid.front().size();
  std::vector<Eigen::Index> widths(ncols, 0);
  for (std::size_t j = 0; j < ncols; ++j) widths[j] = grid.front()[j].cols();
  Eigen::Index total_rows = 0, total_cols = 0;
  for (Eigen::Index w : widths) total_cols += w;
  for (const auto& row : grid) {
    if (row.size() != ncols) throw Error(ErrorKind::DimensionMismatch, "ragged block grid");
    const Eigen::Index h = row.front().rows();
    for (std::size_t j = 0; j < ncols; ++j) {
      if (row[j].rows() != h || row[j].cols() != widths[j]) {
        throw Error(ErrorKind::DimensionMismatch, "inconsistent block sizes");
      }
    }
    total_rows += h;
  }
  Mat out(total_rows, total_cols);
  Eigen::Index r = 0;
  for (const auto& row : grid) {
    Eigen::Index c = 0;
    for (std::size_t j = 0; j < ncols; ++j) {
      out.block(r, c, row[j].rows(), row[j].cols()) = row[j];
      c += widths[j];
    }
    r += row.front().rows();
  }
  return out;
}

}  // namespace koopstab::linalg
