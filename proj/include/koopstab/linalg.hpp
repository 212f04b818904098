#pragma once

// Dense real linear algebra used throughout the toolkit. Everything here is a
// pure function on values; Eigen does the heavy lifting.

#include <Eigen/Dense>

#include <initializer_list>
#include <vector>

#include "koopstab/error.hpp"

namespace koopstab {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

namespace linalg {

inline constexpr double kDefaultPinvRtol = 1e-10;
inline constexpr double kSymmetryTol = 1e-10;

struct SymEig {
  Vec eigenvalues;  // ascending
  Mat eigenvectors;  // orthogonal, columns match eigenvalues
};

/// Throws NonFinite when any entry is NaN or Inf.
void require_finite(const Mat& m, const char* what);

bool is_symmetric(const Mat& m, double tol = kSymmetryTol);

Mat symmetrize(const Mat& m);

/// Moore-Penrose pseudoinverse. Singular values below rtol * sigma_max are
/// treated as zero.
Mat pinv(const Mat& m, double rtol = kDefaultPinvRtol);

/// Number of singular values above rtol * sigma_max.
int numerical_rank(const Mat& m, double rtol = kDefaultPinvRtol);

/// Eigendecomposition of a symmetric matrix. The input is symmetrized first;
/// asymmetry beyond kSymmetryTol * (1 + |M|_F) is rejected with NotSymmetric.
SymEig sym_eig(const Mat& m);

double min_eig(const Mat& m);
double max_eig(const Mat& m);

/// Cholesky-based test for strict positive definiteness.
bool is_positive_definite(const Mat& m);

Mat kron(const Mat& a, const Mat& b);

/// Solve P x = b for symmetric positive definite P.
Vec spd_solve(const Mat& p, const Vec& b);

Mat spd_inverse(const Mat& p);

/// Block-diagonal concatenation; zero-size blocks are allowed.
Mat block_diag(std::initializer_list<const Mat*> blocks);

/// Dense block assembly from a row-major grid of blocks. Row heights and
/// column widths are taken from the blocks themselves; every row of the grid
/// must be consistent.
Mat assemble(const std::vector<std::vector<Mat>>& grid);

}  // namespace linalg
}  // namespace koopstab
