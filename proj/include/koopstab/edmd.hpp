#pragma once

// EDMD identification of the bilinear lifted model
//   z+ = A z + u (B0 + B1 z) + eps.

#include <filesystem>
#include <string>

#include "koopstab/json_io.hpp"
#include "koopstab/lifting.hpp"

namespace koopstab::edmd {

using lifting::LiftingSpec;

/// A recorded run. Column j of `states` is time k = j - warmup and inputs(j)
/// is the input applied at that time, so inputs has one entry fewer.
struct Dataset {
  Mat states;  // n x (warmup + L + 1)
  Vec inputs;  // warmup + L
  int warmup = 0;
  double tau_s = 0.0;
  std::uint64_t seed = 0;
  std::string source;

  int n() const { return static_cast<int>(states.rows()); }
  int samples() const { return static_cast<int>(inputs.size()) - warmup; }  // L
  void validate() const;
};

/// CSV with header k,x1..xn,u; warm-up rows carry negative k and the final
/// row leaves u empty.
std::string to_csv(const Dataset& ds);
Dataset dataset_from_csv(std::string_view text);

io::json meta_to_json(const Dataset& ds);

struct DataMatrices {
  Mat z;       // N x L
  Mat z_plus;  // N x L
  Mat u;       // 1 x L
  Mat y;       // (2N+1) x L, rows [Z; U; Z diag(U)]
  Mat x_plus;  // n x L
};

DataMatrices build_data_matrices(const Dataset& ds, const LiftingSpec& spec);

struct BilinearModel {
  Mat a;
  Vec b0;
  Mat b1;
  LiftingSpec spec;
  bool structured = false;
  std::string data_hash;  // FNV-1a of the training CSV, empty if unknown

  int dim() const { return static_cast<int>(a.rows()); }
  /// Throws DimensionMismatch if the matrices disagree with spec.
  void validate() const;
  Vec step(const Vec& z, double u) const { return a * z + u * (b0 + b1 * z); }
};

struct FitDiagnostics {
  int rank_y = 0;
  int rows_y = 0;
  bool full_row_rank() const { return rank_y == rows_y; }
};

/// [A B0 B1] = Z+ pinv(Y).
BilinearModel fit_full(const Mat& z_plus, const Mat& y, const LiftingSpec& spec,
                       FitDiagnostics* diag = nullptr);

/// Identifies only the top n rows from X+; the rest come from the delay
/// shift structure.
BilinearModel fit_structured(const Mat& x_plus, const Mat& y, const LiftingSpec& spec,
                             FitDiagnostics* diag = nullptr);

inline constexpr double kZeroStateTol = 1e-12;
inline constexpr double kDefaultInflation = 1.5;

struct ErrorReport {
  Mat residuals;  // N x L
  Vec gains;      // |eps_k| / |z_k|, NaN where |z_k| < kZeroStateTol
  double l_hat = 0.0;
  double rms = 0.0;
  int excluded = 0;                 // samples skipped in the gain statistics
  int zero_state_violations = 0;    // z_k = 0 with eps_k != 0

  /// Empirical finite-gain guess inflation * l_hat. Not a rigorous bound.
  double l_eps_estimate(double inflation = kDefaultInflation) const { return inflation * l_hat; }
};

ErrorReport residuals(const BilinearModel& model, const DataMatrices& dm);
ErrorReport residuals(const BilinearModel& model, const Dataset& ds);

io::json to_json(const BilinearModel& m);
BilinearModel model_from_json(const io::json& j);
io::json to_json(const ErrorReport& r, double inflation = kDefaultInflation);

/// Content hash of a model, used to tie controllers to the model they came from.
std::string model_hash(const BilinearModel& m);

}  // namespace koopstab::edmd
