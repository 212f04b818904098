#include "koopstab/edmd.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <vector>

namespace koopstab::edmd {

void Dataset::validate() const {
  if (states.rows() < 1) throw Error(ErrorKind::InvalidArgument, "dataset: no state components");
  if (warmup < 0) throw Error(ErrorKind::InvalidArgument, "dataset: negative warm-up");
  if (states.cols() != inputs.size() + 1) {
    throw Error(ErrorKind::DimensionMismatch, "dataset: need exactly one more state than inputs");
  }
  if (inputs.size() < warmup) throw Error(ErrorKind::InsufficientData, "dataset shorter than warm-up");
  linalg::require_finite(states, "dataset states");
  linalg::require_finite(inputs, "dataset inputs");
}

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view s, int line) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t')) s.remove_suffix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorKind::Config, "dataset CSV line " + std::to_string(line) + ": bad number '" +
                                       std::string(s) + "'");
  }
  if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "dataset CSV line " + std::to_string(line));
  return v;
}

}  // namespace

std::string to_csv(const Dataset& ds) {
  ds.validate();
  std::string out = "k";
  for (int i = 0; i < ds.n(); ++i) out += ",x" + std::to_string(i + 1);
  out += ",u\n";
  for (Eigen::Index j = 0; j < ds.states.cols(); ++j) {
    out += std::to_string(static_cast<long long>(j) - ds.warmup);
    for (int i = 0; i < ds.n(); ++i) out += "," + io::format_real(ds.states(i, j));
    out += ",";
    if (j < ds.inputs.size()) out += io::format_real(ds.inputs(j));
    out += "\n";
  }
  return out;
}

Dataset dataset_from_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view l = text.substr(start, end - start);
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    if (!l.empty()) lines.push_back(l);
    start = end + 1;
  }
  if (lines.size() < 2) throw Error(ErrorKind::InsufficientData, "dataset CSV has no samples");
  const auto header = split(lines[0]);
  if (header.size() < 3 || header.front() != "k" || header.back() != "u") {
    throw Error(ErrorKind::Config, "dataset CSV header must be k,x1..xn,u");
  }
  const int n = static_cast<int>(header.size()) - 2;
  const int rows = static_cast<int>(lines.size()) - 1;
  Dataset ds;
  ds.states.resize(n, rows);
  ds.inputs.resize(rows - 1);
  long long first_k = 0;
  for (int r = 0; r < rows; ++r) {
    const auto f = split(lines[static_cast<std::size_t>(r + 1)]);
    if (f.size() != header.size()) {
      throw Error(ErrorKind::Config, "dataset CSV line " + std::to_string(r + 2) + ": field count");
    }
    const double kd = parse_double(f[0], r + 2);
    const long long k = std::llround(kd);
    if (r == 0) {
      first_k = k;
    } else if (k != first_k + r) {
      throw Error(ErrorKind::Config, "dataset CSV: k must increase by one per row");
    }
    for (int i = 0; i < n; ++i) ds.states(i, r) = parse_double(f[static_cast<std::size_t>(i + 1)], r + 2);
    const std::string_view u = f.back();
    if (r + 1 < rows) {
      ds.inputs(r) = parse_double(u, r + 2);
    } else if (u.find_first_not_of(" \t") != std::string_view::npos) {
      throw Error(ErrorKind::Config, "dataset CSV: last row must leave u empty");
    }
  }
  if (first_k > 0) throw Error(ErrorKind::Config, "dataset CSV: first k must be <= 0");
  ds.warmup = static_cast<int>(-first_k);
  ds.validate();
  return ds;
}

io::json meta_to_json(const Dataset& ds) {
  return {{"tau_s", ds.tau_s},   {"seed", ds.seed},         {"source", ds.source},
          {"n", ds.n()},         {"warmup", ds.warmup},     {"samples", ds.samples()}};
}

DataMatrices build_data_matrices(const Dataset& ds, const LiftingSpec& spec) {
  ds.validate();
  spec.validate();
  if (spec.n != ds.n()) throw Error(ErrorKind::DimensionMismatch, "lifting n differs from dataset");
  if (ds.warmup < spec.history()) {
    throw Error(ErrorKind::InsufficientData, "dataset warm-up shorter than the lifting history");
  }
  const int L = ds.samples();
  if (L < 1) throw Error(ErrorKind::InsufficientData, "dataset has no transitions");
  const int N = lifting::dimension(spec);
  DataMatrices dm{Mat(N, L), Mat(N, L), Mat(1, L), Mat(2 * N + 1, L), Mat(spec.n, L)};
  for (int k = 0; k < L; ++k) {
    dm.z.col(k) = lifting::lift_at(spec, ds.states, ds.inputs, ds.warmup, k);
    dm.z_plus.col(k) = lifting::lift_at(spec, ds.states, ds.inputs, ds.warmup, k + 1);
    dm.u(0, k) = ds.inputs(k + ds.warmup);
    dm.x_plus.col(k) = ds.states.col(k + 1 + ds.warmup);
  }
  dm.y << dm.z, dm.u, dm.z * dm.u.row(0).asDiagonal();
  return dm;
}

void BilinearModel::validate() const {
  const int N = lifting::dimension(spec);
  if (a.rows() != N || a.cols() != N || b0.size() != N || b1.rows() != N || b1.cols() != N) {
    throw Error(ErrorKind::DimensionMismatch, "model matrices do not match lifting dimension " +
                                                  std::to_string(N));
  }
  linalg::require_finite(a, "A");
  linalg::require_finite(b0, "B0");
  linalg::require_finite(b1, "B1");
}

namespace {

BilinearModel split_gain(const Mat& g, const LiftingSpec& spec) {
  const int N = lifting::dimension(spec);
  BilinearModel m;
  m.spec = spec;
  m.a = g.leftCols(N);
  m.b0 = g.col(N);
  m.b1 = g.rightCols(N);
  return m;
}

Mat regress(const Mat& target, const Mat& y, FitDiagnostics* diag) {
  if (target.cols() != y.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "regression target and Y differ in sample count");
  }
  linalg::require_finite(target, "regression target");
  linalg::require_finite(y, "Y");
  if (diag) {
    diag->rows_y = static_cast<int>(y.rows());
    diag->rank_y = linalg::numerical_rank(y);
  }
  return target * linalg::pinv(y);
}

}  // namespace

BilinearModel fit_full(const Mat& z_plus, const Mat& y, const LiftingSpec& spec,
                       FitDiagnostics* diag) {
  const int N = lifting::dimension(spec);
  if (z_plus.rows() != N || y.rows() != 2 * N + 1) {
    throw Error(ErrorKind::DimensionMismatch, "fit_full: expected Z+ with N rows and Y with 2N+1");
  }
  return split_gain(regress(z_plus, y, diag), spec);
}

BilinearModel fit_structured(const Mat& x_plus, const Mat& y, const LiftingSpec& spec,
                             FitDiagnostics* diag) {
  if (spec.kind != lifting::Kind::Delay) {
    throw Error(ErrorKind::WrongKind, "structured fit needs a delay lifting");
  }
  const int N = lifting::dimension(spec);
  const int n = spec.n;
  if (x_plus.rows() != n || y.rows() != 2 * N + 1) {
    throw Error(ErrorKind::DimensionMismatch, "fit_structured: expected X+ with n rows and Y with 2N+1");
  }
  const Mat top = regress(x_plus, y, diag);
  const lifting::DelayStructure known = lifting::structure_matrices(spec);
  Mat g(N, 2 * N + 1);
  g.topRows(n) = top;
  g.bottomRows(N - n) << known.a_k, known.b0_k, known.b1_k;
  BilinearModel m = split_gain(g, spec);
  m.structured = true;
  return m;
}

ErrorReport residuals(const BilinearModel& model, const DataMatrices& dm) {
  model.validate();
  const int N = model.dim();
  if (dm.z.rows() != N) throw Error(ErrorKind::DimensionMismatch, "residuals: data lifted with another spec");
  const Eigen::Index L = dm.z.cols();
  ErrorReport r;
  r.residuals.resize(N, L);
  r.gains = Vec::Constant(L, std::numeric_limits<double>::quiet_NaN());
  double sq = 0.0;
  for (Eigen::Index k = 0; k < L; ++k) {
    const Vec z = dm.z.col(k);
    const Vec e = dm.z_plus.col(k) - model.step(z, dm.u(0, k));
    r.residuals.col(k) = e;
    const double en = e.norm(), zn = z.norm();
    sq += en * en;
    if (zn < kZeroStateTol) {
      ++r.excluded;
      if (en > 0.0) ++r.zero_state_violations;
      continue;
    }
    r.gains(k) = en / zn;
    r.l_hat = std::max(r.l_hat, r.gains(k));
  }
  r.rms = L > 0 ? std::sqrt(sq / static_cast<double>(L)) : 0.0;
  return r;
}

ErrorReport residuals(const BilinearModel& model, const Dataset& ds) {
  return residuals(model, build_data_matrices(ds, model.spec));
}

io::json to_json(const BilinearModel& m) {
  return {{"spec", lifting::to_json(m.spec)},
          {"N", m.dim()},
          {"structured", m.structured},
          {"A", io::mat_to_json(m.a)},
          {"B0", io::vec_to_json(m.b0)},
          {"B1", io::mat_to_json(m.b1)},
          {"provenance", {{"data_hash", m.data_hash}}}};
}

BilinearModel model_from_json(const io::json& j) {
  BilinearModel m;
  try {
    m.spec = lifting::spec_from_json(j.at("spec"));
    m.structured = j.value("structured", false);
    m.a = io::mat_from_json(j.at("A"));
    m.b0 = io::vec_from_json(j.at("B0"));
    m.b1 = io::mat_from_json(j.at("B1"));
    if (j.contains("provenance")) m.data_hash = j["provenance"].value("data_hash", "");
  } catch (const io::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("model JSON: ") + e.what());
  }
  m.validate();
  return m;
}

io::json to_json(const ErrorReport& r, double inflation) {
  double gmin = std::numeric_limits<double>::infinity(), gsum = 0.0;
  int count = 0;
  for (Eigen::Index k = 0; k < r.gains.size(); ++k) {
    if (std::isnan(r.gains(k))) continue;
    gmin = std::min(gmin, r.gains(k));
    gsum += r.gains(k);
    ++count;
  }
  return {{"samples", r.residuals.cols()},
          {"L_hat", r.l_hat},
          {"rms", r.rms},
          {"gain_mean", count ? gsum / count : 0.0},
          {"gain_min", count ? gmin : 0.0},
          {"excluded_zero_state", r.excluded},
          {"zero_state_violations", r.zero_state_violations},
          {"L_eps_estimate", r.l_eps_estimate(inflation)},
          {"inflation", inflation},
          {"L_eps_heuristic", true}};
}

std::string model_hash(const BilinearModel& m) { return io::fnv1a_hex(to_json(m).dump()); }

}  // namespace koopstab::edmd
