#include "koopstab/lifting.hpp"

#include <string>

namespace koopstab::lifting {

LiftingSpec LiftingSpec::monomial(int n, int degree) {
  LiftingSpec s;
  s.kind = Kind::Monomial;
  s.n = n;
  s.degree = degree;
  s.validate();
  return s;
}

LiftingSpec LiftingSpec::delay(int n, int dx, int du) {
  LiftingSpec s;
  s.kind = Kind::Delay;
  s.n = n;
  s.dx = dx;
  s.du = du;
  s.validate();
  return s;
}

void LiftingSpec::validate() const {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "lifting: state dimension must be >= 1");
  if (kind == Kind::Monomial) {
    if (degree < 1) throw Error(ErrorKind::InvalidArgument, "lifting: monomial degree must be >= 1");
  } else {
    if (dx < 0 || du < 0) throw Error(ErrorKind::InvalidArgument, "lifting: negative history length");
    if (du > dx) throw Error(ErrorKind::InvalidArgument, "lifting: du must not exceed dx");
  }
}

int dimension(const LiftingSpec& spec) {
  spec.validate();
  if (spec.kind == Kind::Delay) return spec.n * (1 + spec.dx + spec.du) + spec.du;
  // C(n+d, d) - 1
  long long c = 1;
  for (int i = 1; i <= spec.degree; ++i) c = c * (spec.n + i) / i;
  return static_cast<int>(c - 1);
}

namespace {

// All exponent tuples of total degree `deg`, lexicographically descending.
void compositions(int n, int deg, int pos, std::vector<int>& cur,
                  std::vector<std::vector<int>>& out) {
  if (pos == n - 1) {
    cur[pos] = deg;
    out.push_back(cur);
    return;
  }
  for (int e = deg; e >= 0; --e) {
    cur[pos] = e;
    compositions(n, deg - e, pos + 1, cur, out);
  }
}

}  // namespace

std::vector<std::vector<int>> monomial_exponents(int n, int degree) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(static_cast<std::size_t>(n), 0);
  for (int d = 1; d <= degree; ++d) compositions(n, d, 0, cur, out);
  return out;
}

Vec monomial_lift(const Vec& x, int degree) {
  if (degree < 1) throw Error(ErrorKind::InvalidArgument, "monomial degree must be >= 1");
  linalg::require_finite(x, "monomial_lift input");
  const int n = static_cast<int>(x.size());
  const auto exps = monomial_exponents(n, degree);
  Vec z(static_cast<Eigen::Index>(exps.size()));
  for (std::size_t r = 0; r < exps.size(); ++r) {
    double v = 1.0;
    for (int i = 0; i < n; ++i) {
      for (int p = 0; p < exps[r][static_cast<std::size_t>(i)]; ++p) v *= x(i);
    }
    z(static_cast<Eigen::Index>(r)) = v;
  }
  return z;
}

Vec delay_lift(const std::vector<Vec>& x_hist, const std::vector<double>& u_hist,
               const LiftingSpec& spec) {
  if (spec.kind != Kind::Delay) throw Error(ErrorKind::WrongKind, "delay_lift needs a delay spec");
  spec.validate();
  if (x_hist.size() != static_cast<std::size_t>(spec.dx + 1) ||
      u_hist.size() != static_cast<std::size_t>(spec.du)) {
    throw Error(ErrorKind::HistoryLengthMismatch,
                "delay_lift: expected " + std::to_string(spec.dx + 1) + " states and " +
                    std::to_string(spec.du) + " inputs");
  }
  const int n = spec.n;
  for (const Vec& x : x_hist) {
    if (x.size() != n) throw Error(ErrorKind::DimensionMismatch, "delay_lift: state size");
    linalg::require_finite(x, "delay_lift state");
  }
  Vec z(dimension(spec));
  int r = 0;
  // x_k, x_{k-1}, ..., x_{k-dx}
  for (int j = 0; j <= spec.dx; ++j) {
    z.segment(r, n) = x_hist[static_cast<std::size_t>(spec.dx - j)];
    r += n;
  }
  // u_{k-1}, ..., u_{k-du}
  for (int j = 1; j <= spec.du; ++j) z(r++) = u_hist[static_cast<std::size_t>(spec.du - j)];
  // x_{k-j} u_{k-j}
  for (int j = 1; j <= spec.du; ++j) {
    z.segment(r, n) = x_hist[static_cast<std::size_t>(spec.dx - j)] *
                      u_hist[static_cast<std::size_t>(spec.du - j)];
    r += n;
  }
  return z;
}

Vec lift_at(const LiftingSpec& spec, const Mat& states, const Vec& inputs, int offset, int k) {
  const int col = k + offset;
  if (spec.kind == Kind::Monomial) {
    if (col < 0 || col >= states.cols()) throw Error(ErrorKind::InsufficientData, "lift_at: index");
    return monomial_lift(states.col(col), spec.degree);
  }
  if (col - spec.dx < 0 || col >= states.cols() || col > inputs.size()) {
    throw Error(ErrorKind::InsufficientData, "lift_at: not enough history for sample " + std::to_string(k));
  }
  std::vector<Vec> xh;
  for (int j = col - spec.dx; j <= col; ++j) xh.emplace_back(states.col(j));
  std::vector<double> uh;
  for (int j = col - spec.du; j < col; ++j) uh.push_back(inputs(j));
  return delay_lift(xh, uh, spec);
}

DelayStructure structure_matrices(const LiftingSpec& spec) {
  if (spec.kind != Kind::Delay) {
    throw Error(ErrorKind::WrongKind, "structure_matrices needs a delay spec");
  }
  const int n = spec.n, dx = spec.dx, du = spec.du;
  const int N = dimension(spec);
  const int rows = N - n;
  DelayStructure s{Mat::Zero(rows, N), Mat::Zero(rows, 1), Mat::Zero(rows, N)};
  // h_x shift: rows [0, n dx) read (x_k, x_{k-1}, ..., x_{k-dx+1})
  for (int i = 0; i < n * dx; ++i) s.a_k(i, i) = 1.0;
  const int hu_row = n * dx, hu_col = n * (1 + dx);
  // h_u shift, newest slot filled by u_k
  for (int i = 1; i < du; ++i) s.a_k(hu_row + i, hu_col + i - 1) = 1.0;
  if (du > 0) s.b0_k(hu_row, 0) = 1.0;
  const int hxu_row = hu_row + du, hxu_col = hu_col + du;
  for (int i = n; i < n * du; ++i) s.a_k(hxu_row + i, hxu_col + i - n) = 1.0;
  // newest x u slot filled by u_k x_k
  if (du > 0) {
    for (int i = 0; i < n; ++i) s.b1_k(hxu_row + i, i) = 1.0;
  }
  return s;
}

Vec recover_state(const Vec& z, const LiftingSpec& spec) {
  if (z.size() != dimension(spec)) {
    throw Error(ErrorKind::DimensionMismatch, "recover_state: lifted vector has wrong size");
  }
  return z.head(spec.n);
}

io::json to_json(const LiftingSpec& spec) {
  if (spec.kind == Kind::Monomial) {
    return {{"kind", "monomial"}, {"n", spec.n}, {"degree", spec.degree}};
  }
  return {{"kind", "delay"}, {"n", spec.n}, {"dx", spec.dx}, {"du", spec.du}};
}

LiftingSpec spec_from_json(const io::json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "monomial") return LiftingSpec::monomial(j.at("n"), j.at("degree"));
    if (kind == "delay") return LiftingSpec::delay(j.at("n"), j.at("dx"), j.value("du", 0));
    throw Error(ErrorKind::Config, "lifting kind must be monomial or delay, got " + kind);
  } catch (const io::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("lifting spec: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) throw;
    throw Error(ErrorKind::Config, e.what());
  }
}

}  // namespace koopstab::lifting
