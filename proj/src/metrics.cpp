#include "imave/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "imave/error.hpp"

namespace imave {

namespace {

// Average ranks (1-based); ties share the mean of their positions.
Eigen::VectorXd average_ranks(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return v(a) < v(b); });
  Eigen::VectorXd ranks(n);
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j + 1 < n && v(idx[j + 1]) == v(idx[i])) ++j;
    const double avg = 0.5 * (i + j) + 1.0;
    for (Eigen::Index k = i; k <= j; ++k) ranks(idx[k]) = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double ma = a.mean(), mb = b.mean();
  const Eigen::ArrayXd da = a.array() - ma, db = b.array() - mb;
  const double sa = std::sqrt(da.square().sum());
  const double sb = std::sqrt(db.square().sum());
  if (!(sa > 0.0) || !(sb > 0.0))
    fail(ErrorCode::ConstantInput, "correlation of a constant vector");
  return (da * db).sum() / (sa * sb);
}

int sign_plus(double v) { return v >= 0.0 ? 1 : -1; }  // sign(0) = +1

}  // namespace

double rank_correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() < 2)
    fail(ErrorCode::InvalidArgument, "rank correlation needs equal sizes >= 2");
  return pearson(average_ranks(a), average_ranks(b));
}

double kendall_tau(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::Index n = a.size();
  if (b.size() != n || n < 2)
    fail(ErrorCode::InvalidArgument, "kendall tau needs equal sizes >= 2");
  // tau-b: concordant minus discordant over sqrt((n0 - T_a)(n0 - T_b)),
  // T_* counting pairs tied in that argument.
  std::int64_t concordant = 0, discordant = 0, ta = 0, tb = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double da = a(i) - a(j), db = b(i) - b(j);
      if (da == 0.0) ++ta;
      if (db == 0.0) ++tb;
      if (da == 0.0 || db == 0.0) continue;
      ((da > 0) == (db > 0)) ? ++concordant : ++discordant;
    }
  }
  const double n0 = 0.5 * n * (n - 1.0);
  const double den = std::sqrt((n0 - ta) * (n0 - tb));
  if (!(den > 0.0))
    fail(ErrorCode::ConstantInput, "kendall tau of a constant vector");
  return (concordant - discordant) / den;
}

double classification_rate(const Eigen::VectorXd& pred,
                           const Eigen::VectorXd& truth) {
  if (pred.size() != truth.size() || pred.size() == 0)
    fail(ErrorCode::InvalidArgument, "classification rate needs equal sizes");
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < pred.size(); ++i)
    if (sign_plus(pred(i)) == sign_plus(truth(i))) ++hits;
  return static_cast<double>(hits) / pred.size();
}

BenefitMetrics benefit_metrics(const Dataset& ds,
                               const Eigen::VectorXi& rule) {
  if (!ds.binary())
    fail(ErrorCode::NotBinary, "benefit metrics require binary data");
  if (rule.size() != ds.n())
    fail(ErrorCode::InvalidArgument, "rule length mismatch");

  // Cells indexed by (rule sign, arm sign).
  double sum[2][2] = {{0, 0}, {0, 0}};
  double sq[2][2] = {{0, 0}, {0, 0}};
  std::int64_t cnt[2][2] = {{0, 0}, {0, 0}};
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    if (rule(i) != 1 && rule(i) != -1)
      fail(ErrorCode::InvalidArgument, "rule values must be +-1");
    const int r = rule(i) == 1 ? 0 : 1;
    const int t = ds.T()(i) == 1 ? 0 : 1;
    sum[r][t] += ds.Y()(i);
    sq[r][t] += ds.Y()(i) * ds.Y()(i);
    ++cnt[r][t];
  }

  BenefitMetrics out;
  const std::int64_t n_plus = cnt[0][0] + cnt[0][1];
  const std::int64_t n_minus = cnt[1][0] + cnt[1][1];
  out.frac_plus = static_cast<double>(n_plus) / ds.n();
  out.frac_minus = static_cast<double>(n_minus) / ds.n();

  auto cell = [&](int r, int t, double* mean, double* var_over_n) {
    if (cnt[r][t] == 0) return false;
    const double m = sum[r][t] / cnt[r][t];
    *mean = m;
    if (cnt[r][t] > 1) {
      const double ss = (sq[r][t] - cnt[r][t] * m * m) / (cnt[r][t] - 1.0);
      *var_over_n = std::max(ss, 0.0) / cnt[r][t];
    } else {
      *var_over_n = 0.0;
    }
    return true;
  };

  double m_pp = 0, v_pp = 0, m_pm = 0, v_pm = 0;
  double m_mp = 0, v_mp = 0, m_mm = 0, v_mm = 0;
  if (cell(0, 0, &m_pp, &v_pp) && cell(0, 1, &m_pm, &v_pm)) {
    out.delta_plus = m_pp - m_pm;
    out.se_plus = std::sqrt(v_pp + v_pm);
  }
  if (cell(1, 0, &m_mp, &v_mp) && cell(1, 1, &m_mm, &v_mm)) {
    out.delta_minus = m_mm - m_mp;
    out.se_minus = std::sqrt(v_mm + v_mp);
  }
  return out;
}

}  // namespace imave
