#include "attnflow/stats.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include <Eigen/QR>

#include "attnflow/error.hpp"
#include "attnflow/text.hpp"

namespace attnflow {

PowerLawFit fit_power_law(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "x and y differ in length");
  PowerLawFit fit;
  std::vector<double> lx, ly;
  lx.reserve(x.size());
  ly.reserve(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0.0 && y[i] > 0.0 && std::isfinite(x[i]) && std::isfinite(y[i])) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    } else {
      ++fit.dropped_nonpositive;
    }
  }
  fit.n_points = lx.size();
  if (fit.n_points < 3)
    throw Error(ErrorCode::TooFewPoints, "power-law fit needs at least 3 positive pairs, have " +
                                             std::to_string(fit.n_points));

  const double n = static_cast<double>(fit.n_points);
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double dx = lx[i] - mx, dy = ly[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx <= 1e-300 * std::max(1.0, mx * mx) || std::all_of(lx.begin(), lx.end(), [&](double v) { return v == lx[0]; }))
    throw Error(ErrorCode::DegenerateX, "all retained x values are equal");

  fit.exponent = sxy / sxx;
  fit.intercept = my - fit.exponent * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double r = ly[i] - (fit.intercept + fit.exponent * lx[i]);
    rss += r * r;
  }
  fit.r_squared = syy > 0.0 ? std::clamp(1.0 - rss / syy, 0.0, 1.0) : 1.0;
  fit.stderr_exponent = std::sqrt(rss / (n - 2.0) / sxx);
  return fit;
}

double gini(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "gini of an empty vector");
  std::vector<double> sorted(values.begin(), values.end());
  for (double v : sorted)
    if (v < 0.0 || !std::isfinite(v)) throw Error(ErrorCode::NegativeValue, "gini needs non-negative values");
  std::sort(sorted.begin(), sorted.end());
  const double total = std::accumulate(sorted.begin(), sorted.end(), 0.0);
  if (total <= 0.0) throw Error(ErrorCode::AllZero, "gini of an all-zero vector");
  // sum_i sum_j |x_i - x_j| = 2 sum_i (2i - n - 1) x_(i) over ascending order.
  const auto n = static_cast<double>(sorted.size());
  double weighted = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i)
    weighted += (2.0 * static_cast<double>(i + 1) - n - 1.0) * sorted[i];
  return std::max(0.0, weighted / (n * total));
}

std::vector<ZipfEntry> zipf_table(std::span<const double> values) {
  std::vector<ZipfEntry> table(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) table[i] = {0, values[i], i};
  std::stable_sort(table.begin(), table.end(), [](const ZipfEntry& a, const ZipfEntry& b) { return a.value > b.value; });
  for (std::size_t r = 0; r < table.size(); ++r) table[r].rank = r + 1;
  return table;
}

ConcentrationReport concentration(std::span<const double> values) { return {gini(values), zipf_table(values)}; }

std::size_t DuplicationResult::retained_count() const {
  return static_cast<std::size_t>(std::count_if(edges.begin(), edges.end(), [](const OverlapEdge& e) { return e.retained; }));
}

DuplicationResult duplication_filter(const SessionLog& log) {
  if (log.items.size() < 2) throw Error(ErrorCode::InvalidArgument, "duplication analysis needs at least two items");
  DuplicationResult result;
  result.items = log.items;
  result.audience = log.users_per_item();
  result.total_users = log.total_users();

  // Distinct items per user, then count co-occurring pairs.
  std::unordered_map<std::uint64_t, std::uint32_t> overlap;
  std::vector<std::uint32_t> seen(log.items.size(), UINT32_MAX);
  const auto n_items = static_cast<std::uint64_t>(log.items.size());
  for (std::uint32_t u = 0; u < log.users.size(); ++u) {
    std::vector<std::uint32_t> mine;
    for (const auto& s : log.users[u].sessions)
      for (auto r : s) {
        auto item = log.records[r].item;
        if (seen[item] != u) {
          seen[item] = u;
          mine.push_back(item);
        }
      }
    std::sort(mine.begin(), mine.end());
    for (std::size_t i = 0; i < mine.size(); ++i)
      for (std::size_t j = i + 1; j < mine.size(); ++j) ++overlap[mine[i] * n_items + mine[j]];
  }

  result.edges.reserve(overlap.size());
  for (const auto& [key, count] : overlap) {
    OverlapEdge e;
    e.a = static_cast<std::uint32_t>(key / n_items);
    e.b = static_cast<std::uint32_t>(key % n_items);
    e.observed = count;
    e.expected = static_cast<double>(result.audience[e.a]) * static_cast<double>(result.audience[e.b]) /
                 static_cast<double>(result.total_users);
    e.retained = static_cast<double>(e.observed) >= e.expected;
    result.edges.push_back(e);
  }
  std::sort(result.edges.begin(), result.edges.end(),
            [](const OverlapEdge& x, const OverlapEdge& y) { return x.a != y.a ? x.a < y.a : x.b < y.b; });

  result.degree_before.assign(log.items.size(), 0);
  result.degree_after.assign(log.items.size(), 0);
  for (const auto& e : result.edges) {
    ++result.degree_before[e.a];
    ++result.degree_before[e.b];
    if (e.retained) {
      ++result.degree_after[e.a];
      ++result.degree_after[e.b];
    }
  }
  return result;
}

const Coefficient& RegressionResult::coefficient(const std::string& name) const {
  for (const auto& c : coefficients)
    if (c.name == name) return c;
  throw Error(ErrorCode::InvalidArgument, "no coefficient named " + name);
}

RegressionResult ols_regress(std::span<const double> response, const std::vector<NamedColumn>& features,
                             bool intercept) {
  const std::size_t n = response.size();
  const std::size_t p = features.size() + (intercept ? 1 : 0);
  for (const auto& f : features)
    if (f.values.size() != n)
      throw Error(ErrorCode::InvalidArgument, "feature " + f.name + " has " + std::to_string(f.values.size()) +
                                                  " rows, response has " + std::to_string(n));
  if (p == 0) throw Error(ErrorCode::InvalidArgument, "regression with no columns");
  if (n <= features.size() + 1)
    throw Error(ErrorCode::InsufficientData, "need more than " + std::to_string(features.size() + 1) +
                                                 " observations, have " + std::to_string(n));

  std::vector<std::string> names;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  Eigen::Index col = 0;
  if (intercept) {
    x.col(col++).setOnes();
    names.emplace_back("const");
  }
  for (const auto& f : features) {
    x.col(col++) = Eigen::Map<const Eigen::VectorXd>(f.values.data(), static_cast<Eigen::Index>(n));
    names.push_back(f.name);
  }
  const Eigen::Map<const Eigen::VectorXd> y(response.data(), static_cast<Eigen::Index>(n));

  // Rank check column by column so the collinear set can be named.
  for (Eigen::Index k = 1; k < x.cols(); ++k) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> prefix(x.leftCols(k + 1));
    prefix.setThreshold(1e-10);
    if (prefix.rank() == k + 1) continue;
    Eigen::VectorXd coef = x.leftCols(k).colPivHouseholderQr().solve(x.col(k));
    std::vector<std::string> involved;
    for (Eigen::Index c = 0; c < k; ++c)
      if (std::abs(coef[c]) > 1e-8) involved.push_back(names[static_cast<std::size_t>(c)]);
    involved.push_back(names[static_cast<std::size_t>(k)]);
    std::string msg = "design matrix is rank deficient; collinear columns:";
    for (const auto& s : involved) msg += " " + s;
    throw Error(ErrorCode::SingularDesign, msg, involved);
  }
  if (x.cols() == 1 && x.col(0).norm() == 0.0)
    throw Error(ErrorCode::SingularDesign, "design column " + names[0] + " is all zero", {names[0]});

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  const Eigen::VectorXd beta = qr.solve(y);
  const Eigen::VectorXd fitted = x * beta;
  const Eigen::VectorXd resid = y - fitted;
  const double rss = resid.squaredNorm();
  const double dof = static_cast<double>(n - p);
  const double sigma2 = rss / dof;

  // (X^T X)^-1 = R^-1 R^-T in the pivoted basis.
  const auto pp = static_cast<Eigen::Index>(p);
  Eigen::MatrixXd r = qr.matrixR().topLeftCorner(pp, pp).triangularView<Eigen::Upper>();
  Eigen::MatrixXd rinv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(pp, pp));
  Eigen::MatrixXd cov_pivoted = rinv * rinv.transpose();
  Eigen::MatrixXd cov = qr.colsPermutation() * cov_pivoted * qr.colsPermutation().transpose();

  RegressionResult result;
  result.n_observations = n;
  result.residual_std_error = std::sqrt(sigma2);
  for (Eigen::Index k = 0; k < pp; ++k) {
    Coefficient c;
    c.name = names[static_cast<std::size_t>(k)];
    c.estimate = beta[k];
    c.std_error = std::sqrt(sigma2 * cov(k, k));
    c.t_statistic = c.std_error > 0.0 ? c.estimate / c.std_error : std::numeric_limits<double>::infinity();
    result.coefficients.push_back(c);
  }
  const double tss = intercept ? (y.array() - y.mean()).matrix().squaredNorm() : y.squaredNorm();
  result.r_squared = tss > 0.0 ? 1.0 - rss / tss : 1.0;
  result.fitted.assign(fitted.data(), fitted.data() + n);
  result.residuals.assign(resid.data(), resid.data() + n);
  return result;
}

FeatureTable regression_feature_table(const NodeFlowStats& stats, const DistanceRow& source_distance,
                                      std::size_t min_rows) {
  if (source_distance.size() != stats.size())
    throw Error(ErrorCode::MismatchedNetworks, "distance vector and stats cover different node sets");
  FeatureTable table;
  table.features = {{"ln_D", {}}, {"ln_S", {}}, {"ln_C", {}}, {"l_source", {}}};
  for (std::size_t k = 0; k < stats.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    const double d = stats.D[i], s = stats.S[i], c = stats.C[i], a = stats.A[i];
    if (!(d > 0.0) || !(s > 0.0) || !(c > 0.0) || !(a > 0.0) || !source_distance[k]) {
      ++table.dropped;
      continue;
    }
    table.items.push_back(stats.names[k]);
    table.features[0].values.push_back(std::log(d));
    table.features[1].values.push_back(std::log(s));
    table.features[2].values.push_back(std::log(c));
    table.features[3].values.push_back(*source_distance[k]);
    table.response.push_back(std::log(a));
  }
  if (table.items.size() < min_rows)
    throw Error(ErrorCode::TooFewRows, std::to_string(table.items.size()) + " rows remain after dropping " +
                                           std::to_string(table.dropped) + " nodes with zero D, S or C; need " +
                                           std::to_string(min_rows));
  return table;
}

void write_zipf_csv(std::ostream& out, const std::vector<ZipfEntry>& table) {
  out << "rank,value\n";
  for (const auto& e : table) out << e.rank << ',' << text::format_number(e.value) << '\n';
}

void write_regression_text(std::ostream& out, const RegressionResult& result) {
  out << std::left << std::setw(12) << "term" << std::right << std::setw(14) << "estimate" << std::setw(14)
      << "std.error" << std::setw(12) << "t" << '\n';
  out << std::fixed;
  for (const auto& c : result.coefficients)
    out << std::left << std::setw(12) << c.name << std::right << std::setprecision(6) << std::setw(14) << c.estimate
        << std::setw(14) << c.std_error << std::setprecision(2) << std::setw(12) << c.t_statistic << '\n';
  out << std::setprecision(4) << "R^2 = " << result.r_squared << ", n = " << result.n_observations << '\n';
  out.unsetf(std::ios::floatfield);
}

}  // namespace attnflow
