#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnflow/distance.hpp"
#include "attnflow/flowcalc.hpp"
#include "attnflow/ingest.hpp"

namespace attnflow {

/// y ~ exp(intercept) * x^exponent, fitted by OLS on natural logs.
struct PowerLawFit {
  double exponent = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double stderr_exponent = 0.0;
  std::size_t n_points = 0;
  std::size_t dropped_nonpositive = 0;
};

PowerLawFit fit_power_law(std::span<const double> x, std::span<const double> y);

/// Population Gini coefficient (mean absolute difference over twice the mean).
double gini(std::span<const double> values);

struct ZipfEntry {
  std::size_t rank = 0;
  double value = 0.0;
  std::size_t id = 0;  // position in the input
};

/// Descending by value, ties kept in input order.
std::vector<ZipfEntry> zipf_table(std::span<const double> values);

struct ConcentrationReport {
  double gini = 0.0;
  std::vector<ZipfEntry> zipf;
};

ConcentrationReport concentration(std::span<const double> values);

struct OverlapEdge {
  std::uint32_t a = 0;  // item indices into SessionLog::items
  std::uint32_t b = 0;
  std::uint32_t observed = 0;
  double expected = 0.0;
  bool retained = false;
};

struct DuplicationResult {
  std::vector<std::string> items;
  std::vector<std::uint32_t> audience;  // distinct users per item
  std::size_t total_users = 0;
  std::vector<OverlapEdge> edges;       // every pair with a shared user
  std::vector<std::size_t> degree_before;
  std::vector<std::size_t> degree_after;

  std::size_t retained_count() const;
};

/// Audience-overlap network; edges whose observed overlap falls below the
/// independence expectation users_a * users_b / total_users are filtered.
DuplicationResult duplication_filter(const SessionLog& log);

struct NamedColumn {
  std::string name;
  std::vector<double> values;
};

struct Coefficient {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;
  double t_statistic = 0.0;
};

struct RegressionResult {
  std::vector<Coefficient> coefficients;
  double r_squared = 0.0;
  std::size_t n_observations = 0;
  double residual_std_error = 0.0;
  std::vector<double> fitted;
  std::vector<double> residuals;

  const Coefficient& coefficient(const std::string& name) const;
};

/// Least squares with classical standard errors. R^2 is centred with an
/// intercept and uncentred without one.
RegressionResult ols_regress(std::span<const double> response, const std::vector<NamedColumn>& features,
                             bool intercept = true);

struct FeatureTable {
  std::vector<std::string> items;
  std::vector<NamedColumn> features;  // ln_D, ln_S, ln_C, l_source
  std::vector<double> response;       // ln_A
  std::size_t dropped = 0;
};

inline constexpr std::size_t kMinRegressionRows = 6;

/// Rows with any zero among D, S, C (or no source distance) are dropped.
FeatureTable regression_feature_table(const NodeFlowStats& stats, const DistanceRow& source_distance,
                                      std::size_t min_rows = kMinRegressionRows);

void write_zipf_csv(std::ostream& out, const std::vector<ZipfEntry>& table);
void write_regression_text(std::ostream& out, const RegressionResult& result);

}  // namespace attnflow
