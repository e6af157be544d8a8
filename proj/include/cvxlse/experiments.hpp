#pragma once

// Seeded simulation studies of the estimators and the linearity test. Every
// run is a pure function of its configuration: replicates use seeds derived
// from (seed, n, replicate) and are aggregated in index order.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cvxlse/estimator.hpp"
#include "cvxlse/invelope.hpp"
#include "cvxlse/truth.hpp"

namespace cvxlse {

inline constexpr int kConfigSchemaVersion = 1;

enum class ExperimentId { InteriorRate, BoundaryAdaptation, ZeroBehavior, TestCalibration, RegressionSuite };

std::string experiment_name(ExperimentId id);
/// Accepts the names returned by experiment_name; InputError otherwise.
ExperimentId experiment_from_name(const std::string& name);

struct ExperimentConfig {
  ExperimentId id = ExperimentId::InteriorRate;
  std::string truth_json;                 ///< truth description (see truth_from_json)
  std::vector<std::size_t> n_grid;        ///< increasing
  std::size_t replicates = 200;           ///< >= 10
  std::vector<double> points;             ///< evaluation points
  std::vector<double> alphas;             ///< test levels
  double delta = 0.05;                    ///< margin inside the linear region
  double sigma = 0.5;                     ///< regression noise level
  std::uint64_t seed = 1;
  unsigned threads = 0;                   ///< 0 means all hardware threads
  bool keep_records = true;

  // Limit-law comparison (interior_rate, regression_suite): replicates of the
  // fit at law_n against invelope draws on an m-grid. law_n = 0 skips it.
  std::size_t law_n = 0;
  std::size_t law_replicates = 500;
  std::size_t invelope_sims = 500;
  std::size_t m = 800;

  // test_calibration
  std::string alternative_json;           ///< truth for the power run
  std::size_t power_replicates = 200;
  std::optional<QuantileTable> table;     ///< default: the shipped table

  // regression_suite: extra noiseless run at this n (0 skips it)
  std::size_t noiseless_n = 0;

  // Acceptance windows (engineering choices, not properties of the estimator).
  double ratio_max = 2.0;
  double ratio_min = 0.5;
  double slope_lo = -0.45, slope_hi = -0.22;
  double ks_max = 0.15;
  double size_lo = 0.02, size_hi = 0.09;       ///< at the first alpha
  double size2_lo = 0.15, size2_hi = 0.26;     ///< at the second alpha, if any
  double power_min = 0.95;
  double noiseless_max = 1e-3;
  double max_failure_rate = 0.01;

  /// Desk-scale defaults for each experiment.
  static ExperimentConfig defaults(ExperimentId id);
  /// Validates and throws InputError on violations.
  void validate() const;
};

/// Versioned JSON: {"schema_version": 1, "experiment": name, ...}; fields
/// absent from the file keep the experiment defaults.
ExperimentConfig config_from_json(const std::string& text);
std::string to_json(const ExperimentConfig& config);

struct ReplicateRecord {
  std::string label;  ///< quantity, e.g. "value_error"
  std::size_t n = 0;
  std::size_t replicate = 0;
  double x = 0.0;
  double value = 0.0;
  bool converged = true;
  CharacterizationReport diagnostics;
};

struct SummaryRow {
  std::string label;
  std::size_t n = 0;
  double x = 0.0;
  std::size_t count = 0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

/// OLS slope of log(median) on log(n); the standard error and 95% interval
/// come from 200 bootstrap resamples of the replicates within each n.
struct SlopeFit {
  std::string label;
  double x = 0.0;
  double slope = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

struct CheckResult {
  std::string name;
  double value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool pass = false;
};

struct ExperimentResult {
  ExperimentId id = ExperimentId::InteriorRate;
  std::uint64_t seed = 0;
  std::vector<SummaryRow> summary;
  std::vector<SlopeFit> slopes;
  std::vector<CheckResult> checks;
  std::vector<ReplicateRecord> records;
  std::size_t fits = 0;
  std::size_t fit_failures = 0;  ///< fits missing the characterization tolerances

  bool all_pass() const;
  const CheckResult& check(const std::string& name) const;  ///< InputError if absent
};

/// Raised when more than max_failure_rate of the fits miss the
/// characterization tolerances.
class ExperimentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ExperimentResult run_interior_rate(const ExperimentConfig& config);
ExperimentResult run_boundary_adaptation(const ExperimentConfig& config);
ExperimentResult run_zero_behavior(const ExperimentConfig& config);
ExperimentResult run_test_calibration(const ExperimentConfig& config);
ExperimentResult run_regression_suite(const ExperimentConfig& config);
ExperimentResult run_experiment(const ExperimentConfig& config);

/// CSV schemas:
///   summary: experiment,label,n,x,count,median,q25,q75
///   slopes:  experiment,label,x,slope,se,ci_lo,ci_hi
///   checks:  experiment,check,value,lo,hi,pass
///   records: experiment,label,n,replicate,x,value,converged,min_gap,knot_equality_error,
///            fubini_residual,df_match_error,marshall_ratio
void write_summary_csv(std::ostream& os, const ExperimentResult& r);
void write_slopes_csv(std::ostream& os, const ExperimentResult& r);
void write_checks_csv(std::ostream& os, const ExperimentResult& r);
void write_records_csv(std::ostream& os, const ExperimentResult& r);
std::string to_json(const ExperimentResult& r);

/// Writes <dir>/<name>_{summary,slopes,checks,records}.csv and <name>.json.
void write_experiment_outputs(const std::string& dir, const ExperimentResult& r);

/// Two-sample Kolmogorov-Smirnov distance.
double ks_distance(std::vector<double> a, std::vector<double> b);

/// Median and quartiles by type-7 interpolation.
double sample_quantile(std::vector<double> v, double p);

}  // namespace cvxlse
