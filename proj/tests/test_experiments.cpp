#include <doctest.h>

#include <sstream>

#include "cvxlse/errors.hpp"
#include "cvxlse/experiments.hpp"

using namespace cvxlse;

namespace {

struct Outputs {
  std::string summary, slopes, checks, records, json;
};

Outputs render(const ExperimentResult& r) {
  Outputs o;
  std::ostringstream a, b, c, d;
  write_summary_csv(a, r);
  write_slopes_csv(b, r);
  write_checks_csv(c, r);
  write_records_csv(d, r);
  o.summary = a.str();
  o.slopes = b.str();
  o.checks = c.str();
  o.records = d.str();
  o.json = to_json(r);
  return o;
}

void check_identical(const Outputs& x, const Outputs& y) {
  CHECK(x.summary == y.summary);
  CHECK(x.slopes == y.slopes);
  CHECK(x.checks == y.checks);
  CHECK(x.records == y.records);
  CHECK(x.json == y.json);
}

ExperimentConfig small(ExperimentId id) {
  auto c = ExperimentConfig::defaults(id);
  c.replicates = 12;
  c.law_n = 0;
  c.noiseless_n = 0;
  c.power_replicates = 12;
  c.seed = 4242;
  switch (id) {
    case ExperimentId::TestCalibration: c.n_grid = {300}; break;
    case ExperimentId::BoundaryAdaptation: c.n_grid = {200, 400}; break;
    default: c.n_grid = {200, 400};
  }
  return c;
}

}  // namespace

TEST_CASE("experiments are deterministic across thread counts") {
  for (auto id : {ExperimentId::InteriorRate, ExperimentId::BoundaryAdaptation, ExperimentId::ZeroBehavior,
                  ExperimentId::TestCalibration, ExperimentId::RegressionSuite}) {
    CAPTURE(experiment_name(id));
    auto c = small(id);
    c.threads = 1;
    const auto one = render(run_experiment(c));
    c.threads = 3;
    const auto three = render(run_experiment(c));
    check_identical(one, three);
    CHECK(one.records.size() > 100);
    c.seed += 1;
    CHECK(render(run_experiment(c)).records != one.records);
  }
}

TEST_CASE("results carry their checks and fit counts") {
  const auto r = run_experiment(small(ExperimentId::ZeroBehavior));
  CHECK(r.fits == 24);
  CHECK(r.fit_failures == 0);
  CHECK_FALSE(r.checks.empty());
  CHECK(&r.check(r.checks.front().name) == &r.checks.front());
  CHECK_THROWS_AS(r.check("no such check"), InputError);
}

TEST_CASE("calibration check names use short numbers") {
  const auto r = run_experiment(small(ExperimentId::TestCalibration));
  CHECK_NOTHROW(r.check("size(alpha=0.05,n=300)"));
}

TEST_CASE("config JSON round trip") {
  for (auto id : {ExperimentId::InteriorRate, ExperimentId::BoundaryAdaptation, ExperimentId::ZeroBehavior,
                  ExperimentId::TestCalibration, ExperimentId::RegressionSuite}) {
    const auto c = ExperimentConfig::defaults(id);
    const std::string text = to_json(c);
    const auto back = config_from_json(text);
    CHECK(back.id == id);
    CHECK(back.n_grid == c.n_grid);
    CHECK(back.points == c.points);
    CHECK(to_json(back) == text);
    CHECK(experiment_from_name(experiment_name(id)) == id);
  }
}

TEST_CASE("config overrides and validation") {
  const auto c = config_from_json(R"({"schema_version": 1, "experiment": "zero_behavior", "replicates": 30})");
  CHECK(c.replicates == 30);
  CHECK(c.n_grid == ExperimentConfig::defaults(ExperimentId::ZeroBehavior).n_grid);

  CHECK_THROWS_AS(config_from_json(R"({"schema_version": 2, "experiment": "zero_behavior"})"), InputError);
  CHECK_THROWS_AS(config_from_json(R"({"experiment": "zero_behavior"})"), InputError);
  CHECK_THROWS_AS(config_from_json(R"({"schema_version": 1, "experiment": "nope"})"), InputError);
  CHECK_THROWS_AS(config_from_json(R"({"schema_version": 1, "experiment": "zero_behavior", "replicate": 30})"),
                  InputError);
  CHECK_THROWS_AS(config_from_json(R"({"schema_version": 1, "experiment": "zero_behavior", "replicates": 5})"),
                  InputError);
  CHECK_THROWS_AS(config_from_json(R"({"schema_version": 1, "experiment": "zero_behavior", "n_grid": [400, 200]})"),
                  InputError);
  CHECK_THROWS_AS(config_from_json(R"({"schema_version": 1, "experiment": "interior_rate", "points": [0.02]})"),
                  InputError);
  CHECK_THROWS_AS(
      config_from_json(R"({"schema_version": 1, "experiment": "regression_suite", "truth": {"kind": "uniform"}})"),
      InputError);
  CHECK_THROWS_AS(config_from_json(
                      R"({"schema_version": 1, "experiment": "boundary_adaptation", "truth": {"kind": "triangular"}})"),
                  InputError);
  CHECK_THROWS_AS(config_from_json("{"), InputError);
}

TEST_CASE("Kolmogorov-Smirnov distance") {
  CHECK(ks_distance({1, 2, 3}, {3, 2, 1}) == 0.0);
  CHECK(ks_distance({1, 2}, {5, 6, 7}) == 1.0);
  CHECK(ks_distance({1, 2, 3}, {2.5}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(ks_distance({1, 2, 3, 4}, {2, 4}) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("type-7 sample quantiles") {
  CHECK(sample_quantile({4, 1, 3, 2}, 0.5) == 2.5);
  CHECK(sample_quantile({4, 1, 3, 2}, 0.25) == 1.75);
  CHECK(sample_quantile({4, 1, 3, 2}, 0.0) == 1.0);
  CHECK(sample_quantile({4, 1, 3, 2}, 1.0) == 4.0);
  CHECK(sample_quantile({7}, 0.3) == 7.0);
}
