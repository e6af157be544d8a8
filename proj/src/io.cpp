#include "cvxlse/io.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cvxlse/errors.hpp"

namespace cvxlse {

using nlohmann::json;

namespace {

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("invalid JSON: ") + e.what());
  }
}

template <class T>
T get(const json& j, const char* key) {
  if (!j.contains(key)) throw InputError(std::string("JSON field missing: ") + key);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InputError(std::string("JSON field '") + key + "': " + e.what());
  }
}

json pwl_json(const PiecewiseLinearFn& f) {
  return {{"x", std::vector<double>(f.breakpoints().begin(), f.breakpoints().end())},
          {"v", std::vector<double>(f.values().begin(), f.values().end())},
          {"ext", f.extension() == Extension::ClampZeroRight ? "clamp" : "extend"}};
}

PiecewiseLinearFn pwl_of(const json& j) {
  const auto ext = get<std::string>(j, "ext");
  if (ext != "clamp" && ext != "extend") throw InputError("pwl 'ext' must be \"clamp\" or \"extend\"");
  return PiecewiseLinearFn(get<std::vector<double>>(j, "x"), get<std::vector<double>>(j, "v"),
                           ext == "clamp" ? Extension::ClampZeroRight : Extension::Extend);
}

std::optional<Interval> region_of(const json& j) {
  if (!j.contains("linear_region")) return std::nullopt;
  auto r = get<std::vector<double>>(j, "linear_region");
  if (r.size() != 2) throw InputError("linear_region must be [a, b]");
  return Interval{r[0], r[1]};
}

double parse_double(const std::string& s) {
  std::size_t pos = 0;
  double v = std::stod(s, &pos);
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  if (pos != s.size()) throw std::invalid_argument(s);
  return v;
}

}  // namespace

std::string to_json(const PiecewiseLinearFn& f) { return pwl_json(f).dump(); }

PiecewiseLinearFn pwl_from_json(const std::string& text) { return pwl_of(parse(text)); }

std::string to_json(const ConvexFit& fit) {
  const auto& d = fit.diagnostics;
  json diag = {{"min_gap", d.min_gap},
               {"knot_equality_error", d.knot_equality_error},
               {"fubini_residual", d.fubini_residual},
               {"df_match_error", d.df_match_error},
               {"scale", d.scale}};
  diag["marshall_ratio"] = d.marshall_ratio ? json(*d.marshall_ratio) : json(nullptr);
  json j = {{"mode", fit.mode == Mode::Density ? "density" : "regression"},
            {"estimate", pwl_json(fit.estimate)},
            {"knots", fit.knot_set},
            {"objective", fit.objective},
            {"iterations", fit.iterations},
            {"converged", fit.converged},
            {"diagnostics", diag}};
  if (!fit.objective_trace.empty()) j["objective_trace"] = fit.objective_trace;
  return j.dump();
}

ConvexFit fit_from_json(const std::string& text) {
  const json j = parse(text);
  ConvexFit fit;
  const auto mode = get<std::string>(j, "mode");
  if (mode != "density" && mode != "regression") throw InputError("fit 'mode' must be density or regression");
  fit.mode = mode == "density" ? Mode::Density : Mode::Regression;
  fit.estimate = pwl_of(get<json>(j, "estimate"));
  fit.knot_set = get<std::vector<double>>(j, "knots");
  fit.objective = get<double>(j, "objective");
  fit.iterations = get<std::size_t>(j, "iterations");
  fit.converged = get<bool>(j, "converged");
  const json d = get<json>(j, "diagnostics");
  auto& r = fit.diagnostics;
  r.min_gap = get<double>(d, "min_gap");
  r.knot_equality_error = get<double>(d, "knot_equality_error");
  r.fubini_residual = get<double>(d, "fubini_residual");
  r.df_match_error = get<double>(d, "df_match_error");
  r.scale = get<double>(d, "scale");
  if (d.contains("marshall_ratio") && !d["marshall_ratio"].is_null()) r.marshall_ratio = get<double>(d, "marshall_ratio");
  if (j.contains("objective_trace")) fit.objective_trace = get<std::vector<double>>(j, "objective_trace");
  return fit;
}

std::string to_json(const QuantileTable& t) {
  const auto& o = t.options;
  json opts = {{"k_schedule", o.k_schedule},
               {"margin", o.margin},
               {"stop_tol", o.stop_tol},
               {"qp_tol", o.qp_tol}};
  json j = {{"alphas", t.alphas},       {"quantiles", t.quantiles}, {"stderr", t.standard_errors},
            {"n_sims", t.n_sims},       {"m", t.m},                 {"seed", t.seed},
            {"min_T", t.min_T},         {"non_converged", t.non_converged},
            {"options", opts}};
  return j.dump(2);
}

QuantileTable table_from_json(const std::string& text) {
  const json j = parse(text);
  QuantileTable t;
  t.alphas = get<std::vector<double>>(j, "alphas");
  t.quantiles = get<std::vector<double>>(j, "quantiles");
  t.standard_errors = get<std::vector<double>>(j, "stderr");
  t.n_sims = get<std::size_t>(j, "n_sims");
  t.m = get<std::size_t>(j, "m");
  t.seed = get<std::uint64_t>(j, "seed");
  if (j.contains("min_T")) t.min_T = get<double>(j, "min_T");
  if (j.contains("non_converged")) t.non_converged = get<std::size_t>(j, "non_converged");
  if (j.contains("options")) {
    const json o = j["options"];
    if (o.contains("k_schedule")) t.options.k_schedule = get<std::vector<double>>(o, "k_schedule");
    if (o.contains("margin")) t.options.margin = get<double>(o, "margin");
    if (o.contains("stop_tol")) t.options.stop_tol = get<double>(o, "stop_tol");
    if (o.contains("qp_tol")) t.options.qp_tol = get<double>(o, "qp_tol");
  }
  if (t.alphas.empty() || t.alphas.size() != t.quantiles.size() || t.alphas.size() != t.standard_errors.size())
    throw InputError("quantile table: alphas, quantiles and stderr must have equal nonzero length");
  for (std::size_t i = 0; i < t.alphas.size(); ++i) {
    if (!(t.alphas[i] > 0.0 && t.alphas[i] < 1.0) || (i > 0 && !(t.alphas[i] > t.alphas[i - 1])))
      throw InputError("quantile table: alphas must be increasing in (0, 1)");
    if (!(t.quantiles[i] > 0.0) || (i > 0 && !(t.quantiles[i] < t.quantiles[i - 1])))
      throw InputError("quantile table: quantiles must be positive and strictly decreasing in alpha");
  }
  return t;
}

TruthSpec truth_from_json(const std::string& text) {
  const json j = parse(text);
  const auto kind = get<std::string>(j, "kind");
  if (kind == "triangular") return TruthSpec::triangular();
  if (kind == "uniform")
    return TruthSpec::pwl_density(PiecewiseLinearFn({0.0, 1.0}, {1.0, 1.0}, Extension::ClampZeroRight));
  if (kind == "pwl_density") return TruthSpec::pwl_density(pwl_of(get<json>(j, "f")), region_of(j));
  if (kind == "regression_pwl") return TruthSpec::regression_pwl(pwl_of(get<json>(j, "r")), region_of(j));
  if (kind == "regression_quadratic") {
    auto c = get<std::vector<double>>(j, "c");
    if (c.size() != 3) throw InputError("regression_quadratic needs c = [c0, c1, c2]");
    return TruthSpec::regression_quadratic(c[0], c[1], c[2]);
  }
  if (kind == "boundary") {
    const auto s = get<std::string>(j, "shape");
    BoundaryShape shape;
    if (s == "A") shape = BoundaryShape::A;
    else if (s == "B") shape = BoundaryShape::B;
    else if (s == "C") shape = BoundaryShape::C;
    else throw InputError("boundary shape must be A, B or C");
    auto p = BoundaryParams::defaults(shape);
    if (j.contains("x0")) p.x0 = get<double>(j, "x0");
    if (j.contains("level")) p.level = get<double>(j, "level");
    if (j.contains("K1")) p.K1 = get<double>(j, "K1");
    if (j.contains("K2")) p.K2 = get<double>(j, "K2");
    if (j.contains("alpha")) p.alpha = get<double>(j, "alpha");
    return TruthSpec::boundary_case(p);
  }
  throw InputError("unknown truth kind: " + kind);
}

EmpiricalMeasure read_sample_csv(std::istream& is, Mode mode) {
  std::vector<double> a, b;
  std::size_t cols = 0;
  std::string line;
  bool first_data = true;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    std::vector<double> vals;
    try {
      for (const auto& x : fields) vals.push_back(parse_double(x));
    } catch (const std::exception&) {
      if (first_data) {  // header
        first_data = false;
        continue;
      }
      throw InputError("non-numeric CSV field on line " + std::to_string(lineno));
    }
    first_data = false;
    if (cols == 0) cols = vals.size();
    if (vals.size() != cols || cols == 0 || cols > 2) throw InputError("inconsistent CSV columns on line " + std::to_string(lineno));
    a.push_back(vals[0]);
    if (cols == 2) b.push_back(vals[1]);
  }
  if (a.empty()) throw InputError("CSV contains no data");
  if (mode == Mode::Density) {
    if (cols != 1) throw InputError("density CSV must have a single column");
    return EmpiricalMeasure::density(std::move(a));
  }
  if (cols == 1) return EmpiricalMeasure::regression_fixed_design(std::move(a));
  return EmpiricalMeasure::regression(std::move(a), std::move(b));
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << text;
  if (!out) throw InputError("write failed: " + path);
}

}  // namespace cvxlse
