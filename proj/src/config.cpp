#include "qldp/config.hpp"

#include "qldp/corrector.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace qldp {

using nlohmann::json;

std::string to_string(ExperimentType type) {
  switch (type) {
    case ExperimentType::Homogenize: return "homogenize";
    case ExperimentType::Rate: return "rate";
    case ExperimentType::Estimate: return "estimate";
    case ExperimentType::Ergodic: return "ergodic";
    case ExperimentType::Occupation: return "occupation";
    case ExperimentType::FullPipeline: return "full-pipeline";
  }
  return "unknown";
}

ExperimentType experiment_from_string(const std::string& name) {
  for (auto t : {ExperimentType::Homogenize, ExperimentType::Rate, ExperimentType::Estimate, ExperimentType::Ergodic,
                 ExperimentType::Occupation, ExperimentType::FullPipeline})
    if (to_string(t) == name) return t;
  throw ConfigError("unknown experiment '" + name + "'");
}

namespace {

/// Cursor into the document that remembers its path for error messages.
class Node {
 public:
  Node(const json& value, std::string path) : value_(value), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  const json& value() const { return value_; }

  Node object_node() const {
    if (!value_.is_object()) fail("expected an object");
    return *this;
  }

  void allow_only(std::initializer_list<const char*> keys) const {
    if (!value_.is_object()) fail("expected an object");
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (auto it = value_.begin(); it != value_.end(); ++it)
      if (!allowed.count(it.key())) throw ConfigError("unknown key '" + join(it.key()) + "'");
  }

  bool has(const char* key) const { return value_.is_object() && value_.contains(key); }

  Node need(const char* key) const {
    if (!has(key)) throw ConfigError("missing required key '" + join(key) + "'");
    return Node(value_.at(key), join(key));
  }

  std::optional<Node> maybe(const char* key) const {
    if (!has(key)) return std::nullopt;
    return Node(value_.at(key), join(key));
  }

  Node operator[](std::size_t i) const { return Node(value_.at(i), path_ + "[" + std::to_string(i) + "]"); }
  std::size_t size() const {
    if (!value_.is_array()) fail("expected an array");
    return value_.size();
  }

  double number() const {
    if (!value_.is_number()) fail("expected a number");
    const double v = value_.get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
  }
  double positive() const {
    const double v = number();
    if (!(v > 0.0)) fail("expected a positive number");
    return v;
  }
  long long integer() const {
    if (!value_.is_number_integer()) fail("expected an integer");
    return value_.get<long long>();
  }
  int count(int min_value) const {
    const auto v = integer();
    if (v < min_value || v > 1'000'000'000) fail("expected an integer >= " + std::to_string(min_value));
    return static_cast<int>(v);
  }
  std::uint64_t seed() const {
    if (!value_.is_number_unsigned() && !(value_.is_number_integer() && value_.get<long long>() >= 0))
      fail("expected a non-negative integer");
    return value_.get<std::uint64_t>();
  }
  bool boolean() const {
    if (!value_.is_boolean()) fail("expected true or false");
    return value_.get<bool>();
  }
  std::string text() const {
    if (!value_.is_string()) fail("expected a string");
    return value_.get<std::string>();
  }
  std::vector<double> numbers() const {
    std::vector<double> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back((*this)[i].number());
    return out;
  }
  Vec vector(int expected) const {
    const auto v = numbers();
    if (static_cast<int>(v.size()) != expected) fail("expected " + std::to_string(expected) + " entries");
    return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(path_ + ": " + what); }

 private:
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& value_;
  std::string path_;
};

/// A term is either a bare number (constant) or
/// {"amp", "k", "phase", "kind": "cos" | "sin", "x"}.
FourierTerm parse_term(const Node& node, int fast_dim, int slow_dim, bool x_allowed) {
  if (node.value().is_number()) return FourierTerm{node.number(), {}, {}, 0.0};
  node.allow_only({"amp", "k", "phase", "kind", "x"});
  FourierTerm term;
  term.amp = node.need("amp").number();
  if (auto k = node.maybe("k")) {
    if (static_cast<int>(k->size()) != fast_dim) k->fail("wavevector needs " + std::to_string(fast_dim) + " entries");
    for (std::size_t i = 0; i < k->size(); ++i) term.wavevector.push_back(static_cast<int>((*k)[i].integer()));
  }
  if (auto p = node.maybe("phase")) term.phase = p->number();
  if (auto kind = node.maybe("kind")) {
    const auto s = kind->text();
    if (s == "sin") term.phase -= 0.25 * kTwoPi;
    else if (s != "cos") kind->fail("expected \"cos\" or \"sin\"");
  }
  if (auto x = node.maybe("x")) {
    if (!x_allowed) x->fail("this field cannot depend on x");
    auto slope = x->numbers();
    if (static_cast<int>(slope.size()) != slow_dim) x->fail("x slope needs " + std::to_string(slow_dim) + " entries");
    term.x_slope = std::move(slope);
  }
  return term;
}

/// An entry is a term or a list of terms.
std::vector<FourierTerm> parse_entry(const Node& node, int fast_dim, int slow_dim, bool x_allowed) {
  std::vector<FourierTerm> out;
  if (node.value().is_array()) {
    for (std::size_t i = 0; i < node.size(); ++i) out.push_back(parse_term(node[i], fast_dim, slow_dim, x_allowed));
  } else {
    out.push_back(parse_term(node, fast_dim, slow_dim, x_allowed));
  }
  return out;
}

/// Vector fields: list of `rows` entries. Matrix fields: list of rows, each a
/// list of `cols` entries.
FieldSpec parse_field(const Node& node, int rows, int cols, bool matrix, int fast_dim, int slow_dim, bool x_allowed) {
  FieldSpec field = FieldSpec::zeros(rows, cols);
  if (static_cast<int>(node.size()) != rows) node.fail("expected " + std::to_string(rows) + " rows");
  for (int r = 0; r < rows; ++r) {
    const Node row = node[static_cast<std::size_t>(r)];
    if (!matrix) {
      field.at(r, 0) = parse_entry(row, fast_dim, slow_dim, x_allowed);
      continue;
    }
    if (static_cast<int>(row.size()) != cols) row.fail("expected " + std::to_string(cols) + " columns");
    for (int c = 0; c < cols; ++c)
      field.at(r, c) = parse_entry(row[static_cast<std::size_t>(c)], fast_dim, slow_dim, x_allowed);
  }
  return field;
}

EventSpec parse_event(const Node& node, int slow_dim) {
  const auto type = node.need("type").text();
  if (type == "half_space") {
    node.allow_only({"type", "normal", "level"});
    return EventSpec::half_space(node.need("normal").vector(slow_dim), node.need("level").number());
  }
  if (type == "fixed_endpoint") {
    node.allow_only({"type", "point"});
    return EventSpec::fixed_endpoint(node.need("point").vector(slow_dim));
  }
  if (type == "whole_space") {
    node.allow_only({"type"});
    return EventSpec::whole_space();
  }
  node.need("type").fail("expected half_space, fixed_endpoint or whole_space");
}

void parse_environment(const Node& env, ExperimentConfig& cfg) {
  env.allow_only({"family", "seed", "potential", "lambda_min"});
  cfg.medium.family = Family::RandomShiftPeriodic;
  const auto family = env.need("family");
  try {
    cfg.medium.family = family_from_string(family.text());
  } catch (const ConfigError&) {
    family.fail("expected random_shift_periodic, random_phase_fourier or gradient");
  }
  if (auto s = env.maybe("seed")) cfg.medium_seed = s->seed();
  if (auto l = env.maybe("lambda_min")) cfg.lambda_min = l->number();
  const auto pot = env.maybe("potential");
  if (cfg.medium.family == Family::GradientType) {
    if (!pot) env.need("potential");
  } else if (pot) {
    pot->fail("a potential is only used by the gradient family");
  }
  if (pot) {
    pot->allow_only({"D", "modes"});
    cfg.medium.potential.D_const = pot->need("D").positive();
    const auto modes = pot->need("modes");
    if (modes.size() == 0) modes.fail("expected at least one mode");
    for (std::size_t i = 0; i < modes.size(); ++i)
      cfg.medium.potential.modes.push_back(parse_term(modes[i], cfg.medium.coefficients.fast_dim, 0, false));
  }
}

void parse_coefficients(const Node& node, ExperimentConfig& cfg, bool gradient) {
  node.allow_only({"slow_dim", "fast_dim", "k1", "k2", "b", "c", "sigma", "f", "g", "tau1", "tau2"});
  const int m = node.need("slow_dim").count(1);
  const int n = node.need("fast_dim").count(1);
  if (n > 2) node.need("fast_dim").fail("fast_dim must be 1 or 2");
  const int k1 = node.need("k1").count(1);
  const int k2 = node.need("k2").count(1);
  auto& spec = cfg.medium.coefficients;
  spec = CoefficientSpec::zeros(m, n, k1, k2);
  auto field = [&](const char* key, FieldSpec& out, int rows, int cols, bool matrix, bool x_allowed) {
    if (auto f = node.maybe(key)) {
      if (gradient && (std::string(key) == "f" || std::string(key) == "tau1" || std::string(key) == "tau2"))
        f->fail("determined by the potential in the gradient family");
      out = parse_field(*f, rows, cols, matrix, n, m, x_allowed);
    }
  };
  field("b", spec.b, m, 1, false, false);
  field("c", spec.c, m, 1, false, true);
  field("sigma", spec.sigma, m, k1, true, true);
  field("f", spec.f, n, 1, false, false);
  field("g", spec.g, n, 1, false, true);
  field("tau1", spec.tau1, n, k1, true, false);
  field("tau2", spec.tau2, n, k2, true, false);
}

void parse_scales(const Node& node, ExperimentConfig& cfg) {
  node.allow_only({"eps", "delta_exponent", "step_factor", "T", "x0", "y0"});
  const auto eps = node.need("eps");
  if (eps.value().is_number()) {
    cfg.eps = {eps.number()};
    if (!(cfg.eps[0] > 0.0 && cfg.eps[0] < 1.0)) eps.fail("epsilon must lie in (0, 1)");
  } else {
    cfg.eps = eps.numbers();
    if (cfg.eps.empty()) eps.fail("expected at least one value");
    for (std::size_t i = 0; i < cfg.eps.size(); ++i)
      if (!(cfg.eps[i] > 0.0 && cfg.eps[i] < 1.0)) eps[i].fail("epsilon must lie in (0, 1)");
  }
  if (auto a = node.maybe("delta_exponent")) cfg.delta_exponent = a->number();
  if (auto c = node.maybe("step_factor")) cfg.step_factor = c->positive();
  if (auto t = node.maybe("T")) cfg.T = t->positive();
  const int m = cfg.medium.coefficients.slow_dim;
  const int n = cfg.medium.coefficients.fast_dim;
  cfg.x0 = node.has("x0") ? node.need("x0").vector(m) : Vec::Zero(m);
  cfg.y0 = node.has("y0") ? node.need("y0").vector(n) : Vec::Zero(n);
}

void parse_corrector(const Node& node, ExperimentConfig& cfg) {
  node.allow_only({"method", "n_grid", "rho_schedule", "extrapolate", "rho", "model_tolerance", "tolerance", "mc_rho",
                   "mc_paths", "mc_points", "mc_dt"});
  auto& c = cfg.corrector;
  if (auto m = node.maybe("method")) {
    const auto s = m->text();
    if (s == "grid") c.method = CorrectorMethod::Grid;
    else if (s == "mc") c.method = CorrectorMethod::MonteCarlo;
    else m->fail("expected \"grid\" or \"mc\"");
  }
  if (auto g = node.maybe("n_grid")) c.n_grid = g->count(4);
  if (auto r = node.maybe("rho_schedule")) {
    c.rho_schedule = r->numbers();
    for (std::size_t i = 0; i < c.rho_schedule.size(); ++i)
      if (!(c.rho_schedule[i] > 0.0)) (*r)[i].fail("expected a positive number");
  }
  if (auto e = node.maybe("extrapolate")) c.extrapolate = e->boolean();
  if (auto r = node.maybe("rho")) c.fixed_rho = r->positive();
  if (auto t = node.maybe("model_tolerance")) c.model_tolerance = t->positive();
  if (auto t = node.maybe("tolerance")) c.tolerance = t->positive();
  if (auto r = node.maybe("mc_rho")) c.mc_rho = r->positive();
  if (auto p = node.maybe("mc_paths")) c.mc_paths = static_cast<std::size_t>(p->count(2));
  if (auto p = node.maybe("mc_points")) c.mc_points = static_cast<std::size_t>(p->count(1));
  if (auto d = node.maybe("mc_dt")) c.mc_dt = d->positive();
}

void parse_ergodic(const Node& node, ExperimentConfig& cfg) {
  node.allow_only({"mode", "beta", "shifts", "media", "observable", "drift_check"});
  auto& e = cfg.ergodic;
  if (auto m = node.maybe("mode")) {
    const auto s = m->text();
    if (s == "uncontrolled") e.mode = ErgodicMode::Uncontrolled;
    else if (s == "perturbed") e.mode = ErgodicMode::Perturbed;
    else m->fail("expected \"uncontrolled\" or \"perturbed\"");
  }
  if (auto b = node.maybe("beta")) {
    e.beta = b->number();
    if (!(e.beta > 0.0 && e.beta < 1.0)) b->fail("expected a value in (0, 1)");
  }
  if (auto s = node.maybe("shifts")) e.shifts = s->count(1);
  if (auto m = node.maybe("media")) e.media = m->count(1);
  if (auto o = node.maybe("observable"))
    e.observable = parse_entry(*o, cfg.medium.coefficients.fast_dim, 0, false);
  if (auto d = node.maybe("drift_check")) e.drift_check = d->boolean();
}

void parse_occupation(const Node& node, ExperimentConfig& cfg) {
  node.allow_only({"runs", "u_bins", "u_max", "y_bins", "t_bins"});
  auto& o = cfg.occupation;
  if (auto r = node.maybe("runs")) o.runs = static_cast<std::size_t>(r->count(1));
  if (auto b = node.maybe("u_bins")) o.bins.u_bins = b->count(1);
  if (auto u = node.maybe("u_max")) o.bins.u_max = u->positive();
  if (auto b = node.maybe("y_bins")) o.bins.y_bins = b->count(1);
  if (auto b = node.maybe("t_bins")) o.bins.t_bins = b->count(1);
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  const Node root(doc, "");
  root.allow_only({"experiment", "output", "seed", "replicas", "environment", "coefficients", "scales", "corrector",
                   "effective", "rate", "estimate", "ergodic", "occupation"});
  ExperimentConfig cfg;
  cfg.source = doc;
  {
    const auto e = root.need("experiment");
    try {
      cfg.experiment = experiment_from_string(e.text());
    } catch (const ConfigError&) {
      e.fail("expected homogenize, rate, estimate, ergodic, occupation or full-pipeline");
    }
  }
  if (auto o = root.maybe("output")) cfg.output_dir = o->text();
  if (auto s = root.maybe("seed")) cfg.seed = s->seed();
  if (auto r = root.maybe("replicas")) cfg.replicas = static_cast<std::size_t>(r->count(1));

  const auto env = root.need("environment");
  env.object_node();
  const bool gradient = env.has("family") && env.value().at("family") == "gradient";
  parse_coefficients(root.need("coefficients"), cfg, gradient);
  parse_environment(env, cfg);
  parse_scales(root.need("scales"), cfg);

  const int m = cfg.medium.coefficients.slow_dim;
  if (auto c = root.maybe("corrector")) parse_corrector(*c, cfg);
  cfg.x_grid.lower = cfg.x0;
  cfg.x_grid.upper = cfg.x0;
  cfg.x_grid.points = 1;
  if (auto eff = root.maybe("effective")) {
    eff->allow_only({"x_min", "x_max", "points"});
    cfg.x_grid.lower = eff->need("x_min").vector(m);
    cfg.x_grid.upper = eff->need("x_max").vector(m);
    cfg.x_grid.points = eff->need("points").count(1);
  }
  cfg.event = EventSpec::whole_space();
  if (auto r = root.maybe("rate")) {
    r->allow_only({"event", "n_seg"});
    cfg.event = parse_event(r->need("event"), m);
    if (auto s = r->maybe("n_seg")) cfg.n_seg = s->count(2);
  }
  if (auto e = root.maybe("estimate")) {
    e->allow_only({"mode", "cost_cap"});
    if (auto mode = e->maybe("mode")) {
      const auto s = mode->text();
      if (s == "plain") cfg.mode = SamplingMode::Plain;
      else if (s == "is") cfg.mode = SamplingMode::ImportanceSampling;
      else mode->fail("expected \"plain\" or \"is\"");
    }
    if (auto cap = e->maybe("cost_cap")) cfg.control_cost_cap = cap->positive();
  }
  if (auto e = root.maybe("ergodic")) parse_ergodic(*e, cfg);
  if (cfg.ergodic.observable.empty()) {
    FourierTerm t;
    t.amp = 1.0;
    t.wavevector.assign(static_cast<std::size_t>(cfg.medium.coefficients.fast_dim), 0);
    t.wavevector[0] = 1;
    cfg.ergodic.observable.push_back(t);
  }
  if (auto o = root.maybe("occupation")) parse_occupation(*o, cfg);

  const bool needs_event = cfg.experiment == ExperimentType::Rate || cfg.experiment == ExperimentType::Estimate ||
                           cfg.experiment == ExperimentType::FullPipeline;
  if (needs_event && !root.has("rate")) root.need("rate");
  return cfg;
}

json load_config_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
  if (doc.is_object() && doc.contains("manifest_version") && doc.contains("config")) return doc.at("config");
  return doc;
}

json ValidationReport::to_json() const { return json{{"errors", errors}, {"warnings", warnings}}; }

namespace {

std::string short_number(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

ValidationReport validate_config(const json& doc) {
  ValidationReport report;
  ExperimentConfig cfg;
  try {
    cfg = parse_config(doc);
  } catch (const std::exception& e) {
    report.errors.emplace_back(e.what());
    return report;
  }
  if (!(cfg.delta_exponent > 1.0))
    report.warnings.push_back("scales.delta_exponent = " + short_number(cfg.delta_exponent) +
                              ": regime ε/δ → ∞ violated");
  try {
    CoefficientSet coeffs(sample_medium(cfg.medium, cfg.medium_seed), cfg.medium.coefficients);
    const int n_grid = cfg.medium.coefficients.fast_dim == 1 ? 1024 : 64;
    const auto density = invariant_density(coeffs, n_grid);
    const Vec mean = drift_mean(coeffs, density);
    if (mean.lpNorm<Eigen::Infinity>() > 1e-8) {
      std::string values;
      for (Eigen::Index i = 0; i < mean.size(); ++i) values += (i ? ", " : "") + short_number(mean(i));
      report.warnings.push_back("pi-mean of b is not zero; the constant [" + values +
                                "] is subtracted before the corrector solve");
    }
    const auto nd = check_nondegeneracy(coeffs, cfg.x0);
    if (nd.min_fast_eig < cfg.lambda_min || nd.min_fast_eig <= 0.0)
      report.warnings.push_back("fast diffusion degenerate: min eigenvalue " + short_number(nd.min_fast_eig));
    if (cfg.lambda_min > 0.0 && nd.min_sigma_eig < cfg.lambda_min)
      report.warnings.push_back("slow diffusion below lambda_min: min eigenvalue " + short_number(nd.min_sigma_eig));
  } catch (const std::exception& e) {
    report.errors.emplace_back(e.what());
  }
  return report;
}

ValidationReport validate_config_file(const std::string& path) {
  try {
    return validate_config(load_config_document(path));
  } catch (const std::exception& e) {
    ValidationReport report;
    report.errors.emplace_back(e.what());
    return report;
  }
}

Observable make_observable(const std::vector<FourierTerm>& terms) {
  return [terms](const double* y) {
    double total = 0.0;
    for (const auto& t : terms) {
      double theta = t.phase;
      for (std::size_t i = 0; i < t.wavevector.size(); ++i) theta += kTwoPi * t.wavevector[i] * y[i];
      total += t.amp * std::cos(theta);
    }
    return total;
  };
}

}  // namespace qldp
