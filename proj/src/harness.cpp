#include "psgd/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace psgd {

using nlohmann::json;

namespace {
constexpr const char* kCodeVersion = "psgd-lab 0.1.0";
}

std::string kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::escape: return "escape";
    case ExperimentKind::equivalence: return "equivalence";
    case ExperimentKind::convergence: return "convergence";
    case ExperimentKind::constants: return "constants";
    case ExperimentKind::noise_sweep: return "noise_sweep";
  }
  return "unknown";
}

ExperimentKind kind_from_name(const std::string& name) {
  if (name == "escape") return ExperimentKind::escape;
  if (name == "equivalence") return ExperimentKind::equivalence;
  if (name == "convergence") return ExperimentKind::convergence;
  if (name == "constants") return ExperimentKind::constants;
  if (name == "noise_sweep") return ExperimentKind::noise_sweep;
  throw ConfigError("unknown experiment kind: " + name);
}

json default_config(ExperimentKind kind) {
  const std::vector<double> grid = default_stepsize_grid();
  // The escape-style figures need the largest grid point to sit where GD is
  // still trapped far from the origin at T = 100 while the perturbed method
  // already funnels in; with points above ~2e-2 plain GD converges as well
  // and the comparison degenerates. Four exponentially separated step sizes
  // drawn from [1e-5, 1], topping out at 10^-1.8.
  std::vector<double> escape_grid;
  for (int i = 0; i < 4; ++i)
    escape_grid.push_back(std::pow(10.0, -5.0 + (5.0 - 1.8) * i / 3.0));
  switch (kind) {
    case ExperimentKind::escape:
      return json{{"problem", "toy_sine"}, {"a", 10.0}, {"b", 1.0},
                  {"replicas", 1000},      {"steps", 100}, {"seed", 1},
                  {"init_lo", -400.0},     {"init_hi", 400.0},
                  {"zetas", json::array({0.5, 1.0})},
                  {"gamma", 0.0},          {"grid", escape_grid},
                  {"sigma2", 0.0},
                  {"hist_lo", -50.0},      {"hist_hi", 50.0}, {"hist_bins", 50},
                  {"near_radius", 10.0},   {"margin", 0.2}};
    case ExperimentKind::equivalence:
      return json{{"problem", "toy_sine"}, {"a", 10.0}, {"b", 1.0},
                  {"n", 360},              {"d", 64},   {"data_seed", 7},
                  {"x0", 100.0},           {"init_lo", -0.5}, {"init_hi", 0.5},
                  {"zeta", 0.1},           {"replicas", 1000}, {"steps", 100},
                  {"seed", 1},             {"gamma", 0.0}, {"grid", grid},
                  {"ci_fraction", 0.97},   {"ref_steps", 20000}};
    case ExperimentKind::convergence:
      return json{{"problem", "toy_sine"}, {"a", 10.0}, {"b", 1.0},
                  {"theorem", 2},          {"zeta", 0.0}, {"x0", 5.0},
                  {"steps", 0},            {"replicas", 1000}, {"seed", 1},
                  {"epsilon", 1.0},        {"gamma", 0.0}, {"sigma2", 0.0},
                  {"fit_points", 24},      {"fit_draws", 2000}, {"fit_box", 0.0},
                  {"m", -1.0},             {"delta", -1.0},
                  {"sigma_prime_sq", -1.0}, {"M_prime", 0.0}};
    case ExperimentKind::constants:
      return json{{"problem", "toy_sine"}, {"a", 10.0}, {"b", 1.0},
                  {"zeta", 2.0},           {"noise_sigma2", 0.0},
                  {"points", 24},          {"draws", 5000},
                  {"box_lo", -10.0},       {"box_hi", 10.0}, {"seed", 1}};
    case ExperimentKind::noise_sweep:
      return json{{"problem", "toy_sine"}, {"a", 10.0}, {"b", 1.0},
                  {"zetas", json::array({0.5, 1.0, 2.0, 5.0, 10.0, 20.0})},
                  {"replicas", 1000},      {"steps", 100}, {"seed", 1},
                  {"init_lo", -400.0},     {"init_hi", 400.0},
                  {"gamma", 0.0},          {"grid", escape_grid},
                  {"hist_lo", -50.0},      {"hist_hi", 50.0}, {"hist_bins", 50},
                  {"near_radius", 10.0}};
  }
  throw ConfigError("default_config: bad kind");
}

ExperimentConfig::ExperimentConfig(ExperimentKind kind, const json& file_values,
                                   const json& overrides)
    : kind_(kind), resolved_(default_config(kind)) {
  auto apply = [&](const json& values, const char* origin) {
    if (values.is_null()) return;
    if (!values.is_object()) throw ConfigError(std::string(origin) + ": expected a JSON object");
    std::vector<std::string> unknown;
    for (const auto& [key, value] : values.items()) {
      if (!resolved_.contains(key)) {
        unknown.push_back(key);
        continue;
      }
      resolved_[key] = value;
    }
    if (!unknown.empty()) {
      std::string msg = std::string(origin) + ": unknown key(s):";
      for (const auto& k : unknown) msg += " " + k;
      throw ConfigError(msg);
    }
  };
  apply(file_values, "config file");
  apply(overrides, "flags");

  // kind-independent sanity
  if (resolved_.contains("replicas") && resolved_["replicas"].get<int>() < 1)
    throw ConfigError("field 'replicas' must be >= 1");
  for (const char* key : {"steps", "points", "draws", "fit_points", "fit_draws", "ref_steps",
                          "hist_bins", "n", "d"})
    if (resolved_.contains(key) && resolved_[key].get<double>() < 0)
      throw ConfigError(std::string("field '") + key + "' must be nonnegative");
  if (kind_ == ExperimentKind::convergence) {
    const double m = resolved_["m"].get<double>();
    if (m >= 1.0)
      throw ConfigError("field 'm' must be < 1 (assumption not satisfiable), got " +
                        std::to_string(m));
    const int theorem = resolved_["theorem"].get<int>();
    if (theorem != 2 && theorem != 3)
      throw ConfigError("field 'theorem' must be 2 or 3 for convergence envelopes");
    if (resolved_["epsilon"].get<double>() <= 0.0)
      throw ConfigError("field 'epsilon' must be > 0");
  }
}

const json& ExperimentConfig::fetch(const std::string& key) const {
  if (!resolved_.contains(key)) throw ConfigError("missing config key: " + key);
  consumed_.insert(key);
  return resolved_.at(key);
}

double ExperimentConfig::get_double(const std::string& key) const { return fetch(key).get<double>(); }
int ExperimentConfig::get_int(const std::string& key) const { return fetch(key).get<int>(); }
std::uint64_t ExperimentConfig::get_u64(const std::string& key) const {
  return fetch(key).get<std::uint64_t>();
}
std::string ExperimentConfig::get_string(const std::string& key) const {
  return fetch(key).get<std::string>();
}
std::vector<double> ExperimentConfig::get_doubles(const std::string& key) const {
  return fetch(key).get<std::vector<double>>();
}

ExperimentConfig load_config(ExperimentKind kind, const std::string& path, const json& overrides) {
  json file_values = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
      try {
        file_values = json::parse(text);
      } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
      }
    }
  }
  return ExperimentConfig(kind, file_values, overrides);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::string best;
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) {
      if (best.empty() || std::strlen(buf) < best.size()) best = buf;
      if (prec >= 15) break;
    }
  }
  return best.empty() ? buf : best;
}

namespace {

std::string row(std::initializer_list<std::string> cells) {
  std::string out;
  bool first = true;
  for (const auto& c : cells) {
    if (!first) out += ',';
    out += c;
    first = false;
  }
  return out;
}

std::string fd(double v) { return format_double(v); }
std::string fi(long long v) { return std::to_string(v); }

struct Histogram {
  double lo, hi;
  int bins;
  std::vector<long long> counts;
  long long overflow = 0;

  Histogram(double lo_, double hi_, int bins_) : lo(lo_), hi(hi_), bins(bins_), counts(bins_, 0) {}
  void add(double x) {
    if (!std::isfinite(x) || x < lo || x > hi) {
      ++overflow;
      return;
    }
    int idx = static_cast<int>((x - lo) / (hi - lo) * bins);
    if (idx == bins) idx = bins - 1;
    ++counts[idx];
  }
};

ProblemInstance toy_from(const ExperimentConfig& cfg) {
  return ProblemInstance::toy_sine(cfg.get_double("a"), cfg.get_double("b"));
}

std::vector<double> global_minima_1d(const ProblemInstance& problem, double lo, double hi) {
  const auto stationary = stationary_points_1d(problem, lo, hi);
  double fmin = std::numeric_limits<double>::infinity();
  for (double s : stationary) {
    const double pt[1] = {s};
    fmin = std::min(fmin, problem.value(Part::f, pt));
  }
  std::vector<double> global;
  for (double s : stationary) {
    const double pt[1] = {s};
    if (problem.value(Part::f, pt) <= fmin + 1e-9 * (1.0 + std::abs(fmin))) global.push_back(s);
  }
  return global;
}

bool near_any(double x, const std::vector<double>& targets, double radius) {
  if (!std::isfinite(x)) return false;
  for (double t : targets)
    if (std::abs(x - t) <= radius) return true;
  return false;
}

// ------------------------------ escape --------------------------------------

ExperimentReport run_escape(const ExperimentConfig& cfg, bool sweep_sgd_comparator) {
  ExperimentReport rep;
  rep.kind = cfg.kind();
  const ProblemInstance problem = toy_from(cfg);
  const int replicas = cfg.get_int("replicas");
  const int steps = cfg.get_int("steps");
  const std::uint64_t seed = cfg.get_u64("seed");
  const double init_lo = cfg.get_double("init_lo"), init_hi = cfg.get_double("init_hi");
  const std::vector<double> zetas = cfg.get_doubles("zetas");
  const std::vector<double> grid = cfg.get_doubles("grid");
  const double fixed_gamma = cfg.get_double("gamma");
  const double hist_lo = cfg.get_double("hist_lo"), hist_hi = cfg.get_double("hist_hi");
  const int hist_bins = cfg.get_int("hist_bins");
  const double radius = cfg.get_double("near_radius");
  const double sigma2 = sweep_sgd_comparator ? 0.0 : cfg.get_double("sigma2");

  const std::vector<double> global = global_minima_1d(problem, hist_lo, hist_hi);

  struct AlgResult {
    std::string label;
    double zeta;
    double gamma;
    double fraction;
    std::vector<double> last;
  };
  std::vector<AlgResult> results;

  auto base_config = [&](Algorithm alg, double zeta, double noise_sigma2) {
    OptimizerConfig c;
    c.algorithm = alg;
    c.steps = steps;
    c.init = InitSpec::uniform_box(init_lo, init_hi);
    if (alg == Algorithm::perturbed_sgd) {
      if (zeta > 0.0) c.smoothing = SmoothingSpec::gaussian(zeta);
      if (noise_sigma2 > 0.0) c.noise = NoiseSpec::gaussian(noise_sigma2);
    } else if (alg == Algorithm::sgd) {
      c.noise = NoiseSpec::gaussian(noise_sigma2);
    }
    return c;
  };

  // every algorithm sees the same random starting points, as in the figure
  const InitSpec shared_init = InitSpec::uniform_box(init_lo, init_hi);
  const std::uint64_t init_seed = lane_seed(seed, 99);
  auto execute = [&](const std::string& label, Algorithm alg, double zeta, double noise_sigma2,
                     std::uint64_t lane) {
    OptimizerConfig tmpl = base_config(alg, zeta, noise_sigma2);
    tmpl.seed = lane_seed(seed, lane);
    double gamma = fixed_gamma;
    if (gamma <= 0.0)
      gamma = grid_search_stepsize(problem, tmpl, grid, SearchCriterion::final_f, replicas);
    AlgResult res;
    res.label = label;
    res.zeta = zeta;
    res.gamma = gamma;
    res.last.reserve(replicas);
    int near = 0;
    for (int r = 0; r < replicas; ++r) {
      OptimizerConfig c = tmpl;
      c.gamma = gamma;
      c.init = InitSpec::fixed(shared_init.draw(1, init_seed, static_cast<std::uint64_t>(r)));
      c.replica = static_cast<std::uint64_t>(r);
      c.record_iterates = false;
      const Trajectory traj = run(problem, c);
      res.last.push_back(traj.last[0]);
      if (near_any(traj.last[0], global, radius)) ++near;
    }
    res.fraction = static_cast<double>(near) / replicas;
    results.push_back(std::move(res));
  };

  if (!sweep_sgd_comparator) {
    execute("gd", Algorithm::gd, 0.0, 0.0, 100);
    for (std::size_t i = 0; i < zetas.size(); ++i)
      execute("psgd", Algorithm::perturbed_sgd, zetas[i], sigma2, 200 + i);
  } else {
    // noise sweep: one gamma fixed by the noiseless GD search, then SGD at the
    // matched noise sigma^2 = gamma * zeta^2 against perturbed SGD per zeta
    OptimizerConfig tmpl = base_config(Algorithm::gd, 0.0, 0.0);
    tmpl.seed = lane_seed(seed, 100);
    double gamma = fixed_gamma;
    if (gamma <= 0.0)
      gamma = grid_search_stepsize(problem, tmpl, grid, SearchCriterion::final_f, replicas);
    const double saved = gamma;
    for (std::size_t i = 0; i < zetas.size(); ++i) {
      const double zeta = zetas[i];
      const double s2 = saved * zeta * zeta;
      OptimizerConfig c_sgd = base_config(Algorithm::sgd, 0.0, s2);
      c_sgd.seed = lane_seed(seed, 300 + i);
      AlgResult sgd_res{"sgd", zeta, saved, 0.0, {}};
      AlgResult psgd_res{"psgd", zeta, saved, 0.0, {}};
      int near_sgd = 0, near_psgd = 0;
      const InitSpec shared_init = InitSpec::uniform_box(init_lo, init_hi);
      const std::uint64_t init_seed = lane_seed(seed, 99);
      for (int r = 0; r < replicas; ++r) {
        const InitSpec start =
            InitSpec::fixed(shared_init.draw(1, init_seed, static_cast<std::uint64_t>(r)));
        OptimizerConfig c1 = c_sgd;
        c1.gamma = saved;
        c1.init = start;
        c1.replica = static_cast<std::uint64_t>(r);
        c1.record_iterates = false;
        const Trajectory t1 = run(problem, c1);
        sgd_res.last.push_back(t1.last[0]);
        if (near_any(t1.last[0], global, radius)) ++near_sgd;

        OptimizerConfig c2 = base_config(Algorithm::perturbed_sgd, zeta, 0.0);
        c2.seed = lane_seed(seed, 400 + i);
        c2.gamma = saved;
        c2.init = start;
        c2.replica = static_cast<std::uint64_t>(r);
        c2.record_iterates = false;
        const Trajectory t2 = run(problem, c2);
        psgd_res.last.push_back(t2.last[0]);
        if (near_any(t2.last[0], global, radius)) ++near_psgd;
      }
      sgd_res.fraction = static_cast<double>(near_sgd) / replicas;
      psgd_res.fraction = static_cast<double>(near_psgd) / replicas;
      results.push_back(std::move(sgd_res));
      results.push_back(std::move(psgd_res));
    }
  }

  // tables
  const char* frac_name = sweep_sgd_comparator ? "sweep_fractions" : "fractions";
  Table fractions{frac_name, "algorithm,zeta,gamma,near_global_fraction", {}};
  for (const auto& r : results)
    fractions.rows.push_back(row({r.label, fd(r.zeta), fd(r.gamma), fd(r.fraction)}));
  rep.tables.push_back(std::move(fractions));

  if (!sweep_sgd_comparator) {
    Table last{"last_iterates", "algorithm,zeta,replica,x_last,f_last,near_global", {}};
    for (const auto& r : results)
      for (std::size_t i = 0; i < r.last.size(); ++i) {
        const double x = r.last[i];
        double fv = std::numeric_limits<double>::quiet_NaN();
        if (std::isfinite(x)) {
          const double pt[1] = {x};
          fv = problem.value(Part::f, pt);
        }
        last.rows.push_back(row({r.label, fd(r.zeta), fi(static_cast<long long>(i)), fd(x), fd(fv),
                                 near_any(x, global, radius) ? "1" : "0"}));
      }
    rep.tables.push_back(std::move(last));
  }

  auto find_result = [&](const std::string& label, double zeta) -> const AlgResult* {
    for (const auto& r : results)
      if (r.label == label && r.zeta == zeta) return &r;
    return nullptr;
  };

  for (double zeta : zetas) {
    Histogram first_h(hist_lo, hist_hi, hist_bins), second_h(hist_lo, hist_hi, hist_bins);
    const AlgResult* first = sweep_sgd_comparator ? find_result("sgd", zeta) : find_result("gd", 0.0);
    const AlgResult* second = find_result("psgd", zeta);
    for (double x : first->last) first_h.add(x);
    for (double x : second->last) second_h.add(x);
    const std::string name = std::string(sweep_sgd_comparator ? "sweep_histogram_zeta" : "histogram_zeta") + fd(zeta);
    const std::string header = sweep_sgd_comparator ? "bin_lo,bin_hi,count_sgd,count_psgd"
                                                    : "bin_lo,bin_hi,count_gd,count_psgd";
    Table hist{name, header, {}};
    const double w = (hist_hi - hist_lo) / hist_bins;
    for (int bi = 0; bi < hist_bins; ++bi)
      hist.rows.push_back(row({fd(hist_lo + bi * w), fd(hist_lo + (bi + 1) * w),
                               fi(first_h.counts[bi]), fi(second_h.counts[bi])}));
    hist.rows.push_back(row({"-inf", "inf", fi(first_h.overflow), fi(second_h.overflow)}));
    rep.tables.push_back(std::move(hist));
  }

  json metrics = json::object();
  for (const auto& r : results) {
    const std::string key = r.label + (r.zeta > 0.0 ? "_zeta" + fd(r.zeta) : "");
    metrics[key + "_gamma"] = r.gamma;
    metrics[key + "_fraction"] = r.fraction;
  }
  json global_json = json::array();
  for (double gmin : global) global_json.push_back(gmin);
  metrics["global_minima"] = global_json;
  rep.manifest["metrics"] = metrics;

  if (!sweep_sgd_comparator) {
    const double margin = cfg.get_double("margin");
    const AlgResult* gd = find_result("gd", 0.0);
    const AlgResult* p1 = find_result("psgd", 1.0);
    const AlgResult* p05 = find_result("psgd", 0.5);
    if (gd && p1) rep.verdicts["escape_margin"] = p1->fraction - gd->fraction >= margin;
    if (p1 && p05) rep.verdicts["zeta_ordering"] = p1->fraction >= p05->fraction;
  }
  return rep;
}

// ---------------------------- equivalence -----------------------------------

struct GStarProxy {
  double value = 0.0;
  double grad_norm = 0.0;  // ||grad g|| at the reference endpoint, the proxy-error indicator
};

GStarProxy reference_g_star(const ProblemInstance& problem, std::uint64_t seed, int ref_steps) {
  // long plain-GD run on g (= f here); the best value seen is the proxy min
  OptimizerConfig tmpl;
  tmpl.algorithm = Algorithm::gd;
  tmpl.steps = 1000;
  tmpl.init = InitSpec::fixed(Vec(problem.dimension(), 0.0));
  tmpl.seed = lane_seed(seed, 50);
  const double gamma = grid_search_stepsize(problem, tmpl, default_stepsize_grid(),
                                            SearchCriterion::final_f, 1);
  OptimizerConfig cfg = tmpl;
  cfg.gamma = gamma;
  cfg.steps = ref_steps;
  cfg.record_iterates = false;
  const Trajectory traj = run(problem, cfg);
  GStarProxy proxy;
  proxy.value = std::numeric_limits<double>::infinity();
  for (double g : traj.g_values)
    if (std::isfinite(g)) proxy.value = std::min(proxy.value, g);
  proxy.grad_norm = norm(problem.gradient(Part::g, traj.last));
  return proxy;
}

ExperimentReport run_equivalence(const ExperimentConfig& cfg) {
  ExperimentReport rep;
  rep.kind = ExperimentKind::equivalence;
  const std::string which = cfg.get_string("problem");
  const int replicas = cfg.get_int("replicas");
  const int steps = cfg.get_int("steps");
  const std::uint64_t seed = cfg.get_u64("seed");
  const double zeta = cfg.get_double("zeta");
  const std::vector<double> grid = cfg.get_doubles("grid");
  const double fixed_gamma = cfg.get_double("gamma");
  const double ci_fraction = cfg.get_double("ci_fraction");

  EquivalenceSetup setup;
  setup.steps = steps;
  setup.replicas = replicas;
  setup.seed = seed;

  std::optional<ProblemInstance> problem;
  json metrics = json::object();

  if (which == "toy_sine") {
    problem = toy_from(cfg);
    const double x0 = cfg.get_double("x0");
    setup.init = InitSpec::fixed(Vec{x0});
    // The mean-trajectory comparison needs locally contracting dynamics on the
    // whole path: past gamma * sup|f''| = 2 the map is chaotic and the two
    // coupled ensembles decohere at different rates, so their means separate
    // no matter how many replicas are averaged. Restrict the grid search to
    // step sizes under that cap.
    const double a = problem->toy_a(), b = problem->toy_b();
    const double curv = 2.0 + 2.0 * a * b + a * b * b * (std::abs(x0) + 5.0);
    const double stability_cap = 2.0 / curv;
    metrics["gamma_stability_cap"] = stability_cap;
    double gamma = fixed_gamma;
    if (gamma <= 0.0) {
      // the SGD noise is coupled to the candidate step (sigma^2 = gamma zeta^2),
      // so the grid search re-derives the noise per gamma
      std::vector<double> sorted;
      for (double g : grid)
        if (g <= stability_cap) sorted.push_back(g);
      if (sorted.empty()) sorted.push_back(*std::min_element(grid.begin(), grid.end()));
      std::sort(sorted.begin(), sorted.end());
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t gi = 0; gi < sorted.size(); ++gi) {
        double acc = 0.0;
        bool ok = true;
        for (int r = 0; r < replicas && ok; ++r) {
          OptimizerConfig c;
          c.algorithm = Algorithm::sgd;
          c.gamma = sorted[gi];
          c.steps = steps;
          c.init = InitSpec::fixed(Vec{x0});
          c.noise = NoiseSpec::gaussian(sorted[gi] * zeta * zeta);
          c.seed = lane_seed(seed, 60);
          c.replica = static_cast<std::uint64_t>(r);
          c.record_iterates = false;
          const Trajectory t = run(problem.value(), c);
          const double v = t.diverged ? std::numeric_limits<double>::infinity()
                                      : t.f_values.back();
          if (!std::isfinite(v)) ok = false;
          acc += v;
        }
        const double mean = ok ? acc / replicas : std::numeric_limits<double>::infinity();
        if (mean < best) {
          best = mean;
          gamma = sorted[gi];
        }
      }
      if (!std::isfinite(best))
        throw std::runtime_error("equivalence: no viable step size, every run diverged");
    }
    const double sigma2 = gamma * zeta * zeta;  // noise level from the smoothing scale
    setup.gamma = gamma;
    setup.noise = NoiseSpec::gaussian(sigma2);
    setup.smoothing = coupled_gaussian_smoothing(gamma, sigma2, 1);
    metrics["sigma2"] = sigma2;
  } else if (which == "logistic") {
    Dataset ds = make_blobs(static_cast<std::size_t>(cfg.get_int("n")),
                            static_cast<std::size_t>(cfg.get_int("d")), cfg.get_u64("data_seed"));
    problem = ProblemInstance::finite_sum(std::move(ds));
    setup.init = InitSpec::uniform_box(cfg.get_double("init_lo"), cfg.get_double("init_hi"));
    double gamma = fixed_gamma;
    if (gamma <= 0.0) {
      OptimizerConfig tmpl;
      tmpl.algorithm = Algorithm::sgd;
      tmpl.steps = steps;
      tmpl.init = setup.init;
      tmpl.noise = NoiseSpec::single_index();
      tmpl.seed = lane_seed(seed, 60);
      gamma = grid_search_stepsize(problem.value(), tmpl, grid, SearchCriterion::final_f, replicas);
    }
    setup.gamma = gamma;
    setup.noise = NoiseSpec::single_index();
    setup.smoothing = SmoothingSpec::full_batch_difference(gamma);
    const GStarProxy proxy = reference_g_star(problem.value(), seed, cfg.get_int("ref_steps"));
    setup.g_star_ref = proxy.value;
    metrics["g_star_ref"] = proxy.value;
    metrics["g_star_ref_grad_norm"] = proxy.grad_norm;
  } else {
    throw ConfigError("equivalence: field 'problem' must be toy_sine or logistic");
  }

  const EquivalenceReport eq = equivalence_report(problem.value(), setup);

  Table table{"equivalence", "step,mean_y,sd_y,mean_z,sd_z,diff,ci_lo,ci_hi", {}};
  for (const auto& r : eq.rows)
    table.rows.push_back(row({fi(r.step), fd(r.mean_y), fd(r.sd_y), fd(r.mean_z), fd(r.sd_z),
                              fd(r.diff), fd(r.ci_lo), fd(r.ci_hi)}));
  rep.tables.push_back(std::move(table));

  metrics["gamma"] = setup.gamma;
  metrics["fraction_within_ci"] = eq.fraction_within_ci;
  metrics["mean_var_y"] = eq.mean_var_y;
  metrics["mean_var_z"] = eq.mean_var_z;
  metrics["lemma4_lhs"] = eq.lemma4_lhs;
  metrics["lemma4_rhs"] = eq.lemma4_rhs;
  rep.manifest["metrics"] = metrics;

  rep.verdicts["equality_in_expectation"] = eq.fraction_within_ci >= ci_fraction;
  rep.verdicts["lemma4_averaged_bound"] = eq.lemma4_holds;
  return rep;
}

// ---------------------------- convergence -----------------------------------

std::vector<Vec> fit_grid(double box, int n, bool dense_near_zero) {
  // offset-uniform grid over [-box, box]; never hits x = 0 exactly
  std::vector<Vec> pts;
  pts.reserve(n + 8);
  for (int i = 0; i < n; ++i)
    pts.push_back(Vec{-box + 2.0 * box * (i + 0.5) / n});
  if (dense_near_zero) {
    // the directional ratio |r_g|^2/||grad g||^2 peaks as x -> 0; sample it
    for (double x : {0.05, 0.1, 0.2, 0.4}) {
      pts.push_back(Vec{x});
      pts.push_back(Vec{-x});
    }
  }
  return pts;
}

ExperimentReport run_convergence(const ExperimentConfig& cfg) {
  ExperimentReport rep;
  rep.kind = ExperimentKind::convergence;
  const ProblemInstance problem = toy_from(cfg);
  const int theorem_id = cfg.get_int("theorem");
  const Theorem theorem = theorem_id == 2 ? Theorem::t2 : Theorem::t3;
  const int replicas = cfg.get_int("replicas");
  const std::uint64_t seed = cfg.get_u64("seed");
  const double eps = cfg.get_double("epsilon");
  const double x0 = cfg.get_double("x0");
  const double sigma2 = cfg.get_double("sigma2");

  double zeta = cfg.get_double("zeta");
  if (zeta <= 0.0) zeta = theorem == Theorem::t2 ? 2.0 : 2.5;

  double box = cfg.get_double("fit_box");
  if (box <= 0.0) box = std::max(10.0, std::abs(x0) + 6.0 * zeta + 2.0);
  const int fit_points = cfg.get_int("fit_points");
  const std::size_t fit_draws = static_cast<std::size_t>(cfg.get_int("fit_draws"));
  const std::vector<Vec> points = fit_grid(box, fit_points, false);
  const std::vector<Vec> structure_points = fit_grid(box, fit_points, theorem == Theorem::t3);

  TheoremConstants c;
  c.L_g = *problem.constants().L_g;
  c.mu_g = *problem.constants().mu_g;

  const double cfg_sp2 = cfg.get_double("sigma_prime_sq");
  const double cfg_Mp = cfg.get_double("M_prime");
  if (cfg_sp2 >= 0.0) {
    c.sigma_prime_sq = cfg_sp2;
    c.M_prime = cfg_Mp;
  } else {
    const NoiseSpec noise = sigma2 > 0.0 ? NoiseSpec::gaussian(sigma2) : NoiseSpec::none();
    const auto fit = fit_noise_constants(problem, SmoothingSpec::gaussian(zeta), noise, points,
                                         fit_draws, lane_seed(seed, 70));
    c.sigma_prime_sq = fit.sigma_prime_sq;
    c.M_prime = fit.M_prime;
  }

  const double cfg_m = cfg.get_double("m");
  const double cfg_delta = cfg.get_double("delta");
  bool structure_feasible = true;
  if (cfg_m >= 0.0) {
    c.m = cfg_m;
    c.delta = std::max(cfg_delta, 0.0);
  } else if (theorem == Theorem::t2) {
    const StructureConstants an = analytic_assumption_constants(problem, zeta);
    c.m = an.m;
    c.delta = an.delta;
  } else {
    const auto fit = fit_structure_constants(problem, zeta, structure_points,
                                             StructureFitMode::directional,
                                             ReferenceMethod::quadrature());
    structure_feasible = !fit.infeasible;
    c.m = fit.m_par;
    c.delta = fit.delta_perp;
  }
  rep.verdicts["constants_feasible"] = structure_feasible && c.m < 1.0;
  if (!rep.verdicts["constants_feasible"]) {
    rep.manifest["metrics"] = json{{"m", c.m}, {"delta", c.delta}};
    return rep;
  }

  double gamma = cfg.get_double("gamma");
  if (gamma <= 0.0) gamma = theoretical_stepsize(theorem, c, eps);

  int steps = cfg.get_int("steps");
  if (steps <= 0) {
    if (theorem == Theorem::t2) {
      const double tau = 1.0 / (gamma * c.mu_g * (1.0 - c.m));
      steps = static_cast<int>(std::clamp(std::ceil(8.0 * tau), 500.0, 100000.0));
    } else {
      steps = 20000;
    }
  }

  const double G0 = x0 * x0;  // g(x0) - g* for g(x) = x^2
  const double d0 = x0 * x0;

  StepStats gap_stats;
  std::optional<WeightedGapStats> wstats;
  if (theorem == Theorem::t3) wstats.emplace(gamma, c.mu_g, c.m);

  int diverged = 0;
  for (int r = 0; r < replicas; ++r) {
    OptimizerConfig run_cfg;
    run_cfg.algorithm = Algorithm::perturbed_sgd;
    run_cfg.gamma = gamma;
    run_cfg.steps = steps;
    run_cfg.init = InitSpec::fixed(Vec{x0});
    run_cfg.smoothing = SmoothingSpec::gaussian(zeta);
    if (sigma2 > 0.0) run_cfg.noise = NoiseSpec::gaussian(sigma2);
    run_cfg.seed = lane_seed(seed, 80);
    run_cfg.replica = static_cast<std::uint64_t>(r);
    run_cfg.record_iterates = false;
    const Trajectory traj = run(problem, run_cfg);
    if (traj.diverged) {
      ++diverged;
      continue;
    }
    if (theorem == Theorem::t2)
      gap_stats.add_trajectory(traj.g_gap);
    else
      wstats->add_trajectory(traj.g_gap, traj.dist_g_star);
  }
  if ((theorem == Theorem::t2 && gap_stats.replicas() == 0) ||
      (theorem == Theorem::t3 && wstats->stats().replicas() == 0))
    throw std::runtime_error("convergence: every replica diverged");

  const EnvelopeReport env = theorem == Theorem::t2 ? envelope_check_t2(gap_stats, c, gamma, G0)
                                                    : envelope_check_t3(*wstats, c, gamma, d0);

  Table table{"envelope", "step,empirical_mean,se,bound,violate", {}};
  for (std::size_t t = 0; t < env.bound.size(); ++t) {
    const bool viol = env.empirical[t] > env.bound[t] + 3.0 * env.se[t];
    table.rows.push_back(
        row({fi(static_cast<long long>(t)), fd(env.empirical[t]), fd(env.se[t]), fd(env.bound[t]),
             viol ? "1" : "0"}));
  }
  rep.tables.push_back(std::move(table));

  // a small per-replica trajectory sample in the plot-ready schema
  Table traj_table{"trajectories", "step,replica,x0,f,g,grad_g_sq,g_gap", {}};
  const int sample_replicas = std::min(replicas, 3);
  for (int r = 0; r < sample_replicas; ++r) {
    OptimizerConfig run_cfg;
    run_cfg.algorithm = Algorithm::perturbed_sgd;
    run_cfg.gamma = gamma;
    run_cfg.steps = steps;
    run_cfg.init = InitSpec::fixed(Vec{x0});
    run_cfg.smoothing = SmoothingSpec::gaussian(zeta);
    if (sigma2 > 0.0) run_cfg.noise = NoiseSpec::gaussian(sigma2);
    run_cfg.seed = lane_seed(seed, 80);
    run_cfg.replica = static_cast<std::uint64_t>(r);
    const Trajectory traj = run(problem, run_cfg);
    for (std::size_t t = 0; t < traj.f_values.size(); ++t)
      traj_table.rows.push_back(row({fi(static_cast<long long>(t)), fi(r),
                                     fd(traj.iterates[t][0]), fd(traj.f_values[t]),
                                     fd(traj.g_values[t]), fd(traj.grad_g_sq[t]),
                                     fd(traj.g_gap[t])}));
  }
  rep.tables.push_back(std::move(traj_table));

  const IterationBound ib = iteration_bound(theorem, c, eps, theorem == Theorem::t3 ? d0 : G0);

  json metrics = json::object();
  metrics["gamma"] = gamma;
  metrics["zeta"] = zeta;
  metrics["steps"] = steps;
  metrics["m"] = c.m;
  metrics["delta"] = c.delta;
  metrics["sigma_prime_sq"] = c.sigma_prime_sq;
  metrics["M_prime"] = c.M_prime;
  metrics["xi"] = env.xi;
  metrics["violations"] = env.violations;
  metrics["final_gap"] = env.final_gap;
  metrics["final_bound"] = env.final_bound;
  metrics["diverged_replicas"] = diverged;
  metrics["iteration_bound_T"] = ib.T;
  metrics["iteration_bound_gamma"] = ib.gamma;
  metrics["iteration_bound_target"] = ib.target;
  rep.manifest["metrics"] = metrics;

  rep.verdicts["stepsize_applicable"] = env.applicable;
  rep.verdicts["envelope_no_violations"] = env.applicable && env.violations == 0;
  if (theorem == Theorem::t2)
    rep.verdicts["noise_floor_reached"] = env.applicable && env.floor_reached;
  return rep;
}

// ----------------------------- constants ------------------------------------

ExperimentReport run_constants(const ExperimentConfig& cfg) {
  ExperimentReport rep;
  rep.kind = ExperimentKind::constants;
  const ProblemInstance problem = toy_from(cfg);
  const double zeta = cfg.get_double("zeta");
  const double noise_sigma2 = cfg.get_double("noise_sigma2");
  const int n_points = cfg.get_int("points");
  const std::size_t draws = static_cast<std::size_t>(cfg.get_int("draws"));
  const double box_lo = cfg.get_double("box_lo"), box_hi = cfg.get_double("box_hi");
  const std::uint64_t seed = cfg.get_u64("seed");

  std::vector<Vec> points;
  for (int i = 0; i < n_points; ++i)
    points.push_back(Vec{box_lo + (box_hi - box_lo) * (i + 0.5) / n_points});

  const NoiseSpec noise = noise_sigma2 > 0.0 ? NoiseSpec::gaussian(noise_sigma2) : NoiseSpec::none();
  const auto nf = fit_noise_constants(problem, SmoothingSpec::gaussian(zeta), noise, points, draws,
                                      lane_seed(seed, 70));
  const auto sn = fit_structure_constants(problem, zeta, points, StructureFitMode::norm,
                                          ReferenceMethod::quadrature());
  const auto sd = fit_structure_constants(problem, zeta, points, StructureFitMode::directional,
                                          ReferenceMethod::quadrature());

  bool analytic_ok = true;
  StructureConstants an{};
  try {
    an = analytic_assumption_constants(problem, zeta);
  } catch (const std::domain_error&) {
    analytic_ok = false;
  }

  Table consts{"constants", "name,value", {}};
  consts.rows.push_back(row({"sigma_prime_sq", fd(nf.sigma_prime_sq)}));
  consts.rows.push_back(row({"M_prime", fd(nf.M_prime)}));
  consts.rows.push_back(row({"noise_fit_residual", fd(nf.residual)}));
  consts.rows.push_back(row({"m_norm", fd(sn.m)}));
  consts.rows.push_back(row({"delta_norm", fd(sn.delta)}));
  consts.rows.push_back(row({"m_par", fd(sd.m_par)}));
  consts.rows.push_back(row({"delta_perp", fd(sd.delta_perp)}));
  consts.rows.push_back(row({"directional_infeasible", sd.infeasible ? "1" : "0"}));
  consts.rows.push_back(row({"zero_grad_points", fi(static_cast<long long>(sd.zero_grad_points))}));
  consts.rows.push_back(
      row({"analytic_m", analytic_ok ? fd(an.m) : "nan"}));
  consts.rows.push_back(row({"analytic_delta", analytic_ok ? fd(an.delta) : "nan"}));
  rep.tables.push_back(std::move(consts));

  Table ncloud{"noise_cloud", "x,b,v", {}};
  for (std::size_t i = 0; i < points.size(); ++i)
    ncloud.rows.push_back(row({fd(points[i][0]), fd(nf.b[i]), fd(nf.v[i])}));
  rep.tables.push_back(std::move(ncloud));

  Table scloud{"structure_cloud", "x,b,v", {}};
  for (std::size_t i = 0; i < points.size(); ++i)
    scloud.rows.push_back(row({fd(points[i][0]), fd(sn.b[i]), fd(sn.v[i])}));
  rep.tables.push_back(std::move(scloud));

  bool noise_dominates = true;
  for (std::size_t i = 0; i < nf.b.size(); ++i)
    if (nf.v[i] > nf.sigma_prime_sq + nf.M_prime * nf.b[i] + 1e-9 * (1.0 + nf.v[i]))
      noise_dominates = false;
  bool structure_dominates = true;
  for (std::size_t i = 0; i < sn.b.size(); ++i)
    if (sn.v[i] > sn.delta + sn.m * sn.b[i] + 1e-9 * (1.0 + sn.v[i])) structure_dominates = false;
  rep.verdicts["noise_envelope_dominates"] = noise_dominates;
  rep.verdicts["structure_envelope_dominates"] = structure_dominates;
  if (analytic_ok) {
    bool cloud_below = true;
    for (std::size_t i = 0; i < sn.b.size(); ++i)
      if (sn.v[i] > an.delta + an.m * sn.b[i] + 1e-9 * (1.0 + sn.v[i])) cloud_below = false;
    rep.verdicts["cloud_below_analytic"] = cloud_below;
  }

  json metrics = json::object();
  metrics["sigma_prime_sq"] = nf.sigma_prime_sq;
  metrics["M_prime"] = nf.M_prime;
  metrics["m_norm"] = sn.m;
  metrics["delta_norm"] = sn.delta;
  metrics["m_par"] = sd.m_par;
  metrics["delta_perp"] = sd.delta_perp;
  if (analytic_ok) {
    metrics["analytic_m"] = an.m;
    metrics["analytic_delta"] = an.delta;
  }
  rep.manifest["metrics"] = metrics;
  return rep;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config) {
  ExperimentReport rep;
  switch (config.kind()) {
    case ExperimentKind::escape:
      rep = run_escape(config, false);
      break;
    case ExperimentKind::equivalence:
      rep = run_equivalence(config);
      break;
    case ExperimentKind::convergence:
      rep = run_convergence(config);
      break;
    case ExperimentKind::constants:
      rep = run_constants(config);
      break;
    case ExperimentKind::noise_sweep:
      rep = run_escape(config, true);
      break;
  }
  rep.manifest["code_version"] = kCodeVersion;
  rep.manifest["kind"] = kind_name(config.kind());
  rep.manifest["seed"] = config.resolved().at("seed");
  rep.manifest["config"] = config.resolved();
  json verdicts = json::object();
  for (const auto& [k, v] : rep.verdicts) verdicts[k] = v;
  rep.manifest["verdicts"] = verdicts;
  json consumed = json::array();
  for (const auto& k : config.consumed_keys()) consumed.push_back(k);
  rep.manifest["consumed_keys"] = consumed;
  return rep;
}

void write_report(const ExperimentReport& report, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec && !fs::is_directory(dir))
    throw std::runtime_error("write_report: cannot create directory " + dir);
  {
    std::ofstream out(dir + "/manifest.json");
    if (!out) throw std::runtime_error("write_report: cannot write manifest in " + dir);
    out << report.manifest.dump(2) << "\n";
  }
  for (const auto& table : report.tables) {
    std::ofstream out(dir + "/" + table.name + ".csv");
    if (!out) throw std::runtime_error("write_report: cannot write table " + table.name);
    out << table.header << "\n";
    for (const auto& r : table.rows) out << r << "\n";
  }
}

}  // namespace psgd
