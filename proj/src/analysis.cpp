#include "psgd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace psgd {
namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Exact smoothed gradient where a closed form exists (normalized Gaussian
// kernel, per-coordinate variance zeta^2/d).
std::optional<Vec> smoothed_grad_exact(const ProblemInstance& problem, double zeta,
                                       std::span<const double> x) {
  const std::size_t d = problem.dimension();
  const double per_coord = zeta / std::sqrt(static_cast<double>(d));
  switch (problem.family()) {
    case Family::toy_sine: {
      const auto pt = toy_smoothed_closed_form(problem.toy_a(), problem.toy_b(), per_coord, x[0]);
      return Vec{pt.grad_f_U};
    }
    case Family::valley: {
      Vec g(x.begin(), x.end());
      g[0] += valley_smoothed_h_grad(problem.valley_alpha(), problem.valley_lambda(), per_coord,
                                     x[0]);
      return g;
    }
    case Family::quadratic:
      // Gaussian convolution shifts the value of a quadratic, not its gradient
      return problem.gradient(Part::f, x);
    default:
      return std::nullopt;
  }
}

Vec reference_smoothed_grad(const ProblemInstance& problem, double zeta, std::span<const double> x,
                            const ReferenceMethod& method) {
  if (auto exact = smoothed_grad_exact(problem, zeta, x)) return *exact;
  return smoothed_grad_reference(problem, zeta, x, method);
}

const double kZ99 = 2.5758293035489004;  // two-sided 99% normal quantile

}  // namespace

double normal_quantile(double p) {
  // Acklam's rational approximation, |relative error| < 1.2e-9
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double dd[] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1.0 - plow;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
  }
  if (p > phigh) {
    q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

EnvelopeFit fit_upper_envelope(std::span<const double> b, std::span<const double> v,
                               double slope_cap) {
  if (b.size() != v.size() || b.empty())
    throw std::invalid_argument("fit_upper_envelope: need matching nonempty clouds");
  EnvelopeFit fit;
  const double b_max = *std::max_element(b.begin(), b.end());
  const double b_min = *std::min_element(b.begin(), b.end());
  const double med_b = median({b.begin(), b.end()});
  fit.degenerate = (b_max - b_min) <= 1e-12 * (1.0 + b_max);

  std::vector<double> slopes{0.0};
  if (!fit.degenerate) {
    const int n_grid = 61;
    const double lo = std::log10(1e-3), hi = std::log10(slope_cap);
    for (int i = 0; i < n_grid; ++i)
      slopes.push_back(std::pow(10.0, lo + (hi - lo) * i / (n_grid - 1)));
  }

  double best_obj = std::numeric_limits<double>::infinity();
  for (double slope : slopes) {
    double intercept = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i)
      intercept = std::max(intercept, v[i] - slope * b[i]);
    const double obj = intercept + slope * med_b;
    if (obj < best_obj) {
      best_obj = obj;
      fit.intercept = intercept;
      fit.slope = slope;
    }
  }
  double slack = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i)
    slack += fit.intercept + fit.slope * b[i] - v[i];
  fit.residual = slack / static_cast<double>(b.size());
  return fit;
}

NoiseConstantsFit fit_noise_constants(const ProblemInstance& problem,
                                      const SmoothingSpec& smoothing, const NoiseSpec& noise,
                                      const std::vector<Vec>& points, std::size_t draws,
                                      std::uint64_t seed) {
  if (points.size() < 2) throw std::invalid_argument("fit_noise_constants: need >= 2 points");
  if (draws < 1000) throw std::invalid_argument("fit_noise_constants: need >= 1000 draws");
  NoiseConstantsFit out;
  out.b.reserve(points.size());
  out.v.reserve(points.size());

  const double zeta = smoothing.kind == SmoothingSpec::Kind::isotropic_gaussian ? smoothing.zeta : 0.0;
  Vec u, grad, shifted;
  for (std::size_t pi = 0; pi < points.size(); ++pi) {
    const Vec& x = points[pi];
    Vec mean_grad;
    if (smoothing.kind == SmoothingSpec::Kind::none) {
      mean_grad = problem.gradient(Part::f, x);
    } else if (smoothing.kind == SmoothingSpec::Kind::isotropic_gaussian) {
      mean_grad = reference_smoothed_grad(problem, zeta, x,
                                          ReferenceMethod::monte_carlo(200000, lane_seed(seed, 90)));
    } else {
      // difference-family smoothed mean via its own Monte Carlo lane
      RandomStream rng(lane_seed(seed, 91), pi, 0, Purpose::reference);
      mean_grad.assign(problem.dimension(), 0.0);
      const std::size_t n_ref = 200000;
      for (std::size_t s = 0; s < n_ref; ++s) {
        sample_perturbation_into(smoothing, problem, x, rng, u);
        shifted = sub(x, u);
        problem.gradient_into(Part::f, shifted, grad);
        axpy(1.0, grad, mean_grad);
      }
      for (auto& g : mean_grad) g /= static_cast<double>(n_ref);
    }

    RandomStream rng(seed, pi, 0, Purpose::estimate);
    double acc = 0.0;
    for (std::size_t s = 0; s < draws; ++s) {
      sample_perturbation_into(smoothing, problem, x, rng, u);
      shifted = sub(x, u);
      stochastic_gradient_into(problem, shifted, noise, rng, grad);
      acc += dist_sq(grad, mean_grad);
    }
    out.b.push_back(norm_sq(mean_grad));
    out.v.push_back(acc / static_cast<double>(draws));
  }

  const EnvelopeFit fit = fit_upper_envelope(out.b, out.v, 1e3);
  out.sigma_prime_sq = fit.intercept;
  out.M_prime = fit.slope;
  out.residual = fit.residual;
  out.degenerate = fit.degenerate;
  return out;
}

StructureConstantsFit fit_structure_constants(const ProblemInstance& problem, double zeta,
                                              const std::vector<Vec>& points,
                                              StructureFitMode mode,
                                              const ReferenceMethod& reference) {
  if (points.empty()) throw std::invalid_argument("fit_structure_constants: need points");
  StructureConstantsFit out;
  out.b.reserve(points.size());
  out.v.reserve(points.size());

  std::vector<double> ratio_par;  // |r_g|^2 / ||grad g||^2 away from grad g = 0
  double max_b = 0.0;
  std::vector<Vec> rs(points.size());
  std::vector<Vec> ggs(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec gf_u = reference_smoothed_grad(problem, zeta, points[i], reference);
    ggs[i] = problem.gradient(Part::g, points[i]);
    rs[i] = sub(gf_u, ggs[i]);
    out.b.push_back(norm_sq(ggs[i]));
    out.v.push_back(norm_sq(rs[i]));
    max_b = std::max(max_b, out.b.back());
  }

  if (mode == StructureFitMode::norm) {
    const EnvelopeFit fit = fit_upper_envelope(out.b, out.v, 0.999);
    out.m = fit.slope;
    out.delta = fit.intercept;
    out.residual = fit.residual;
    return out;
  }

  const double zero_thresh = 1e-14 * (1.0 + max_b);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (out.b[i] <= zero_thresh) {
      // projection undefined; the whole residue is attributed to delta_perp
      ++out.zero_grad_points;
      out.delta_perp = std::max(out.delta_perp, out.v[i]);
      continue;
    }
    const double r_par = dot(rs[i], ggs[i]) / std::sqrt(out.b[i]);
    const double par_sq = r_par * r_par;
    const double perp_sq = std::max(0.0, out.v[i] - par_sq);
    ratio_par.push_back(par_sq / out.b[i]);
    out.delta_perp = std::max(out.delta_perp, perp_sq);
  }
  if (!ratio_par.empty()) out.m_par = *std::max_element(ratio_par.begin(), ratio_par.end());
  out.infeasible = out.m_par >= 1.0;
  out.m = out.m_par;
  out.delta = out.delta_perp;
  return out;
}

IterationBound iteration_bound(Theorem theorem, const TheoremConstants& c, double eps,
                               double initial_gap) {
  if (eps <= 0.0) throw std::invalid_argument("iteration_bound: need eps > 0");
  if (c.m >= 1.0) throw std::domain_error("iteration_bound: assumption violated, m >= 1");
  IterationBound out;
  out.gamma = theoretical_stepsize(theorem, c, eps);
  switch (theorem) {
    case Theorem::t1: {
      out.T = std::ceil(4.0 * initial_gap / (out.gamma * (1.0 - c.m) * eps));
      out.target = "mean ||grad g||^2 = O(eps + Delta/(1-m))";
      break;
    }
    case Theorem::t2: {
      const double rate = out.gamma * c.mu_g * (1.0 - c.m);
      const double logarg = std::max(initial_gap / eps, 1.0);
      out.T = std::ceil(std::max(1.0, std::log(logarg) / rate));
      out.target = "g-gap = O(eps + Delta/(mu_g (1-m)))";
      break;
    }
    case Theorem::t3: {
      const double rm = std::sqrt(c.m);
      const double m_minus = (1.0 - rm) * (1.0 - rm);
      const double m_plus = (1.0 + rm) * (1.0 + rm);
      const double beta = c.M_prime + 1.0;
      const double alpha = c.sigma_prime_sq + c.delta * beta;
      const double t1_pre = 2.0 * beta * c.L_g * m_plus / (c.mu_g * m_minus);
      const double t1_arg = 2.0 * c.L_g * beta * initial_gap * m_plus / (eps * m_minus);
      const double T1 = t1_arg > 1.0 ? t1_pre * std::log(t1_arg) : 0.0;
      double T2 = 0.0;
      if (alpha > 0.0) {
        const double denom = c.mu_g * eps * m_minus + 4.0 * c.delta;
        const double t2_arg = 4.0 * initial_gap * alpha * c.mu_g / (denom * eps);
        if (t2_arg > 1.0) T2 = 4.0 * alpha / denom * std::log(t2_arg);
      }
      out.T = std::ceil(std::max({T1, T2, 1.0}));
      out.target = "weighted g-gap = O(eps + 4 Delta/(mu_g (1-sqrt m)^2))";
      break;
    }
  }
  return out;
}

void StepStats::add_trajectory(std::span<const double> values) {
  if (stats_.empty()) stats_.resize(values.size());
  if (values.size() != stats_.size())
    throw std::invalid_argument("StepStats: trajectory length mismatch");
  for (std::size_t t = 0; t < values.size(); ++t) stats_[t].add(values[t]);
  ++replicas_;
}

WeightedGapStats::WeightedGapStats(double gamma, double mu_g, double m) : mu_g_(mu_g) {
  const double half_rate = gamma * mu_g * (1.0 - std::sqrt(m)) / 2.0;
  if (half_rate >= 1.0) throw std::domain_error("WeightedGapStats: contraction factor >= 1");
  rho_ = 1.0 - half_rate;
}

void WeightedGapStats::add_trajectory(std::span<const double> g_gap,
                                      std::span<const double> dist_sq_vals) {
  if (g_gap.size() != dist_sq_vals.size() || g_gap.size() < 2)
    throw std::invalid_argument("WeightedGapStats: need matching series of length >= 2");
  const std::size_t T = g_gap.size() - 1;  // series runs t = 0..T
  // prefix weighted averages with weights w_t = rho^{-(t+1)}; keeping the
  // sums scaled by rho^{t+1} avoids overflow for any horizon
  std::vector<double> f(T);
  double s = 0.0, w = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    s = g_gap[t] + rho_ * s;
    w = 1.0 + rho_ * w;
    f[t] = s / w + 0.5 * mu_g_ * dist_sq_vals[t + 1];
  }
  stats_.add_trajectory(f);
}

namespace {

EnvelopeReport make_report(Theorem theorem, double gamma, double cap) {
  EnvelopeReport rep;
  rep.theorem = theorem;
  rep.gamma = gamma;
  rep.applicable = gamma <= cap * (1.0 + 1e-12);
  return rep;
}

}  // namespace

EnvelopeReport envelope_check_t2(const StepStats& gap_stats, const TheoremConstants& c,
                                 double gamma, double G0) {
  EnvelopeReport rep = make_report(Theorem::t2, gamma, stepsize_cap(Theorem::t2, c));
  if (!rep.applicable) return rep;
  const double one_m = 1.0 - c.m;
  rep.xi = (c.delta + gamma * c.L_g * c.sigma_prime_sq) / (c.mu_g * one_m);
  const double rho = 1.0 - gamma * c.mu_g * one_m;
  const std::size_t n = gap_stats.steps();
  rep.bound.resize(n);
  rep.empirical.resize(n);
  rep.se.resize(n);
  double decay = 1.0;
  for (std::size_t t = 0; t < n; ++t) {
    rep.bound[t] = decay * G0 + 0.5 * rep.xi;
    rep.empirical[t] = gap_stats.mean(t);
    rep.se[t] = gap_stats.se(t);
    if (rep.empirical[t] > rep.bound[t] + 3.0 * rep.se[t]) ++rep.violations;
    decay *= rho;
  }
  rep.final_gap = rep.empirical.back();
  rep.final_bound = 0.5 * rep.xi;
  // the envelope's decay term is negligible at the horizons used but keeps
  // the zero-noise case (floor exactly 0, gap exponentially small) honest
  rep.floor_reached = rep.final_gap <= rep.bound.back() + 3.0 * rep.se.back();
  return rep;
}

EnvelopeReport envelope_check_t3(const WeightedGapStats& wstats, const TheoremConstants& c,
                                 double gamma, double d0) {
  EnvelopeReport rep = make_report(Theorem::t3, gamma, stepsize_cap(Theorem::t3, c));
  if (!rep.applicable) return rep;
  const double rm = std::sqrt(c.m);
  const double one_rm = 1.0 - rm;
  const double alpha = c.sigma_prime_sq + c.delta * (c.M_prime + 1.0);
  rep.xi = gamma * alpha / one_rm + 2.0 * c.delta / (c.mu_g * one_rm * one_rm);
  const StepStats& stats = wstats.stats();
  const std::size_t n = stats.steps();
  rep.bound.resize(n);
  rep.empirical.resize(n);
  rep.se.resize(n);
  const double head = d0 / (gamma * one_rm);
  const double rate = gamma * c.mu_g * one_rm / 2.0;
  for (std::size_t t = 0; t < n; ++t) {
    rep.bound[t] = head * std::exp(-rate * static_cast<double>(t)) + rep.xi;
    rep.empirical[t] = stats.mean(t);
    rep.se[t] = stats.se(t);
    if (rep.empirical[t] > rep.bound[t] + 3.0 * rep.se[t]) ++rep.violations;
  }
  rep.final_gap = rep.empirical.back();
  rep.final_bound = rep.bound.back();
  rep.floor_reached = rep.final_gap <= rep.final_bound + 3.0 * rep.se.back();
  return rep;
}

SmoothingSpec coupled_gaussian_smoothing(double gamma, double sigma2, std::size_t dim) {
  // u = gamma w in distribution: per-coordinate variance gamma^2 sigma^2,
  // i.e. normalized zeta = gamma sigma sqrt(d)
  return SmoothingSpec::gaussian(gamma * std::sqrt(sigma2 * static_cast<double>(dim)));
}

EquivalenceReport equivalence_report(const ProblemInstance& problem,
                                     const EquivalenceSetup& setup) {
  if (setup.replicas < 2) throw std::invalid_argument("equivalence_report: need replicas >= 2");
  if (setup.gamma <= 0.0) throw std::invalid_argument("equivalence_report: need gamma > 0");
  const std::size_t d = problem.dimension();
  const int T = setup.steps;

  // coupling sanity: gaussian noise must pair with the matched gaussian kernel
  if (setup.noise.kind == NoiseSpec::Kind::additive_gaussian &&
      setup.smoothing.kind == SmoothingSpec::Kind::isotropic_gaussian) {
    const double want = setup.gamma * std::sqrt(setup.noise.sigma2 * static_cast<double>(d));
    if (std::abs(setup.smoothing.zeta - want) > 1e-9 * (1.0 + want))
      throw std::invalid_argument("equivalence_report: smoothing is not gamma * noise");
  }

  std::vector<RunningStats> y_stats((T + 1) * d), z_stats((T + 1) * d);
  StepStats z_gap_stats;
  RunningStats lemma4_fn;

  std::optional<double> g_star;
  if (problem.constants().x_g_star)
    g_star = problem.value(Part::g, *problem.constants().x_g_star);
  else if (setup.g_star_ref)
    g_star = setup.g_star_ref;

  // weights for the averaged-iterate bound; any nonnegative weights are valid,
  // so fall back to uniform when the theorem-3 sequence is out of range
  Theorem3Weights weights;
  const double mu_for_weights = problem.constants().mu_g.value_or(1.0);
  try {
    weights = theorem3_weights(setup.gamma, mu_for_weights, 0.0, T);
  } catch (const std::domain_error&) {
    weights = theorem3_weights(0.0, mu_for_weights, 0.0, T);
  }

  std::vector<Vec> mean_y(T + 1, Vec(d, 0.0));
  RunningStats var_y_summary, var_z_summary;

  for (int r = 0; r < setup.replicas; ++r) {
    const Vec x0 = setup.init.draw(d, setup.seed, static_cast<std::uint64_t>(r));

    OptimizerConfig sgd_cfg;
    sgd_cfg.algorithm = Algorithm::sgd;
    sgd_cfg.gamma = setup.gamma;
    sgd_cfg.steps = T;
    sgd_cfg.init = InitSpec::fixed(x0);
    sgd_cfg.noise = setup.noise;
    sgd_cfg.seed = lane_seed(setup.seed, 10);
    sgd_cfg.replica = static_cast<std::uint64_t>(r);
    sgd_cfg.record_iterates = false;
    sgd_cfg.record_alternate = true;
    const Trajectory sgd_traj = run(problem, sgd_cfg);

    OptimizerConfig pgd_cfg;
    pgd_cfg.algorithm = Algorithm::perturbed_sgd;
    pgd_cfg.gamma = setup.gamma;
    pgd_cfg.steps = T;
    pgd_cfg.init = InitSpec::fixed(x0);
    pgd_cfg.smoothing = setup.smoothing;
    pgd_cfg.seed = lane_seed(setup.seed, 11);
    pgd_cfg.replica = static_cast<std::uint64_t>(r);
    pgd_cfg.record_iterates = true;
    pgd_cfg.g_star_ref = setup.g_star_ref;
    const Trajectory pgd_traj = run(problem, pgd_cfg);

    if (sgd_traj.diverged || pgd_traj.diverged)
      throw std::runtime_error("equivalence_report: a replica diverged; reduce gamma");

    for (std::size_t i = 0; i < d; ++i) {
      y_stats[i].add(x0[i]);  // y_0 = x_0
      z_stats[i].add(pgd_traj.iterates[0][i]);
    }
    for (int t = 1; t <= T; ++t) {
      const Vec& y = sgd_traj.alternates[t - 1];
      const Vec& z = pgd_traj.iterates[t];
      for (std::size_t i = 0; i < d; ++i) {
        y_stats[t * d + i].add(y[i]);
        z_stats[t * d + i].add(z[i]);
        mean_y[t][i] += y[i];
      }
    }
    for (std::size_t i = 0; i < d; ++i) mean_y[0][i] += x0[i];

    if (g_star) {
      std::vector<double> gap(T + 1);
      for (int t = 0; t <= T; ++t) gap[t] = pgd_traj.g_values[t] - *g_star;
      z_gap_stats.add_trajectory(gap);
      lemma4_fn.add(weights.weighted_gap(gap));
    }
  }

  EquivalenceReport rep;
  rep.steps = T;
  rep.dim = static_cast<int>(d);
  const double n = static_cast<double>(setup.replicas);
  const double z_bonf = d == 1 ? kZ99 : normal_quantile(1.0 - 0.005 / static_cast<double>(d));
  rep.rows.reserve((T + 1) * d);
  for (int t = 0; t <= T; ++t) {
    bool step_ok = true;
    for (std::size_t i = 0; i < d; ++i) {
      const RunningStats& ys = y_stats[t * d + i];
      const RunningStats& zs = z_stats[t * d + i];
      EquivalenceRow row;
      row.step = t;
      row.component = static_cast<int>(i);
      row.mean_y = ys.mean();
      row.sd_y = ys.sd();
      row.mean_z = zs.mean();
      row.sd_z = zs.sd();
      row.diff = row.mean_y - row.mean_z;
      const double pooled = std::sqrt(ys.variance() / n + zs.variance() / n);
      row.ci_lo = -kZ99 * pooled;
      row.ci_hi = kZ99 * pooled;
      if (std::abs(row.diff) > z_bonf * pooled) step_ok = false;
      rep.rows.push_back(row);
      var_y_summary.add(ys.variance());
      var_z_summary.add(zs.variance());
    }
    if (t >= 1 && step_ok) ++rep.steps_within_ci;
  }
  rep.fraction_within_ci = T > 0 ? static_cast<double>(rep.steps_within_ci) / T : 1.0;
  rep.mean_var_y = var_y_summary.mean();
  rep.mean_var_z = var_z_summary.mean();

  if (g_star) {
    Vec ybar(d, 0.0);
    for (int t = 0; t <= T; ++t)
      for (std::size_t i = 0; i < d; ++i) ybar[i] += weights.normalized[t] * mean_y[t][i] / n;
    rep.lemma4_lhs = problem.value(Part::g, ybar) - *g_star;
    rep.lemma4_rhs = lemma4_fn.mean();
    rep.lemma4_rhs_se = lemma4_fn.se();
    rep.lemma4_holds = rep.lemma4_lhs <= rep.lemma4_rhs + 3.0 * rep.lemma4_rhs_se;
  }
  return rep;
}

std::vector<double> stationary_points_1d(const ProblemInstance& problem, double lo, double hi,
                                         std::size_t grid, double tol) {
  if (problem.dimension() != 1)
    throw std::invalid_argument("stationary_points_1d: one-dimensional problems only");
  if (!(hi > lo)) throw std::invalid_argument("stationary_points_1d: need hi > lo");
  auto fp = [&](double x) {
    const double pt[1] = {x};
    return problem.gradient(Part::f, pt)[0];
  };
  std::vector<double> roots;
  const double h = (hi - lo) / static_cast<double>(grid);
  double xa = lo, fa = fp(xa);
  for (std::size_t i = 1; i <= grid; ++i) {
    const double xb = lo + h * static_cast<double>(i);
    const double fb = fp(xb);
    if (fa == 0.0) roots.push_back(xa);
    if (fa * fb < 0.0) {
      double a = xa, b = xb, va = fa;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (a + b);
        const double vm = fp(mid);
        if (std::abs(vm) <= tol || (b - a) < 1e-15 * (1.0 + std::abs(mid))) {
          a = b = mid;
          break;
        }
        if (va * vm < 0.0) {
          b = mid;
        } else {
          a = mid;
          va = vm;
        }
      }
      roots.push_back(0.5 * (a + b));
    }
    xa = xb;
    fa = fb;
  }
  if (fa == 0.0) roots.push_back(xa);
  std::sort(roots.begin(), roots.end());
  // drop duplicates from adjacent cells
  std::vector<double> unique_roots;
  for (double r : roots)
    if (unique_roots.empty() || r - unique_roots.back() > 10.0 * h * 1e-6 + 1e-12)
      unique_roots.push_back(r);
  return unique_roots;
}

MinimaGapReport minima_gap_bounds(const ProblemInstance& problem, double lo, double hi, double B1,
                                  double B2) {
  if (!problem.constants().mu_g)
    throw std::invalid_argument("minima_gap_bounds: mu_g unknown, not applicable");
  if (!problem.constants().x_g_star)
    throw std::invalid_argument("minima_gap_bounds: x_g_star unknown, not applicable");
  const double mu = *problem.constants().mu_g;
  const Vec& xg = *problem.constants().x_g_star;

  const std::vector<double> stationary = stationary_points_1d(problem, lo, hi);
  if (stationary.empty()) throw std::runtime_error("minima_gap_bounds: no stationary points found");

  MinimaGapReport rep;
  double best_f = std::numeric_limits<double>::infinity();
  double best_x = stationary.front();
  for (double s : stationary) {
    const double pt[1] = {s};
    const double fv = problem.value(Part::f, pt);
    if (fv < best_f) {
      best_f = fv;
      best_x = s;
    }
  }
  rep.x_star_f = Vec{best_x};

  const double hx_star = problem.value(Part::h, rep.x_star_f);
  const double hx_g = problem.value(Part::h, xg);
  rep.lhs = dist_sq(rep.x_star_f, xg);
  rep.rhs_printed = 2.0 / mu * (hx_star - hx_g);
  rep.rhs_proof = 2.0 / mu * (hx_g - hx_star);
  const auto holds = [](double lhs, double rhs) { return lhs <= rhs + 1e-9 * (1.0 + std::abs(rhs)); };
  rep.printed_holds = holds(rep.lhs, rep.rhs_printed);
  rep.proof_holds = holds(rep.lhs, rep.rhs_proof);

  const double g_star = problem.value(Part::g, xg);
  const double tol = 1e-9;
  std::vector<double> f_values;
  for (double s : stationary) {
    const double pt[1] = {s};
    MinimaGapReport::StationaryCheck chk;
    chk.x = s;
    chk.g_value = problem.value(Part::g, pt);
    chk.f_value = problem.value(Part::f, pt);
    f_values.push_back(chk.f_value);
    chk.pl_clause = chk.g_value >= g_star - tol && chk.g_value <= g_star + B2 / (2.0 * mu) + tol;
    chk.strong_clause = (s - xg[0]) * (s - xg[0]) <= B2 / (mu * mu) + tol;
    chk.value_clause = chk.f_value >= g_star - B1 - tol &&
                       chk.f_value <= g_star + B1 + B2 / (2.0 * mu) + tol;
    if (!chk.pl_clause || !chk.strong_clause || !chk.value_clause) ++rep.violations;
    rep.stationary_checks.push_back(chk);
  }
  const double pair_cap = 2.0 * B1 + B2 / (2.0 * mu) + tol;
  for (std::size_t i = 0; i < f_values.size() && rep.pairwise_clause; ++i)
    for (std::size_t j = i + 1; j < f_values.size(); ++j)
      if (std::abs(f_values[i] - f_values[j]) > pair_cap) {
        rep.pairwise_clause = false;
        ++rep.violations;
        break;
      }
  return rep;
}

}  // namespace psgd
