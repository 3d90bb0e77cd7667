#include "psgd/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace psgd {

Vec InitSpec::draw(std::size_t dim, std::uint64_t seed, std::uint64_t replica) const {
  if (kind == Kind::fixed) {
    if (x0.size() != dim) throw std::invalid_argument("InitSpec: x0 dimension mismatch");
    return x0;
  }
  RandomStream rng(seed, replica, 0, Purpose::init);
  Vec x(dim);
  for (auto& v : x) v = rng.uniform(lo, hi);
  return x;
}

namespace {

void validate(const ProblemInstance& problem, const OptimizerConfig& c) {
  if (c.gamma <= 0.0) throw std::invalid_argument("run: need gamma > 0");
  if (c.steps < 1) throw std::invalid_argument("run: need steps >= 1");
  const bool has_noise = c.noise.kind != NoiseSpec::Kind::none &&
                         !(c.noise.kind == NoiseSpec::Kind::additive_gaussian && c.noise.sigma2 == 0.0);
  const bool has_smoothing = c.smoothing.kind != SmoothingSpec::Kind::none;
  switch (c.algorithm) {
    case Algorithm::gd:
      if (has_noise || has_smoothing)
        throw std::invalid_argument("run: GD carries neither noise nor smoothing");
      break;
    case Algorithm::sgd:
      if (has_smoothing) throw std::invalid_argument("run: SGD carries no smoothing");
      break;
    case Algorithm::perturbed_sgd:
      break;
  }
  if (c.noise.kind == NoiseSpec::Kind::single_index && problem.family() != Family::finite_sum)
    throw std::invalid_argument("run: single-index noise needs a finite-sum problem");
  if ((c.smoothing.kind == SmoothingSpec::Kind::pair_difference ||
       c.smoothing.kind == SmoothingSpec::Kind::full_batch_difference) &&
      problem.family() != Family::finite_sum)
    throw std::invalid_argument("run: difference smoothing needs a finite-sum problem");
}

}  // namespace

Trajectory run(const ProblemInstance& problem, const OptimizerConfig& config) {
  validate(problem, config);
  const std::size_t d = problem.dimension();
  Vec x = config.init.draw(d, config.seed, config.replica);
  require_finite(x, "run: x0");

  std::optional<double> g_star;
  if (problem.constants().x_g_star)
    g_star = problem.value(Part::g, *problem.constants().x_g_star);
  else if (config.g_star_ref)
    g_star = *config.g_star_ref;

  Trajectory traj;
  const int T = config.steps;
  traj.f_values.reserve(T + 1);
  traj.g_values.reserve(T + 1);
  traj.grad_g_sq.reserve(T + 1);
  traj.g_gap.reserve(T + 1);
  if (config.record_iterates) traj.iterates.reserve(T + 1);

  Vec grad_g, grad, u, point(d);
  const bool want_alternate = config.record_alternate && config.algorithm == Algorithm::sgd;

  const Vec* xg = problem.constants().x_g_star ? &*problem.constants().x_g_star : nullptr;
  auto record = [&](const Vec& xi) {
    const double fv = problem.value(Part::f, xi);
    const double gv = problem.value(Part::g, xi);
    problem.gradient_into(Part::g, xi, grad_g);
    traj.f_values.push_back(fv);
    traj.g_values.push_back(gv);
    traj.grad_g_sq.push_back(norm_sq(grad_g));
    traj.g_gap.push_back(g_star ? gv - *g_star : std::numeric_limits<double>::quiet_NaN());
    if (xg) traj.dist_g_star.push_back(dist_sq(xi, *xg));
    if (config.record_iterates) traj.iterates.push_back(xi);
    return std::isfinite(fv) && std::isfinite(gv);
  };

  if (!record(x)) {
    traj.diverged = true;
    traj.truncated_at = 0;
    traj.last = x;
    return traj;
  }

  for (int t = 0; t < T; ++t) {
    // sample u_t, then the (possibly noisy) gradient at x_t - u_t
    const std::uint64_t step = static_cast<std::uint64_t>(t);
    if (config.algorithm == Algorithm::perturbed_sgd &&
        config.smoothing.kind != SmoothingSpec::Kind::none) {
      RandomStream rng_u(config.seed, config.replica, step, Purpose::smoothing);
      sample_perturbation_into(config.smoothing, problem, x, rng_u, u);
      for (std::size_t i = 0; i < d; ++i) point[i] = x[i] - u[i];
    } else {
      point = x;
    }
    if (config.algorithm == Algorithm::gd || config.noise.kind == NoiseSpec::Kind::none) {
      problem.gradient_into(Part::f, point, grad);
    } else {
      RandomStream rng_xi(config.seed, config.replica, step, Purpose::grad_noise);
      stochastic_gradient_into(problem, point, config.noise, rng_xi, grad);
    }

    if (want_alternate) {
      Vec y(d);
      Vec full = problem.gradient(Part::f, x);
      for (std::size_t i = 0; i < d; ++i) y[i] = x[i] - config.gamma * full[i];
      traj.alternates.push_back(std::move(y));
    }

    for (std::size_t i = 0; i < d; ++i) x[i] -= config.gamma * grad[i];

    if (!all_finite(x) || !record(x)) {
      traj.diverged = true;
      traj.truncated_at = t + 1;
      if (want_alternate) traj.alternates.pop_back();
      break;
    }
  }
  traj.last = x;
  return traj;
}

double stepsize_cap(Theorem theorem, const TheoremConstants& c) {
  if (c.m >= 1.0) throw std::domain_error("stepsize_cap: assumption violated, m >= 1");
  if (c.L_g <= 0.0) throw std::invalid_argument("stepsize_cap: need L_g > 0");
  const double base = c.L_g * (c.M_prime + 1.0);
  if (theorem == Theorem::t3) {
    const double rm = std::sqrt(c.m);
    return (1.0 - rm) / (base * (1.0 + rm) * (1.0 + rm));
  }
  return 1.0 / base;
}

double theoretical_stepsize(Theorem theorem, const TheoremConstants& c, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("theoretical_stepsize: need eps > 0");
  if (c.m >= 1.0) throw std::domain_error("theoretical_stepsize: assumption violated, m >= 1");
  const double cap = stepsize_cap(theorem, c);
  const double inf = std::numeric_limits<double>::infinity();
  double noise_branch = inf;
  switch (theorem) {
    case Theorem::t1:
      if (c.sigma_prime_sq > 0.0)
        noise_branch = (eps * (1.0 - c.m) + c.delta) / (2.0 * c.L_g * c.sigma_prime_sq);
      break;
    case Theorem::t2:
      if (c.sigma_prime_sq > 0.0)
        noise_branch = (eps * (1.0 - c.m) * c.mu_g + c.delta) / (c.L_g * c.sigma_prime_sq);
      break;
    case Theorem::t3: {
      const double rm = std::sqrt(c.m);
      const double alpha = c.sigma_prime_sq + c.delta * (c.M_prime + 1.0);
      if (alpha > 0.0) {
        const double m_minus = (1.0 - rm) * (1.0 - rm);
        noise_branch = (c.mu_g * eps * m_minus + 4.0 * c.delta) /
                       (2.0 * alpha * (1.0 - rm) * c.mu_g);
      }
      break;
    }
  }
  return std::min(cap, noise_branch);
}

std::vector<double> default_stepsize_grid() {
  // geometric spacing, endpoints included: 1e-5, 10^(-10/3), 10^(-5/3), 1
  return {1e-5, std::pow(10.0, -10.0 / 3.0), std::pow(10.0, -5.0 / 3.0), 1.0};
}

double grid_search_stepsize(const ProblemInstance& problem, const OptimizerConfig& config_template,
                            const std::vector<double>& grid, SearchCriterion criterion,
                            int replicas) {
  if (grid.empty()) throw std::invalid_argument("grid_search_stepsize: empty grid");
  if (replicas < 1) throw std::invalid_argument("grid_search_stepsize: need replicas >= 1");
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());

  double best = std::numeric_limits<double>::infinity();
  double best_gamma = 0.0;
  bool any_finite = false;
  for (std::size_t gi = 0; gi < sorted.size(); ++gi) {
    double acc = 0.0;
    bool finite = true;
    for (int r = 0; r < replicas && finite; ++r) {
      OptimizerConfig cfg = config_template;
      cfg.gamma = sorted[gi];
      cfg.seed = lane_seed(config_template.seed, 1 + gi);
      cfg.replica = static_cast<std::uint64_t>(r);
      cfg.record_iterates = false;
      cfg.record_alternate = false;
      const Trajectory traj = run(problem, cfg);
      double v;
      if (traj.diverged) {
        v = std::numeric_limits<double>::infinity();
      } else if (criterion == SearchCriterion::final_f) {
        v = traj.f_values.back();
      } else {
        v = traj.g_gap.back();
      }
      if (!std::isfinite(v)) finite = false;
      acc += v;
    }
    const double mean = finite ? acc / replicas : std::numeric_limits<double>::infinity();
    if (std::isfinite(mean)) any_finite = true;
    if (mean < best) {
      best = mean;
      best_gamma = sorted[gi];
    }
  }
  if (!any_finite)
    throw std::runtime_error("grid_search_stepsize: no viable step size, every run diverged");
  return best_gamma;
}

Theorem3Weights theorem3_weights(double gamma, double mu_g, double m, int T) {
  if (T < 0) throw std::invalid_argument("theorem3_weights: need T >= 0");
  if (m < 0.0 || m >= 1.0) throw std::invalid_argument("theorem3_weights: need m in [0,1)");
  const double half_rate = gamma * mu_g * (1.0 - std::sqrt(m)) / 2.0;
  if (half_rate >= 1.0)
    throw std::domain_error("theorem3_weights: contraction factor >= 1");
  Theorem3Weights w;
  w.rho = 1.0 - half_rate;
  // normalized w_t = rho^{T-t} (1-rho) / (1 - rho^{T+1}); log-domain keeps the
  // powers representable for any T
  w.normalized.resize(T + 1);
  if (half_rate == 0.0) {
    std::fill(w.normalized.begin(), w.normalized.end(), 1.0 / (T + 1.0));
    return w;
  }
  const double log_rho = std::log1p(-half_rate);
  // 1 - rho^{T+1} = -expm1((T+1) log rho)
  const double denom = -std::expm1((T + 1) * log_rho);
  for (int t = 0; t <= T; ++t)
    w.normalized[t] = std::exp((T - t) * log_rho) * half_rate / denom;
  return w;
}

double Theorem3Weights::weighted_gap(std::span<const double> g_gap) const {
  if (g_gap.size() != normalized.size())
    throw std::invalid_argument("weighted_gap: length mismatch with weights");
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < normalized.size(); ++t) {
    num += normalized[t] * g_gap[t];
    den += normalized[t];
  }
  return num / den;
}

}  // namespace psgd
