#include "psgd/smoothing.hpp"

#include <cmath>
#include <stdexcept>

#include "psgd/gauss_hermite.hpp"

namespace psgd {

void sample_perturbation_into(const SmoothingSpec& spec, const ProblemInstance& problem,
                              std::span<const double> x, RandomStream& rng, Vec& out) {
  require_dim(x, problem.dimension(), "sample_perturbation");
  require_finite(x, "sample_perturbation");
  const std::size_t d = problem.dimension();
  switch (spec.kind) {
    case SmoothingSpec::Kind::none:
      out.assign(d, 0.0);
      return;
    case SmoothingSpec::Kind::isotropic_gaussian: {
      out.resize(d);
      const double sd = spec.zeta / std::sqrt(static_cast<double>(d));
      rng.fill_gaussian(out, sd);
      return;
    }
    case SmoothingSpec::Kind::pair_difference: {
      if (problem.family() != Family::finite_sum)
        throw std::invalid_argument("sample_perturbation: pair difference needs a finite sum");
      const std::size_t n = problem.term_count();
      const std::size_t k = rng.next_index(n);
      const std::size_t j = rng.next_index(n);
      Vec gk, gj;
      problem.term_gradient_into(k, x, gk);
      problem.term_gradient_into(j, x, gj);
      out.resize(d);
      for (std::size_t i = 0; i < d; ++i) out[i] = spec.gamma * (gk[i] - gj[i]);
      return;
    }
    case SmoothingSpec::Kind::full_batch_difference: {
      if (problem.family() != Family::finite_sum)
        throw std::invalid_argument("sample_perturbation: full-batch difference needs a finite sum");
      const std::size_t n = problem.term_count();
      const std::size_t k = rng.next_index(n);
      Vec gk, gf;
      problem.term_gradient_into(k, x, gk);
      problem.gradient_into(Part::f, x, gf);
      out.resize(d);
      for (std::size_t i = 0; i < d; ++i) out[i] = spec.gamma * (gk[i] - gf[i]);
      return;
    }
  }
}

Vec sample_perturbation(const SmoothingSpec& spec, const ProblemInstance& problem,
                        std::span<const double> x, RandomStream& rng) {
  Vec out;
  sample_perturbation_into(spec, problem, x, rng, out);
  return out;
}

Vec smoothed_grad_reference(const ProblemInstance& problem, double zeta,
                            std::span<const double> x, const ReferenceMethod& method) {
  require_dim(x, problem.dimension(), "smoothed_grad_reference");
  if (zeta < 0.0) throw std::invalid_argument("smoothed_grad_reference: need zeta >= 0");
  const std::size_t d = problem.dimension();
  if (zeta == 0.0) return problem.gradient(Part::f, x);
  if (method.kind == ReferenceMethod::Kind::quadrature) {
    if (d != 1)
      throw std::invalid_argument("smoothed_grad_reference: quadrature is one-dimensional only");
    const double g = gaussian_expectation(
        [&](double v) {
          const double pt[1] = {v};
          return problem.gradient(Part::f, pt)[0];
        },
        x[0], zeta);
    return Vec{g};
  }
  const double sd = zeta / std::sqrt(static_cast<double>(d));
  RandomStream rng(method.seed, 0, 0, Purpose::reference);
  Vec acc(d, 0.0), pt(d), grad;
  for (std::size_t s = 0; s < method.samples; ++s) {
    for (std::size_t i = 0; i < d; ++i) pt[i] = x[i] - sd * rng.next_gaussian();
    problem.gradient_into(Part::f, pt, grad);
    axpy(1.0, grad, acc);
  }
  for (auto& v : acc) v /= static_cast<double>(method.samples);
  return acc;
}

double smoothed_value_reference(const ProblemInstance& problem, Part part, double zeta,
                                std::span<const double> x, const ReferenceMethod& method) {
  require_dim(x, problem.dimension(), "smoothed_value_reference");
  if (zeta == 0.0) return problem.value(part, x);
  const std::size_t d = problem.dimension();
  if (method.kind == ReferenceMethod::Kind::quadrature) {
    if (d != 1)
      throw std::invalid_argument("smoothed_value_reference: quadrature is one-dimensional only");
    return gaussian_expectation(
        [&](double v) {
          const double pt[1] = {v};
          return problem.value(part, pt);
        },
        x[0], zeta);
  }
  const double sd = zeta / std::sqrt(static_cast<double>(d));
  RandomStream rng(method.seed, 0, 0, Purpose::reference);
  double acc = 0.0;
  Vec pt(d);
  for (std::size_t s = 0; s < method.samples; ++s) {
    for (std::size_t i = 0; i < d; ++i) pt[i] = x[i] - sd * rng.next_gaussian();
    acc += problem.value(part, pt);
  }
  return acc / static_cast<double>(method.samples);
}

double single_index_variance_exact(const ProblemInstance& problem, std::span<const double> x) {
  const std::size_t n = problem.term_count();
  const Vec full = problem.gradient(Part::f, x);
  double acc = 0.0;
  Vec gi;
  for (std::size_t i = 0; i < n; ++i) {
    problem.term_gradient_into(i, x, gi);
    acc += dist_sq(gi, full);
  }
  return acc / static_cast<double>(n);
}

double pair_difference_Eu2_exact(const ProblemInstance& problem, std::span<const double> x,
                                 double gamma) {
  const std::size_t n = problem.term_count();
  std::vector<Vec> grads(n);
  for (std::size_t i = 0; i < n; ++i) problem.term_gradient_into(i, x, grads[i]);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j) acc += dist_sq(grads[k], grads[j]);
  return gamma * gamma * acc / static_cast<double>(n * n);
}

double full_batch_difference_Eu2_exact(const ProblemInstance& problem,
                                       std::span<const double> x, double gamma) {
  return gamma * gamma * single_index_variance_exact(problem, x);
}

VarianceCheck perturbation_variance_check(const SmoothingSpec& spec,
                                          const ProblemInstance& problem,
                                          std::span<const double> x, double gamma,
                                          std::size_t n_draws, std::uint64_t seed) {
  if (n_draws < 1000) throw std::invalid_argument("perturbation_variance_check: need >= 1000 draws");
  VarianceCheck out;
  const bool is_difference = spec.kind == SmoothingSpec::Kind::pair_difference ||
                             spec.kind == SmoothingSpec::Kind::full_batch_difference;
  SmoothingSpec eff = spec;
  if (is_difference && gamma > 0.0) eff.gamma = gamma;

  // exact enumeration whenever the outcome space is small
  if (is_difference && problem.term_count() <= 64) {
    out.exhaustive = true;
    out.empirical_Eu2 = eff.kind == SmoothingSpec::Kind::pair_difference
                            ? pair_difference_Eu2_exact(problem, x, eff.gamma)
                            : full_batch_difference_Eu2_exact(problem, x, eff.gamma);
  } else {
    RandomStream rng(seed, 0, 0, Purpose::estimate);
    Vec u;
    double acc = 0.0;
    for (std::size_t s = 0; s < n_draws; ++s) {
      sample_perturbation_into(eff, problem, x, rng, u);
      acc += norm_sq(u);
    }
    out.empirical_Eu2 = acc / static_cast<double>(n_draws);
  }

  switch (eff.kind) {
    case SmoothingSpec::Kind::none:
      out.bound_rhs = 0.0;
      out.pair_vs_sgd_ratio = 1.0;
      break;
    case SmoothingSpec::Kind::isotropic_gaussian:
      out.bound_rhs = eff.zeta * eff.zeta;  // Z = 0 case
      out.pair_vs_sgd_ratio = out.bound_rhs > 0.0 ? out.empirical_Eu2 / out.bound_rhs : 1.0;
      break;
    case SmoothingSpec::Kind::pair_difference: {
      const double sgd_var = single_index_variance_exact(problem, x);
      out.bound_rhs = 2.0 * eff.gamma * eff.gamma * sgd_var;
      out.pair_vs_sgd_ratio = out.bound_rhs > 0.0 ? out.empirical_Eu2 / out.bound_rhs : 1.0;
      break;
    }
    case SmoothingSpec::Kind::full_batch_difference: {
      const double sgd_var = single_index_variance_exact(problem, x);
      out.bound_rhs = eff.gamma * eff.gamma * sgd_var;
      out.pair_vs_sgd_ratio = out.bound_rhs > 0.0 ? out.empirical_Eu2 / out.bound_rhs : 1.0;
      break;
    }
  }
  return out;
}

}  // namespace psgd
