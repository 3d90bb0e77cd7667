#pragma once

#include "psgd/problems.hpp"

namespace psgd {

// Perturbation distribution U(x). IsotropicGaussian follows the normalized
// kernel N(0, zeta^2/d I_d), so E||u||^2 = zeta^2 for every dimension. The
// finite-sum families draw gradient differences and need a step scale gamma.
struct SmoothingSpec {
  enum class Kind { none, isotropic_gaussian, pair_difference, full_batch_difference };
  Kind kind = Kind::none;
  double zeta = 0.0;
  double gamma = 0.0;

  static SmoothingSpec none() { return {}; }
  static SmoothingSpec gaussian(double zeta) {
    if (zeta < 0.0) throw std::invalid_argument("SmoothingSpec: need zeta >= 0");
    return {Kind::isotropic_gaussian, zeta, 0.0};
  }
  static SmoothingSpec pair_difference(double gamma) {
    if (gamma <= 0.0) throw std::invalid_argument("SmoothingSpec: need gamma > 0");
    return {Kind::pair_difference, 0.0, gamma};
  }
  static SmoothingSpec full_batch_difference(double gamma) {
    if (gamma <= 0.0) throw std::invalid_argument("SmoothingSpec: need gamma > 0");
    return {Kind::full_batch_difference, 0.0, gamma};
  }
};

void sample_perturbation_into(const SmoothingSpec& spec, const ProblemInstance& problem,
                              std::span<const double> x, RandomStream& rng, Vec& out);
Vec sample_perturbation(const SmoothingSpec& spec, const ProblemInstance& problem,
                        std::span<const double> x, RandomStream& rng);

// High-accuracy grad f_U(x) for Gaussian smoothing with E||u||^2 = zeta^2.
// Quadrature (64-node Gauss-Hermite) is exact enough for every integrand in
// this suite but only exists in dimension 1; Monte Carlo covers d > 1.
struct ReferenceMethod {
  enum class Kind { quadrature, monte_carlo };
  Kind kind = Kind::quadrature;
  std::size_t samples = 100000;
  std::uint64_t seed = 1;

  static ReferenceMethod quadrature() { return {}; }
  static ReferenceMethod monte_carlo(std::size_t samples, std::uint64_t seed = 1) {
    return {Kind::monte_carlo, samples, seed};
  }
};
Vec smoothed_grad_reference(const ProblemInstance& problem, double zeta,
                            std::span<const double> x, const ReferenceMethod& method);
double smoothed_value_reference(const ProblemInstance& problem, Part part, double zeta,
                                std::span<const double> x, const ReferenceMethod& method);

// Empirical E||u||^2 against the variance bound, plus the pair-vs-SGD
// variance ratio E||u||^2 / (2 gamma^2 E||w||^2) for PairDifference.
struct VarianceCheck {
  double empirical_Eu2 = 0.0;
  double bound_rhs = 0.0;          // zeta^2 for Gaussian (Z = 0), else the exact target
  double pair_vs_sgd_ratio = 1.0;  // meaningful for the difference families
  bool exhaustive = false;         // true when computed by full index enumeration
};
VarianceCheck perturbation_variance_check(const SmoothingSpec& spec,
                                          const ProblemInstance& problem,
                                          std::span<const double> x, double gamma,
                                          std::size_t n_draws, std::uint64_t seed);

// Exact moments by enumerating all index outcomes (finite-sum families).
double single_index_variance_exact(const ProblemInstance& problem, std::span<const double> x);
double pair_difference_Eu2_exact(const ProblemInstance& problem, std::span<const double> x,
                                 double gamma);
double full_batch_difference_Eu2_exact(const ProblemInstance& problem,
                                       std::span<const double> x, double gamma);

}  // namespace psgd
