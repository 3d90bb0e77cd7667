#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>

#include "psgd/linalg.hpp"
#include "psgd/rng.hpp"

namespace psgd {

enum class Family { toy_sine, valley, quadratic, finite_sum, custom };
enum class Part { f, g, h };

// Binary-classification dataset backing the finite-sum problem.
// `features` is row-major n x d, without the bias column.
struct Dataset {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> features;
  std::vector<int> labels;  // 0/1

  std::span<const double> row(std::size_t i) const { return {features.data() + i * d, d}; }
};

// Two Gaussian blobs with separated means, deterministic in the seed.
Dataset make_blobs(std::size_t n, std::size_t d, std::uint64_t seed);

// CSV format: header "label,f1,...,fd", one sample per row.
void write_dataset_csv(const Dataset& ds, const std::string& path);
Dataset load_dataset_csv(const std::string& path);

struct ProblemConstants {
  std::optional<double> L_g;       // smoothness of g
  std::optional<double> mu_g;      // strong convexity / PL constant of g
  std::optional<Vec> x_g_star;     // minimizer of g
};

struct ScalarFn {
  std::function<double(std::span<const double>)> value;
  std::function<Vec(std::span<const double>)> gradient;
};

// An objective f = g + h with exact oracles for every part. Immutable after
// construction; all member calls are const and thread-safe.
class ProblemInstance {
 public:
  static ProblemInstance toy_sine(double a, double b);
  static ProblemInstance valley(std::size_t dim, double alpha, double lambda);
  static ProblemInstance quadratic(std::size_t dim);
  // Logistic regression with cross-entropy terms; a constant-1 bias column is
  // appended, so dimension() == ds.d + 1.
  static ProblemInstance finite_sum(Dataset ds);
  static ProblemInstance custom(std::size_t dim, ScalarFn g, ScalarFn h, ProblemConstants constants);

  Family family() const { return family_; }
  std::size_t dimension() const { return dim_; }
  const ProblemConstants& constants() const { return constants_; }

  double value(Part part, std::span<const double> x) const;
  Vec gradient(Part part, std::span<const double> x) const;
  void gradient_into(Part part, std::span<const double> x, Vec& out) const;

  // finite-sum term oracles
  std::size_t term_count() const;
  double term_value(std::size_t i, std::span<const double> x) const;
  void term_gradient_into(std::size_t i, std::span<const double> x, Vec& out) const;
  Vec term_gradient(std::size_t i, std::span<const double> x) const;
  const Dataset& dataset() const;

  double toy_a() const { return a_; }
  double toy_b() const { return b_; }
  double valley_alpha() const { return a_; }
  double valley_lambda() const { return b_; }

 private:
  ProblemInstance() = default;
  void check_input(std::span<const double> x) const;

  Family family_ = Family::quadratic;
  std::size_t dim_ = 1;
  double a_ = 0.0, b_ = 0.0;  // ToySine (a, b) or Valley (alpha, lambda)
  Dataset data_;              // finite-sum; features already bias-augmented
  ScalarFn g_, h_;            // custom
  ProblemConstants constants_;
};

// Logistic-regression problem builders over the two data sources.
ProblemInstance build_finite_sum_synthetic(std::size_t n, std::size_t d, std::uint64_t seed);
ProblemInstance build_finite_sum_from_csv(const std::string& path);

struct NoiseSpec {
  enum class Kind { none, additive_gaussian, single_index };
  Kind kind = Kind::none;
  double sigma2 = 0.0;  // per-coordinate variance of the additive noise

  static NoiseSpec none() { return {}; }
  static NoiseSpec gaussian(double sigma2) {
    return {Kind::additive_gaussian, sigma2};
  }
  static NoiseSpec single_index() { return {Kind::single_index, 0.0}; }
};

// One stochastic gradient sample: grad f(x) plus a zero-mean perturbation.
Vec stochastic_gradient(const ProblemInstance& problem, std::span<const double> x,
                        const NoiseSpec& noise, RandomStream& rng);
void stochastic_gradient_into(const ProblemInstance& problem, std::span<const double> x,
                              const NoiseSpec& noise, RandomStream& rng, Vec& out);

// Closed-form Gaussian smoothing of the toy objective x^2 + a x sin(bx) with
// u ~ N(0, zeta^2). The gradient uses the convolution derivative
//   grad h_U(x) = a e^{-b^2 zeta^2 / 2} ((1 - b^2 zeta^2) sin(bx) + b x cos(bx)),
// which agrees with quadrature for every b (see tests for the b != 1 pitfall
// of the (1 - b zeta^2) variant).
struct ToySmoothedPoint {
  double f_U;
  double grad_f_U;
  double grad_g_U;
  double grad_h_U;
};
ToySmoothedPoint toy_smoothed_closed_form(double a, double b, double zeta, double x);

// Closed-form smoothed Gaussian-bump term of the valley objective, with
// per-coordinate smoothing variance zeta^2 (test oracle for d > 1 references).
double valley_smoothed_h(double alpha, double lambda, double zeta, double x1);
double valley_smoothed_h_grad(double alpha, double lambda, double zeta, double x1);

// Closed-form (m, Delta) for the structural assumption at smoothing level
// zeta. ToySine: m = a^2 b^2 e^{-b^2 zeta^2}/4, Delta = a^2 b^2 e^{-b^2 zeta^2}
// (b zeta^2 - 1)^2. Valley: with zeta = k*lambda (per-coordinate deviation),
// m = Delta = alpha^2 k^4 / ((k^2+1)^3 lambda^4). Throws std::domain_error
// when the resulting m >= 1 (assumption not satisfiable at this zeta).
struct StructureConstants {
  double m = 0.0;
  double delta = 0.0;
};
StructureConstants analytic_assumption_constants(const ProblemInstance& problem, double zeta);

}  // namespace psgd
