#pragma once

#include "psgd/smoothing.hpp"

namespace psgd {

enum class Algorithm { gd, sgd, perturbed_sgd };

// Starting point: either a fixed vector or a per-replica uniform box draw.
struct InitSpec {
  enum class Kind { fixed, uniform_box };
  Kind kind = Kind::fixed;
  Vec x0;
  double lo = 0.0, hi = 0.0;

  static InitSpec fixed(Vec x) { return {Kind::fixed, std::move(x), 0.0, 0.0}; }
  static InitSpec uniform_box(double lo, double hi) { return {Kind::uniform_box, {}, lo, hi}; }
  Vec draw(std::size_t dim, std::uint64_t seed, std::uint64_t replica) const;
};

struct OptimizerConfig {
  Algorithm algorithm = Algorithm::gd;
  double gamma = 0.0;
  int steps = 0;  // T
  InitSpec init;
  SmoothingSpec smoothing;  // perturbed SGD only
  NoiseSpec noise;          // SGD, optionally perturbed SGD
  std::uint64_t seed = 0;
  std::uint64_t replica = 0;
  bool record_iterates = true;    // keep x_0..x_T (off for big sweeps)
  bool record_alternate = false;  // y_{t+1} = x_t - gamma grad f(x_t), SGD only
  std::optional<double> g_star_ref;  // proxy min g when x_g_star is unknown
};

struct Trajectory {
  std::vector<Vec> iterates;    // x_0..x_T (empty unless record_iterates)
  std::vector<Vec> alternates;  // y_1..y_T when recorded
  std::vector<double> f_values;     // f(x_t), t = 0..T
  std::vector<double> g_values;     // g(x_t)
  std::vector<double> grad_g_sq;    // ||grad g(x_t)||^2
  std::vector<double> g_gap;        // g(x_t) - min g (NaN when no reference)
  std::vector<double> dist_g_star;  // ||x_t - x_g*||^2 when the minimizer is known
  Vec last;                         // final iterate, always kept
  bool diverged = false;
  int truncated_at = -1;  // step index at which a non-finite iterate appeared

  int recorded_steps() const { return static_cast<int>(f_values.size()) - 1; }
};

Trajectory run(const ProblemInstance& problem, const OptimizerConfig& config);

// Extended-theorem step sizes. m >= 1 throws.
enum class Theorem { t1, t2, t3 };
struct TheoremConstants {
  double L_g = 0.0;
  double mu_g = 0.0;
  double M_prime = 0.0;
  double sigma_prime_sq = 0.0;
  double m = 0.0;
  double delta = 0.0;
};
double theoretical_stepsize(Theorem theorem, const TheoremConstants& c, double eps);

// Step-size cap under which each theorem's envelope is valid.
double stepsize_cap(Theorem theorem, const TheoremConstants& c);

enum class SearchCriterion { final_f, final_g_gap };
// Smallest grid point attaining the best mean criterion; diverged runs count
// as +infinity, and a grid where every replica of every gamma diverged throws.
double grid_search_stepsize(const ProblemInstance& problem, const OptimizerConfig& config_template,
                            const std::vector<double>& grid, SearchCriterion criterion,
                            int replicas);

// Four exponentially separated step sizes spanning [1e-5, 1] inclusive.
std::vector<double> default_stepsize_grid();

// Weight sequence w_t = rho^{-(t+1)}, rho = 1 - gamma mu_g (1 - sqrt(m))/2,
// returned normalized (sums to 1); evaluated in a form that cannot overflow.
struct Theorem3Weights {
  double rho = 1.0;
  std::vector<double> normalized;  // w_t / W_T, t = 0..T
  double weighted_gap(std::span<const double> g_gap) const;
};
Theorem3Weights theorem3_weights(double gamma, double mu_g, double m, int T);

}  // namespace psgd
