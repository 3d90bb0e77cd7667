#pragma once

#include <string>

#include "psgd/optimizers.hpp"

namespace psgd {

// Standard normal quantile (Acklam's approximation, |error| < 1.2e-9).
double normal_quantile(double p);

// ---------------------------------------------------------------------------
// Assumption-constant estimation
// ---------------------------------------------------------------------------

// Minimal upper envelope v <= c0 + c1 * b over a point cloud: c1 sweeps a log
// grid (plus 0), c0 is then forced to max(v - c1 b), and the pair minimizing
// c0 + c1 * median(b) wins. Canonical, so repeated fits agree exactly.
struct EnvelopeFit {
  double intercept = 0.0;  // c0
  double slope = 0.0;      // c1
  double residual = 0.0;   // mean slack of the envelope over the cloud
  bool degenerate = false; // all b equal; slope forced to 0
};
EnvelopeFit fit_upper_envelope(std::span<const double> b, std::span<const double> v,
                               double slope_cap = 1e3);

struct NoiseConstantsFit {
  double sigma_prime_sq = 0.0;
  double M_prime = 0.0;
  double residual = 0.0;
  bool degenerate = false;
  std::vector<double> b;  // ||grad f_U(x_i)||^2
  std::vector<double> v;  // empirical variance at x_i
};
NoiseConstantsFit fit_noise_constants(const ProblemInstance& problem, const SmoothingSpec& smoothing,
                                      const NoiseSpec& noise, const std::vector<Vec>& points,
                                      std::size_t draws, std::uint64_t seed);

enum class StructureFitMode { norm, directional };
struct StructureConstantsFit {
  // norm mode: ||r||^2 <= delta + m ||grad g||^2 envelope
  double m = 0.0;
  double delta = 0.0;
  // directional mode: |r_g|^2 <= m_par ||grad g||^2, |r_perp|^2 <= delta_perp
  double m_par = 0.0;
  double delta_perp = 0.0;
  bool infeasible = false;      // directional m_par >= 1
  std::size_t zero_grad_points = 0;  // points attributed wholly to delta_perp
  double residual = 0.0;
  std::vector<double> b;  // ||grad g(x_i)||^2
  std::vector<double> v;  // ||r(x_i)||^2
};
StructureConstantsFit fit_structure_constants(const ProblemInstance& problem, double zeta,
                                              const std::vector<Vec>& points,
                                              StructureFitMode mode,
                                              const ReferenceMethod& reference);

// ---------------------------------------------------------------------------
// Iteration bounds
// ---------------------------------------------------------------------------

struct IterationBound {
  double T = 0.0;
  double gamma = 0.0;
  std::string target;
};
// initial_gap is G_0 for theorems 1-2 and d_0 = ||x_0 - x_g*||^2 for theorem 3.
IterationBound iteration_bound(Theorem theorem, const TheoremConstants& c, double eps,
                               double initial_gap);

// ---------------------------------------------------------------------------
// Convergence envelopes over replica ensembles
// ---------------------------------------------------------------------------

// Per-step mean/SE over replicas, accumulated streaming so ensembles of any
// size fit in memory.
class StepStats {
 public:
  void add_trajectory(std::span<const double> values);
  std::size_t steps() const { return stats_.size(); }
  std::size_t replicas() const { return replicas_; }
  double mean(std::size_t t) const { return stats_[t].mean(); }
  double se(std::size_t t) const { return stats_[t].se(); }

 private:
  std::vector<RunningStats> stats_;
  std::size_t replicas_ = 0;
};

// Theorem-3 functional per replica: prefix weighted gap average plus the
// (mu_g/2) d_{t+1} term, accumulated per step.
class WeightedGapStats {
 public:
  WeightedGapStats(double gamma, double mu_g, double m);
  void add_trajectory(std::span<const double> g_gap, std::span<const double> dist_sq);
  const StepStats& stats() const { return stats_; }
  double rho() const { return rho_; }

 private:
  double rho_;
  double mu_g_;
  StepStats stats_;
};

struct EnvelopeReport {
  Theorem theorem = Theorem::t2;
  bool applicable = true;           // false when gamma exceeds the theorem's cap
  double gamma = 0.0;
  double xi = 0.0;                  // noise-floor term
  std::vector<double> bound;        // per-step theoretical envelope
  std::vector<double> empirical;    // per-step ensemble mean
  std::vector<double> se;           // per-step standard error
  int violations = 0;               // steps with empirical > bound + 3 SE
  double final_gap = 0.0;
  double final_bound = 0.0;         // floor (+ decay) at the last step
  bool floor_reached = false;       // final gap <= floor + 3 SE
};

// Theorem 2: per-step mean g-gap vs (1 - gamma mu_g (1-m))^t G_0 + Xi/2.
EnvelopeReport envelope_check_t2(const StepStats& gap_stats, const TheoremConstants& c,
                                 double gamma, double G0);
// Theorem 3: per-step weighted functional vs the strong-convexity envelope
// d_0/(gamma (1-sqrt m)) exp(-gamma mu_g (1-sqrt m) t / 2) + Xi.
EnvelopeReport envelope_check_t3(const WeightedGapStats& stats, const TheoremConstants& c,
                                 double gamma, double d0);

// ---------------------------------------------------------------------------
// SGD vs perturbed GD, equality in expectation
// ---------------------------------------------------------------------------

struct EquivalenceRow {
  int step = 0;
  int component = 0;
  double mean_y = 0.0, sd_y = 0.0;
  double mean_z = 0.0, sd_z = 0.0;
  double diff = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;  // 99% two-sample CI around zero
};

struct EquivalenceReport {
  std::vector<EquivalenceRow> rows;   // step-major, component-minor
  int steps = 0;
  int dim = 0;
  int steps_within_ci = 0;            // all components inside the CI
  double fraction_within_ci = 0.0;
  // Lemma-4 check (convex g): g(weighted avg of mean y_t) vs weighted mean gap
  double lemma4_lhs = 0.0;
  double lemma4_rhs = 0.0;
  double lemma4_rhs_se = 0.0;
  bool lemma4_holds = true;
  double mean_var_y = 0.0, mean_var_z = 0.0;  // trajectory variance summary
};

struct EquivalenceSetup {
  int steps = 100;
  int replicas = 1000;
  double gamma = 0.0;
  NoiseSpec noise;          // SGD side
  SmoothingSpec smoothing;  // coupled U(x) = gamma W(x) for the perturbed side
  InitSpec init;
  std::uint64_t seed = 0;
  std::optional<double> g_star_ref;
};
EquivalenceReport equivalence_report(const ProblemInstance& problem, const EquivalenceSetup& setup);

// Gaussian coupling: additive noise N(0, sigma^2 I) matches the smoothing
// draw u = gamma w, i.e. per-coordinate variance gamma^2 sigma^2.
SmoothingSpec coupled_gaussian_smoothing(double gamma, double sigma2, std::size_t dim);

// ---------------------------------------------------------------------------
// Stationary points and minima-gap bounds
// ---------------------------------------------------------------------------

// All roots of f' on [lo, hi] by sign-change bisection on a uniform grid.
std::vector<double> stationary_points_1d(const ProblemInstance& problem, double lo, double hi,
                                         std::size_t grid = 10000, double tol = 1e-10);

struct MinimaGapReport {
  Vec x_star_f;           // certified global minimizer of f among stationary points
  double lhs = 0.0;       // ||x* - x_g*||^2
  double rhs_printed = 0.0;   // (2/mu_g)(h(x*) - h(x_g*)) as printed
  double rhs_proof = 0.0;     // (2/mu_g)(h(x_g*) - h(x*)), the direction the proof yields
  bool printed_holds = false;
  bool proof_holds = false;
  // bounded-h stationary-point clauses, evaluated at every stationary point
  struct StationaryCheck {
    double x = 0.0;
    double g_value = 0.0;
    double f_value = 0.0;
    bool pl_clause = false;        // g* <= g(x) <= g* + B2/(2 mu_g)
    bool strong_clause = false;    // ||x - x_g*||^2 <= B2/mu_g^2
    bool value_clause = false;     // g* - B1 <= f(x) <= g* + B1 + B2/(2 mu_g)
  };
  std::vector<StationaryCheck> stationary_checks;
  bool pairwise_clause = true;     // |f(x) - f(y)| <= 2 B1 + B2/(2 mu_g) for all pairs
  int violations = 0;
};
MinimaGapReport minima_gap_bounds(const ProblemInstance& problem, double lo, double hi,
                                  double B1, double B2);

}  // namespace psgd
