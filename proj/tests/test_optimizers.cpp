#include <doctest.h>

#include <cmath>

#include "psgd/optimizers.hpp"

using namespace psgd;

TEST_CASE("gd on the quadratic contracts at the closed-form rate") {
  auto p = ProblemInstance::quadratic(1);
  OptimizerConfig cfg;
  cfg.algorithm = Algorithm::gd;
  cfg.gamma = 0.25;
  cfg.steps = 4;
  cfg.init = InitSpec::fixed(Vec{1.0});
  const Trajectory t = run(p, cfg);
  REQUIRE(t.iterates.size() == 5);
  for (int k = 0; k <= 4; ++k) CHECK(t.iterates[k][0] == std::pow(0.5, k));
  CHECK(t.iterates[4][0] == 0.0625);
  CHECK(!t.diverged);
  // monotone descent at gamma <= 1/L
  for (int k = 0; k < 4; ++k) CHECK(t.f_values[k + 1] <= t.f_values[k]);
}

TEST_CASE("gd on the toy objective reaches a stationary point that can be far from the global minima") {
  auto p = ProblemInstance::toy_sine(10, 1);
  OptimizerConfig cfg;
  cfg.algorithm = Algorithm::gd;
  cfg.gamma = 5e-4;
  cfg.steps = 40000;
  cfg.init = InitSpec::fixed(Vec{300.0});
  const Trajectory t = run(p, cfg);
  REQUIRE(!t.diverged);
  const double x_final = t.last[0];
  CHECK(std::abs(p.gradient(Part::f, t.last)[0]) <= 1e-8);
  CHECK(std::abs(std::abs(x_final) - 4.724) > 10.0);  // stuck far from the global pair
}

TEST_CASE("perturbed sgd with no smoothing and no noise is bitwise gd") {
  auto p = ProblemInstance::toy_sine(10, 1);
  OptimizerConfig gd;
  gd.algorithm = Algorithm::gd;
  gd.gamma = 0.013;
  gd.steps = 200;
  gd.init = InitSpec::fixed(Vec{137.0});
  gd.seed = 5;
  OptimizerConfig psgd = gd;
  psgd.algorithm = Algorithm::perturbed_sgd;
  const Trajectory a = run(p, gd), b = run(p, psgd);
  REQUIRE(a.iterates.size() == b.iterates.size());
  for (std::size_t k = 0; k < a.iterates.size(); ++k) CHECK(a.iterates[k] == b.iterates[k]);
}

TEST_CASE("perturbed sgd with no smoothing but noise is bitwise sgd") {
  auto p = ProblemInstance::toy_sine(10, 1);
  OptimizerConfig sgd;
  sgd.algorithm = Algorithm::sgd;
  sgd.gamma = 0.001;
  sgd.steps = 150;
  sgd.init = InitSpec::fixed(Vec{10.0});
  sgd.noise = NoiseSpec::gaussian(0.5);
  sgd.seed = 11;
  sgd.replica = 3;
  OptimizerConfig psgd = sgd;
  psgd.algorithm = Algorithm::perturbed_sgd;
  const Trajectory a = run(p, sgd), b = run(p, psgd);
  for (std::size_t k = 0; k < a.iterates.size(); ++k) CHECK(a.iterates[k] == b.iterates[k]);
}

TEST_CASE("alternate-sequence reconstruction: y_{t+1} + gamma w_t = x_{t+1}") {
  auto p = ProblemInstance::finite_sum(make_blobs(12, 2, 2));
  OptimizerConfig cfg;
  cfg.algorithm = Algorithm::sgd;
  cfg.gamma = 0.05;
  cfg.steps = 60;
  cfg.init = InitSpec::fixed(Vec(p.dimension(), 0.3));
  cfg.noise = NoiseSpec::single_index();
  cfg.seed = 21;
  cfg.record_alternate = true;
  const Trajectory t = run(p, cfg);
  REQUIRE(t.alternates.size() == 60);
  for (int k = 0; k < 60; ++k) {
    // realized noise w_t = grad f(x_t) - grad f(x_t, xi_t) reconstructed from the step
    const Vec& x_t = t.iterates[k];
    const Vec& x_n = t.iterates[k + 1];
    const Vec full = p.gradient(Part::f, x_t);
    for (std::size_t j = 0; j < x_t.size(); ++j) {
      const double sampled_grad = (x_t[j] - x_n[j]) / cfg.gamma;
      const double w = full[j] - sampled_grad;
      CHECK(t.alternates[k][j] + cfg.gamma * w == doctest::Approx(x_n[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("divergence freezes the trajectory with a flag") {
  auto p = ProblemInstance::quadratic(1);
  OptimizerConfig cfg;
  cfg.algorithm = Algorithm::gd;
  cfg.gamma = 600.0;  // factor |1 - 2 gamma| >> 1
  cfg.steps = 400;
  cfg.init = InitSpec::fixed(Vec{1.0});
  const Trajectory t = run(p, cfg);
  CHECK(t.diverged);
  CHECK(t.truncated_at > 0);
  CHECK(t.f_values.size() <= 401);
}

TEST_CASE("config validation") {
  auto p = ProblemInstance::toy_sine(10, 1);
  OptimizerConfig cfg;
  cfg.algorithm = Algorithm::gd;
  cfg.gamma = 0.1;
  cfg.steps = 10;
  cfg.init = InitSpec::fixed(Vec{1.0});
  cfg.noise = NoiseSpec::gaussian(1.0);
  CHECK_THROWS_AS(run(p, cfg), std::invalid_argument);  // GD carries no noise
  cfg.noise = NoiseSpec::none();
  cfg.smoothing = SmoothingSpec::gaussian(1.0);
  CHECK_THROWS_AS(run(p, cfg), std::invalid_argument);  // nor smoothing
  cfg.algorithm = Algorithm::sgd;
  CHECK_THROWS_AS(run(p, cfg), std::invalid_argument);  // SGD carries no smoothing
  cfg.smoothing = SmoothingSpec::none();
  cfg.gamma = -1.0;
  CHECK_THROWS_AS(run(p, cfg), std::invalid_argument);
}

TEST_CASE("theoretical step sizes") {
  SUBCASE("sigma' = 0 gives the cap 1/(L_g (M'+1))") {
    TheoremConstants c{2.0, 2.0, 0.0, 0.0, 0.0, 0.0};
    CHECK(theoretical_stepsize(Theorem::t1, c, 0.1) == 0.5);
    CHECK(theoretical_stepsize(Theorem::t2, c, 1e-6) == 0.5);
  }
  SUBCASE("t3 with m = 0 collapses to the same cap") {
    TheoremConstants c{2.0, 2.0, 0.0, 0.0, 0.0, 0.0};
    CHECK(theoretical_stepsize(Theorem::t3, c, 0.5) == 0.5);
  }
  SUBCASE("noise branch engages for large sigma'") {
    TheoremConstants c{2.0, 2.0, 0.0, 1e6, 0.25, 3.0};
    const double eps = 0.01;
    const double want = (eps * 0.75 * 2.0 + 3.0) / (2.0 * 1e6);
    CHECK(theoretical_stepsize(Theorem::t2, c, eps) == doctest::Approx(want).epsilon(1e-14));
  }
  SUBCASE("m >= 1 is rejected") {
    TheoremConstants c{2.0, 2.0, 0.0, 0.0, 1.0, 0.0};
    CHECK_THROWS_AS(theoretical_stepsize(Theorem::t2, c, 0.1), std::domain_error);
  }
}

TEST_CASE("grid search step size") {
  auto p = ProblemInstance::quadratic(1);
  OptimizerConfig tmpl;
  tmpl.algorithm = Algorithm::gd;
  tmpl.steps = 30;
  tmpl.init = InitSpec::fixed(Vec{1.0});

  SUBCASE("singleton grid returns its element") {
    CHECK(grid_search_stepsize(p, tmpl, {0.37}, SearchCriterion::final_f, 1) == 0.37);
  }

  SUBCASE("contraction-factor ranking: {0.25, 0.9, 1.5} -> 0.25") {
    // factors |1-2g| = 0.5, 0.8, 2.0; the last grows unboundedly
    CHECK(grid_search_stepsize(p, tmpl, {0.9, 1.5, 0.25}, SearchCriterion::final_f, 1) == 0.25);
  }

  SUBCASE("ties break toward the smaller gamma") {
    OptimizerConfig deep = tmpl;
    deep.steps = 3000;  // both candidates underflow to f = 0 exactly
    CHECK(grid_search_stepsize(p, deep, {0.5, 0.25}, SearchCriterion::final_f, 1) == 0.25);
  }

  SUBCASE("final g-gap criterion ranks like final f on the pure quadratic") {
    CHECK(grid_search_stepsize(p, tmpl, {0.9, 0.25}, SearchCriterion::final_g_gap, 1) == 0.25);
  }

  SUBCASE("all-diverged grid is an error") {
    auto toy = ProblemInstance::quadratic(1);
    OptimizerConfig t2 = tmpl;
    t2.steps = 2000;
    CHECK_THROWS_AS(grid_search_stepsize(toy, t2, {700.0, 900.0}, SearchCriterion::final_f, 2),
                    std::runtime_error);
  }

  SUBCASE("default grid is four exponentially separated points spanning [1e-5, 1]") {
    const auto g = default_stepsize_grid();
    REQUIRE(g.size() == 4);
    CHECK(g[0] == 1e-5);
    CHECK(g[3] == 1.0);
    CHECK(g[1] == doctest::Approx(std::pow(10.0, -10.0 / 3.0)).epsilon(1e-14));
    CHECK(g[2] == doctest::Approx(std::pow(10.0, -5.0 / 3.0)).epsilon(1e-14));
    CHECK(g[1] / g[0] == doctest::Approx(g[2] / g[1]).epsilon(1e-12));
    CHECK(g[2] / g[1] == doctest::Approx(g[3] / g[2]).epsilon(1e-12));
  }
}

TEST_CASE("theorem-3 weights") {
  SUBCASE("gamma -> 0 limit is uniform averaging") {
    const auto w = theorem3_weights(0.0, 2.0, 0.25, 9);
    for (double v : w.normalized) CHECK(v == doctest::Approx(0.1).epsilon(1e-15));
  }

  SUBCASE("T = 1 closed form {rho/(1+rho), 1/(1+rho)}") {
    const double gamma = 0.3, mu = 2.0, m = 0.25;
    const double rho = 1.0 - gamma * mu * (1.0 - 0.5) / 2.0;
    const auto w = theorem3_weights(gamma, mu, m, 1);
    CHECK(w.normalized[0] == doctest::Approx(rho / (1.0 + rho)).epsilon(1e-14));
    CHECK(w.normalized[1] == doctest::Approx(1.0 / (1.0 + rho)).epsilon(1e-14));
  }

  SUBCASE("rho = 0.5, T = 10 matches exact rational arithmetic") {
    // rho = 1 - gamma mu (1-sqrt m)/2 = 1/2 via gamma=1, mu=1, m=0
    const auto w = theorem3_weights(1.0, 1.0, 0.0, 10);
    CHECK(w.rho == 0.5);
    // w_t = 2^{t+1}, W = 2(2^11 - 1) = 4094, normalized w_t = 2^{t+1}/4094
    for (int t = 0; t <= 10; ++t)
      CHECK(w.normalized[t] ==
            doctest::Approx(std::pow(2.0, t + 1) / 4094.0).epsilon(1e-14));
  }

  SUBCASE("weighted functional of a constant series is that constant, exactly for binary c") {
    const auto w = theorem3_weights(0.05, 2.0, 0.3, 64);
    std::vector<double> gaps(65, 4.0);
    CHECK(w.weighted_gap(gaps) == 4.0);
    std::vector<double> gaps2(65, 3.7);
    CHECK(w.weighted_gap(gaps2) == doctest::Approx(3.7).epsilon(1e-14));
  }

  SUBCASE("no-overflow for long horizons") {
    const auto w = theorem3_weights(0.4, 2.0, 0.0, 200000);
    CHECK(std::isfinite(w.normalized.front()));
    CHECK(std::isfinite(w.normalized.back()));
    double sum = 0.0;
    for (double v : w.normalized) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("contraction factor >= 1 is rejected") {
    CHECK_THROWS_AS(theorem3_weights(2.1, 1.0, 0.0, 5), std::domain_error);
  }
}

TEST_CASE("gd descent is monotone on the toy objective under the box-restricted step cap") {
  auto p = ProblemInstance::toy_sine(10, 1);
  const double x0 = 5.0;
  const double L_box = 2.0 + 20.0 + 10.0 * (x0 + 1.0);  // |f''| bound near the descent path
  OptimizerConfig cfg;
  cfg.algorithm = Algorithm::gd;
  cfg.gamma = 1.0 / L_box;
  cfg.steps = 3000;
  cfg.init = InitSpec::fixed(Vec{x0});
  const Trajectory t = run(p, cfg);
  REQUIRE(!t.diverged);
  for (std::size_t k = 0; k + 1 < t.f_values.size(); ++k)
    CHECK(t.f_values[k + 1] <= t.f_values[k] + 1e-12);
}

TEST_CASE("g-gap is nonnegative whenever the minimizer of g is known") {
  auto p = ProblemInstance::toy_sine(10, 1);
  OptimizerConfig cfg;
  cfg.algorithm = Algorithm::perturbed_sgd;
  cfg.smoothing = SmoothingSpec::gaussian(1.0);
  cfg.gamma = 0.01;
  cfg.steps = 400;
  cfg.init = InitSpec::uniform_box(-100, 100);
  cfg.seed = 17;
  const Trajectory t = run(p, cfg);
  for (double gap : t.g_gap) CHECK(gap >= 0.0);
  REQUIRE(t.dist_g_star.size() == t.g_gap.size());
  for (std::size_t k = 0; k < t.g_gap.size(); ++k)
    CHECK(t.dist_g_star[k] == doctest::Approx(t.g_gap[k]).epsilon(1e-12));  // g = x^2, x_g* = 0
}

TEST_CASE("uniform-box inits are deterministic per (seed, replica)") {
  const auto spec = InitSpec::uniform_box(-400, 400);
  const Vec a = spec.draw(1, 9, 4);
  const Vec b = spec.draw(1, 9, 4);
  const Vec c = spec.draw(1, 9, 5);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a[0] >= -400.0);
  CHECK(a[0] <= 400.0);
}
