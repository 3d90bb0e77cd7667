#pragma once

#include <cstddef>
#include <vector>

namespace psgd {

// Gauss-Hermite rule for the weight e^{-s^2}: sum_i w_i * phi(s_i)
// approximates the integral over R, exact for polynomials of degree 2n-1.
struct GaussHermiteRule {
  std::vector<double> nodes;    // ascending
  std::vector<double> weights;  // sum = sqrt(pi)
};

const GaussHermiteRule& gauss_hermite(std::size_t n);

// E_{u ~ N(0, zeta^2)}[ phi(x - u) ] via an n-node rule.
template <typename F>
double gaussian_expectation(F&& phi, double x, double zeta, std::size_t n = 64) {
  const auto& rule = gauss_hermite(n);
  const double scale = 1.4142135623730950488016887242097 * zeta;  // sqrt(2)*zeta
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i)
    acc += rule.weights[i] * phi(x - scale * rule.nodes[i]);
  return acc / 1.7724538509055160272981674833411;  // sqrt(pi)
}

}  // namespace psgd
