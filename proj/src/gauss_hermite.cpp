#include "psgd/gauss_hermite.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <stdexcept>

namespace psgd {
namespace {

// Golub-Welsch: nodes are eigenvalues of the Jacobi matrix of the Hermite
// three-term recurrence (diagonal 0, off-diagonal sqrt(k/2)); the weight of
// node i is sqrt(pi) times the squared first component of eigenvector i.
// The symmetric tridiagonal QL sweep below tracks only that first row.
GaussHermiteRule compute_rule(std::size_t n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: need n >= 1");
  std::vector<double> d(n, 0.0);   // diagonal -> eigenvalues
  std::vector<double> e(n, 0.0);   // subdiagonal, e[0..n-2]
  std::vector<double> z(n, 0.0);   // first row of the eigenvector matrix
  z[0] = 1.0;
  for (std::size_t k = 1; k < n; ++k) e[k - 1] = std::sqrt(static_cast<double>(k) / 2.0);

  // QL with implicit shifts (tql2-style), rotations applied to z.
  const int max_iter = 50;
  for (std::size_t l = 0; l < n; ++l) {
    int iter = 0;
    std::size_t m;
    do {
      for (m = l; m + 1 < n; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= 1e-300 + 2.3e-16 * dd) break;
      }
      if (m != l) {
        if (++iter > max_iter) throw std::runtime_error("gauss_hermite: QL did not converge");
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
        double s = 1.0, c = 1.0, p = 0.0;
        for (std::size_t i = m; i-- > l;) {
          double f = s * e[i];
          const double b = c * e[i];
          r = std::hypot(f, g);
          e[i + 1] = r;
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
          f = z[i + 1];
          z[i + 1] = s * z[i] + c * f;
          z[i] = c * z[i] - s * f;
        }
        if (r == 0.0 && m > l + 1) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });

  GaussHermiteRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double sqrt_pi = 1.7724538509055160272981674833411;
  for (std::size_t i = 0; i < n; ++i) {
    rule.nodes[i] = d[order[i]];
    rule.weights[i] = sqrt_pi * z[order[i]] * z[order[i]];
  }
  return rule;
}

}  // namespace

const GaussHermiteRule& gauss_hermite(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, GaussHermiteRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, compute_rule(n)).first;
  return it->second;
}

}  // namespace psgd
