#include "psgd/problems.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace psgd {
namespace {

double logistic_loss(double z, int y) {
  // ln(1 + e^z) - y z, evaluated in the numerically safe branch
  if (z > 0.0) return z + std::log1p(std::exp(-z)) - y * z;
  return std::log1p(std::exp(z)) - y * z;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Dataset make_blobs(std::size_t n, std::size_t d, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("make_blobs: need n >= 2");
  if (d < 1) throw std::invalid_argument("make_blobs: need d >= 1");
  Dataset ds;
  ds.n = n;
  ds.d = d;
  ds.features.resize(n * d);
  ds.labels.resize(n);
  const double offset = 2.0 / std::sqrt(static_cast<double>(d));  // class means at -/+ offset*1
  for (std::size_t i = 0; i < n; ++i) {
    const int label = i < n / 2 ? 0 : 1;
    ds.labels[i] = label;
    const double center = label == 0 ? -offset : offset;
    RandomStream rng(seed, i, 0, Purpose::data);
    for (std::size_t j = 0; j < d; ++j) ds.features[i * d + j] = center + rng.next_gaussian();
  }
  return ds;
}

void write_dataset_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_dataset_csv: cannot open " + path);
  out << "label";
  for (std::size_t j = 1; j <= ds.d; ++j) out << ",f" << j;
  out << "\n";
  char buf[40];
  for (std::size_t i = 0; i < ds.n; ++i) {
    out << ds.labels[i];
    for (std::size_t j = 0; j < ds.d; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.features[i * ds.d + j]);
      out << ',' << buf;
    }
    out << "\n";
  }
}

Dataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_dataset_csv: empty file");
  std::size_t d = 0;
  for (char c : line)
    if (c == ',') ++d;
  if (d == 0 || line.rfind("label", 0) != 0)
    throw std::runtime_error("load_dataset_csv: bad header: " + line);
  Dataset ds;
  ds.d = d;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    if (!std::getline(ss, cell, ',')) throw std::runtime_error("load_dataset_csv: bad row");
    const int label = std::stoi(cell);
    if (label != 0 && label != 1)
      throw std::runtime_error("load_dataset_csv: label not in {0,1} at line " +
                               std::to_string(line_no));
    ds.labels.push_back(label);
    std::size_t got = 0;
    while (std::getline(ss, cell, ',')) {
      const double v = std::stod(cell);
      if (!std::isfinite(v))
        throw std::runtime_error("load_dataset_csv: non-finite value at line " +
                                 std::to_string(line_no));
      ds.features.push_back(v);
      ++got;
    }
    if (got != d)
      throw std::runtime_error("load_dataset_csv: expected " + std::to_string(d) +
                               " features, got " + std::to_string(got) + " at line " +
                               std::to_string(line_no));
    ++ds.n;
  }
  if (ds.n == 0) throw std::runtime_error("load_dataset_csv: no samples");
  return ds;
}

ProblemInstance ProblemInstance::toy_sine(double a, double b) {
  if (a <= 0.0 || b <= 0.0) throw std::invalid_argument("toy_sine: need a > 0, b > 0");
  ProblemInstance p;
  p.family_ = Family::toy_sine;
  p.dim_ = 1;
  p.a_ = a;
  p.b_ = b;
  p.constants_ = {2.0, 2.0, Vec{0.0}};
  return p;
}

ProblemInstance ProblemInstance::valley(std::size_t dim, double alpha, double lambda) {
  if (dim < 1) throw std::invalid_argument("valley: need dim >= 1");
  if (alpha <= 0.0 || lambda <= 0.0) throw std::invalid_argument("valley: need alpha, lambda > 0");
  ProblemInstance p;
  p.family_ = Family::valley;
  p.dim_ = dim;
  p.a_ = alpha;
  p.b_ = lambda;
  p.constants_ = {1.0, 1.0, Vec(dim, 0.0)};
  return p;
}

ProblemInstance ProblemInstance::quadratic(std::size_t dim) {
  if (dim < 1) throw std::invalid_argument("quadratic: need dim >= 1");
  ProblemInstance p;
  p.family_ = Family::quadratic;
  p.dim_ = dim;
  p.constants_ = {2.0, 2.0, Vec(dim, 0.0)};
  return p;
}

ProblemInstance ProblemInstance::finite_sum(Dataset ds) {
  if (ds.n < 1) throw std::invalid_argument("finite_sum: empty dataset");
  if (ds.features.size() != ds.n * ds.d || ds.labels.size() != ds.n)
    throw std::invalid_argument("finite_sum: inconsistent dataset");
  for (double v : ds.features)
    if (!std::isfinite(v)) throw std::invalid_argument("finite_sum: non-finite feature");
  for (int y : ds.labels)
    if (y != 0 && y != 1) throw std::invalid_argument("finite_sum: labels must be 0/1");
  ProblemInstance p;
  p.family_ = Family::finite_sum;
  p.dim_ = ds.d + 1;
  // fold the bias into the feature matrix as a trailing constant-1 column
  p.data_.n = ds.n;
  p.data_.d = ds.d + 1;
  p.data_.labels = std::move(ds.labels);
  p.data_.features.resize(ds.n * (ds.d + 1));
  for (std::size_t i = 0; i < ds.n; ++i) {
    for (std::size_t j = 0; j < ds.d; ++j)
      p.data_.features[i * (ds.d + 1) + j] = ds.features[i * ds.d + j];
    p.data_.features[i * (ds.d + 1) + ds.d] = 1.0;
  }
  return p;
}

ProblemInstance build_finite_sum_synthetic(std::size_t n, std::size_t d, std::uint64_t seed) {
  return ProblemInstance::finite_sum(make_blobs(n, d, seed));
}

ProblemInstance build_finite_sum_from_csv(const std::string& path) {
  return ProblemInstance::finite_sum(load_dataset_csv(path));
}

ProblemInstance ProblemInstance::custom(std::size_t dim, ScalarFn g, ScalarFn h,
                                        ProblemConstants constants) {
  if (!g.value || !g.gradient || !h.value || !h.gradient)
    throw std::invalid_argument("custom: all four oracles are required");
  ProblemInstance p;
  p.family_ = Family::custom;
  p.dim_ = dim;
  p.g_ = std::move(g);
  p.h_ = std::move(h);
  p.constants_ = std::move(constants);
  return p;
}

void ProblemInstance::check_input(std::span<const double> x) const {
  require_dim(x, dim_, "ProblemInstance::eval");
  require_finite(x, "ProblemInstance::eval");
}

double ProblemInstance::value(Part part, std::span<const double> x) const {
  check_input(x);
  switch (family_) {
    case Family::toy_sine: {
      const double g = x[0] * x[0];
      const double h = a_ * x[0] * std::sin(b_ * x[0]);
      return part == Part::g ? g : part == Part::h ? h : g + h;
    }
    case Family::valley: {
      const double g = 0.5 * norm_sq(x);
      const double t = x[0] - 1.0;
      const double h = -a_ * std::exp(-t * t / (2.0 * b_ * b_));
      return part == Part::g ? g : part == Part::h ? h : g + h;
    }
    case Family::quadratic: {
      const double g = norm_sq(x);
      return part == Part::h ? 0.0 : g;
    }
    case Family::finite_sum: {
      if (part == Part::h) return 0.0;  // f itself is convex; g := f, h := 0
      double acc = 0.0;
      for (std::size_t i = 0; i < data_.n; ++i) acc += term_value(i, x);
      return acc / static_cast<double>(data_.n);
    }
    case Family::custom: {
      const double g = g_.value(x);
      const double h = h_.value(x);
      return part == Part::g ? g : part == Part::h ? h : g + h;
    }
  }
  throw std::logic_error("unreachable");
}

void ProblemInstance::gradient_into(Part part, std::span<const double> x, Vec& out) const {
  check_input(x);
  out.assign(dim_, 0.0);
  switch (family_) {
    case Family::toy_sine: {
      const double dg = 2.0 * x[0];
      const double dh = a_ * std::sin(b_ * x[0]) + a_ * b_ * x[0] * std::cos(b_ * x[0]);
      out[0] = part == Part::g ? dg : part == Part::h ? dh : dg + dh;
      return;
    }
    case Family::valley: {
      const double t = x[0] - 1.0;
      const double dh1 = a_ * t / (b_ * b_) * std::exp(-t * t / (2.0 * b_ * b_));
      if (part != Part::h)
        for (std::size_t i = 0; i < dim_; ++i) out[i] = x[i];
      if (part != Part::g) out[0] += dh1;
      return;
    }
    case Family::quadratic: {
      if (part == Part::h) return;
      for (std::size_t i = 0; i < dim_; ++i) out[i] = 2.0 * x[i];
      return;
    }
    case Family::finite_sum: {
      if (part == Part::h) return;
      Vec term(dim_);
      for (std::size_t i = 0; i < data_.n; ++i) {
        term_gradient_into(i, x, term);
        axpy(1.0, term, out);
      }
      const double inv_n = 1.0 / static_cast<double>(data_.n);
      for (auto& v : out) v *= inv_n;
      return;
    }
    case Family::custom: {
      if (part == Part::g) {
        out = g_.gradient(x);
      } else if (part == Part::h) {
        out = h_.gradient(x);
      } else {
        out = g_.gradient(x);
        const Vec hg = h_.gradient(x);
        axpy(1.0, hg, out);
      }
      return;
    }
  }
}

Vec ProblemInstance::gradient(Part part, std::span<const double> x) const {
  Vec out;
  gradient_into(part, x, out);
  return out;
}

std::size_t ProblemInstance::term_count() const {
  if (family_ != Family::finite_sum)
    throw std::logic_error("term_count: not a finite-sum problem");
  return data_.n;
}

double ProblemInstance::term_value(std::size_t i, std::span<const double> x) const {
  const double z = dot(data_.row(i), x);
  return logistic_loss(z, data_.labels[i]);
}

void ProblemInstance::term_gradient_into(std::size_t i, std::span<const double> x,
                                         Vec& out) const {
  const auto row = data_.row(i);
  const double c = sigmoid(dot(row, x)) - static_cast<double>(data_.labels[i]);
  out.resize(dim_);
  for (std::size_t j = 0; j < dim_; ++j) out[j] = c * row[j];
}

Vec ProblemInstance::term_gradient(std::size_t i, std::span<const double> x) const {
  Vec out;
  term_gradient_into(i, x, out);
  return out;
}

const Dataset& ProblemInstance::dataset() const {
  if (family_ != Family::finite_sum) throw std::logic_error("dataset: not a finite-sum problem");
  return data_;
}

void stochastic_gradient_into(const ProblemInstance& problem, std::span<const double> x,
                              const NoiseSpec& noise, RandomStream& rng, Vec& out) {
  switch (noise.kind) {
    case NoiseSpec::Kind::none:
      problem.gradient_into(Part::f, x, out);
      return;
    case NoiseSpec::Kind::additive_gaussian: {
      problem.gradient_into(Part::f, x, out);
      if (noise.sigma2 > 0.0) {
        const double sd = std::sqrt(noise.sigma2);
        for (auto& v : out) v += sd * rng.next_gaussian();
      }
      return;
    }
    case NoiseSpec::Kind::single_index: {
      if (problem.family() != Family::finite_sum)
        throw std::invalid_argument("stochastic_gradient: single-index needs a finite-sum problem");
      if (problem.term_count() == 0)
        throw std::invalid_argument("stochastic_gradient: empty finite sum");
      require_dim(x, problem.dimension(), "stochastic_gradient");
      const std::size_t i = rng.next_index(problem.term_count());
      problem.term_gradient_into(i, x, out);
      return;
    }
  }
}

Vec stochastic_gradient(const ProblemInstance& problem, std::span<const double> x,
                        const NoiseSpec& noise, RandomStream& rng) {
  Vec out;
  stochastic_gradient_into(problem, x, noise, rng, out);
  return out;
}

ToySmoothedPoint toy_smoothed_closed_form(double a, double b, double zeta, double x) {
  if (a <= 0.0 || b <= 0.0) throw std::invalid_argument("toy_smoothed_closed_form: need a, b > 0");
  if (zeta < 0.0) throw std::invalid_argument("toy_smoothed_closed_form: need zeta >= 0");
  const double atten = std::exp(-b * b * zeta * zeta / 2.0);
  const double s = std::sin(b * x), c = std::cos(b * x);
  ToySmoothedPoint out;
  out.f_U = x * x + zeta * zeta + a * atten * (b * zeta * zeta * c + x * s);
  out.grad_g_U = 2.0 * x;
  out.grad_h_U = a * atten * ((1.0 - b * b * zeta * zeta) * s + b * x * c);
  out.grad_f_U = out.grad_g_U + out.grad_h_U;
  return out;
}

double valley_smoothed_h(double alpha, double lambda, double zeta, double x1) {
  // Gaussian-bump convolved with N(0, zeta^2): variance widens, mass shrinks.
  const double v = lambda * lambda + zeta * zeta;
  const double t = x1 - 1.0;
  return -alpha * lambda / std::sqrt(v) * std::exp(-t * t / (2.0 * v));
}

double valley_smoothed_h_grad(double alpha, double lambda, double zeta, double x1) {
  const double v = lambda * lambda + zeta * zeta;
  const double t = x1 - 1.0;
  return alpha * lambda / std::sqrt(v) * t / v * std::exp(-t * t / (2.0 * v));
}

StructureConstants analytic_assumption_constants(const ProblemInstance& problem, double zeta) {
  if (zeta < 0.0) throw std::invalid_argument("analytic_assumption_constants: need zeta >= 0");
  StructureConstants out;
  switch (problem.family()) {
    case Family::toy_sine: {
      const double a = problem.toy_a(), b = problem.toy_b();
      const double e = std::exp(-b * b * zeta * zeta);
      out.m = 0.25 * a * a * b * b * e;
      const double t = b * zeta * zeta - 1.0;
      out.delta = a * a * b * b * e * t * t;
      break;
    }
    case Family::valley: {
      const double alpha = problem.valley_alpha(), lambda = problem.valley_lambda();
      const double k = zeta / lambda;
      const double k2 = k * k;
      out.m = alpha * alpha * k2 * k2 / (std::pow(k2 + 1.0, 3) * std::pow(lambda, 4));
      out.delta = out.m;
      break;
    }
    default:
      throw std::invalid_argument(
          "analytic_assumption_constants: closed form only for toy_sine and valley");
  }
  if (out.m >= 1.0)
    throw std::domain_error("analytic_assumption_constants: assumption not satisfiable at this "
                            "zeta (m = " + std::to_string(out.m) + " >= 1)");
  return out;
}

}  // namespace psgd
