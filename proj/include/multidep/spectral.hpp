#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <queue>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include <multidep/moments.hpp>
#include <multidep/psi.hpp>

namespace multidep {

using Complex = std::complex<double>;

// ---- characteristic functions ----

enum class KnownMarginal { bernoulli_half, uniform01, standard_normal, exponential_unit };

// (1/N) sum_l exp(i x^(l) . t)
inline Complex empirical_cf(const ObservationBlock& block, const Eigen::VectorXd& t) {
  if (block.rows() == 0) throw std::invalid_argument("empirical cf needs observations");
  if (block.cols() != t.size())
    throw std::invalid_argument("node dimension must match the block");
  Complex acc(0.0, 0.0);
  for (Eigen::Index l = 0; l < block.rows(); ++l) {
    double phase = block.row(l).dot(t);
    acc += Complex(std::cos(phase), std::sin(phase));
  }
  return acc / static_cast<double>(block.rows());
}

struct CharFunction {
  std::function<Complex(const Eigen::VectorXd&)> eval;

  Complex operator()(const Eigen::VectorXd& t) const { return eval(t); }
  Complex operator()(double t) const {
    Eigen::VectorXd v(1);
    v[0] = t;
    return eval(v);
  }

  static CharFunction empirical(ObservationBlock block) {
    return {[b = std::move(block)](const Eigen::VectorXd& t) { return empirical_cf(b, t); }};
  }

  static CharFunction known(KnownMarginal kind) {
    return {[kind](const Eigen::VectorXd& t) -> Complex {
      if (t.size() != 1) throw std::invalid_argument("known marginals are univariate");
      const double u = t[0];
      switch (kind) {
        case KnownMarginal::bernoulli_half:
          return 0.5 * (1.0 + std::exp(Complex(0.0, u)));
        case KnownMarginal::uniform01: {
          // exp(iu/2) sinc(u/2); the (exp(iu)-1)/(iu) form loses absolute
          // accuracy near zero and leaks it into the kernel's spectrum
          const double h = 0.5 * u;
          const double sinc = h == 0.0 ? 1.0 : std::sin(h) / h;
          return std::exp(Complex(0.0, h)) * sinc;
        }
        case KnownMarginal::standard_normal:
          return Complex(std::exp(-0.5 * u * u), 0.0);
        case KnownMarginal::exponential_unit:
          return 1.0 / Complex(1.0, -u);
      }
      return Complex(1.0, 0.0);
    }};
  }
};

// ---- covariance kernel ----

// K(s,t) = f(s-t) - f(s) f(-t); hermitian and positive semidefinite.
struct CovKernel {
  CharFunction cf;
};

inline Complex cov_kernel_eval(const CovKernel& kernel, const Eigen::VectorXd& s,
                               const Eigen::VectorXd& t) {
  if (s.size() != t.size()) throw std::invalid_argument("s and t must share dimension");
  return kernel.cf(Eigen::VectorXd(s - t)) - kernel.cf(s) * kernel.cf(Eigen::VectorXd(-t));
}

// ---- quadrature rules ----

struct QuadratureRule {
  Eigen::MatrixXd nodes;  // one node per row
  Eigen::VectorXd weights;

  std::size_t size() const { return static_cast<std::size_t>(nodes.rows()); }
};

inline void validate(const QuadratureRule& rule) {
  if (rule.nodes.rows() == 0) throw std::invalid_argument("quadrature rule must be nonempty");
  if (rule.nodes.rows() != rule.weights.size())
    throw std::invalid_argument("node and weight counts must match");
  if ((rule.weights.array() < 0.0).any())
    throw std::invalid_argument("quadrature weights must be nonnegative");
}

namespace detail {

// Gauss-Legendre nodes of fixed order mapped onto [a, b], weighted by a density.
template <unsigned Order>
void append_gl_panel(double a, double b, const std::function<double(double)>& density,
                     std::vector<double>* xs, std::vector<double>* ws) {
  using rule = boost::math::quadrature::gauss<double, Order>;
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  // boost stores the nonnegative abscissas only; mirror them.
  for (std::size_t i = 0; i < rule::abscissa().size(); ++i) {
    double u = rule::abscissa()[i], w = rule::weights()[i];
    double x1 = mid + half * u, x2 = mid - half * u;
    xs->push_back(x1);
    ws->push_back(half * w * density(x1));
    if (u != 0.0) {
      xs->push_back(x2);
      ws->push_back(half * w * density(x2));
    }
  }
}

inline void append_gl_panel(int order, double a, double b,
                            const std::function<double(double)>& density,
                            std::vector<double>* xs, std::vector<double>* ws) {
  switch (order) {
    case 2: append_gl_panel<2>(a, b, density, xs, ws); return;
    case 3: append_gl_panel<3>(a, b, density, xs, ws); return;
    case 12: append_gl_panel<12>(a, b, density, xs, ws); return;
    default: throw std::invalid_argument("unsupported panel order");
  }
}

inline QuadratureRule rule_from(const std::vector<double>& xs, const std::vector<double>& ws) {
  QuadratureRule rule;
  rule.nodes.resize(static_cast<Eigen::Index>(xs.size()), 1);
  rule.weights.resize(static_cast<Eigen::Index>(ws.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    rule.nodes(static_cast<Eigen::Index>(i), 0) = xs[i];
    rule.weights[static_cast<Eigen::Index>(i)] = ws[i];
  }
  return rule;
}

}  // namespace detail

// Quadrature for the measure rho(dt) = (1/pi) t^-2 dt that represents |x| as
// an integral of 1 - cos stressing the kernel integrals for psi(x) = |x|.
// Layout (fixed, calibrated against the closed-form marginal table): one panel
// on [1e-6, 1] (2 nodes), twelve panels across the oscillatory band [1, 10 pi]
// (3 nodes each), four geometric panels out to 400 (3 nodes each), the whole
// set mirrored to negative t: 100 nodes total.
inline QuadratureRule levy_rho_rule() {
  const double pi = 3.14159265358979323846;
  auto density = [pi](double t) { return 1.0 / (pi * t * t); };
  std::vector<double> xs, ws;
  detail::append_gl_panel(2, 1e-6, 1.0, density, &xs, &ws);
  const double osc_end = 10.0 * pi;
  for (int i = 0; i < 12; ++i) {
    double a = 1.0 + (osc_end - 1.0) * i / 12.0;
    double b = 1.0 + (osc_end - 1.0) * (i + 1) / 12.0;
    detail::append_gl_panel(3, a, b, density, &xs, &ws);
  }
  const double far_end = 400.0;
  for (int i = 0; i < 4; ++i) {
    double a = osc_end * std::pow(far_end / osc_end, i / 4.0);
    double b = osc_end * std::pow(far_end / osc_end, (i + 1) / 4.0);
    detail::append_gl_panel(3, a, b, density, &xs, &ws);
  }
  std::vector<double> full_x, full_w;
  for (std::size_t i = xs.size(); i > 0; --i) {
    full_x.push_back(-xs[i - 1]);
    full_w.push_back(ws[i - 1]);
  }
  full_x.insert(full_x.end(), xs.begin(), xs.end());
  full_w.insert(full_w.end(), ws.begin(), ws.end());
  return detail::rule_from(full_x, full_w);
}

// ---- Nystrom eigenvalues ----

// M[j,k] = sqrt(w_j) K(t_j, t_k) sqrt(w_k)
inline Eigen::MatrixXcd nystrom_matrix(const CovKernel& kernel, const QuadratureRule& rule) {
  validate(rule);
  const Eigen::Index n = rule.nodes.rows();
  Eigen::VectorXd sq = rule.weights.array().sqrt();
  Eigen::MatrixXcd m(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = j; k < n; ++k) {
      Complex v = cov_kernel_eval(kernel, rule.nodes.row(j).transpose(),
                                  rule.nodes.row(k).transpose());
      m(j, k) = sq[j] * v * sq[k];
      m(k, j) = std::conj(m(j, k));
    }
  }
  return m;
}

inline std::vector<double> nystrom_eigenvalues(const CovKernel& kernel,
                                               const QuadratureRule& rule, std::size_t count) {
  validate(rule);
  if (count > rule.size())
    throw std::invalid_argument("cannot request more eigenvalues than nodes");
  Eigen::MatrixXcd m = nystrom_matrix(kernel, rule);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigensolve failed");
  Eigen::VectorXd ev = solver.eigenvalues();  // ascending
  std::vector<double> out;
  out.reserve(count);
  for (Eigen::Index i = ev.size() - 1; i >= 0 && out.size() < count; --i)
    out.push_back(std::max(0.0, ev[i]));
  return out;
}

// ---- moment quadrature ----

// Discretization of a sampling distribution into weighted atoms.
struct DiscretizedDistribution {
  Eigen::VectorXd points;
  Eigen::VectorXd weights;
};

// Composite Gauss-Legendre atoms against the marginal's density, renormalized.
// Panel layouts are fixed constants calibrated against the closed-form table.
inline DiscretizedDistribution discretize_marginal(KnownMarginal kind) {
  std::vector<double> xs, ws;
  switch (kind) {
    case KnownMarginal::bernoulli_half:
      xs = {0.0, 1.0};
      ws = {0.5, 0.5};
      break;
    case KnownMarginal::uniform01: {
      auto one = [](double) { return 1.0; };
      for (int i = 0; i < 16; ++i)
        detail::append_gl_panel(12, i / 16.0, (i + 1) / 16.0, one, &xs, &ws);
      break;
    }
    case KnownMarginal::standard_normal: {
      auto phi = [](double x) { return std::exp(-0.5 * x * x); };
      for (int i = 0; i < 32; ++i) {
        double a = -8.0 + 16.0 * i / 32.0, b = -8.0 + 16.0 * (i + 1) / 32.0;
        detail::append_gl_panel(12, a, b, phi, &xs, &ws);
      }
      break;
    }
    case KnownMarginal::exponential_unit: {
      auto dens = [](double x) { return std::exp(-x); };
      // geometric edges concentrate panels near zero where the mass sits
      double prev = 0.0;
      for (int i = 0; i < 40; ++i) {
        double edge = 1e-3 * std::pow(40.0 / 1e-3, (i + 1) / 40.0);
        detail::append_gl_panel(12, prev, edge, dens, &xs, &ws);
        prev = edge;
      }
      break;
    }
  }
  DiscretizedDistribution dist;
  dist.points.resize(static_cast<Eigen::Index>(xs.size()));
  dist.weights.resize(static_cast<Eigen::Index>(ws.size()));
  double total = 0.0;
  for (double w : ws) total += w;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    dist.points[static_cast<Eigen::Index>(i)] = xs[i];
    dist.weights[static_cast<Eigen::Index>(i)] = ws[i] / total;
  }
  return dist;
}

// Population marginal moments of a discretized distribution: the expectation
// representations evaluated as weighted matrix contractions over the atoms.
inline MarginalMoments population_moments(const DiscretizedDistribution& dist,
                                          const PsiFunction& psi) {
  validate(psi);
  const Eigen::Index a = dist.points.size();
  if (a == 0 || dist.weights.size() != a)
    throw std::invalid_argument("distribution atoms and weights must match and be nonempty");
  Eigen::MatrixXd b(a, a);
  for (Eigen::Index j = 0; j < a; ++j) {
    b(j, j) = 0.0;
    for (Eigen::Index k = j + 1; k < a; ++k) {
      double v = psi(std::abs(dist.points[j] - dist.points[k]));
      b(j, k) = v;
      b(k, j) = v;
    }
  }
  const Eigen::VectorXd& w = dist.weights;
  Eigen::VectorXd q = b * w;
  Eigen::VectorXd r = w.cwiseProduct(q);
  Eigen::VectorXd sq = w.array().sqrt();
  Eigen::MatrixXd s = sq.asDiagonal() * b * sq.asDiagonal();
  Eigen::MatrixXd s2 = s * s;

  MarginalMoments m;
  m.mu1 = w.dot(q);
  m.b = w.dot(Eigen::VectorXd(b.cwiseProduct(b) * w));
  m.c = w.dot(q.cwiseProduct(q));
  m.d = m.mu1 * m.mu1;
  m.e = (s2.cwiseProduct(s)).sum();
  m.f = r.dot(b * r);
  m.y = m.c * m.mu1;
  m.u = m.mu1 * m.mu1 * m.mu1;
  double cycle4 = s2.squaredNorm();
  Eigen::VectorXd br = b * r;
  double path4 = w.dot(br.cwiseProduct(br));
  m.mu2 = m.b - 2.0 * m.c + m.d;
  m.mu3 = -m.e + 3.0 * m.f - 3.0 * m.y + m.u;
  m.mu4 = cycle4 - 4.0 * path4 + 4.0 * m.f * m.mu1 + 2.0 * m.c * m.c - 4.0 * m.c * m.d +
          m.d * m.d;
  return m;
}

// Iterated kernel integrals: mu^(k) = trace of the k-th power of the Nystrom
// matrix built from the kernel and the rule.
inline double kernel_moment_quadrature(const CovKernel& kernel, const QuadratureRule& rule,
                                       int k) {
  if (k < 1 || k > 4) throw std::domain_error("moment order must lie in 1..4");
  Eigen::MatrixXcd m = nystrom_matrix(kernel, rule);
  if (k == 1) return m.trace().real();
  if (k == 2) return m.squaredNorm();  // trace(M^2) = |M|_F^2 for hermitian M
  Eigen::MatrixXcd m2 = m * m;
  if (k == 3) return (m2.cwiseProduct(m.conjugate())).sum().real();
  return m2.squaredNorm();
}

// Expectation mode: quadrature against the sampling distribution itself.
inline double kernel_moment_quadrature(const DiscretizedDistribution& dist,
                                       const PsiFunction& psi, int k) {
  if (k < 1 || k > 4) throw std::domain_error("moment order must lie in 1..4");
  MarginalMoments m = population_moments(dist, psi);
  switch (k) {
    case 1: return m.mu1;
    case 2: return m.mu2;
    case 3: return m.mu3;
    default: return m.mu4;
  }
}

// Closed-form (mu1, mu2, mu3) for the catalog marginals with psi = |.|.
inline std::array<double, 3> marginal_moment_table(KnownMarginal kind) {
  const double pi = 3.14159265358979323846;
  switch (kind) {
    case KnownMarginal::bernoulli_half:
      return {0.5, 0.25, 0.125};
    case KnownMarginal::uniform01:
      return {1.0 / 3.0, 2.0 / 45.0, 8.0 / 945.0};
    case KnownMarginal::standard_normal:
      return {2.0 / std::sqrt(pi), (4.0 * pi + 12.0 * (1.0 - std::sqrt(3.0))) / (3.0 * pi),
              (8.0 * (1.0 - pi) + 12.0 * (std::sqrt(2.0) - std::sqrt(3.0)) +
               18.0 * std::atan(std::sqrt(8.0))) /
                  (pi * std::sqrt(pi))};
    case KnownMarginal::exponential_unit:
      return {1.0, 1.0 / 3.0, 1.0 / 6.0};
  }
  return {0.0, 0.0, 0.0};
}

// ---- product spectra ----

// The cap largest products prod_i lambda_i^(j_i), one factor per variable,
// in descending order. Best-first search over the multi-index lattice.
inline std::vector<double> product_eigenvalues(
    const std::vector<std::vector<double>>& per_variable, std::size_t cap) {
  if (per_variable.empty()) throw std::invalid_argument("need at least one spectrum");
  std::vector<std::vector<double>> sorted = per_variable;
  for (auto& s : sorted) {
    if (s.empty()) throw std::invalid_argument("spectra must be nonempty");
    std::sort(s.begin(), s.end(), std::greater<double>());
  }
  const std::size_t n = sorted.size();
  using Entry = std::pair<double, std::vector<std::size_t>>;
  std::priority_queue<Entry> heap;
  std::set<std::vector<std::size_t>> seen;
  std::vector<std::size_t> origin(n, 0);
  double top = 1.0;
  for (const auto& s : sorted) top *= s[0];
  heap.emplace(top, origin);
  seen.insert(origin);
  std::vector<double> out;
  while (!heap.empty() && out.size() < cap) {
    auto [value, index] = heap.top();
    heap.pop();
    out.push_back(value);
    for (std::size_t i = 0; i < n; ++i) {
      if (index[i] + 1 >= sorted[i].size()) continue;
      std::vector<std::size_t> next = index;
      ++next[i];
      if (!seen.insert(next).second) continue;
      double v = 1.0;
      for (std::size_t j = 0; j < n; ++j) v *= sorted[j][next[j]];
      heap.emplace(v, next);
    }
  }
  return out;
}

}  // namespace multidep
