#pragma once

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace multidep {

using AlphaSpectrum = std::vector<double>;

struct QFormMoments {
  double mean = 0;
  double variance = 0;
  double central3 = 0;
  double central4 = 0;
  double skewness = 0;
  double excess_kurtosis = 0;
};

inline QFormMoments finalize_qform_moments(QFormMoments m) {
  m.skewness = m.variance > 0 ? m.central3 / std::pow(m.variance, 1.5) : 0.0;
  m.excess_kurtosis = m.variance > 0 ? m.central4 / (m.variance * m.variance) - 3.0 : 0.0;
  return m;
}

// Moments of Q = sum alpha_i Z_i^2 with independent standard normal Z_i.
inline QFormMoments qform_moments(const AlphaSpectrum& alphas) {
  if (alphas.empty()) throw std::invalid_argument("empty spectrum");
  double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
  for (double a : alphas) {
    s1 += a;
    s2 += a * a;
    s3 += a * a * a;
    s4 += a * a * a * a;
  }
  QFormMoments m;
  m.mean = s1;
  m.variance = 2 * s2;
  m.central3 = 8 * s3;
  m.central4 = 48 * s4 + 3 * m.variance * m.variance;
  return finalize_qform_moments(m);
}

// P(Y_df >= x), chi-squared with (possibly fractional) df degrees of freedom.
inline double chisq_upper_tail(double df, double x) {
  if (df <= 0) throw std::invalid_argument("degrees of freedom must be positive");
  if (x <= 0) return 1.0;
  return boost::math::gamma_q(df / 2.0, x / 2.0);
}

inline double normal_upper_tail(double z) { return 0.5 * boost::math::erfc(z / std::sqrt(2.0)); }

struct PValueResult {
  double p = 1.0;
  bool valid = true;
  std::string note;
};

// The chi-squared tail bounds are only guaranteed from this statistic/mean
// ratio upward (p-values below roughly 0.215).
inline constexpr double kTailValidityThreshold = 1.5365;

inline PValueResult pvalue_classical(double statistic, double mean) {
  if (mean <= 0) throw std::invalid_argument("mean must be positive");
  double ratio = statistic / mean;
  PValueResult r;
  r.p = chisq_upper_tail(1.0, ratio);
  r.valid = ratio >= kTailValidityThreshold;
  if (!r.valid) r.note = "tail bound queried below its validity threshold";
  return r;
}

inline PValueResult pvalue_variance(double statistic, double mean, double variance) {
  if (mean <= 0) throw std::invalid_argument("mean must be positive");
  if (variance < 0) throw std::invalid_argument("variance must be nonnegative");
  PValueResult r;
  if (variance == 0) {
    r.p = statistic <= mean ? 1.0 : 0.0;
    r.valid = true;
    r.note = "degenerate spectrum, point mass at the mean";
    return r;
  }
  double alpha = std::min(1.0, std::sqrt(variance / (2.0 * mean * mean)));
  double ratio = statistic / mean;
  r.p = chisq_upper_tail(1.0 / alpha, ratio / alpha);
  r.valid = ratio >= kTailValidityThreshold;
  if (!r.valid) r.note = "tail bound queried below its validity threshold";
  return r;
}

inline PValueResult pvalue_clt(double statistic, double mean, double variance) {
  if (variance <= 0) throw std::invalid_argument("variance must be positive");
  PValueResult r;
  r.p = normal_upper_tail((statistic - mean) / std::sqrt(variance));
  r.valid = true;
  return r;
}

inline PValueResult pvalue_pearson(double statistic, double mean, double variance,
                                   double skewness) {
  if (variance <= 0) throw std::invalid_argument("variance must be positive");
  if (skewness <= 0) {
    PValueResult r = pvalue_clt(statistic, mean, variance);
    r.note = "nonpositive skewness, normal approximation used instead";
    return r;
  }
  double beta = skewness / std::sqrt(8.0);
  double z = std::sqrt(2.0) * (statistic - mean) / std::sqrt(variance);
  PValueResult r;
  r.p = chisq_upper_tail(1.0 / (beta * beta), (z + 1.0 / beta) / beta);
  r.valid = true;
  return r;
}

// Three-parameter gamma-type law: density (x-c)^(a-1) e^(-(x-c)/b) / (b^a Gamma(a))
// on (c, inf); mean c + ab, variance a b^2, skewness 2/sqrt(a).
struct PearsonIII {
  double a = 1;
  double b = 1;
  double c = 0;
};

inline PearsonIII pearson3_from_moments(double mean, double variance, double skewness) {
  if (variance <= 0 || skewness <= 0) throw std::invalid_argument("need positive variance and skewness");
  PearsonIII p;
  p.a = 4.0 / (skewness * skewness);
  p.b = std::sqrt(variance) * skewness / 2.0;
  p.c = mean - 2.0 * std::sqrt(variance) / skewness;
  return p;
}

// (b/2) Y_{2a} + c has this law, so the tail is a rescaled chi-squared tail.
inline double pearson3_upper_tail(const PearsonIII& p, double x) {
  return chisq_upper_tail(2.0 * p.a, 2.0 * (x - p.c) / p.b);
}

// P(sum alpha_i Z_i^2 >= x) by Fourier inversion of the characteristic
// function: 1/2 + (1/pi) int_0^inf sin(theta(u)) / (u rho(u)) du with
// theta(u) = (1/2) sum atan(alpha_i u) - xu/2 and
// log rho(u) = (1/4) sum log(1 + alpha_i^2 u^2).
inline double qform_exact_tail(const AlphaSpectrum& alphas_in, double x) {
  if (alphas_in.empty()) throw std::invalid_argument("empty spectrum");
  AlphaSpectrum alphas;
  alphas.reserve(alphas_in.size());
  double sum = 0, amax = 0;
  for (double a : alphas_in) {
    if (a < -1e-12) throw std::invalid_argument("spectrum coefficients must be nonnegative");
    if (a > 0) {
      alphas.push_back(a);
      sum += a;
      amax = std::max(amax, a);
    }
  }
  if (sum <= 0) throw std::invalid_argument("spectrum must have positive mass");
  if (x <= 0) return 1.0;
  if (alphas.size() == 1) return chisq_upper_tail(1.0, x / alphas.front());

  auto theta = [&](double u) {
    double t = 0;
    for (double a : alphas) t += std::atan(a * u);
    return 0.5 * t - 0.5 * x * u;
  };
  auto log_rho = [&](double u) {
    double t = 0;
    for (double a : alphas) t += std::log1p(a * a * u * u);
    return 0.25 * t;
  };
  auto integrand = [&](double u) {
    if (u <= 0) return 0.5 * (sum - x);  // limit of sin(theta)/u at 0
    return std::sin(theta(u)) * std::exp(-log_rho(u)) / u;
  };

  // Panel width resolves the oscillation of theta; |theta'| <= (sum + x)/2.
  const double width = M_PI / (0.5 * (sum + x));
  boost::math::quadrature::gauss_kronrod<double, 31> gk;
  double acc = 0;
  double u = 0;
  bool converged = false;
  for (long panel = 0; panel < 2000000; ++panel) {
    double next = u + width;
    acc += gk.integrate(integrand, u, next, 0);
    u = next;
    // Beyond the atan knees theta decreases at rate between x/4 and x/2, so
    // the remaining integral alternates in half-waves of width at most 4pi/x
    // under a monotone envelope; the first half-wave bounds the tail.
    double knee = 0;
    for (double a : alphas) knee += a / (1.0 + a * a * u * u);
    if (amax * u >= 2.0 && 0.5 * knee <= 0.25 * x) {
      double envelope = std::exp(-log_rho(u)) / u;
      if (4.0 * envelope / x < 1e-8) {
        converged = true;
        break;
      }
    }
  }
  if (!converged) throw std::runtime_error("quadratic form inversion did not converge");
  double p = 0.5 + acc / M_PI;
  return std::clamp(p, 0.0, 1.0);
}

// Smallest point from which the alpha-parameterized chi-squared tail bound is
// guaranteed: the crossing of the CDFs of Y_m/m and Y_{m+1}/(m+1), m = ceil(1/alpha).
inline double compute_x0(double alpha) {
  if (!(alpha > 0.0) || alpha > 1.0) throw std::invalid_argument("alpha must lie in (0, 1]");
  double m = std::ceil(1.0 / alpha - 1e-12);
  // Expressed through upper tails the difference stays well conditioned on the
  // right, where both lower CDFs round to 1. The crossing lies in (1, 1.54) for
  // every m: at x=1 the CDF of Y_m/m exceeds that of Y_{m+1}/(m+1) (both are
  // evaluated at their mean, and the excess over 1/2 shrinks with m), while the
  // largest crossing is the m=1 one at about 1.5364.
  auto diff = [m](double x) {
    return boost::math::gamma_q((m + 1.0) / 2.0, (m + 1.0) * x / 2.0) -
           boost::math::gamma_q(m / 2.0, m * x / 2.0);
  };
  std::uintmax_t iters = 200;
  auto r = boost::math::tools::toms748_solve(
      diff, 1.0, 1.6, boost::math::tools::eps_tolerance<double>(48), iters);
  return 0.5 * (r.first + r.second);
}

}  // namespace multidep
