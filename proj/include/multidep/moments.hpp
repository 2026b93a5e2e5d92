#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "multidep/psi.hpp"
#include "multidep/qform.hpp"

namespace multidep {

// Population parameters of one marginal under psi: mu_k are the power sums of
// the covariance-operator eigenvalues; b, c, d, e, f, y, u are the pair/triple
// expectations they decompose into (b = E psi(X-X')^2, c = E psi(X-X')psi(X'-X''),
// d = [E psi(X-X')]^2, e/f = cycle and path triples, y = mu1*c, u = mu1^3).
struct MarginalMoments {
  double mu1 = 0, mu2 = 0, mu3 = 0, mu4 = 0;
  double b = 0, c = 0, d = 0;
  double e = 0, f = 0, y = 0, u = 0;
  bool mu3_available = true;
  bool mu4_available = true;
};

enum class BiasMode { biased, unbiased };
enum class MomentHorizon { limit, finite_sample };

struct EstimatorConfig {
  BiasMode bias = BiasMode::unbiased;
  MomentHorizon horizon = MomentHorizon::finite_sample;
  bool normalized = true;
};

inline MarginalMoments marginal_moments_biased(const MatrixStats& st) {
  const double N = static_cast<double>(st.N);
  const double N2 = N * N, N3 = N2 * N, N4 = N3 * N;
  MarginalMoments m;
  m.mu1 = st.abs_B / N2;
  m.b = st.abs_BhB / N2;
  m.c = st.abs_B2 / N3;
  m.d = m.mu1 * m.mu1;
  m.mu2 = m.b - 2 * m.c + m.d;
  m.f = st.abs_B3 / N4;
  m.y = m.c * m.mu1;
  m.u = m.mu1 * m.mu1 * m.mu1;
  if (st.has_spectral_sums) {
    m.e = st.abs_B2hB / N3;
    m.mu3 = -m.e + 3 * m.f - 3 * m.y + m.u;
    double cycle4 = st.abs_B3hB / N4;
    double path4 = st.abs_B4 / (N4 * N);
    m.mu4 = cycle4 - 4 * path4 + 4 * m.f * m.mu1 + 2 * m.c * m.c - 4 * m.c * m.d + m.d * m.d;
  } else {
    m.mu3_available = false;
    m.mu4_available = false;
  }
  return m;
}

inline MarginalMoments marginal_moments_unbiased(const MatrixStats& st) {
  const double N = static_cast<double>(st.N);
  auto falling = [N](int k) {
    double p = 1.0;
    for (int i = 0; i < k; ++i) p *= N - i;
    return p;
  };
  if (st.N < 2) throw std::invalid_argument("unbiased mu1 requires N >= 2");
  MarginalMoments m;
  m.mu1 = st.abs_B / falling(2);
  if (st.N < 4) throw std::invalid_argument("unbiased b, c, d, f require N >= 4");
  m.b = st.abs_BhB / falling(2);
  m.c = (st.abs_B2 - st.abs_BhB) / falling(3);
  m.d = (st.abs_B * st.abs_B + 2 * st.abs_BhB - 4 * st.abs_B2) / falling(4);
  m.mu2 = m.b - 2 * m.c + m.d;
  if (st.has_spectral_sums) {
    m.e = st.abs_B2hB / falling(3);
    m.f = (st.abs_B3 - st.abs_B2hB - 2 * st.abs_BhB_dot_B + st.abs_BhBhB) / falling(4);
    if (st.N >= 5) {
      m.y = (st.abs_B2 * st.abs_B - st.abs_BhB * st.abs_B - 2 * st.abs_colsum3 -
             4 * st.abs_BhBhB - 4 * st.abs_B3 + 2 * st.abs_B2hB + 10 * st.abs_BhB_dot_B) /
            falling(5);
    }
  }
  if (st.N >= 6 && st.has_spectral_sums) {
    m.u = (st.abs_B * st.abs_B * st.abs_B + 16 * st.abs_BhBhB - 48 * st.abs_BhB_dot_B -
           8 * st.abs_B2hB + 6 * st.abs_B * st.abs_BhB + 24 * st.abs_B3 +
           16 * st.abs_colsum3 - 12 * st.abs_B2 * st.abs_B) /
          falling(6);
    m.mu3 = -m.e + 3 * m.f - 3 * m.y + m.u;
    m.mu3_available = true;
  } else {
    m.mu3_available = false;
  }
  m.mu4_available = false;  // no unbiased fourth-moment estimator exists
  return m;
}

// ---- subset-combination families ----

struct CombinationFamily {
  enum class Type { single, total, m_subsets };
  Type type = Type::single;
  int m = 2;

  static CombinationFamily single() { return {Type::single, 0}; }
  static CombinationFamily total() { return {Type::total, 0}; }
  static CombinationFamily m_of(int m) { return {Type::m_subsets, m}; }

  double count(int n) const {
    switch (type) {
      case Type::single:
        return 1.0;
      case Type::total:
        return std::pow(2.0, n) - n - 1;
      case Type::m_subsets: {
        double c = 1.0;
        for (int i = 0; i < m; ++i) c = c * (n - i) / (i + 1);
        return c;
      }
    }
    return 1.0;
  }
};

// g_C(mu) = sum_{S in C} prod_{i in S} mu_i
inline double gc_eval(const std::vector<double>& mu, CombinationFamily family) {
  const int n = static_cast<int>(mu.size());
  switch (family.type) {
    case CombinationFamily::Type::single: {
      double p = 1.0;
      for (double v : mu) p *= v;
      return p;
    }
    case CombinationFamily::Type::total: {
      // subset-size DP with the size capped at two; s2 collects every subset
      // with at least two members. Unlike prod(1+mu) - sum - 1 this never
      // cancels near-one products, which matters when the entries are O(1/N).
      double s1 = 0.0, s2 = 0.0;
      for (double v : mu) {
        s2 = s2 * (1.0 + v) + s1 * v;
        s1 += v;
      }
      return s2;
    }
    case CombinationFamily::Type::m_subsets: {
      if (family.m < 0 || family.m > n) return 0.0;
      // elementary symmetric polynomial via one-row recurrence
      std::vector<double> e(family.m + 1, 0.0);
      e[0] = 1.0;
      for (double v : mu)
        for (int j = std::min<int>(family.m, n); j >= 1; --j) e[j] += v * e[j - 1];
      return e[family.m];
    }
  }
  return 0.0;
}

// G_C(u,v,w) = sum_{S,S' in C} prod_{S\S'} u prod_{S'\S} v prod_{S cap S'} w
inline double GC_eval(const std::vector<double>& u, const std::vector<double>& v,
                      const std::vector<double>& w, CombinationFamily family) {
  const std::size_t n = u.size();
  if (v.size() != n || w.size() != n) throw std::invalid_argument("u, v, w must share length");
  switch (family.type) {
    case CombinationFamily::Type::single: {
      double p = 1.0;
      for (double x : w) p *= x;
      return p;
    }
    case CombinationFamily::Type::total: {
      // joint membership DP with both subset sizes capped at two: dp[a][b]
      // sums the products over pairs (S, S') with min(|S|,2)=a, min(|S'|,2)=b.
      // Accumulating products of the inputs directly avoids the cancellation
      // an inclusion-exclusion over near-one factors would produce when the
      // entries are O(1/N).
      double dp[3][3] = {{1.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}};
      for (std::size_t i = 0; i < n; ++i) {
        double nx[3][3] = {};
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) {
            double base = dp[a][b];
            if (base == 0.0) continue;
            int a1 = a < 2 ? a + 1 : 2, b1 = b < 2 ? b + 1 : 2;
            nx[a][b] += base;          // in neither subset
            nx[a1][b] += base * u[i];  // in S only
            nx[a][b1] += base * v[i];  // in S' only
            nx[a1][b1] += base * w[i];  // in both
          }
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) dp[a][b] = nx[a][b];
      }
      return dp[2][2];
    }
    case CombinationFamily::Type::m_subsets: {
      const int m = family.m;
      if (m < 0 || m > static_cast<int>(n)) return 0.0;
      // dp[a][b][c]: a components in S only, b in S' only, c in both
      const int dim = m + 1;
      std::vector<double> dp(dim * dim * dim, 0.0);
      auto at = [dim](std::vector<double>& t, int a, int b, int c) -> double& {
        return t[(a * dim + b) * dim + c];
      };
      at(dp, 0, 0, 0) = 1.0;
      std::vector<double> next(dp.size());
      for (std::size_t i = 0; i < n; ++i) {
        next = dp;
        for (int a = m; a >= 0; --a)
          for (int b = m; b >= 0; --b)
            for (int c = m; c >= 0; --c) {
              double base = at(dp, a, b, c);
              if (base == 0.0) continue;
              if (a < m) at(next, a + 1, b, c) += u[i] * base;
              if (b < m) at(next, a, b + 1, c) += v[i] * base;
              if (c < m) at(next, a, b, c + 1) += w[i] * base;
            }
        dp.swap(next);
      }
      double out = 0.0;
      for (int c = 0; c <= m; ++c) out += at(dp, m - c, m - c, c);
      return out;
    }
  }
  return 0.0;
}

// ---- coefficient table (second-moment index-class polynomials) ----

struct CoefficientTable {
  // number of (j,k,l,m) index tuples in class k
  static double tuple_count(double N, int k) {
    switch (k) {
      case 1: return N * (N - 1) * (N - 2) * (N - 3);
      case 2: return 2 * N * (N - 1);
      case 3: return 4 * N * (N - 1) * (N - 2);
      case 4: return N * (N - 1);
      case 5: return 4 * N * (N - 1);
      case 6: return 2 * N * (N - 1) * (N - 2);
      case 7: return N;
    }
    throw std::invalid_argument("class index must lie in 1..7");
  }

  // coefficient of a_i (vanishing expectations; kept for the limit checks,
  // never entering the second-moment formula)
  static double a(double N, int k) {
    double N2 = N * N, N3 = N2 * N, N4 = N3 * N;
    switch (k) {
      case 1: return -N2;
      case 2: return -N2;
      case 3: return -N2;
      case 4: return -N2 + 2 * N3 - N4;
      case 5: return -N2 + N3;
      case 6: return -N2 + N3;
      case 7: return -N2 + 2 * N3 - N4;
    }
    throw std::invalid_argument("class index must lie in 1..7");
  }

  static double b(double N, int k) {
    double N2 = N * N, N3 = N2 * N, N4 = N3 * N;
    switch (k) {
      case 1: return 6 * N + 2 * N2;
      case 2: return 6 * N - 2 * N2 - 2 * N3 + N4;
      case 3: return 6 * N - N3;
      case 4: return 6 * N - 2 * N2;
      case 5: return 6 * N - 4 * N2;
      case 6: return 6 * N;
      case 7: return 6 * N - 10 * N2 + 4 * N3;
    }
    throw std::invalid_argument("class index must lie in 1..7");
  }

  static double c(double N, int k) {
    double N2 = N * N, N3 = N2 * N, N4 = N3 * N;
    switch (k) {
      case 1: return -24 * N - 4 * N2;
      case 2: return -24 * N + 12 * N2 + 4 * N3 - 2 * N4;
      case 3: return -24 * N + 4 * N2 + 2 * N3;
      case 4: return -24 * N + 12 * N2;
      case 5: return -24 * N + 20 * N2 - 4 * N3;
      case 6: return -24 * N + 4 * N2;
      case 7: return -24 * N + 44 * N2 - 24 * N3 + 4 * N4;
    }
    throw std::invalid_argument("class index must lie in 1..7");
  }

  static double d(double N, int k) {
    double N2 = N * N, N3 = N2 * N, N4 = N3 * N;
    switch (k) {
      case 1: return 18 * N + 3 * N2;
      case 2: return 18 * N - 9 * N2 - 2 * N3 + N4;
      case 3: return 18 * N - 3 * N2 - N3;
      case 4: return 18 * N - 9 * N2 - 2 * N3 + N4;
      case 5: return 18 * N - 15 * N2 + 3 * N3;
      case 6: return 18 * N - 3 * N2 - N3;
      case 7: return 18 * N - 33 * N2 + 18 * N3 - 3 * N4;
    }
    throw std::invalid_argument("class index must lie in 1..7");
  }

  // cross-subset expectation factors (raw statistic)
  static double e1(double N, int k) { return k <= 3 ? -1.0 / N : 1.0 - 1.0 / N; }
  static double e2(double N, int k) {
    return (k <= 3 || k == 5 || k == 6) ? -1.0 / N : 1.0 - 1.0 / N;
  }
  // cross-subset expectation factors (normalized statistic)
  static double f1(double N, int k) { return k <= 3 ? -1.0 / (N - 1.0) : 1.0; }
  static double f2(double N, int k) {
    return (k <= 3 || k == 5 || k == 6) ? -1.0 / (N - 1.0) : 1.0;
  }
};

// ---- joint moments ----

inline QFormMoments joint_limit_moments(const std::vector<MarginalMoments>& vars,
                                        CombinationFamily family) {
  const std::size_t n = vars.size();
  std::vector<double> m1(n), m2(n), m3(n), m4(n), m2sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    m1[i] = vars[i].mu1;
    m2[i] = vars[i].mu2;
    m3[i] = vars[i].mu3;
    m4[i] = vars[i].mu4;
    m2sq[i] = vars[i].mu2 * vars[i].mu2;
  }
  QFormMoments q;
  q.mean = gc_eval(m1, family);
  q.variance = 2 * gc_eval(m2, family);
  q.central3 = 8 * gc_eval(m3, family);
  q.central4 = 48 * gc_eval(m4, family) + 12 * gc_eval(m2sq, family);
  return finalize_qform_moments(q);
}

// Moments of s * Q given the moments of Q.
inline QFormMoments scale_qform_moments(QFormMoments q, double s) {
  q.mean *= s;
  q.variance *= s * s;
  q.central3 *= s * s * s;
  q.central4 *= s * s * s * s;
  return finalize_qform_moments(q);
}

// Per-variable transform describing the statistic built from B_i / mu1_i
// (limit of the normalization factor); constant variables map to zero.
inline MarginalMoments limit_normalized_transform(const MarginalMoments& m) {
  MarginalMoments out = m;
  if (m.mu1 <= 0) return MarginalMoments{};
  double s = 1.0 / m.mu1;
  out.mu1 = 1.0;
  out.mu2 = m.mu2 * s * s;
  out.mu3 = m.mu3 * s * s * s;
  out.mu4 = m.mu4 * s * s * s * s;
  out.b = m.b * s * s;
  out.c = m.c * s * s;
  out.d = m.d * s * s;
  out.e = m.e * s * s * s;
  out.f = m.f * s * s * s;
  out.y = m.y * s * s * s;
  out.u = m.u * s * s * s;
  return out;
}

struct FiniteSampleMoments {
  double mean = 0;
  double second_moment = 0;
  double squared_mean = 0;  // unbiased-friendly form, not mean*mean
  double variance = 0;
};

inline FiniteSampleMoments finite_sample_moments(const std::vector<MarginalMoments>& vars,
                                                 double N, CombinationFamily family) {
  const std::size_t n = vars.size();
  std::vector<double> mu_hi(n), mu_lo(n);
  for (std::size_t i = 0; i < n; ++i) {
    mu_hi[i] = (1.0 - 1.0 / N) * vars[i].mu1;
    mu_lo[i] = (-1.0 / N) * vars[i].mu1;
  }
  FiniteSampleMoments out;
  out.mean = gc_eval(mu_hi, family) + (N - 1) * gc_eval(mu_lo, family);

  const double N4 = N * N * N * N;
  std::vector<double> u(n), v(n), w(n);
  for (int k = 1; k <= 7; ++k) {
    double cnt = CoefficientTable::tuple_count(N, k);
    if (cnt == 0) continue;
    double bk = CoefficientTable::b(N, k);
    double ck = CoefficientTable::c(N, k);
    double dk = CoefficientTable::d(N, k);
    double e1 = CoefficientTable::e1(N, k);
    double e2 = CoefficientTable::e2(N, k);
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = e1 * vars[i].mu1;
      v[i] = e2 * vars[i].mu1;
      w[i] = (bk * vars[i].b + ck * vars[i].c + dk * vars[i].d) / N4;
    }
    out.second_moment += cnt * GC_eval(u, v, w, family);
    for (std::size_t i = 0; i < n; ++i) w[i] = e1 * e2 * vars[i].d;
    out.squared_mean += cnt * GC_eval(u, v, w, family);
  }
  out.second_moment /= N * N;
  out.squared_mean /= N * N;
  out.variance = out.second_moment - out.squared_mean;
  return out;
}

// Moments of the normalized statistic as defined in the statistics module,
// i.e. including the 1/|C| scale for total and m-subset families. Constant
// variables contribute zero components.
inline FiniteSampleMoments normalized_finite_sample_moments(
    const std::vector<MarginalMoments>& vars, double N, CombinationFamily family) {
  const std::size_t n = vars.size();
  std::vector<double> ind(n), ind_lo(n);
  std::vector<double> bn(n), cn(n), dn(n);
  for (std::size_t i = 0; i < n; ++i) {
    bool constant = vars[i].mu1 <= 0;
    ind[i] = constant ? 0.0 : 1.0;
    ind_lo[i] = constant ? 0.0 : -1.0 / (N - 1.0);
    if (constant) {
      bn[i] = cn[i] = dn[i] = 0.0;
    } else {
      // quotient approximation: divide by the second moment of the
      // normalization factor, E(h_i^2) = (C(N,2) b + C(N,3) c + C(N,1) d)/N^4
      double Eh2 = (CoefficientTable::tuple_count(N, 2) * vars[i].b +
                    CoefficientTable::tuple_count(N, 3) * vars[i].c +
                    CoefficientTable::tuple_count(N, 1) * vars[i].d) /
                   (N * N * N * N);
      if (Eh2 <= 0) {
        bn[i] = cn[i] = dn[i] = 0.0;
        ind[i] = ind_lo[i] = 0.0;
      } else {
        bn[i] = vars[i].b / Eh2;
        cn[i] = vars[i].c / Eh2;
        dn[i] = vars[i].d / Eh2;
      }
    }
  }

  FiniteSampleMoments out;
  out.mean = gc_eval(ind, family) + (N - 1) * gc_eval(ind_lo, family);

  const double N4 = N * N * N * N;
  std::vector<double> u(n), v(n), w(n);
  for (int k = 1; k <= 7; ++k) {
    double cnt = CoefficientTable::tuple_count(N, k);
    if (cnt == 0) continue;
    double bk = CoefficientTable::b(N, k);
    double ck = CoefficientTable::c(N, k);
    double dk = CoefficientTable::d(N, k);
    double f1 = CoefficientTable::f1(N, k);
    double f2 = CoefficientTable::f2(N, k);
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = f1 * ind[i];
      v[i] = f2 * ind[i];
      w[i] = (bk * bn[i] + ck * cn[i] + dk * dn[i]) / N4;
    }
    out.second_moment += cnt * GC_eval(u, v, w, family);
  }
  out.second_moment /= N * N;

  double scale = 1.0 / family.count(static_cast<int>(n));
  out.mean *= scale;
  out.second_moment *= scale * scale;
  out.squared_mean = out.mean * out.mean;
  out.variance = out.second_moment - out.squared_mean;
  return out;
}

inline double standardize(double statistic, double mean, double variance) {
  if (variance <= 0) throw std::invalid_argument("variance must be positive");
  return (statistic - mean) / std::sqrt(variance);
}

}  // namespace multidep
