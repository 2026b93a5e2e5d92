#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "multidep/moments.hpp"
#include "multidep/qform.hpp"
#include "multidep/rng.hpp"
#include "multidep/spectral.hpp"
#include "multidep/statistics.hpp"

namespace multidep {

enum class TestMethod {
  classical,
  variance,
  pearson,
  clt,
  eigenvalue,
  permutation,
  bootstrap,
  montecarlo
};

inline const char* method_name(TestMethod m) {
  switch (m) {
    case TestMethod::classical: return "classical";
    case TestMethod::variance: return "variance";
    case TestMethod::pearson: return "pearson";
    case TestMethod::clt: return "clt";
    case TestMethod::eigenvalue: return "eigenvalue";
    case TestMethod::permutation: return "permutation";
    case TestMethod::bootstrap: return "bootstrap";
    case TestMethod::montecarlo: return "montecarlo";
  }
  return "unknown";
}

inline TestMethod method_from_name(const std::string& name) {
  for (TestMethod m : {TestMethod::classical, TestMethod::variance, TestMethod::pearson,
                       TestMethod::clt, TestMethod::eigenvalue, TestMethod::permutation,
                       TestMethod::bootstrap, TestMethod::montecarlo})
    if (name == method_name(m)) return m;
  throw std::invalid_argument("unknown method: " + name);
}

struct TestSpec {
  StatisticKind kind;
  TestMethod method = TestMethod::pearson;
  EstimatorConfig estimator;  // the kind's normalized flag governs, not the copy in here
  std::size_t resamples = 1000;
  std::uint64_t rng_seed = 0;
};

struct TestResult {
  double statistic = 0.0;
  double p = 1.0;
  bool valid = true;
  std::string method;
  std::map<std::string, double> parameters;
  std::vector<std::string> warnings;
};

inline CombinationFamily family_of(StatisticKind kind) {
  switch (kind.family) {
    case StatisticKind::Family::multivariance:
      return CombinationFamily::single();
    case StatisticKind::Family::total:
      return CombinationFamily::total();
    case StatisticKind::Family::m_multivariance:
      return CombinationFamily::m_of(kind.m);
  }
  return CombinationFamily::single();
}

namespace detail {

inline double statistic_from_raw(const std::vector<DistanceMatrix>& raw, StatisticKind kind) {
  std::vector<CenteredMatrix> a;
  a.reserve(raw.size());
  for (const auto& b : raw)
    a.push_back(double_center(kind.normalized ? normalize_distance_matrix(b).first : b));
  return statistic_from_centered(a, kind);
}

inline std::vector<DistanceMatrix> raw_matrices(const Dataset& data) {
  std::vector<DistanceMatrix> raw;
  raw.reserve(data.n());
  for (std::size_t i = 0; i < data.n(); ++i)
    raw.push_back(distance_matrix(data.blocks[i], data.psi(i)));
  return raw;
}

// mt19937_64 output is fully specified by the standard, so drawing indices
// directly from it (instead of through a distribution) keeps resampling
// replicates byte-identical across standard libraries. The modulo bias is
// below N / 2^64.
inline Eigen::Index draw_index(std::mt19937_64& rng, Eigen::Index N) {
  return static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(N));
}

inline void shuffle_indices(std::vector<Eigen::Index>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng() % i)]);
}

inline DistanceMatrix gather(const DistanceMatrix& b, const std::vector<Eigen::Index>& idx) {
  const Eigen::Index N = b.rows();
  DistanceMatrix out(N, N);
  for (Eigen::Index j = 0; j < N; ++j)
    for (Eigen::Index k = 0; k < N; ++k) out(j, k) = b(idx[static_cast<std::size_t>(j)],
                                                       idx[static_cast<std::size_t>(k)]);
  return out;
}

inline std::vector<std::vector<int>> family_subsets(CombinationFamily family, int n) {
  std::vector<std::vector<int>> out;
  switch (family.type) {
    case CombinationFamily::Type::single: {
      std::vector<int> all(static_cast<std::size_t>(n));
      std::iota(all.begin(), all.end(), 0);
      out.push_back(std::move(all));
      break;
    }
    case CombinationFamily::Type::m_subsets:
      for_each_subset(n, family.m, [&](const std::vector<int>& s) { out.push_back(s); });
      break;
    case CombinationFamily::Type::total: {
      if (n > 20) throw std::invalid_argument("subset enumeration limited to 20 variables");
      for (unsigned mask = 1; mask < (1u << n); ++mask) {
        std::vector<int> s;
        for (int i = 0; i < n; ++i)
          if (mask & (1u << i)) s.push_back(i);
        if (s.size() >= 2) out.push_back(std::move(s));
      }
      break;
    }
  }
  return out;
}

}  // namespace detail

// Coefficients of the limit distribution: per-variable Nystrom spectra of the
// empirical kernels, combined over the subsets the statistic sums. The product
// lattice is capped and the truncated mass is put on one surrogate
// coefficient, so the first moment of the returned spectrum is exact.
inline AlphaSpectrum limit_spectrum(const Dataset& data, StatisticKind kind,
                                    std::size_t cap = 10000) {
  validate(data);
  for (const auto& block : data.blocks)
    if (block.cols() != 1)
      throw std::invalid_argument("the eigenvalue method needs univariate variables");

  QuadratureRule rho = levy_rho_rule();
  const int n = static_cast<int>(data.n());
  std::vector<std::vector<double>> per(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    CovKernel kernel{CharFunction::empirical(data.blocks[static_cast<std::size_t>(i)])};
    std::vector<double>& lam = per[static_cast<std::size_t>(i)];
    lam = nystrom_eigenvalues(kernel, rho, rho.size());
    while (lam.size() > 1 && lam.back() <= 0.0) lam.pop_back();
    if (kind.normalized) {
      double trace = std::accumulate(lam.begin(), lam.end(), 0.0);
      if (trace > 0)
        for (double& v : lam) v /= trace;
    }
  }

  CombinationFamily family = family_of(kind);
  auto subsets = detail::family_subsets(family, n);
  std::size_t per_cap = std::max<std::size_t>(1, cap / subsets.size());

  AlphaSpectrum alphas;
  double exact_mean = 0.0;
  for (const auto& subset : subsets) {
    std::vector<std::vector<double>> lists;
    lists.reserve(subset.size());
    double mean_s = 1.0;
    for (int i : subset) {
      const auto& lam = per[static_cast<std::size_t>(i)];
      lists.push_back(lam);
      mean_s *= std::accumulate(lam.begin(), lam.end(), 0.0);
    }
    exact_mean += mean_s;
    for (double v : product_eigenvalues(lists, per_cap))
      if (v > 0) alphas.push_back(v);
  }

  double collected = std::accumulate(alphas.begin(), alphas.end(), 0.0);
  double residual = exact_mean - collected;
  if (residual > 1e-12 * std::max(1.0, exact_mean)) alphas.push_back(residual);

  if (kind.normalized) {
    double scale = 1.0 / family.count(n);
    for (double& a : alphas) a *= scale;
  }
  std::sort(alphas.rbegin(), alphas.rend());
  return alphas;
}

// Limit moments of the statistic for the given kind, from per-variable
// marginal moments; the normalized statistic additionally carries the
// 1/|combinations| scale for the total and m-subset families.
inline QFormMoments limit_statistic_moments(std::vector<MarginalMoments> vars,
                                            StatisticKind kind) {
  CombinationFamily family = family_of(kind);
  if (kind.normalized)
    for (auto& v : vars) v = limit_normalized_transform(v);
  QFormMoments q = joint_limit_moments(vars, family);
  if (kind.normalized) q = scale_qform_moments(q, 1.0 / family.count(static_cast<int>(vars.size())));
  return q;
}

inline TestResult resample_pvalue(const Dataset& data, const TestSpec& spec) {
  validate(data);
  if (spec.resamples == 0) throw std::invalid_argument("resamples must be positive");
  if (spec.method != TestMethod::permutation && spec.method != TestMethod::bootstrap)
    throw std::invalid_argument("resampling requires the permutation or bootstrap method");

  TestResult result;
  result.method = method_name(spec.method);
  std::vector<DistanceMatrix> raw = detail::raw_matrices(data);
  const double observed = detail::statistic_from_raw(raw, spec.kind);
  result.statistic = observed;

  const Eigen::Index N = data.N();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(N));
  std::vector<DistanceMatrix> res(raw.size());
  std::size_t count = 0;
  for (std::size_t r = 1; r <= spec.resamples; ++r) {
    auto rng = make_rng(spec.rng_seed, r);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      // permutation leaves the first variable in place; relabeling it too
      // would only compose with the other permutations
      if (spec.method == TestMethod::permutation && i == 0) {
        res[i] = raw[i];
        continue;
      }
      if (spec.method == TestMethod::permutation) {
        std::iota(idx.begin(), idx.end(), 0);
        detail::shuffle_indices(idx, rng);
      } else {
        for (auto& v : idx) v = detail::draw_index(rng, N);
      }
      res[i] = detail::gather(raw[i], idx);
    }
    if (detail::statistic_from_raw(res, spec.kind) >= observed) ++count;
  }
  result.p = (1.0 + static_cast<double>(count)) / (1.0 + static_cast<double>(spec.resamples));
  result.valid = true;
  result.parameters["resamples"] = static_cast<double>(spec.resamples);
  return result;
}

using DatasetGenerator = std::function<Dataset(std::mt19937_64&)>;

struct MonteCarloBenchmark {
  std::vector<double> statistics;  // ascending

  double pvalue(double x) const {
    auto it = std::lower_bound(statistics.begin(), statistics.end(), x);
    double ge = static_cast<double>(statistics.end() - it);
    return (1.0 + ge) / (1.0 + static_cast<double>(statistics.size()));
  }
};

inline MonteCarloBenchmark montecarlo_benchmark(const DatasetGenerator& generator,
                                                const TestSpec& spec, std::size_t M) {
  if (M == 0) throw std::invalid_argument("Monte Carlo sample count must be positive");
  MonteCarloBenchmark bench;
  bench.statistics.reserve(M);
  for (std::size_t r = 1; r <= M; ++r) {
    auto rng = make_rng(spec.rng_seed, r);
    Dataset draw = generator(rng);
    bench.statistics.push_back(
        detail::statistic_from_raw(detail::raw_matrices(draw), spec.kind));
  }
  std::sort(bench.statistics.begin(), bench.statistics.end());
  return bench;
}

// H0 sampler keeping the observed marginals: every variable's rows are drawn
// independently with replacement.
inline DatasetGenerator empirical_product_sampler(const Dataset& data) {
  validate(data);
  return [data](std::mt19937_64& rng) {
    Dataset out;
    out.psis = data.psis;
    const Eigen::Index N = data.N();
    for (const auto& block : data.blocks) {
      ObservationBlock b(N, block.cols());
      for (Eigen::Index j = 0; j < N; ++j) b.row(j) = block.row(detail::draw_index(rng, N));
      out.blocks.push_back(std::move(b));
    }
    return out;
  };
}

inline TestResult run_test(const Dataset& data, const TestSpec& spec) {
  validate(data);
  if (spec.method == TestMethod::permutation || spec.method == TestMethod::bootstrap)
    return resample_pvalue(data, spec);

  TestResult result;
  result.method = method_name(spec.method);

  std::vector<DistanceMatrix> raw = detail::raw_matrices(data);
  bool all_constant = true;
  for (const auto& b : raw) all_constant = all_constant && b.mean() <= 0.0;
  if (all_constant) {
    result.statistic = 0.0;
    result.p = 1.0;
    result.warnings.push_back("all variables are constant");
    return result;
  }

  result.statistic = detail::statistic_from_raw(raw, spec.kind);

  if (spec.method == TestMethod::montecarlo) {
    if (spec.resamples == 0) throw std::invalid_argument("resamples must be positive");
    MonteCarloBenchmark bench =
        montecarlo_benchmark(empirical_product_sampler(data), spec, spec.resamples);
    result.p = bench.pvalue(result.statistic);
    result.valid = true;
    result.parameters["resamples"] = static_cast<double>(spec.resamples);
    return result;
  }

  if (spec.method == TestMethod::clt &&
      spec.kind.family != StatisticKind::Family::m_multivariance)
    result.warnings.push_back(
        "the normal approximation is only backed for m-multivariance with identically "
        "distributed variables");

  if (spec.method == TestMethod::eigenvalue) {
    AlphaSpectrum alphas = limit_spectrum(data, spec.kind);
    double mean = std::accumulate(alphas.begin(), alphas.end(), 0.0);
    if (mean <= 0) {
      result.p = 1.0;
      result.warnings.push_back("degenerate spectrum, the statistic vanishes in the limit");
      return result;
    }
    double var = 0.0;
    for (double a : alphas) var += 2.0 * a * a;
    result.parameters["mean"] = mean;
    result.parameters["variance"] = var;
    result.parameters["alphas"] = static_cast<double>(alphas.size());
    result.p = qform_exact_tail(alphas, result.statistic);
    result.valid = true;
    return result;
  }

  BiasMode bias = spec.estimator.bias;
  if (bias == BiasMode::unbiased && data.N() < 6) {
    bias = BiasMode::biased;
    result.warnings.push_back("sample too small for unbiased moment estimators, using biased");
  }
  // only the skewness path needs the O(N^3) spectral sums
  StatsDepth depth = spec.method == TestMethod::pearson ? StatsDepth::full
                                                        : StatsDepth::second_order;
  std::vector<MarginalMoments> vars;
  vars.reserve(data.n());
  for (const auto& b : raw) {
    MatrixStats st = matrix_statistics(b, depth);
    vars.push_back(bias == BiasMode::biased ? marginal_moments_biased(st)
                                            : marginal_moments_unbiased(st));
  }

  CombinationFamily family = family_of(spec.kind);
  double mean = 0.0, variance = 0.0;
  if (spec.estimator.horizon == MomentHorizon::finite_sample) {
    FiniteSampleMoments fs =
        spec.kind.normalized
            ? normalized_finite_sample_moments(vars, static_cast<double>(data.N()), family)
            : finite_sample_moments(vars, static_cast<double>(data.N()), family);
    mean = fs.mean;
    variance = fs.variance;
  } else {
    QFormMoments q = limit_statistic_moments(vars, spec.kind);
    mean = q.mean;
    variance = q.variance;
  }
  result.parameters["mean"] = mean;
  result.parameters["variance"] = variance;

  if (mean <= 0) {
    result.p = 1.0;
    result.warnings.push_back("degenerate moments, the statistic vanishes in the limit");
    return result;
  }
  if (variance < 0) {
    variance = 0.0;
    result.parameters["variance"] = 0.0;
    result.warnings.push_back("negative variance estimate clamped to zero");
  }

  PValueResult pv;
  switch (spec.method) {
    case TestMethod::classical:
      pv = pvalue_classical(result.statistic, mean);
      break;
    case TestMethod::variance:
      pv = pvalue_variance(result.statistic, mean, variance);
      break;
    case TestMethod::pearson: {
      if (variance <= 0) {
        pv.p = result.statistic <= mean ? 1.0 : 0.0;
        pv.note = "degenerate spectrum, point mass at the mean";
        break;
      }
      // the skewness of the limit law anchors the shape even when the first
      // two moments come from the finite-sample formulas
      QFormMoments q = limit_statistic_moments(vars, spec.kind);
      result.parameters["skewness"] = q.skewness;
      pv = pvalue_pearson(result.statistic, mean, variance, q.skewness);
      break;
    }
    case TestMethod::clt:
      if (variance <= 0) {
        pv.p = result.statistic <= mean ? 1.0 : 0.0;
        pv.note = "degenerate spectrum, point mass at the mean";
        break;
      }
      pv = pvalue_clt(result.statistic, mean, variance);
      break;
    default:
      throw std::logic_error("unhandled method");
  }
  result.p = pv.p;
  result.valid = pv.valid;
  if (!pv.note.empty()) result.warnings.push_back(pv.note);
  return result;
}

}  // namespace multidep
