#pragma once

#include <complex>
#include <stdexcept>
#include <vector>

#include "multidep/psi.hpp"

namespace multidep {

struct Dataset {
  std::vector<ObservationBlock> blocks;
  std::vector<PsiFunction> psis;  // one per block; a single entry is broadcast

  Eigen::Index N() const { return blocks.empty() ? 0 : blocks.front().rows(); }
  std::size_t n() const { return blocks.size(); }

  const PsiFunction& psi(std::size_t i) const {
    static const PsiFunction default_psi{};
    if (psis.empty()) return default_psi;
    return psis.size() == 1 ? psis.front() : psis.at(i);
  }
};

inline void validate(const Dataset& data) {
  if (data.n() < 2) throw std::invalid_argument("need at least two variables");
  const Eigen::Index N = data.N();
  if (N < 2) throw std::invalid_argument("need at least two observations");
  for (const auto& b : data.blocks)
    if (b.rows() != N) throw std::invalid_argument("blocks must share the sample size");
  if (data.psis.size() > 1 && data.psis.size() != data.n())
    throw std::invalid_argument("psi list must match the number of blocks");
}

struct StatisticKind {
  enum class Family { multivariance, total, m_multivariance };
  Family family = Family::multivariance;
  int m = 2;                // only read for m_multivariance
  bool normalized = true;
};

inline double subset_count(StatisticKind kind, int n) {
  switch (kind.family) {
    case StatisticKind::Family::multivariance:
      return 1.0;
    case StatisticKind::Family::total: {
      double c = std::pow(2.0, n) - n - 1;
      return c;
    }
    case StatisticKind::Family::m_multivariance: {
      double c = 1.0;
      for (int i = 0; i < kind.m; ++i) c = c * (n - i) / (i + 1);
      return c;
    }
  }
  return 1.0;
}

// Doubly centered matrices A_i, from the raw or the normalized B_i.
inline std::vector<CenteredMatrix> centered_matrices(const Dataset& data, bool normalized) {
  validate(data);
  std::vector<CenteredMatrix> out;
  out.reserve(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    DistanceMatrix b = distance_matrix(data.blocks[i], data.psi(i));
    if (normalized) b = normalize_distance_matrix(b).first;
    out.push_back(double_center(b));
  }
  return out;
}

namespace detail {

// N * (1/N^2) sum_{j,k} prod_i A_i[j,k]
inline double multivariance_from_centered(const std::vector<CenteredMatrix>& a) {
  const Eigen::Index N = a.front().rows();
  Eigen::ArrayXXd prod = a.front().array();
  for (std::size_t i = 1; i < a.size(); ++i) prod *= a[i].array();
  return prod.sum() / static_cast<double>(N);
}

inline double multivariance_over_subset(const std::vector<CenteredMatrix>& a,
                                        const std::vector<int>& subset) {
  const Eigen::Index N = a.front().rows();
  Eigen::ArrayXXd prod = a[subset.front()].array();
  for (std::size_t i = 1; i < subset.size(); ++i) prod *= a[subset[i]].array();
  return prod.sum() / static_cast<double>(N);
}

inline double total_from_centered(const std::vector<CenteredMatrix>& a) {
  const Eigen::Index N = a.front().rows();
  Eigen::ArrayXXd prod = Eigen::ArrayXXd::Ones(N, N);
  Eigen::ArrayXXd lin = Eigen::ArrayXXd::Zero(N, N);
  for (const auto& ai : a) {
    prod *= (1.0 + ai.array());
    lin += ai.array();
  }
  return (prod - 1.0 - lin).sum() / static_cast<double>(N);
}

inline double m2_from_centered(const std::vector<CenteredMatrix>& a) {
  const Eigen::Index N = a.front().rows();
  Eigen::ArrayXXd p1 = Eigen::ArrayXXd::Zero(N, N);
  Eigen::ArrayXXd p2 = Eigen::ArrayXXd::Zero(N, N);
  for (const auto& ai : a) {
    p1 += ai.array();
    p2 += ai.array().square();
  }
  return 0.5 * (p1.square() - p2).sum() / static_cast<double>(N);
}

inline double m3_from_centered(const std::vector<CenteredMatrix>& a) {
  const Eigen::Index N = a.front().rows();
  Eigen::ArrayXXd p1 = Eigen::ArrayXXd::Zero(N, N);
  Eigen::ArrayXXd p2 = Eigen::ArrayXXd::Zero(N, N);
  Eigen::ArrayXXd p3 = Eigen::ArrayXXd::Zero(N, N);
  for (const auto& ai : a) {
    p1 += ai.array();
    p2 += ai.array().square();
    p3 += ai.array().cube();
  }
  return ((p1.cube() - 3.0 * p1 * p2 + 2.0 * p3) / 6.0).sum() / static_cast<double>(N);
}

template <class Visit>
inline void for_each_subset(int n, int m, Visit&& visit) {
  std::vector<int> idx(m);
  for (int i = 0; i < m; ++i) idx[i] = i;
  while (true) {
    visit(idx);
    int i = m - 1;
    while (i >= 0 && idx[i] == n - m + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < m; ++j) idx[j] = idx[j - 1] + 1;
  }
}

inline double m_general_from_centered(const std::vector<CenteredMatrix>& a, int m) {
  double sum = 0.0;
  for_each_subset(static_cast<int>(a.size()), m,
                  [&](const std::vector<int>& s) { sum += multivariance_over_subset(a, s); });
  return sum;
}

}  // namespace detail

// All statistics carry the factor N (test-statistic scaling); divide by N to
// recover the plain squared-norm value.
inline double statistic_from_centered(const std::vector<CenteredMatrix>& a, StatisticKind kind) {
  const int n = static_cast<int>(a.size());
  double value = 0.0;
  switch (kind.family) {
    case StatisticKind::Family::multivariance:
      value = detail::multivariance_from_centered(a);
      break;
    case StatisticKind::Family::total:
      value = detail::total_from_centered(a);
      if (kind.normalized) value /= subset_count(kind, n);
      break;
    case StatisticKind::Family::m_multivariance:
      if (kind.m < 2 || kind.m > n) throw std::invalid_argument("m must lie in [2, n]");
      if (kind.m == 2)
        value = detail::m2_from_centered(a);
      else if (kind.m == 3)
        value = detail::m3_from_centered(a);
      else
        value = detail::m_general_from_centered(a, kind.m);
      if (kind.normalized) value /= subset_count(kind, n);
      break;
  }
  return value;
}

inline double sample_multivariance(const Dataset& data, bool normalized = true) {
  StatisticKind kind{StatisticKind::Family::multivariance, 2, normalized};
  return statistic_from_centered(centered_matrices(data, normalized), kind);
}

inline double sample_total_multivariance(const Dataset& data, bool normalized = true) {
  StatisticKind kind{StatisticKind::Family::total, 2, normalized};
  return statistic_from_centered(centered_matrices(data, normalized), kind);
}

inline double sample_m_multivariance(const Dataset& data, int m, bool normalized = true) {
  StatisticKind kind{StatisticKind::Family::m_multivariance, m, normalized};
  return statistic_from_centered(centered_matrices(data, normalized), kind);
}

inline double unscaled_statistic(double statistic, Eigen::Index N) {
  return statistic / static_cast<double>(N);
}

// ---- characteristic-function oracle ----

struct DiscreteMeasure {
  Eigen::MatrixXd atoms;    // one row per atom
  Eigen::VectorXd weights;  // positive
  bool symmetric = true;    // atoms closed under t -> -t with equal weights

  double psi(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    double s = 0.0;
    for (Eigen::Index a = 0; a < atoms.rows(); ++a)
      s += weights[a] * (1.0 - std::cos(atoms.row(a).dot(x)));
    return s;
  }
};

// Adds mirrored atoms with halved weights unless already closed under t -> -t.
inline DiscreteMeasure symmetrize(const DiscreteMeasure& m) {
  DiscreteMeasure out;
  out.atoms.resize(2 * m.atoms.rows(), m.atoms.cols());
  out.weights.resize(2 * m.weights.size());
  out.atoms << m.atoms, -m.atoms;
  out.weights << 0.5 * m.weights, 0.5 * m.weights;
  out.symmetric = true;
  return out;
}

// N * ||HZ||^2 over the product of the discrete measures, with
// HZ(t) = (1/N) sum_l prod_i (e^{i t_i x_i^(l)} - ecf_i(t_i)).
inline double statistic_cf_oracle(const Dataset& data,
                                  const std::vector<DiscreteMeasure>& measures) {
  validate(data);
  if (measures.size() != data.n()) throw std::invalid_argument("one measure per variable");
  using cplx = std::complex<double>;
  const Eigen::Index N = data.N();
  const std::size_t n = data.n();

  // centered cf factors c[i][a][l] = e^{i t_a . x_i^(l)} - ecf_i(t_a)
  std::vector<std::vector<std::vector<cplx>>> c(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& meas = measures[i];
    if (meas.atoms.rows() == 0) throw std::invalid_argument("measure must have atoms");
    if (meas.atoms.cols() != data.blocks[i].cols())
      throw std::invalid_argument("atom dimension must match block dimension");
    c[i].resize(meas.atoms.rows());
    for (Eigen::Index a = 0; a < meas.atoms.rows(); ++a) {
      auto& row = c[i][a];
      row.resize(N);
      cplx mean(0.0, 0.0);
      for (Eigen::Index l = 0; l < N; ++l) {
        double phase = meas.atoms.row(a).dot(data.blocks[i].row(l));
        row[l] = cplx(std::cos(phase), std::sin(phase));
        mean += row[l];
      }
      mean /= static_cast<double>(N);
      for (Eigen::Index l = 0; l < N; ++l) row[l] -= mean;
    }
  }

  double total = 0.0;
  std::vector<Eigen::Index> tuple(n, 0);
  while (true) {
    double w = 1.0;
    for (std::size_t i = 0; i < n; ++i) w *= measures[i].weights[tuple[i]];
    cplx z(0.0, 0.0);
    for (Eigen::Index l = 0; l < N; ++l) {
      cplx prod(1.0, 0.0);
      for (std::size_t i = 0; i < n; ++i) prod *= c[i][tuple[i]][l];
      z += prod;
    }
    z /= static_cast<double>(N);
    total += w * std::norm(z);

    std::size_t i = 0;
    while (i < n && ++tuple[i] == measures[i].atoms.rows()) {
      tuple[i] = 0;
      ++i;
    }
    if (i == n) break;
  }
  return total * static_cast<double>(N);
}

}  // namespace multidep
