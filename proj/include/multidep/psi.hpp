#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace multidep {

// One variable's sample block: N rows (observations) by d columns (components).
using ObservationBlock = Eigen::MatrixXd;
using DistanceMatrix = Eigen::MatrixXd;
using CenteredMatrix = Eigen::MatrixXd;

enum class PsiFamily { euclidean_power };

// psi(x) = |x|^beta on the Euclidean norm of the difference, beta in (0, 2].
struct PsiFunction {
  PsiFamily family = PsiFamily::euclidean_power;
  double beta = 1.0;

  double operator()(double norm) const {
    if (norm <= 0.0) return 0.0;
    return beta == 1.0 ? norm : std::pow(norm, beta);
  }
};

inline void validate(const PsiFunction& psi) {
  if (psi.beta <= 0.0 || psi.beta > 2.0)
    throw std::invalid_argument("psi exponent must lie in (0, 2]");
}

inline double eval_psi(const PsiFunction& psi, const Eigen::Ref<const Eigen::VectorXd>& x,
                       const Eigen::Ref<const Eigen::VectorXd>& y) {
  return psi((x - y).norm());
}

// B[j,k] = dist(x_j, x_k) for an arbitrary symmetric pair distance.
template <class PairDistance>
DistanceMatrix distance_matrix_with(const ObservationBlock& block, PairDistance&& dist) {
  const Eigen::Index n = block.rows();
  DistanceMatrix b(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    b(j, j) = 0.0;
    for (Eigen::Index k = j + 1; k < n; ++k) {
      double v = dist(block.row(j), block.row(k));
      b(j, k) = v;
      b(k, j) = v;
    }
  }
  return b;
}

inline DistanceMatrix distance_matrix(const ObservationBlock& block, const PsiFunction& psi) {
  validate(psi);
  if (block.rows() < 2) throw std::invalid_argument("need at least two observations");
  if (block.cols() == 1) {
    // 1-d fast path; row-expression overhead dominates otherwise.
    const Eigen::VectorXd col = block.col(0);
    const Eigen::Index n = col.size();
    DistanceMatrix b(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      b(j, j) = 0.0;
      for (Eigen::Index k = j + 1; k < n; ++k) {
        double v = psi(std::abs(col[j] - col[k]));
        b(j, k) = v;
        b(k, j) = v;
      }
    }
    return b;
  }
  return distance_matrix_with(block, [&psi](const auto& r, const auto& s) {
    return psi((r - s).norm());
  });
}

// A = -C B C with C = I - 11'/N; entrywise this subtracts row and column
// means and adds back the grand mean, then flips the sign.
inline CenteredMatrix double_center(const DistanceMatrix& b) {
  Eigen::VectorXd rowmean = b.rowwise().mean();
  Eigen::RowVectorXd colmean = b.colwise().mean();
  double grand = b.mean();
  CenteredMatrix a = -b;
  a.colwise() += rowmean;
  a.rowwise() += colmean;
  a.array() -= grand;
  return a;
}

// Divides by the mean entry |B|/N^2; a zero matrix (constant variable) maps
// to a zero matrix with scale 0 under the 0/0 = 0 convention.
inline std::pair<DistanceMatrix, double> normalize_distance_matrix(const DistanceMatrix& b) {
  double scale = b.mean();
  if (scale <= 0.0) return {DistanceMatrix::Zero(b.rows(), b.cols()), 0.0};
  return {b / scale, scale};
}

// Entry-sum functionals of a symmetric distance matrix. Everything except
// the two Hadamard-with-square sums reduces to O(N^2) work through the row
// sum vector s = B 1; those two share the single N x N product B^2, which is
// the only O(N^3) step and is skipped at second_order depth. The skipped sums
// feed only the third- and fourth-moment estimators.
enum class StatsDepth { second_order, full };

struct MatrixStats {
  double abs_B = 0;         // |B|
  double abs_BhB = 0;       // |B o B|
  double abs_B2 = 0;        // |B^2|
  double abs_B3 = 0;        // |B^3|
  double abs_B4 = 0;        // |B^4|
  double abs_B2hB = 0;      // |B^2 o B|
  double abs_B3hB = 0;      // |B^3 o B|
  double abs_BhB_dot_B = 0; // |(B o B) B|
  double abs_BhBhB = 0;     // |B o B o B|
  double abs_colsum3 = 0;   // sum_j (column sum)_j^3
  Eigen::Index N = 0;
  bool has_spectral_sums = true;  // false when |B^2 o B| and |B^3 o B| were skipped
};

inline MatrixStats matrix_statistics(const DistanceMatrix& b,
                                     StatsDepth depth = StatsDepth::full) {
  MatrixStats st;
  st.N = b.rows();
  Eigen::VectorXd s = b.rowwise().sum();
  Eigen::VectorXd bs = b * s;
  st.abs_B = s.sum();
  st.abs_BhB = b.squaredNorm();
  st.abs_B2 = s.squaredNorm();
  st.abs_B3 = s.dot(bs);
  st.abs_B4 = bs.squaredNorm();
  st.abs_BhBhB = b.array().cube().sum();
  st.abs_colsum3 = s.array().cube().sum();
  Eigen::VectorXd hh_rows = b.cwiseProduct(b).rowwise().sum();
  st.abs_BhB_dot_B = hh_rows.dot(s);
  if (depth == StatsDepth::full) {
    Eigen::MatrixXd b2 = b * b;
    st.abs_B2hB = b2.cwiseProduct(b).sum();
    st.abs_B3hB = b2.squaredNorm();  // |B^3 o B| = |B^2 o B^2| for symmetric B
  } else {
    st.has_spectral_sums = false;
  }
  return st;
}

}  // namespace multidep
