#pragma once

// Dense linear algebra shared by every other module. Storage, products and
// the standard factorizations (SVD, QR, real Schur) come from Eigen; the
// matrix exponential and the exterior-power (compound) matrix are local.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rswitch/error.hpp"

namespace rswitch {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Complex = std::complex<double>;

struct LinalgTolerances {
  double factorization = 1e-12;
  double expm_roundtrip = 1e-9;
  /// expm halves its argument until the 1-norm is at most this value.
  double expm_reduction_norm = 0.5;
  int max_eigen_dimension = 32;
};

inline constexpr LinalgTolerances kDefaultTolerances{};

inline void require_square(const Matrix& a, const char* what) {
  if (a.rows() != a.cols()) {
    throw Error(ErrorCode::Dimension, std::string(what) + ": matrix is " + std::to_string(a.rows()) +
                                          "x" + std::to_string(a.cols()) + ", expected square");
  }
}

inline void require_finite(const Matrix& a, const char* what) {
  if (!a.allFinite()) throw Error(ErrorCode::NonFinite, std::string(what) + ": non-finite entry");
}

namespace detail {

/// Diagonal Pade coefficients c_k of order q, c_0 = 1.
inline std::vector<double> pade_coefficients(int q) {
  std::vector<double> c(static_cast<std::size_t>(q) + 1);
  c[0] = 1.0;
  for (int k = 1; k <= q; ++k) {
    c[static_cast<std::size_t>(k)] =
        c[static_cast<std::size_t>(k - 1)] * static_cast<double>(q - k + 1) /
        (static_cast<double>(k) * static_cast<double>(2 * q - k + 1));
  }
  return c;
}

}  // namespace detail

/// e^{A t} by scaling and squaring around a [8/8] Pade approximant. With the
/// scaled argument at 1-norm <= 0.5 the Pade truncation error is far below
/// double precision, so accuracy is limited by the squaring phase only.
inline Matrix expm(const Matrix& a, double t,
                   const LinalgTolerances& tol = kDefaultTolerances) {
  require_square(a, "expm");
  if (!std::isfinite(t)) throw Error(ErrorCode::NonFinite, "expm: non-finite time");
  require_finite(a, "expm");
  const Eigen::Index n = a.rows();
  if (n == 0) return Matrix(0, 0);

  Matrix x = a * t;
  const double norm1 = x.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm1 > tol.expm_reduction_norm) {
    squarings = static_cast<int>(std::ceil(std::log2(norm1 / tol.expm_reduction_norm)));
    x /= std::ldexp(1.0, squarings);
  }

  constexpr int kOrder = 8;
  static const std::vector<double> c = detail::pade_coefficients(kOrder);
  const Matrix id = Matrix::Identity(n, n);
  Matrix power = id;
  Matrix num = c[0] * id;
  Matrix den = c[0] * id;
  for (int k = 1; k <= kOrder; ++k) {
    power = power * x;
    const double ck = c[static_cast<std::size_t>(k)];
    num += ck * power;
    den += ((k % 2 == 0) ? ck : -ck) * power;
  }
  Matrix result = den.partialPivLu().solve(num);
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

struct SvdResult {
  Matrix u;
  Vector singular_values;  // nonincreasing
  Matrix v;
};

inline SvdResult svd(const Matrix& a) {
  require_finite(a, "svd");
  if (a.size() == 0) return {Matrix(a.rows(), 0), Vector(0), Matrix(a.cols(), 0)};
  Eigen::JacobiSVD<Matrix> solver(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return {solver.matrixU(), solver.singularValues(), solver.matrixV()};
}

/// Largest singular value (Euclidean-induced norm). Empty matrices have norm 0.
inline double operator_norm(const Matrix& a) {
  require_finite(a, "operator_norm");
  if (a.size() == 0) return 0.0;
  if (a.rows() == 1 || a.cols() == 1) return a.norm();
  Eigen::JacobiSVD<Matrix> solver(a);
  return solver.singularValues()(0);
}

inline std::vector<Complex> eigenvalues(const Matrix& a,
                                        const LinalgTolerances& tol = kDefaultTolerances) {
  require_square(a, "eigenvalues");
  require_finite(a, "eigenvalues");
  if (a.rows() > tol.max_eigen_dimension) {
    throw Error(ErrorCode::Dimension, "eigenvalues: dimension " + std::to_string(a.rows()) +
                                          " exceeds configured maximum " +
                                          std::to_string(tol.max_eigen_dimension));
  }
  if (a.rows() == 0) return {};
  Eigen::EigenSolver<Matrix> solver(a, false);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::Internal, "eigenvalues: Schur iteration did not converge");
  }
  const auto& ev = solver.eigenvalues();
  std::vector<Complex> out(static_cast<std::size_t>(ev.size()));
  for (Eigen::Index i = 0; i < ev.size(); ++i) out[static_cast<std::size_t>(i)] = ev(i);
  return out;
}

inline double spectral_radius(const Matrix& a,
                              const LinalgTolerances& tol = kDefaultTolerances) {
  double rho = 0.0;
  for (const Complex& z : eigenvalues(a, tol)) rho = std::max(rho, std::abs(z));
  return rho;
}

inline double max_real_part(const Matrix& a) {
  double best = -std::numeric_limits<double>::infinity();
  for (const Complex& z : eigenvalues(a)) best = std::max(best, z.real());
  return best;
}

struct SpectrumResult {
  std::vector<Complex> eigenvalues;
  std::vector<double> singular_values;  // nonincreasing
};

inline SpectrumResult spectrum(const Matrix& a) {
  SpectrumResult out{eigenvalues(a), {}};
  const Vector s = svd(a).singular_values;
  out.singular_values.assign(s.data(), s.data() + s.size());
  return out;
}

struct QrResult {
  Matrix q;  // orthogonal, square
  Matrix r;  // upper triangular with nonnegative diagonal
};

inline QrResult qr(const Matrix& a) {
  require_finite(a, "qr");
  Eigen::HouseholderQR<Matrix> solver(a);
  Matrix q = solver.householderQ() * Matrix::Identity(a.rows(), a.rows());
  Matrix r = solver.matrixQR().triangularView<Eigen::Upper>();
  const Eigen::Index k = std::min(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < k; ++i) {
    if (r(i, i) < 0.0) {
      r.row(i) *= -1.0;
      q.col(i) *= -1.0;
    }
  }
  return {std::move(q), std::move(r)};
}

/// Number of singular values above rel_tol * sigma_max (absolute floor for the
/// zero matrix).
inline int numerical_rank(const Matrix& a, double rel_tol = 1e-10) {
  if (a.size() == 0) return 0;
  const Vector s = svd(a).singular_values;
  if (s(0) <= std::numeric_limits<double>::min()) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > rel_tol * s(0)) ++rank;
  }
  return rank;
}

namespace detail {

/// All k-subsets of {0..n-1} in lexicographic order.
inline std::vector<std::vector<Eigen::Index>> index_subsets(Eigen::Index n, Eigen::Index k) {
  std::vector<std::vector<Eigen::Index>> out;
  if (k < 0 || k > n) return out;
  std::vector<Eigen::Index> cur(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) cur[static_cast<std::size_t>(i)] = i;
  while (true) {
    out.push_back(cur);
    Eigen::Index i = k - 1;
    while (i >= 0 && cur[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) break;
    ++cur[static_cast<std::size_t>(i)];
    for (Eigen::Index j = i + 1; j < k; ++j) {
      cur[static_cast<std::size_t>(j)] = cur[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
  return out;
}

}  // namespace detail

/// k-th compound matrix: entry (I, J) is the minor det A[I, J] over k-subsets
/// in lexicographic order. Satisfies C_k(AB) = C_k(A) C_k(B), and its operator
/// norm is the product of the k largest singular values of A.
inline Matrix compound(const Matrix& a, int k) {
  require_square(a, "compound");
  const Eigen::Index n = a.rows();
  if (k < 0 || k > n) throw Error(ErrorCode::Dimension, "compound: order out of range");
  if (k == 0) return Matrix::Ones(1, 1);
  if (k == 1) return a;
  if (k == n) return Matrix::Constant(1, 1, a.determinant());
  const auto subsets = detail::index_subsets(n, k);
  const auto m = static_cast<Eigen::Index>(subsets.size());
  Matrix out(m, m);
  Matrix minor(k, k);
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto& rows = subsets[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < m; ++c) {
      const auto& cols = subsets[static_cast<std::size_t>(c)];
      for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
          minor(i, j) = a(rows[static_cast<std::size_t>(i)], cols[static_cast<std::size_t>(j)]);
        }
      }
      out(r, c) = minor.determinant();
    }
  }
  return out;
}

/// Row-major construction helper: from_rows(2, 2, {a, b, c, d}).
inline Matrix from_row_major(Eigen::Index rows, Eigen::Index cols, const std::vector<double>& data) {
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw Error(ErrorCode::Dimension, "from_row_major: expected " + std::to_string(rows * cols) +
                                          " entries, got " + std::to_string(data.size()));
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = data[static_cast<std::size_t>(i * cols + j)];
  }
  return m;
}

inline std::vector<double> to_row_major(const Matrix& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  }
  return out;
}

}  // namespace rswitch
