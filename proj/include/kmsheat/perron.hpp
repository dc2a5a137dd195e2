#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "kmsheat/errors.hpp"

namespace kmsheat {

struct PerronData {
  double spectral_radius = 0.0;
  Eigen::VectorXd right;      ///< l1-normalized, A right = r right
  Eigen::VectorXd left;       ///< l1-normalized, left^T A = r left^T
  Eigen::VectorXd right_l2;
  Eigen::VectorXd left_l2;
  int primitivity_exponent = 0;
  double residual = 0.0;      ///< max of both eigen-equation residuals
  int iterations = 0;
};

namespace detail {

using BoolRows = std::vector<std::vector<std::uint64_t>>;

inline BoolRows bool_pattern(const Eigen::MatrixXd& A) {
  const auto n = static_cast<std::size_t>(A.rows());
  const std::size_t words = (n + 63) / 64;
  BoolRows B(n, std::vector<std::uint64_t>(words, 0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > 0.0) B[i][j / 64] |= 1ULL << (j % 64);
  return B;
}

inline BoolRows bool_product(const BoolRows& X, const BoolRows& Y) {
  const std::size_t n = X.size();
  BoolRows Z(n, std::vector<std::uint64_t>(X.empty() ? 0 : X[0].size(), 0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (X[i][j / 64] >> (j % 64) & 1ULL)
        for (std::size_t w = 0; w < Z[i].size(); ++w) Z[i][w] |= Y[j][w];
  return Z;
}

inline bool first_zero(const BoolRows& B, std::size_t* wi, std::size_t* wj) {
  const std::size_t n = B.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (!(B[i][j / 64] >> (j % 64) & 1ULL)) {
        *wi = i;
        *wj = j;
        return true;
      }
  return false;
}

inline Eigen::VectorXd power_iterate(const Eigen::MatrixXd& A, double tol, int max_iter, double* r, double* res,
                                     int* iters) {
  const auto n = A.rows();
  Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  for (int k = 1; k <= max_iter; ++k) {
    Eigen::VectorXd y = A * x;
    *r = y.sum();
    y /= *r;
    *res = (A * y - *r * y).cwiseAbs().maxCoeff() / *r;
    x = y;
    *iters = k;
    if (*res <= tol) break;
  }
  return x;
}

}  // namespace detail

/// Smallest k with A^k > 0 entrywise; throws NotPrimitive with a witness zero
/// entry of A^{n^2-2n+2} otherwise.
inline int primitivity_exponent(const Eigen::MatrixXd& A) {
  const auto n = static_cast<std::size_t>(A.rows());
  if (n == 0 || A.cols() != A.rows()) fail(ErrorCode::InvalidInput, "primitivity needs a nonempty square matrix");
  if ((A.array() < 0.0).any()) fail(ErrorCode::InvalidInput, "matrix must be nonnegative");
  const auto base = detail::bool_pattern(A);
  const std::size_t bound = n * n - 2 * n + 2;
  auto P = base, acc = base;
  std::size_t e = bound - 1;
  while (e > 0) {
    if (e & 1) acc = detail::bool_product(acc, P);
    e >>= 1;
    if (e) P = detail::bool_product(P, P);
  }
  std::size_t wi = 0, wj = 0;
  if (detail::first_zero(acc, &wi, &wj))
    fail(ErrorCode::NotPrimitive, "A^" + std::to_string(bound) + " has a zero entry at (" + std::to_string(wi) + "," +
                                      std::to_string(wj) + ")");
  auto B = base;
  int k = 1;
  while (detail::first_zero(B, &wi, &wj)) {
    B = detail::bool_product(B, base);
    ++k;
  }
  return k;
}

/// Perron-Frobenius data of a primitive nonnegative matrix by power iteration.
inline PerronData perron_data(const Eigen::MatrixXd& A, double tol = 1e-13, int max_iter = 1'000'000) {
  PerronData d;
  d.primitivity_exponent = primitivity_exponent(A);
  double r1 = 0, r2 = 0, e1 = 0, e2 = 0;
  int i1 = 0, i2 = 0;
  d.right = detail::power_iterate(A, tol, max_iter, &r1, &e1, &i1);
  const Eigen::MatrixXd At = A.transpose();
  d.left = detail::power_iterate(At, tol, max_iter, &r2, &e2, &i2);
  d.spectral_radius = 0.5 * (r1 + r2);
  d.residual = std::max(e1, e2);
  d.iterations = std::max(i1, i2);
  d.right_l2 = d.right / d.right.norm();
  d.left_l2 = d.left / d.left.norm();
  return d;
}

}  // namespace kmsheat
