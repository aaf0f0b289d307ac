#pragma once

#include "pfode/types.hpp"

namespace pfode {

// Thin SVD of a square or tall matrix: a = u * diag(singular_values) * v^T,
// singular values sorted in decreasing order.
struct Svd {
  Vector singular_values;
  Matrix u;
  Matrix v;
};

// One-sided (Hestenes) Jacobi rotations; sweeps until every column pair has
// |<a_p, a_q>| <= 1e-12 * |a_p| |a_q|.
Svd jacobi_svd(const Matrix& a);

// Largest singular value.
double operator_norm(const Matrix& a);

}  // namespace pfode
