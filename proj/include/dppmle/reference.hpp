#pragma once

// Straightforward serial implementations kept as a test oracle and as the
// baseline for the benchmark. They use LU determinants and explicit inverses
// and share no code with subset_kernels.

#include <vector>

#include "dppmle/kernel_algebra.hpp"

namespace dppmle::reference {

/// det(L_J) for every J.
std::vector<double> principal_minors(const Matrix& l);

/// det(L_J) / det(I + L) for every J.
std::vector<double> probabilities(const Matrix& l);

/// Tr((L_J^{-1} H_J)^k).
double subset_trace_power(const Matrix& l, const Matrix& h, Bits j, int k);

/// -Var_{Z~p}[Tr(L_Z^{-1} H_Z)] under the weights p.
double variance_form(const Matrix& l, const std::vector<double>& p, const Matrix& h);

/// Hessian coordinate matrix by polarizing the variance form over every pair
/// of basis elements: M_pq = (Q(B_p + B_q) - Q(B_p) - Q(B_q)) / 2.
Matrix hessian_by_polarization(const Matrix& l);

/// Σ_J w_J [L_J^{-1}]_padded - (I + L)^{-1}.
Matrix likelihood_gradient(const std::vector<double>& weights, const Matrix& l);

}  // namespace dppmle::reference
