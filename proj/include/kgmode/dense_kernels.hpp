#pragma once

#include <cstddef>
#include <span>

namespace kgmode::kernels {

// Dense products against a row-major table E[nk][nr].
//
// The table is walked in column panels of kPanel doubles so that one panel
// (nk x kPanel) stays cache resident while it is used twice by the fused
// kernel. Reduction order is fixed for a fixed thread count.
inline constexpr std::size_t kPanel = 128;

// out[j][k] = sum_r E[k][r] x[j][r],  j < nrhs.  x is nrhs x nr, out nrhs x nk.
void forward(const double* E, std::size_t nk, std::size_t nr, const double* x,
             double* out, std::size_t nrhs);

// out[j][r] = sum_k c[j][k] E[k][r].  c is nrhs x nk, out nrhs x nr.
void inverse(const double* E, std::size_t nk, std::size_t nr, const double* c,
             double* out, std::size_t nrhs);

// One pass over E for the quadratic field equation:
//   v[r]  = sum_k c[k] E[k][r]
//   q[r]  = wr[r] * (a*phi[r] + v[r])^2 * inv_r[r]
//   F[k]  = sum_r E[k][r] q[r]
//   returns sum_r q[r] phi[r]
// v_out (may be null) receives v.
double fused_quadratic(const double* E, std::size_t nk, std::size_t nr,
                       const double* c, double a, const double* phi,
                       const double* wr, const double* inv_r, double* F,
                       double* v_out);

}  // namespace kgmode::kernels
