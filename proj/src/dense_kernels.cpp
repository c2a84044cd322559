#include "kgmode/dense_kernels.hpp"

#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kgmode::kernels {

namespace {

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

int thread_id() {
#ifdef _OPENMP
  return omp_get_thread_num();
#else
  return 0;
#endif
}

// acc[0..len) += sum_k c[k] * E[k][col0 .. col0+len)
void panel_combine(const double* E, std::size_t nk, std::size_t nr, std::size_t col0,
                   std::size_t len, const double* c, double* __restrict acc) {
  std::size_t k = 0;
  for (; k + 4 <= nk; k += 4) {
    const double* e0 = E + k * nr + col0;
    const double* e1 = e0 + nr;
    const double* e2 = e1 + nr;
    const double* e3 = e2 + nr;
    const double c0 = c[k], c1 = c[k + 1], c2 = c[k + 2], c3 = c[k + 3];
#pragma omp simd
    for (std::size_t j = 0; j < len; ++j) {
      acc[j] += c0 * e0[j] + c1 * e1[j] + c2 * e2[j] + c3 * e3[j];
    }
  }
  for (; k < nk; ++k) {
    const double* e0 = E + k * nr + col0;
    const double c0 = c[k];
#pragma omp simd
    for (std::size_t j = 0; j < len; ++j) acc[j] += c0 * e0[j];
  }
}

// F[k] += sum_j E[k][col0+j] q[j]
void panel_project(const double* E, std::size_t nk, std::size_t nr, std::size_t col0,
                   std::size_t len, const double* q, double* __restrict F) {
  for (std::size_t k = 0; k < nk; ++k) {
    const double* e = E + k * nr + col0;
    double s = 0.0;
#pragma omp simd reduction(+ : s)
    for (std::size_t j = 0; j < len; ++j) s += e[j] * q[j];
    F[k] += s;
  }
}

}  // namespace

void forward(const double* E, std::size_t nk, std::size_t nr, const double* x,
             double* out, std::size_t nrhs) {
#pragma omp parallel for schedule(static)
  for (std::size_t k = 0; k < nk; ++k) {
    const double* e = E + k * nr;
    for (std::size_t j = 0; j < nrhs; ++j) {
      const double* xj = x + j * nr;
      double s = 0.0;
#pragma omp simd reduction(+ : s)
      for (std::size_t r = 0; r < nr; ++r) s += e[r] * xj[r];
      out[j * nk + k] = s;
    }
  }
}

void inverse(const double* E, std::size_t nk, std::size_t nr, const double* c,
             double* out, std::size_t nrhs) {
  const std::size_t panels = (nr + kPanel - 1) / kPanel;
#pragma omp parallel for schedule(static)
  for (std::size_t p = 0; p < panels; ++p) {
    const std::size_t col0 = p * kPanel;
    const std::size_t len = std::min(kPanel, nr - col0);
    for (std::size_t j = 0; j < nrhs; ++j) {
      double* acc = out + j * nr + col0;
      std::fill(acc, acc + len, 0.0);
      panel_combine(E, nk, nr, col0, len, c + j * nk, acc);
    }
  }
}

double fused_quadratic(const double* E, std::size_t nk, std::size_t nr,
                       const double* c, double a, const double* phi,
                       const double* wr, const double* inv_r, double* F,
                       double* v_out) {
  const std::size_t panels = (nr + kPanel - 1) / kPanel;
  const int nthreads = thread_count();
  std::vector<double> partial_F(static_cast<std::size_t>(nthreads) * nk, 0.0);
  std::vector<double> partial_P(static_cast<std::size_t>(nthreads), 0.0);

#pragma omp parallel
  {
    const auto tid = static_cast<std::size_t>(thread_id());
    double* Ft = partial_F.data() + tid * nk;
    double P = 0.0;
    alignas(64) double v[kPanel];
    alignas(64) double q[kPanel];
#pragma omp for schedule(static)
    for (std::size_t p = 0; p < panels; ++p) {
      const std::size_t col0 = p * kPanel;
      const std::size_t len = std::min(kPanel, nr - col0);
      std::fill(v, v + len, 0.0);
      panel_combine(E, nk, nr, col0, len, c, v);
      for (std::size_t j = 0; j < len; ++j) {
        const std::size_t r = col0 + j;
        const double u = a * phi[r] + v[j];
        q[j] = wr[r] * u * u * inv_r[r];
        P += q[j] * phi[r];
      }
      if (v_out != nullptr) std::copy(v, v + len, v_out + col0);
      panel_project(E, nk, nr, col0, len, q, Ft);
    }
    partial_P[tid] = P;
  }

  std::fill(F, F + nk, 0.0);
  double P = 0.0;
  for (int t = 0; t < nthreads; ++t) {
    const double* Ft = partial_F.data() + static_cast<std::size_t>(t) * nk;
    for (std::size_t k = 0; k < nk; ++k) F[k] += Ft[k];
    P += partial_P[static_cast<std::size_t>(t)];
  }
  return P;
}

}  // namespace kgmode::kernels
