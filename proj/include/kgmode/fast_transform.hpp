#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <vector>

namespace kgmode {

struct SpectralData;

// Applies the eigenfunction table without streaming it.
//
// Past the potential support every row is sqrt(2/pi) sin(k r + delta_k) minus
// its mode overlap times phi, so the exterior block is a nonuniform
// sine/cosine sum evaluated with Gaussian-gridding NUFFTs (type 1 for the
// synthesis, the exact transpose for the analysis). The interior block stays
// dense. forward() and inverse() are transposes of one another up to roundoff,
// so the semi-discrete field equations keep their Hamiltonian structure.
class FastTransform {
 public:
  explicit FastTransform(const SpectralData& s);
  ~FastTransform();
  FastTransform(const FastTransform&) = delete;
  FastTransform& operator=(const FastTransform&) = delete;

  // out[k] = sum_r E[k][r] x[r]   (x already carries the radial weights)
  void forward(const double* x, double* out) const;
  // out[r] = sum_k c[k] E[k][r]   (c already carries the k weights)
  void inverse(const double* c, double* out) const;

  // Same contract as kernels::fused_quadratic.
  double fused_quadratic(const double* c, double a, const double* phi, const double* wr,
                         const double* inv_r, double* F, double* v_out) const;

  std::size_t nk() const { return nk_; }
  std::size_t nr() const { return nr_; }

 private:
  using cplx = std::complex<double>;
  void spread(const cplx* strengths) const;              // into grid_
  void interpolate(cplx* out) const;                     // from grid_
  std::size_t nk_ = 0, nr_ = 0, n_in_ = 0, n_out_ = 0;
  std::size_t modes_ = 0, fft_size_ = 0;
  int half_width_ = 0;
  std::vector<double> interior_;  // [nk][n_in] raw rows before re-orthogonalisation
  std::vector<double> overlap_;   // (e_k, phi) removed from each row
  std::vector<double> phi_;
  std::vector<cplx> rot_;          // sqrt(2/pi) e^{i delta_k} e^{i n_c x_k}
  std::vector<long> first_;        // first grid index touched by point k
  std::vector<double> kernel_;     // [nk][2*half_width+2] spreading weights
  std::vector<double> deconv_;     // per mode
  mutable std::vector<cplx> grid_;
  mutable std::vector<cplx> work_;
  struct Plan;
  std::unique_ptr<Plan> plan_;
};

}  // namespace kgmode
