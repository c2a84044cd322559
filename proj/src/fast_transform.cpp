#include "kgmode/fast_transform.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "kgmode/error.hpp"
#include "kgmode/spectral.hpp"

namespace kgmode {

namespace {

// Gaussian gridding parameters (oversampling 2, 12 points per side) give
// roughly 1e-13 relative accuracy.
constexpr int kHalfWidth = 12;
constexpr double kOversample = 2.0;

std::size_t next_smooth(std::size_t n) {
  for (;; ++n) {
    std::size_t m = n;
    for (std::size_t p : {2, 3, 5, 7}) {
      while (m % p == 0) m /= p;
    }
    if (m == 1) return n;
  }
}

}  // namespace

struct FastTransform::Plan {
  fftw_complex* buf = nullptr;
  fftw_plan plan = nullptr;
  explicit Plan(std::size_t n) {
    buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    plan = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~Plan() {
    fftw_destroy_plan(plan);
    fftw_free(buf);
  }
  std::complex<double>* data() { return reinterpret_cast<std::complex<double>*>(buf); }
};

FastTransform::FastTransform(const SpectralData& s)
    : nk_(s.nk()), nr_(s.nr()), n_in_(std::min(s.n_interior, s.nr())) {
  if (s.overlap.size() != nk_ || s.delta.size() != nk_) {
    throw Error(ErrorKind::GridMismatch, "fast transform: spectral data incomplete");
  }
  n_out_ = nr_ - n_in_;
  overlap_ = s.overlap;
  phi_ = s.phi;

  interior_.resize(nk_ * n_in_);
  for (std::size_t k = 0; k < nk_; ++k) {
    const double* row = s.row(k);
    for (std::size_t i = 0; i < n_in_; ++i) {
      interior_[k * n_in_ + i] = row[i] + overlap_[k] * phi_[i];
    }
  }
  if (n_out_ == 0) return;

  modes_ = n_out_ + (n_out_ % 2);
  fft_size_ = next_smooth(static_cast<std::size_t>(kOversample * static_cast<double>(modes_)));
  half_width_ = kHalfWidth;
  const double M = static_cast<double>(modes_);
  const double ratio = static_cast<double>(fft_size_) / M;
  const double tau = std::numbers::pi * kHalfWidth / (M * M * ratio * (ratio - 0.5));
  const double h = 2.0 * std::numbers::pi / static_cast<double>(fft_size_);

  // Mode m in [-M/2, M/2) is radial node n = m + n_c (1-based).
  const double n_c = static_cast<double>(n_in_ + 1 + modes_ / 2);
  const double norm = std::sqrt(2.0 / std::numbers::pi);
  const std::size_t span = 2 * static_cast<std::size_t>(half_width_);
  rot_.resize(nk_);
  first_.resize(nk_);
  kernel_.resize(nk_ * span);
  for (std::size_t k = 0; k < nk_; ++k) {
    const double x = s.kgrid.k[k] * s.radial.dr;
    rot_[k] = norm * std::polar(1.0, s.delta[k] + n_c * x);
    const long j0 = static_cast<long>(std::floor(x / h)) - half_width_ + 1;
    first_[k] = j0;
    for (std::size_t t = 0; t < span; ++t) {
      const double d = x - static_cast<double>(j0 + static_cast<long>(t)) * h;
      kernel_[k * span + t] = std::exp(-d * d / (4.0 * tau));
    }
  }
  deconv_.resize(modes_);
  for (std::size_t m = 0; m < modes_; ++m) {
    const double mm = static_cast<double>(m) - M / 2.0;
    deconv_[m] = std::sqrt(std::numbers::pi / tau) * std::exp(mm * mm * tau) /
                 static_cast<double>(fft_size_);
  }
  plan_ = std::make_unique<Plan>(fft_size_);
}

FastTransform::~FastTransform() = default;

void FastTransform::spread(const cplx* strengths) const {
  cplx* g = plan_->data();
  std::fill(g, g + fft_size_, cplx{});
  const std::size_t span = 2 * static_cast<std::size_t>(half_width_);
  const long n = static_cast<long>(fft_size_);
  for (std::size_t k = 0; k < nk_; ++k) {
    const double* wk = kernel_.data() + k * span;
    for (std::size_t t = 0; t < span; ++t) {
      long j = first_[k] + static_cast<long>(t);
      j = ((j % n) + n) % n;
      g[j] += wk[t] * strengths[k];
    }
  }
}

void FastTransform::interpolate(cplx* out) const {
  const cplx* g = plan_->data();
  const std::size_t span = 2 * static_cast<std::size_t>(half_width_);
  const long n = static_cast<long>(fft_size_);
  for (std::size_t k = 0; k < nk_; ++k) {
    const double* wk = kernel_.data() + k * span;
    cplx acc{};
    for (std::size_t t = 0; t < span; ++t) {
      long j = first_[k] + static_cast<long>(t);
      j = ((j % n) + n) % n;
      acc += wk[t] * g[j];
    }
    out[k] = acc;
  }
}

void FastTransform::inverse(const double* c, double* out) const {
  double s = 0.0;
  for (std::size_t k = 0; k < nk_; ++k) s += c[k] * overlap_[k];

  std::fill(out, out + n_in_, 0.0);
  for (std::size_t k = 0; k < nk_; ++k) {
    const double ck = c[k];
    const double* row = interior_.data() + k * n_in_;
#pragma omp simd
    for (std::size_t i = 0; i < n_in_; ++i) out[i] += ck * row[i];
  }

  if (n_out_ > 0) {
    std::vector<cplx> strengths(nk_);
    for (std::size_t k = 0; k < nk_; ++k) strengths[k] = c[k] * rot_[k];
    spread(strengths.data());
    fftw_execute(plan_->plan);
    const cplx* g = plan_->data();
    const long n = static_cast<long>(fft_size_);
    const long half = static_cast<long>(modes_ / 2);
    for (std::size_t i = 0; i < n_out_; ++i) {
      const long m = static_cast<long>(i) - half;
      const long j = ((m % n) + n) % n;
      out[n_in_ + i] = deconv_[i] * g[j].imag();
    }
  }
  for (std::size_t i = 0; i < nr_; ++i) out[i] -= s * phi_[i];
}

void FastTransform::forward(const double* x, double* out) const {
  double s = 0.0;
  for (std::size_t i = 0; i < nr_; ++i) s += phi_[i] * x[i];

  std::vector<cplx> ext(nk_);
  if (n_out_ > 0) {
    cplx* g = plan_->data();
    std::fill(g, g + fft_size_, cplx{});
    const long n = static_cast<long>(fft_size_);
    const long half = static_cast<long>(modes_ / 2);
    for (std::size_t i = 0; i < n_out_; ++i) {
      const long m = static_cast<long>(i) - half;
      g[((m % n) + n) % n] = deconv_[i] * x[n_in_ + i];
    }
    fftw_execute(plan_->plan);
    interpolate(ext.data());
  }
  for (std::size_t k = 0; k < nk_; ++k) {
    const double* row = interior_.data() + k * n_in_;
    double acc = 0.0;
#pragma omp simd reduction(+ : acc)
    for (std::size_t i = 0; i < n_in_; ++i) acc += row[i] * x[i];
    out[k] = acc + (rot_.empty() ? 0.0 : (rot_[k] * ext[k]).imag()) - overlap_[k] * s;
  }
}

double FastTransform::fused_quadratic(const double* c, double a, const double* phi,
                                      const double* wr, const double* inv_r, double* F,
                                      double* v_out) const {
  std::vector<double> v(nr_), q(nr_);
  inverse(c, v.data());
  double P = 0.0;
  for (std::size_t i = 0; i < nr_; ++i) {
    const double u = a * phi[i] + v[i];
    q[i] = wr[i] * u * u * inv_r[i];
    P += q[i] * phi[i];
  }
  forward(q.data(), F);
  if (v_out != nullptr) std::copy(v.begin(), v.end(), v_out);
  return P;
}

}  // namespace kgmode
