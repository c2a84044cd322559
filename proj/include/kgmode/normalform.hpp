#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kgmode/container.hpp"
#include "kgmode/model.hpp"
#include "kgmode/spectral.hpp"

namespace kgmode {

// Quadratic normal-form correction of the field self-interaction, evaluated by
// direct quadrature of the radial nonlinear spectral distribution
//   mu(k, k1, k2) = sum_r w_r omega(r) e(r,k) e(r,k1) e(r,k2) / r
// on a window r <= R_w, with omega a half-cosine taper over the outer 20%.
// Inputs live on K_low = {i pi / R_w <= k_cap}; outputs on a chosen node set.
struct CorrectionKernel {
  double window = 0.0;  // R_w
  double k_cap = 0.0;
  std::vector<double> k_in, w_in, jk_in;  // K_low
  std::vector<double> k_out, jk_out;      // output nodes
  std::vector<double> mu;                 // [n_out][n_in][n_in]
  std::vector<std::uint8_t> clamp;        // [4][n_out][n_in][n_in]; 1 = skipped cell
  double discarded_mass = 0.0;         // clamped share of sum |mu| w1 w2 / (<k1><k2>)
  double discarded_symbol_mass = 0.0;  // same with the 1 / max(|Phi|, tau) factor
  // Window eigenfunctions of K_low, [n_in][n_window], for the input transfer.
  std::vector<double> e_in;
  std::vector<double> r, wr;  // window nodes and untapered weights
  std::uint64_t radial_hash = 0, kgrid_hash = 0;

  std::size_t n_in() const { return k_in.size(); }
  std::size_t n_out() const { return k_out.size(); }
  std::size_t n_window() const { return r.size(); }
  double mu_at(std::size_t k, std::size_t i, std::size_t j) const {
    return mu[(k * n_in() + i) * n_in() + j];
  }
};

// Sign pairs in the order (+,+), (+,-), (-,+), (-,-).
inline constexpr int kSignPairs[4][2] = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};

// Phase <k> - e1 <k1> - e2 <k2> and the clamp threshold 0.05 / (<k> + <k1> + <k2>).
double phase_symbol(double jk, double jk1, double jk2, int e1, int e2);
double clamp_threshold(double jk, double jk1, double jk2);

enum class KernelOutput { Low, KGridNodes };

// Low: outputs on K_low. KGridNodes: outputs on the spectral k-grid nodes with k <= k_cap.
// Requires k_cap <= k_max / 2; MemoryBudget when the tensors exceed cfg.memory_cap_mb.
CorrectionKernel build_kernel(const SpectralData& s, const RunConfig& cfg,
                              KernelOutput output = KernelOutput::Low);

// Profile on the k-grid -> profile on K_low: the field e^{it<k>} f is formed on
// r <= R_w and projected onto the window eigenfunctions, then the phase removed.
std::vector<cplx> transfer_to_low(const CorrectionKernel& kernel, const SpectralData& s,
                                  std::span<const cplx> f, double t);

// N(t, k) = -1/4 sum_{e1 e2} e1 e2 e^{-it<k>} sum_{ij} w_i w_j e^{it(e1<k_i> + e2<k_j>)}
//   f_e1(k_i) f_e2(k_j) mu(k, k_i, k_j) / (<k_i><k_j> Phi), clamped cells skipped,
// with f_+ = f and f_- = conj(f). f_low on K_low; GridMismatch otherwise.
std::vector<cplx> correction(const CorrectionKernel& kernel, std::span<const cplx> f_low, double t);

// Same, from a profile on the spectral k-grid.
std::vector<cplx> correction(const CorrectionKernel& kernel, const SpectralData& s,
                             std::span<const cplx> f, double t);

Container to_container(const CorrectionKernel& kernel, const SpectralData& s);
CorrectionKernel kernel_from_container(const Container& c);

// Principal value of int g(x) / (x - a) dx over uniform samples g_i at x0 + i h.
// A pole on a node uses symmetric pairs around a; any other pole uses the
// subtraction form with a cubic-interpolated g(a). O(h^2) for smooth g.
// PoleOnBoundary unless x0 < a < x_{n-1}.
double pv_quadrature(std::span<const double> g, double x0, double h, double a);

struct ProbeBand {
  int band = 0;
  double measured = 0.0;   // max over trials
  double predicted = 0.0;  // scaling law without constant
};

struct ProbeReport {
  std::vector<ProbeBand> bilin1;  // in M, L = 0 fixed
  std::vector<ProbeBand> bilin2;  // in K
  double slope1_low = 0.0;        // over M in {-4..0}
  double slope2_low = 0.0;        // over K in {-4..0}
  double slope2_high = 0.0;       // over K in {1..4}
  // Per family: C = max over bands of measured / predicted, and the min of the same ratio.
  double constant1 = 0.0, constant1_min = 0.0;
  double constant2 = 0.0, constant2_min = 0.0;
};

// Radial analogues of the p.v. bilinear forms with trivial angular symbol:
//   bilin1(M): || r -> pv int rho^2 h(rho) / (r - rho) drho ||_{L2(dr)}, h on |rho| ~ 2^M
//   bilin2(K): sup_{rho ~ 2^K} | pv int r^2 phi_K(r) F(r) / (r - rho) dr |,
//              F(r) = int f(r + s) h(s) ds, h on |s| ~ 2^{-3}
// with random band-limited inputs. bilin2 inputs have unit H^2 norm; bilin1 uses the
// unit L2 norm of the band piece, the quantity the 2^{L+M} bound is proved for
// (the H^2 norm only adds <2^M>^{-2}, outside M <= 0). Radial measure rho^2 drho.
ProbeReport bilinear_scaling_probe(int trials, std::uint64_t seed);

}  // namespace kgmode
