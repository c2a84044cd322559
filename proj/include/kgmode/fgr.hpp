#pragma once

#include <span>
#include <string>
#include <vector>

#include "kgmode/container.hpp"
#include "kgmode/spectral.hpp"

namespace kgmode {

struct ResonanceData {
  double lambda = 0.0;
  double kstar = 0.0;
  std::size_t kstar_index = 0;
  double gamma = 0.0;
  double epsilon0 = 0.0;
  std::vector<double> coupling;  // forward transform of P_c phi^2 on the k-grid

  double coupling_at_kstar() const { return coupling.at(kstar_index); }
  // rho(t) = eps0 (1 + eps0^2 (Gamma/lambda) t)^(-1/2)
  double rho(double t) const;
};

// kstar = sqrt(4 lambda^2 - 1); OutOfBand unless 1/2 < lambda < 1.
double compute_kstar(double lambda);

// Transform of phi(r)^2 / r, the U-form representative of phi_3d^2.
std::vector<double> coupling_profile(const SpectralData& s);
std::vector<double> coupling_profile(const SpectralData& s, std::span<const double> phi);

// Gamma = (pi / kstar) |coupling(kstar)|^2. NonPositiveGamma when the coupling
// vanishes at kstar relative to its sup.
double compute_gamma(std::span<const double> coupling, const KGrid& kgrid, double lambda);

// Unit Gaussian of width eta evaluated at x.
double gaussian_delta(double x, double eta);

// (pi / (2 lambda)) sum_k w_k coupling_k^2 g_eta(<k> - 2 lambda)
double mollified_gamma(std::span<const double> coupling, const KGrid& kgrid, double lambda,
                       double eta);

struct MollifiedGammaTable {
  std::vector<double> eta;
  std::vector<double> gamma;
  double extrapolated = 0.0;  // Richardson on the two smallest widths
};

MollifiedGammaTable mollified_gamma_table(std::span<const double> coupling, const KGrid& kgrid,
                                          double lambda);

ResonanceData compute_resonance(const SpectralData& s, double epsilon0);

std::string format_resonance_report(const ResonanceData& res, const MollifiedGammaTable& oracle);
Container to_container(const ResonanceData& res, const KGrid& kgrid, const RadialGrid& radial);
ResonanceData resonance_from_container(const Container& c);

}  // namespace kgmode
