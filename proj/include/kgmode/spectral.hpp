#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "kgmode/container.hpp"
#include "kgmode/model.hpp"

namespace kgmode {

using cplx = std::complex<double>;

// Integrates y'' = (V(r) - E) y from y(0) = 0, y'(0) = 1 with classical RK4
// on a substep lattice aligned with the radial grid, up to the node r_end at
// or after the effective support of V. Past r_end the solution is free and is
// continued in closed form by the callers.
class RadialShooter {
 public:
  // q_max bounds |V - E| over the energies that will be shot; it fixes the
  // substep so that h * sqrt(q_max) stays small.
  RadialShooter(const PotentialSpec& spec, const RadialGrid& grid, double q_max);

  struct Result {
    double y = 0.0;
    double yp = 0.0;
    int zeros = 0;  // sign changes of y on (0, r_end]
  };

  // samples (may be null) receives y at the first nodes() grid points.
  Result shoot(double energy, double* samples) const;

  std::size_t nodes() const { return nodes_; }
  double r_end() const { return r_end_; }

 private:
  std::size_t nodes_ = 0;  // grid nodes inside (0, r_end]
  std::size_t substeps_ = 1;
  double h_ = 0.0;
  double r_end_ = 0.0;
  std::vector<double> v_start_, v_mid_, v_end_;
};

struct BoundState {
  double lambda = 0.0;
  double energy = 0.0;      // E_b = lambda^2 - 1
  std::vector<double> phi;  // U-form, unit norm in the radial quadrature
};

// Number of negative Schroedinger eigenvalues below `energy` (< 0), by Sturm
// oscillation count including the zero of the closed-form tail.
int count_states_below(const RadialShooter& shooter, double energy);

BoundState solve_bound_state(const PotentialSpec& spec, const RadialGrid& grid);

// Bisection on depth within [0.1, 20] for the ground-state frequency.
PotentialSpec tune_depth(double target_lambda, const PotentialSpec& tmpl,
                         const RadialGrid& grid);

struct GenericityReport {
  bool zero_energy_regular = false;  // true: neither eigenvalue nor resonance at 0
  double slope = 0.0;                // a in e0 -> a r + b
  double intercept = 0.0;            // b
};

GenericityReport check_genericity(const PotentialSpec& spec, const RadialGrid& grid);

struct EigenTable {
  std::vector<double> table;  // row-major [N_k][N_r]
  std::vector<double> delta;  // unwrapped phase shift
  std::vector<double> overlap;  // (e_k, phi) before re-orthogonalisation
  double max_raw_overlap = 0.0;
  std::size_t n_interior = 0;   // nodes integrated numerically; the rest are closed form
};

// Rows are normalised to sqrt(2/pi) sin(kr + delta) past the support and then
// orthogonalised against phi in the discrete inner product, so P_c is exact
// on the transform's range.
EigenTable generalized_eigenfunctions(const PotentialSpec& spec, const RadialGrid& grid,
                                      const KGrid& kgrid, std::span<const double> phi);

struct SpectralData {
  PotentialSpec potential;
  RadialGrid radial;
  KGrid kgrid;
  double lambda = 0.0;
  double energy = 0.0;
  std::vector<double> phi;
  std::vector<double> delta;
  std::vector<double> table;
  std::vector<double> overlap;
  double max_raw_overlap = 0.0;
  std::size_t n_interior = 0;

  std::size_t nk() const { return kgrid.size(); }
  std::size_t nr() const { return radial.size(); }
  const double* row(std::size_t k) const { return table.data() + k * nr(); }

  std::vector<double> forward(std::span<const double> f) const;
  std::vector<cplx> forward(std::span<const cplx> f) const;
  std::vector<double> inverse(std::span<const double> ft) const;
  std::vector<cplx> inverse(std::span<const cplx> ft) const;

  // (f, phi) in the radial quadrature, and f - (f, phi) phi.
  double mode_overlap(std::span<const double> f) const;
  std::vector<double> project_continuous(std::span<const double> f) const;

  // Fraction sup_{last 5%}|f| / ||f||; forward() warns above 1e-8.
  double tail_fraction(std::span<const double> f) const;
};

SpectralData build_spectral(const PotentialSpec& spec, const RadialGrid& radial,
                            const KGrid& kgrid);

Container to_container(const SpectralData& s);
SpectralData spectral_from_container(const Container& c);

// Grid descriptors shared by every artifact that lives on these grids.
void put_grids(Container& c, const RadialGrid& radial, const KGrid& kgrid);
RadialGrid radial_from_container(const Container& c);
KGrid kgrid_from_container(const Container& c);

}  // namespace kgmode
