#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace kgmode {

enum class PotentialFamily { GaussianWell, SquareWell };

std::string to_string(PotentialFamily family);
PotentialFamily parse_family(const std::string& name);

// Radial potential V(r) <= 0 of the half-line operator -d^2/dr^2 + V.
struct PotentialSpec {
  PotentialFamily family = PotentialFamily::GaussianWell;
  double depth = 2.0;  // V0 > 0
  double width = 1.0;  // sigma_w > 0

  double operator()(double r) const;

  // Radius beyond which |V| is below double resolution relative to V0; the
  // continuum solutions are exactly free past this point.
  double effective_support() const;

  // Points where V is discontinuous (integrators never step across them).
  std::vector<double> breakpoints() const;
};

// Uniform half-line grid r_n = n*dr, n = 1..size(). The origin is excluded:
// every field is stored in U = r*u form and vanishes there, so the trapezoid
// rule reduces to weight dr on interior nodes and dr/2 at r = R.
struct RadialGrid {
  double R = 0.0;
  double dr = 0.0;
  std::vector<double> r;
  std::vector<double> w;

  std::size_t size() const { return r.size(); }
  // First node index with r >= radius (size() if none).
  std::size_t index_at_or_after(double radius) const;
};

// Graded wavenumber grid. Nodes are midpoints k_j = kappa(j + 1/2) of a
// smooth monotone map kappa from a uniform index variable s, with node
// density 1/dk_base away from kstar and `refine` times that inside
// |k - kstar| <= kRefineHalfwidth. The density ramps between the two with erf
// profiles of width kRefineTransition, and the weights are kappa'(s_j). A smooth
// map keeps the midpoint rule alias-free for integrands oscillating at any
// radius r < R; piecewise-uniform segments do not. kstar is an exact node.
struct KGrid {
  double k_max = 0.0;
  double k_top = 0.0;  // upper quadrature end kappa(N) <= k_max
  double kstar = 0.0;
  std::size_t kstar_index = 0;
  int refine = 8;
  double dk_base = 0.0;
  double dk_fine = 0.0;
  double fine_lo = 0.0;  // refined band [fine_lo, fine_hi]
  double fine_hi = 0.0;
  std::vector<double> k;
  std::vector<double> w;
  std::vector<double> jk;  // <k> = sqrt(1 + k^2)

  std::size_t size() const { return k.size(); }
};

inline constexpr double kRefineHalfwidth = 0.2;
inline constexpr double kRefineTransition = 0.06;

struct RunConfig {
  // potential and mode
  PotentialSpec potential;
  double target_lambda = 0.8;  // <= 0 disables depth tuning

  // data and horizon
  double epsilon0 = 0.3;
  double t_max = -1.0;  // < 0: 50 / epsilon0^2
  double dt = 0.03;

  // grids
  double k_max = 8.0;
  double R = 0.0;   // 0: smallest causal radius
  double dr = 0.0;  // 0: largest admissible spacing
  int k_refine = 8;  // node density factor near kstar

  // analysis and normal form
  double w_C = 0.0;          // 0: min(2l-1, 2-2l)/4
  double k_cap = 4.0;        // low-frequency cap for the correction
  double kernel_window = 64.0;
  double memory_cap_mb = 2048.0;

  // cadence
  double snapshot_every = 1.0;  // time units
  int diag_every = 1;           // steps
  int checkpoint_every = 2000;  // steps
  long stop_after_steps = -1;   // testing hook: stop early, as if killed

  // probes
  int probe_trials = 6;
  std::uint64_t seed = 20240601;

  std::filesystem::path output_dir = "run";
  bool nonlinearity = true;
  bool sponge = false;

  double horizon() const;
  // Half-width of the resonance cutoff for a given mode frequency.
  double chi_halfwidth(double lambda) const;
  // Stable content hash of every field except output_dir and the testing hook.
  std::uint64_t hash() const;
};

// key=value lines, '#' comments; unknown keys and malformed values are
// InvalidConfig errors.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
std::string format_config(const RunConfig& cfg);
void apply_config_entry(RunConfig& cfg, const std::string& key,
                        const std::string& value);

// Checks every invariant that can be decided before the spectrum is known.
void validate(const RunConfig& cfg);
// Additional checks once the mode frequency is known.
void validate(const RunConfig& cfg, double lambda);

struct Grids {
  RadialGrid radial;
  KGrid kgrid;
};

RadialGrid build_radial_grid(const PotentialSpec& spec, const RunConfig& cfg);
KGrid build_kgrid(const RunConfig& cfg, double R, double kstar);
// The k-grid has to contain kstar = sqrt(4 lambda^2 - 1) as a node, so the
// resonant wavenumber is an input.
Grids build_grids(const PotentialSpec& spec, const RunConfig& cfg,
                  double kstar);

std::uint64_t hash_grid(const RadialGrid& grid);
std::uint64_t hash_grid(const KGrid& grid);

}  // namespace kgmode
