#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kgmode/evolve.hpp"
#include "kgmode/fgr.hpp"
#include "kgmode/spectral.hpp"

namespace kgmode {

struct FitResult {
  std::string model;
  std::vector<std::pair<std::string, double>> params;
  double r2 = 0.0;
  std::vector<double> t;         // abscissa of the residual series
  std::vector<double> residual;  // data minus model (modulus for complex fits)

  double param(std::string_view name) const;  // InvalidConfig if absent
  void set(const std::string& name, double value);
};

// c0 = sum_r w phi^3 / r, the mode's quadratic self-coupling.
double mode_self_coupling(const SpectralData& s);

// Mode amplitude with the non-resonant O(A^2) oscillation removed:
// B = A + c0/(2 lambda^2) [A^2 e^{i lambda t} - 2|A|^2 e^{-i lambda t} - conj(A)^2 e^{-3i lambda t}/3].
cplx normal_form_B(cplx A, double t, double lambda, double c0);
std::vector<cplx> normal_form_series(const TraceStore& traces, double lambda, double c0);

// Smooth cutoff in x = <k> - 2 lambda: 1 on |x| <= w, 0 on |x| >= 2w.
double chi_cutoff(double x, double w);

struct ResonantInputs {
  double lambda = 0.0;
  double w_C = 0.0;
  std::vector<double> coupling;  // on the k-grid
};

// g~(t, k) = -chi(k) [sum_s w_s B(s)^2 e^{-is(<k> - 2 lambda)}] coupling(k), trapezoidal
// over the recorded steps. One pass produces every requested time (ascending).
// InsufficientTrace when a time is beyond the trace or off the step lattice.
std::vector<std::vector<cplx>> compute_g(const TraceStore& traces, std::span<const cplx> B,
                                         const KGrid& kgrid, const ResonantInputs& in,
                                         std::span<const double> times);

// Linear fit of |X|^{-2} against t on [5 eps0^{-2}, t_end]; Gamma_fit = lambda * slope.
// InsufficientTrace below 20 eps0^{-2}; FitDegenerate when |X| does not decay.
FitResult fit_decay(std::span<const double> t, std::span<const cplx> X, double lambda,
                    double epsilon0, const std::string& model);

struct ResonantModel {
  double lambda = 0.0;
  double gamma = 0.0;
  double coupling_star = 0.0;

  cplx operator()(double t, double c2, double psi, double y0) const;
};

// Least squares of f~(t, kstar) against ResonantModel over the whole trace:
// grid search in (c2, Y0) with the phase profiled out, then Levenberg-Marquardt.
FitResult resonant_fit(std::span<const double> t, std::span<const cplx> fstar,
                       const ResonantModel& model, double y0_seed);

struct Extremum {
  double t = 0.0;
  double value = 0.0;
  bool maximum = false;
};

// Local extrema of |f~(t, kstar)| after a moving average over `window` time
// units, each the extreme value within +-window of itself.
std::vector<Extremum> envelope_extrema(std::span<const double> t, std::span<const cplx> fstar,
                                       double window);

struct LogPeriodicity {
  std::vector<Extremum> extrema;
  std::vector<double> ratios;  // (1 + alpha t_{j+1}) / (1 + alpha t_j)
  double max_ratio_spread = 0.0;  // max |q_j / mean(q) - 1|
  double value_at_eps2 = 0.0;     // smoothed |f~(eps0^{-2}, kstar)|
  double first_max = 0.0;
  double first_max_t = 0.0;
  double growth = 0.0;            // first_max / value_at_eps2
};

LogPeriodicity log_periodicity(std::span<const double> t, std::span<const cplx> fstar,
                               double alpha, double epsilon0, double window);

// log-log slope of ||d_k p(t)||_{L2} over snapshots in [t0, t1].
// InsufficientSnapshots with fewer than three samples in range.
FitResult growth_norms(std::span<const double> times,
                       std::span<const std::vector<cplx>> profiles, const KGrid& kgrid,
                       double t0, double t1);

// min / max of t sup|w| over [t_end / 10, t_end].
FitResult pointwise_decay(const TraceStore& traces);

struct ScatteringReport {
  std::vector<double> times;
  std::vector<double> d_corrected;  // sup_k |(h - N)(t_{j+1}) - (h - N)(t_j)|
  std::vector<double> d_good;       // same without the correction
  std::vector<double> d_raw;        // f alone
  double sup_correction = 0.0;
  bool decreasing = false;
  double worst_tail_ratio = 0.0;    // max over the last three j of d_corrected / d_raw
};

// Snapshot indices closest to t_j = 2^j eps0^{-2}, j >= 0, each within one step.
std::vector<std::size_t> dyadic_snapshot_indices(const TraceStore& traces, double epsilon0);

// All profiles on the k-grid; the sup runs over nodes with mask[k] set.
ScatteringReport scattering_check(std::span<const double> times,
                                  std::span<const std::vector<cplx>> f,
                                  std::span<const std::vector<cplx>> g,
                                  std::span<const std::vector<cplx>> correction,
                                  const std::vector<char>& mask);

std::string format_fit(const FitResult& fit, const std::string& prefix);

}  // namespace kgmode
