#include "kgmode/fgr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "kgmode/error.hpp"

namespace kgmode {

namespace {

constexpr double kGammaFloor = 1e-12;  // relative to sup |coupling|
constexpr double kOracleEtas[] = {0.04, 0.02, 0.01};

}  // namespace

double ResonanceData::rho(double t) const {
  return epsilon0 / std::sqrt(1.0 + epsilon0 * epsilon0 * (gamma / lambda) * t);
}

double compute_kstar(double lambda) {
  if (!(lambda > 0.5 && lambda < 1.0)) {
    throw Error(ErrorKind::OutOfBand, "lambda outside (1/2, 1) has no resonant wavenumber");
  }
  return std::sqrt(4.0 * lambda * lambda - 1.0);
}

std::vector<double> coupling_profile(const SpectralData& s, std::span<const double> phi) {
  std::vector<double> q(s.nr());
  for (std::size_t i = 0; i < s.nr(); ++i) q[i] = phi[i] * phi[i] / s.radial.r[i];
  // Rows are orthogonal to the mode, so the transform already applies P_c.
  return s.forward(q);
}

std::vector<double> coupling_profile(const SpectralData& s) { return coupling_profile(s, s.phi); }

double compute_gamma(std::span<const double> coupling, const KGrid& kgrid, double lambda) {
  const double kstar = kgrid.kstar;
  const double at = coupling[kgrid.kstar_index];
  double sup = 0.0;
  for (double c : coupling) sup = std::max(sup, std::abs(c));
  const double gamma = std::numbers::pi / kstar * at * at;
  (void)lambda;
  if (!(sup > 0.0) || std::abs(at) <= kGammaFloor * sup || !(gamma > 0.0)) {
    throw Error(ErrorKind::NonPositiveGamma, "coupling vanishes on the resonant sphere");
  }
  return gamma;
}

double gaussian_delta(double x, double eta) {
  return std::exp(-0.5 * x * x / (eta * eta)) / (std::sqrt(2.0 * std::numbers::pi) * eta);
}

double mollified_gamma(std::span<const double> coupling, const KGrid& kgrid, double lambda,
                       double eta) {
  double s = 0.0;
  for (std::size_t k = 0; k < kgrid.size(); ++k) {
    s += kgrid.w[k] * coupling[k] * coupling[k] * gaussian_delta(kgrid.jk[k] - 2.0 * lambda, eta);
  }
  return std::numbers::pi / (2.0 * lambda) * s;
}

MollifiedGammaTable mollified_gamma_table(std::span<const double> coupling, const KGrid& kgrid,
                                          double lambda) {
  MollifiedGammaTable t;
  for (double eta : kOracleEtas) {
    t.eta.push_back(eta);
    t.gamma.push_back(mollified_gamma(coupling, kgrid, lambda, eta));
  }
  const std::size_t n = t.gamma.size();
  t.extrapolated = (4.0 * t.gamma[n - 1] - t.gamma[n - 2]) / 3.0;
  return t;
}

ResonanceData compute_resonance(const SpectralData& s, double epsilon0) {
  ResonanceData r;
  r.lambda = s.lambda;
  r.kstar = compute_kstar(s.lambda);
  if (std::abs(r.kstar - s.kgrid.kstar) > 1e-12 * r.kstar) {
    throw Error(ErrorKind::GridMismatch, "k-grid was built for a different resonance");
  }
  r.kstar_index = s.kgrid.kstar_index;
  r.epsilon0 = epsilon0;
  r.coupling = coupling_profile(s);
  r.gamma = compute_gamma(r.coupling, s.kgrid, s.lambda);
  return r;
}

std::string format_resonance_report(const ResonanceData& res, const MollifiedGammaTable& oracle) {
  std::ostringstream out;
  char buf[128];
  auto line = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%s=%.17g\n", key, v);
    out << buf;
  };
  line("lambda", res.lambda);
  line("kstar", res.kstar);
  line("coupling_kstar", res.coupling_at_kstar());
  line("gamma", res.gamma);
  line("epsilon0", res.epsilon0);
  for (std::size_t i = 0; i < oracle.eta.size(); ++i) {
    std::snprintf(buf, sizeof buf, "gamma_eta_%.3g=%.17g\n", oracle.eta[i], oracle.gamma[i]);
    out << buf;
  }
  line("gamma_eta_extrapolated", oracle.extrapolated);
  line("gamma_oracle_rel_diff", std::abs(oracle.extrapolated - res.gamma) / res.gamma);
  return out.str();
}

Container to_container(const ResonanceData& res, const KGrid& kgrid, const RadialGrid& radial) {
  Container c;
  c.meta["kind"] = "resonance";
  put_grids(c, radial, kgrid);
  c.set_number("lambda", res.lambda);
  c.set_number("kstar", res.kstar);
  c.set_number("kstar_index", static_cast<double>(res.kstar_index));
  c.set_number("gamma", res.gamma);
  c.set_number("epsilon0", res.epsilon0);
  c.arrays["coupling"] = res.coupling;
  return c;
}

ResonanceData resonance_from_container(const Container& c) {
  if (c.text("kind") != "resonance") {
    throw Error(ErrorKind::CheckpointCorrupt, "container does not hold resonance data");
  }
  ResonanceData r;
  r.lambda = c.number("lambda");
  r.kstar = c.number("kstar");
  r.kstar_index = static_cast<std::size_t>(c.number("kstar_index"));
  r.gamma = c.number("gamma");
  r.epsilon0 = c.number("epsilon0");
  r.coupling = c.array("coupling");
  if (r.kstar_index >= r.coupling.size()) {
    throw Error(ErrorKind::CheckpointCorrupt, "resonance index out of range");
  }
  return r;
}

}  // namespace kgmode
