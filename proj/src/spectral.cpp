#include "kgmode/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <numbers>

#include "kgmode/dense_kernels.hpp"
#include "kgmode/error.hpp"
#include "kgmode/hash.hpp"

namespace kgmode {

namespace {

constexpr double kSubstepPhase = 0.005;  // h * sqrt(q_max)
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

// Zero of the closed-form continuation past r_end, for E <= 0.
bool tail_has_zero(const RadialShooter::Result& s, double energy) {
  if (energy == 0.0) return s.y * s.yp < 0.0;
  const double kappa = std::sqrt(-energy);
  const double grow = 0.5 * (s.y + s.yp / kappa);
  const double decay = 0.5 * (s.y - s.yp / kappa);
  return grow != 0.0 && -decay / grow > 1.0;
}

int count_at(const RadialShooter& shooter, double energy) {
  const auto s = shooter.shoot(energy, nullptr);
  return s.zeros + (tail_has_zero(s, energy) ? 1 : 0);
}

double potential_floor(const PotentialSpec& spec) { return -spec.depth; }

}  // namespace

RadialShooter::RadialShooter(const PotentialSpec& spec, const RadialGrid& grid,
                             double q_max) {
  const double support = std::min(spec.effective_support(), grid.R);
  nodes_ = std::min(grid.size(), static_cast<std::size_t>(std::ceil(support / grid.dr - 1e-9)));
  nodes_ = std::max<std::size_t>(nodes_, 1);
  r_end_ = grid.r[nodes_ - 1];
  substeps_ = std::max<std::size_t>(
      8, static_cast<std::size_t>(std::ceil(grid.dr * std::sqrt(std::max(q_max, 1.0)) / kSubstepPhase)));
  h_ = grid.dr / static_cast<double>(substeps_);

  // V is sampled just inside each substep so a jump sitting on a lattice
  // point is seen from the correct side.
  const std::size_t steps = nodes_ * substeps_;
  const double inset = 1e-9 * h_;
  v_start_.resize(steps);
  v_mid_.resize(steps);
  v_end_.resize(steps);
  for (std::size_t j = 0; j < steps; ++j) {
    const double r0 = static_cast<double>(j) * h_;
    v_start_[j] = spec(r0 + inset);
    v_mid_[j] = spec(r0 + 0.5 * h_);
    v_end_[j] = spec(r0 + h_ - inset);
  }
}

RadialShooter::Result RadialShooter::shoot(double energy, double* samples) const {
  double y = 0.0;
  double p = 1.0;
  int zeros = 0;
  const double h = h_;
  const std::size_t steps = nodes_ * substeps_;
  for (std::size_t j = 0; j < steps; ++j) {
    const double q0 = v_start_[j] - energy;
    const double qm = v_mid_[j] - energy;
    const double q1 = v_end_[j] - energy;
    const double k1y = p, k1p = q0 * y;
    const double y2 = y + 0.5 * h * k1y, p2 = p + 0.5 * h * k1p;
    const double k2y = p2, k2p = qm * y2;
    const double y3 = y + 0.5 * h * k2y, p3 = p + 0.5 * h * k2p;
    const double k3y = p3, k3p = qm * y3;
    const double y4 = y + h * k3y, p4 = p + h * k3p;
    const double k4y = p4, k4p = q1 * y4;
    const double y_new = y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
    p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
    if (j > 0 && ((y > 0.0 && y_new <= 0.0) || (y < 0.0 && y_new >= 0.0))) ++zeros;
    y = y_new;
    if (samples != nullptr && (j + 1) % substeps_ == 0) samples[(j + 1) / substeps_ - 1] = y;
  }
  return {y, p, zeros};
}

int count_states_below(const RadialShooter& shooter, double energy) {
  return count_at(shooter, energy);
}

BoundState solve_bound_state(const PotentialSpec& spec, const RadialGrid& grid) {
  const double floor_v = potential_floor(spec);
  const RadialShooter shooter(spec, grid, spec.depth + 1.0);
  const int n0 = count_at(shooter, 0.0);
  if (n0 == 0) throw Error(ErrorKind::NoBoundState, "potential supports no bound state");
  if (n0 > 1) {
    throw Error(ErrorKind::MultipleBoundStates,
                "potential supports " + std::to_string(n0) + " bound states");
  }

  double lo = floor_v - 1e-3;
  double hi = 0.0;
  for (int it = 0; it < 200 && hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * std::abs(lo); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (count_at(shooter, mid) >= 1) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  BoundState out;
  out.energy = 0.5 * (lo + hi);
  if (!(out.energy > -0.75 && out.energy < 0.0)) {
    throw Error(ErrorKind::ModeOutOfBand,
                "bound state energy " + std::to_string(out.energy) + " outside (-3/4, 0)");
  }
  out.lambda = std::sqrt(1.0 + out.energy);

  out.phi.assign(grid.size(), 0.0);
  const auto s = shooter.shoot(out.energy, out.phi.data());
  const double kappa = std::sqrt(-out.energy);
  const double y_end = out.phi[shooter.nodes() - 1];
  for (std::size_t n = shooter.nodes(); n < grid.size(); ++n) {
    out.phi[n] = y_end * std::exp(-kappa * (grid.r[n] - shooter.r_end()));
  }
  (void)s;
  double norm2 = 0.0;
  for (std::size_t n = 0; n < grid.size(); ++n) norm2 += grid.w[n] * out.phi[n] * out.phi[n];
  const double scale = 1.0 / std::sqrt(norm2);
  for (auto& x : out.phi) x *= scale;
  return out;
}

PotentialSpec tune_depth(double target_lambda, const PotentialSpec& tmpl,
                         const RadialGrid& grid) {
  if (!(target_lambda > 0.5 && target_lambda < 1.0)) {
    throw Error(ErrorKind::TargetUnreachable,
                "target lambda " + std::to_string(target_lambda) +
                    " is outside (1/2, 1), where the mode would be out of band");
  }
  const double target_energy = target_lambda * target_lambda - 1.0;
  auto too_deep = [&](double depth) {
    PotentialSpec s = tmpl;
    s.depth = depth;
    const RadialShooter shooter(s, grid, depth + 1.0);
    return count_at(shooter, target_energy) >= 1;
  };
  double lo = 0.1;
  double hi = 20.0;
  if (too_deep(lo) || !too_deep(hi)) {
    throw Error(ErrorKind::TargetUnreachable,
                "no depth in [0.1, 20] gives lambda = " + std::to_string(target_lambda));
  }
  while (hi - lo > 1e-14 * hi) {
    const double mid = 0.5 * (lo + hi);
    (too_deep(mid) ? hi : lo) = mid;
  }
  PotentialSpec out = tmpl;
  out.depth = 0.5 * (lo + hi);
  const auto bound = solve_bound_state(out, grid);
  if (std::abs(bound.lambda - target_lambda) > 1e-6) {
    throw Error(ErrorKind::TargetUnreachable, "depth bisection did not close on the target");
  }
  return out;
}

GenericityReport check_genericity(const PotentialSpec& spec, const RadialGrid& grid) {
  const RadialShooter shooter(spec, grid, spec.depth + 1.0);
  const auto s = shooter.shoot(0.0, nullptr);
  GenericityReport rep;
  rep.slope = s.yp;
  rep.intercept = s.y - s.yp * shooter.r_end();
  rep.zero_energy_regular = std::abs(rep.slope) > 1e-6 * std::abs(rep.intercept) / grid.R;
  return rep;
}

EigenTable generalized_eigenfunctions(const PotentialSpec& spec, const RadialGrid& grid,
                                      const KGrid& kgrid, std::span<const double> phi) {
  const std::size_t nk = kgrid.size();
  const std::size_t nr = grid.size();
  const RadialShooter shooter(spec, grid, kgrid.k_max * kgrid.k_max + spec.depth);
  EigenTable out;
  out.table.assign(nk * nr, 0.0);
  out.delta.assign(nk, 0.0);
  std::vector<double> overlap(nk, 0.0);
  bool failed = false;

#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t i = 0; i < nk; ++i) {
    const double k = kgrid.k[i];
    double* row = out.table.data() + i * nr;
    const auto s = shooter.shoot(k * k, row);
    const double amp = std::hypot(s.y, s.yp / k);
    if (!(amp >= 1e-12) || !std::isfinite(amp)) {
#pragma omp atomic write
      failed = true;
      continue;
    }
    const double theta = std::atan2(s.y, s.yp / k);
    const double delta = theta - k * shooter.r_end();
    const double scale = kSqrt2OverPi / amp;
    for (std::size_t n = 0; n < shooter.nodes(); ++n) row[n] *= scale;
    for (std::size_t n = shooter.nodes(); n < nr; ++n) {
      row[n] = kSqrt2OverPi * std::sin(k * grid.r[n] + delta);
    }
    out.delta[i] = delta;

    double ov = 0.0;
    if (!phi.empty()) {
      for (std::size_t n = 0; n < nr; ++n) ov += grid.w[n] * phi[n] * row[n];
      for (std::size_t n = 0; n < nr; ++n) row[n] -= ov * phi[n];
    }
    overlap[i] = ov;
  }
  if (failed) {
    throw Error(ErrorKind::NormalizationFailure,
                "continuum solution with vanishing asymptotic amplitude");
  }

  // Continuous phase shift: anchored near 0 at k_max, unwrapped downward.
  const double two_pi = 2.0 * std::numbers::pi;
  if (nk > 0) {
    double& top = out.delta[nk - 1];
    top = std::remainder(top, two_pi);
    for (std::size_t i = nk - 1; i-- > 0;) {
      const double prev = out.delta[i + 1];
      out.delta[i] = prev + std::remainder(out.delta[i] - prev, two_pi);
    }
  }
  out.n_interior = shooter.nodes();
  for (double ov : overlap) out.max_raw_overlap = std::max(out.max_raw_overlap, std::abs(ov));
  out.overlap = std::move(overlap);
  return out;
}

SpectralData build_spectral(const PotentialSpec& spec, const RadialGrid& radial,
                            const KGrid& kgrid) {
  SpectralData s;
  s.potential = spec;
  s.radial = radial;
  s.kgrid = kgrid;
  auto bound = solve_bound_state(spec, radial);
  s.lambda = bound.lambda;
  s.energy = bound.energy;
  s.phi = std::move(bound.phi);
  auto eig = generalized_eigenfunctions(spec, radial, kgrid, s.phi);
  s.table = std::move(eig.table);
  s.delta = std::move(eig.delta);
  s.overlap = std::move(eig.overlap);
  s.max_raw_overlap = eig.max_raw_overlap;
  s.n_interior = eig.n_interior;
  return s;
}

double SpectralData::tail_fraction(std::span<const double> f) const {
  const std::size_t n = nr();
  const std::size_t start = n - std::max<std::size_t>(1, n / 20);
  double tail = 0.0;
  double norm2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    norm2 += radial.w[i] * f[i] * f[i];
    if (i >= start) tail = std::max(tail, std::abs(f[i]));
  }
  return norm2 > 0.0 ? tail / std::sqrt(norm2) : 0.0;
}

std::vector<double> SpectralData::forward(std::span<const double> f) const {
  if (f.size() != nr()) throw Error(ErrorKind::GridMismatch, "forward: field size mismatch");
  if (tail_fraction(f) > 1e-8) {
    std::cerr << "warning: forward transform of a field that has not decayed by r = R\n";
  }
  std::vector<double> x(nr());
  for (std::size_t i = 0; i < nr(); ++i) x[i] = radial.w[i] * f[i];
  std::vector<double> out(nk());
  kernels::forward(table.data(), nk(), nr(), x.data(), out.data(), 1);
  return out;
}

std::vector<cplx> SpectralData::forward(std::span<const cplx> f) const {
  if (f.size() != nr()) throw Error(ErrorKind::GridMismatch, "forward: field size mismatch");
  std::vector<double> x(2 * nr());
  for (std::size_t i = 0; i < nr(); ++i) {
    x[i] = radial.w[i] * f[i].real();
    x[nr() + i] = radial.w[i] * f[i].imag();
  }
  std::vector<double> out(2 * nk());
  kernels::forward(table.data(), nk(), nr(), x.data(), out.data(), 2);
  std::vector<cplx> res(nk());
  for (std::size_t k = 0; k < nk(); ++k) res[k] = {out[k], out[nk() + k]};
  return res;
}

std::vector<double> SpectralData::inverse(std::span<const double> ft) const {
  if (ft.size() != nk()) throw Error(ErrorKind::GridMismatch, "inverse: profile size mismatch");
  std::vector<double> c(nk());
  for (std::size_t k = 0; k < nk(); ++k) c[k] = kgrid.w[k] * ft[k];
  std::vector<double> out(nr());
  kernels::inverse(table.data(), nk(), nr(), c.data(), out.data(), 1);
  return out;
}

std::vector<cplx> SpectralData::inverse(std::span<const cplx> ft) const {
  if (ft.size() != nk()) throw Error(ErrorKind::GridMismatch, "inverse: profile size mismatch");
  std::vector<double> c(2 * nk());
  for (std::size_t k = 0; k < nk(); ++k) {
    c[k] = kgrid.w[k] * ft[k].real();
    c[nk() + k] = kgrid.w[k] * ft[k].imag();
  }
  std::vector<double> out(2 * nr());
  kernels::inverse(table.data(), nk(), nr(), c.data(), out.data(), 2);
  std::vector<cplx> res(nr());
  for (std::size_t i = 0; i < nr(); ++i) res[i] = {out[i], out[nr() + i]};
  return res;
}

double SpectralData::mode_overlap(std::span<const double> f) const {
  double s = 0.0;
  for (std::size_t i = 0; i < nr(); ++i) s += radial.w[i] * f[i] * phi[i];
  return s;
}

std::vector<double> SpectralData::project_continuous(std::span<const double> f) const {
  const double ov = mode_overlap(f);
  std::vector<double> out(f.begin(), f.end());
  for (std::size_t i = 0; i < nr(); ++i) out[i] -= ov * phi[i];
  return out;
}

void put_grids(Container& c, const RadialGrid& radial, const KGrid& kgrid) {
  c.arrays["radial.r"] = radial.r;
  c.arrays["radial.w"] = radial.w;
  c.arrays["radial.params"] = {radial.R, radial.dr};
  c.arrays["kgrid.k"] = kgrid.k;
  c.arrays["kgrid.w"] = kgrid.w;
  c.arrays["kgrid.jk"] = kgrid.jk;
  c.arrays["kgrid.params"] = {kgrid.k_max, kgrid.kstar, static_cast<double>(kgrid.kstar_index),
                              kgrid.dk_base, kgrid.dk_fine, kgrid.fine_lo, kgrid.fine_hi,
                              kgrid.k_top, static_cast<double>(kgrid.refine)};
  c.meta["radial.hash"] = hex(hash_grid(radial));
  c.meta["kgrid.hash"] = hex(hash_grid(kgrid));
}

RadialGrid radial_from_container(const Container& c) {
  RadialGrid g;
  g.r = c.array("radial.r");
  g.w = c.array("radial.w");
  const auto& p = c.array("radial.params");
  if (p.size() != 2 || g.r.size() != g.w.size()) {
    throw Error(ErrorKind::CheckpointCorrupt, "radial grid descriptor malformed");
  }
  g.R = p[0];
  g.dr = p[1];
  if (hex(hash_grid(g)) != c.text("radial.hash")) {
    throw Error(ErrorKind::HashMismatch, "radial grid hash mismatch");
  }
  return g;
}

KGrid kgrid_from_container(const Container& c) {
  KGrid g;
  g.k = c.array("kgrid.k");
  g.w = c.array("kgrid.w");
  g.jk = c.array("kgrid.jk");
  const auto& p = c.array("kgrid.params");
  if (p.size() != 9 || g.k.size() != g.w.size() || g.k.size() != g.jk.size()) {
    throw Error(ErrorKind::CheckpointCorrupt, "k-grid descriptor malformed");
  }
  g.k_max = p[0];
  g.kstar = p[1];
  g.kstar_index = static_cast<std::size_t>(p[2]);
  g.dk_base = p[3];
  g.dk_fine = p[4];
  g.fine_lo = p[5];
  g.fine_hi = p[6];
  g.k_top = p[7];
  g.refine = static_cast<int>(p[8]);
  if (hex(hash_grid(g)) != c.text("kgrid.hash")) {
    throw Error(ErrorKind::HashMismatch, "k-grid hash mismatch");
  }
  return g;
}

Container to_container(const SpectralData& s) {
  Container c;
  c.meta["kind"] = "spectral";
  c.meta["family"] = to_string(s.potential.family);
  put_grids(c, s.radial, s.kgrid);
  c.arrays["potential"] = {s.potential.depth, s.potential.width};
  c.set_number("lambda", s.lambda);
  c.set_number("energy", s.energy);
  c.set_number("max_raw_overlap", s.max_raw_overlap);
  c.arrays["phi"] = s.phi;
  c.arrays["delta"] = s.delta;
  c.arrays["table"] = s.table;
  c.arrays["overlap"] = s.overlap;
  c.set_number("n_interior", static_cast<double>(s.n_interior));
  return c;
}

SpectralData spectral_from_container(const Container& c) {
  if (c.text("kind") != "spectral") {
    throw Error(ErrorKind::CheckpointCorrupt, "container does not hold spectral data");
  }
  SpectralData s;
  s.potential.family = parse_family(c.text("family"));
  const auto& pot = c.array("potential");
  if (pot.size() != 2) throw Error(ErrorKind::CheckpointCorrupt, "potential descriptor malformed");
  s.potential.depth = pot[0];
  s.potential.width = pot[1];
  s.radial = radial_from_container(c);
  s.kgrid = kgrid_from_container(c);
  s.lambda = c.number("lambda");
  s.energy = c.number("energy");
  s.max_raw_overlap = c.number("max_raw_overlap");
  s.phi = c.array("phi");
  s.delta = c.array("delta");
  s.table = c.array("table");
  s.overlap = c.array("overlap");
  s.n_interior = static_cast<std::size_t>(c.number("n_interior"));
  if (s.phi.size() != s.nr() || s.delta.size() != s.nk() || s.table.size() != s.nk() * s.nr() ||
      s.overlap.size() != s.nk()) {
    throw Error(ErrorKind::CheckpointCorrupt, "spectral payload sizes disagree with grids");
  }
  return s;
}

}  // namespace kgmode
