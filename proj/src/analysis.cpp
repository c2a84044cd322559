#include "kgmode/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "kgmode/error.hpp"

namespace kgmode {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Line {
  double slope = 0.0, intercept = 0.0, r2 = 0.0;
};

Line fit_line(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  Line l;
  l.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  l.intercept = my - l.slope * mx;
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - l.intercept - l.slope * x[i];
    ss += r * r;
  }
  l.r2 = syy > 0.0 ? std::max(0.0, 1.0 - ss / syy) : (ss == 0.0 ? 1.0 : 0.0);
  return l;
}

// Solves the 3x3 system M x = b in place by partial pivoting; false if singular.
bool solve3(double M[3][3], double b[3]) {
  for (int c = 0; c < 3; ++c) {
    int p = c;
    for (int r = c + 1; r < 3; ++r) {
      if (std::abs(M[r][c]) > std::abs(M[p][c])) p = r;
    }
    if (!(std::abs(M[p][c]) > 0.0)) return false;
    std::swap(M[p], M[c]);
    std::swap(b[p], b[c]);
    for (int r = c + 1; r < 3; ++r) {
      const double m = M[r][c] / M[c][c];
      for (int j = c; j < 3; ++j) M[r][j] -= m * M[c][j];
      b[r] -= m * b[c];
    }
  }
  for (int c = 2; c >= 0; --c) {
    for (int j = c + 1; j < 3; ++j) b[c] -= M[c][j] * b[j];
    b[c] /= M[c][c];
  }
  return true;
}

double sinc(double x) { return std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x; }

std::size_t record_index(const TraceStore& tr, double t) {
  if (tr.records.empty() || !(tr.dt > 0.0)) {
    throw Error(ErrorKind::InsufficientTrace, "empty trace");
  }
  const double n = std::round(t / tr.dt);
  if (n < 0 || n >= static_cast<double>(tr.records.size())) {
    throw Error(ErrorKind::InsufficientTrace, "time " + std::to_string(t) + " beyond the trace");
  }
  const auto i = static_cast<std::size_t>(n);
  if (std::abs(tr.records[i].t - t) > 1e-9 * std::max(1.0, t)) {
    throw Error(ErrorKind::InsufficientTrace, "time is off the recorded step lattice");
  }
  return i;
}

}  // namespace

double FitResult::param(std::string_view name) const {
  for (const auto& [k, v] : params) {
    if (k == name) return v;
  }
  throw Error(ErrorKind::InvalidConfig, "fit has no parameter " + std::string(name));
}

void FitResult::set(const std::string& name, double value) {
  for (auto& [k, v] : params) {
    if (k == name) {
      v = value;
      return;
    }
  }
  params.emplace_back(name, value);
}

double mode_self_coupling(const SpectralData& s) {
  double c0 = 0.0;
  for (std::size_t i = 0; i < s.nr(); ++i) {
    c0 += s.radial.w[i] * s.phi[i] * s.phi[i] * s.phi[i] / s.radial.r[i];
  }
  return c0;
}

cplx normal_form_B(cplx A, double t, double lambda, double c0) {
  const cplx e1 = std::polar(1.0, lambda * t);
  const cplx em1 = std::conj(e1);
  const cplx em3 = em1 * em1 * em1;
  const cplx Ab = std::conj(A);
  return A + c0 / (2.0 * lambda * lambda) *
                 (A * A * e1 - 2.0 * std::norm(A) * em1 - Ab * Ab * em3 / 3.0);
}

std::vector<cplx> normal_form_series(const TraceStore& traces, double lambda, double c0) {
  std::vector<cplx> B(traces.records.size());
  for (std::size_t i = 0; i < B.size(); ++i) {
    B[i] = normal_form_B(traces.records[i].A, traces.records[i].t, lambda, c0);
  }
  return B;
}

double chi_cutoff(double x, double w) {
  const double s = (std::abs(x) - w) / w;
  if (s <= 0.0) return 1.0;
  if (s >= 1.0) return 0.0;
  const double a = std::exp(-1.0 / (1.0 - s));
  const double b = std::exp(-1.0 / s);
  return a / (a + b);
}

std::vector<std::vector<cplx>> compute_g(const TraceStore& traces, std::span<const cplx> B,
                                         const KGrid& kgrid, const ResonantInputs& in,
                                         std::span<const double> times) {
  if (B.size() != traces.records.size() || in.coupling.size() != kgrid.size()) {
    throw Error(ErrorKind::GridMismatch, "g inputs have inconsistent lengths");
  }
  std::vector<std::size_t> idx;
  for (double t : times) idx.push_back(record_index(traces, t));
  if (!std::is_sorted(idx.begin(), idx.end())) {
    throw Error(ErrorKind::InvalidConfig, "g times must be ascending");
  }

  std::vector<std::size_t> nodes;
  std::vector<double> x, chi;
  for (std::size_t k = 0; k < kgrid.size(); ++k) {
    const double xk = kgrid.jk[k] - 2.0 * in.lambda;
    const double c = chi_cutoff(xk, in.w_C);
    if (c > 0.0) {
      nodes.push_back(k);
      x.push_back(xk);
      chi.push_back(c);
    }
  }

  const double dt = traces.dt;
  std::vector<cplx> sum(nodes.size());  // sum_{m < n} term_m
  std::vector<std::vector<cplx>> out;
  out.reserve(times.size());
  std::size_t n = 0;
  auto term = [&](std::size_t m, std::size_t j) {
    const double s = traces.records[m].t;
    return B[m] * B[m] * std::polar(1.0, -s * x[j]);
  };
  for (std::size_t target : idx) {
    for (; n < target; ++n) {
      for (std::size_t j = 0; j < nodes.size(); ++j) sum[j] += term(n, j);
    }
    std::vector<cplx> g(kgrid.size());
    if (target > 0) {
      for (std::size_t j = 0; j < nodes.size(); ++j) {
        const cplx integral = dt * (sum[j] + 0.5 * term(target, j) - 0.5 * term(0, j));
        g[nodes[j]] = -chi[j] * integral * in.coupling[nodes[j]];
      }
    }
    out.push_back(std::move(g));
  }
  return out;
}

FitResult fit_decay(std::span<const double> t, std::span<const cplx> X, double lambda,
                    double epsilon0, const std::string& model) {
  const double scale = 1.0 / (epsilon0 * epsilon0);
  if (t.empty() || t.back() < 20.0 * scale * (1.0 - 1e-9)) {
    throw Error(ErrorKind::InsufficientTrace, "decay fit needs the trace to reach 20 eps0^-2");
  }
  FitResult fit;
  fit.model = model;
  std::vector<double> y;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < 5.0 * scale) continue;
    const double m = std::abs(X[i]);
    if (!(m > 0.0)) throw Error(ErrorKind::FitDegenerate, "mode amplitude vanished");
    fit.t.push_back(t[i]);
    y.push_back(1.0 / (m * m));
  }
  if (y.size() < 3) throw Error(ErrorKind::InsufficientTrace, "too few samples in the decay window");
  const Line l = fit_line(fit.t, y);
  const double span = fit.t.back() - fit.t.front();
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  fit.residual.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) fit.residual[i] = y[i] - l.intercept - l.slope * fit.t[i];
  fit.r2 = l.r2;
  fit.set("slope", l.slope);
  fit.set("intercept", l.intercept);
  fit.set("gamma_fit", lambda * l.slope);
  if (!(l.slope * span > 1e-6 * mean)) {
    throw Error(ErrorKind::FitDegenerate, "|A|^-2 does not grow over the fit window");
  }
  return fit;
}

cplx ResonantModel::operator()(double t, double c2, double psi, double y0) const {
  const double L = lambda / gamma;
  const double ell = L * std::log1p(y0 * y0 * t / L);
  const double half = c2 * ell;  // half of the log-phase 2 c2 (lambda/Gamma) l(t)
  return std::polar(ell * sinc(half), half + 2.0 * psi) * coupling_star;
}

FitResult resonant_fit(std::span<const double> t, std::span<const cplx> fstar,
                       const ResonantModel& model, double y0_seed) {
  const std::size_t n = t.size();
  if (n < 8 || fstar.size() != n || !(y0_seed > 0.0)) {
    throw Error(ErrorKind::FitDegenerate, "resonant fit needs a populated trace and Y0 seed");
  }
  cplx mean{};
  for (const auto& z : fstar) mean += z;
  mean /= static_cast<double>(n);
  double sstot = 0.0;
  for (const auto& z : fstar) sstot += std::norm(z - mean);
  if (!(sstot > 0.0)) throw Error(ErrorKind::FitDegenerate, "resonant trace is constant");

  auto cost = [&](double c2, double psi, double y0, std::size_t stride) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; i += stride) s += std::norm(fstar[i] - model(t[i], c2, psi, y0));
    return s;
  };
  // Best phase for given (c2, y0): psi = arg(sum conj(m) f) / 2.
  auto best_psi = [&](double c2, double y0, std::size_t stride) {
    cplx acc{};
    for (std::size_t i = 0; i < n; i += stride) acc += std::conj(model(t[i], c2, 0.0, y0)) * fstar[i];
    return 0.5 * std::arg(acc);
  };

  const std::size_t stride = std::max<std::size_t>(1, n / 2000);
  double p[3] = {0.0, 0.0, y0_seed};
  double best = std::numeric_limits<double>::infinity();
  for (int ic = -150; ic <= 150; ++ic) {
    const double c2 = 0.02 * ic;
    for (int iy = 0; iy <= 40; ++iy) {
      const double y0 = y0_seed * (0.5 + 0.025 * iy);
      const double psi = best_psi(c2, y0, stride);
      const double c = cost(c2, psi, y0, stride);
      if (c < best) {
        best = c;
        p[0] = c2;
        p[1] = psi;
        p[2] = y0;
      }
    }
  }

  // Levenberg-Marquardt on the full trace with a central-difference Jacobian.
  std::vector<double> r(2 * n), J(2 * n * 3);
  auto residuals = [&](const double* q, double* out) {
    for (std::size_t i = 0; i < n; ++i) {
      const cplx d = fstar[i] - model(t[i], q[0], q[1], q[2]);
      out[2 * i] = d.real();
      out[2 * i + 1] = d.imag();
    }
  };
  auto sumsq = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
  };
  residuals(p, r.data());
  double current = sumsq(r);
  double mu = 1e-3;
  std::vector<double> rp(2 * n), rm(2 * n), trial(2 * n);
  for (int iter = 0; iter < 300; ++iter) {
    for (int j = 0; j < 3; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(p[j]));
      double q[3] = {p[0], p[1], p[2]};
      q[j] = p[j] + h;
      residuals(q, rp.data());
      q[j] = p[j] - h;
      residuals(q, rm.data());
      for (std::size_t i = 0; i < 2 * n; ++i) J[3 * i + j] = (rp[i] - rm[i]) / (2.0 * h);
    }
    double JtJ[3][3] = {}, Jtr[3] = {};
    for (std::size_t i = 0; i < 2 * n; ++i) {
      const double* row = &J[3 * i];
      for (int a = 0; a < 3; ++a) {
        Jtr[a] += row[a] * r[i];
        for (int b = 0; b < 3; ++b) JtJ[a][b] += row[a] * row[b];
      }
    }
    bool accepted = false;
    double step_size = 0.0;
    for (int attempt = 0; attempt < 20 && !accepted; ++attempt) {
      double M[3][3], d[3];
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) M[a][b] = JtJ[a][b] + (a == b ? mu * JtJ[a][a] : 0.0);
        d[a] = -Jtr[a];
      }
      if (!solve3(M, d)) {
        mu *= 10.0;
        continue;
      }
      double q[3] = {p[0] + d[0], p[1] + d[1], p[2] + d[2]};
      residuals(q, trial.data());
      const double c = sumsq(trial);
      if (c <= current) {
        std::copy(q, q + 3, p);
        r.swap(trial);
        step_size = std::abs(d[0]) / std::max(1.0, std::abs(p[0])) +
                    std::abs(d[1]) + std::abs(d[2]) / std::max(1e-300, std::abs(p[2]));
        const double gain = current - c;
        current = c;
        mu = std::max(mu / 10.0, 1e-12);
        accepted = true;
        if (gain <= 1e-15 * current && step_size < 1e-10) iter = 1 << 20;
      } else {
        mu *= 10.0;
      }
    }
    if (!accepted || step_size < 1e-13) break;
  }

  if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !(p[2] > 0.0)) {
    throw Error(ErrorKind::FitDegenerate, "resonant fit diverged");
  }
  FitResult fit;
  fit.model = "resonant_log_phase";
  // Psi is defined modulo pi.
  double psi = std::remainder(p[1], std::numbers::pi);
  fit.set("c2", p[0]);
  fit.set("psi_inf", psi);
  fit.set("y0", p[2]);
  fit.r2 = std::max(0.0, 1.0 - current / sstot);
  fit.t.assign(t.begin(), t.end());
  fit.residual.resize(n);
  for (std::size_t i = 0; i < n; ++i) fit.residual[i] = std::hypot(r[2 * i], r[2 * i + 1]);
  return fit;
}

std::vector<Extremum> envelope_extrema(std::span<const double> t, std::span<const cplx> fstar,
                                       double window) {
  const std::size_t n = t.size();
  std::vector<Extremum> out;
  if (n < 3) return out;
  const double dt = (t.back() - t.front()) / static_cast<double>(n - 1);
  const auto h = static_cast<std::size_t>(std::max(1.0, std::round(0.5 * window / dt)));
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + std::abs(fstar[i]);
  std::vector<double> s(n, kNaN);
  for (std::size_t i = h; i + h < n; ++i) s[i] = (prefix[i + h + 1] - prefix[i - h]) / static_cast<double>(2 * h + 1);
  const std::size_t nb = 2 * h;  // neighbourhood of +-window
  for (std::size_t i = h + nb; i + h + nb < n; ++i) {
    bool is_max = true, is_min = true;
    for (std::size_t j = i - nb; j <= i + nb && (is_max || is_min); ++j) {
      if (j == i) continue;
      if (s[j] >= s[i]) is_max = false;
      if (s[j] <= s[i]) is_min = false;
    }
    if (is_max || is_min) out.push_back({t[i], s[i], is_max});
  }
  return out;
}

LogPeriodicity log_periodicity(std::span<const double> t, std::span<const cplx> fstar,
                               double alpha, double epsilon0, double window) {
  LogPeriodicity lp;
  lp.extrema = envelope_extrema(t, fstar, window);
  const double t_eps = 1.0 / (epsilon0 * epsilon0);
  std::erase_if(lp.extrema, [&](const Extremum& e) { return e.t < t_eps; });
  for (std::size_t j = 0; j + 1 < lp.extrema.size(); ++j) {
    lp.ratios.push_back((1.0 + alpha * lp.extrema[j + 1].t) / (1.0 + alpha * lp.extrema[j].t));
  }
  if (lp.ratios.size() >= 2) {
    const double mean = std::accumulate(lp.ratios.begin(), lp.ratios.end(), 0.0) /
                        static_cast<double>(lp.ratios.size());
    for (double q : lp.ratios) lp.max_ratio_spread = std::max(lp.max_ratio_spread, std::abs(q / mean - 1.0));
  } else {
    lp.max_ratio_spread = kNaN;
  }

  // Smoothed value at eps0^{-2}: same moving average as the extremum search.
  const std::size_t n = t.size();
  const double dt = n > 1 ? (t.back() - t.front()) / static_cast<double>(n - 1) : 1.0;
  const auto h = static_cast<std::size_t>(std::max(1.0, std::round(0.5 * window / dt)));
  const auto c = static_cast<std::size_t>(std::lower_bound(t.begin(), t.end(), t_eps) - t.begin());
  if (c < n) {
    const std::size_t lo = c >= h ? c - h : 0, hi = std::min(n - 1, c + h);
    double s = 0.0;
    for (std::size_t i = lo; i <= hi; ++i) s += std::abs(fstar[i]);
    lp.value_at_eps2 = s / static_cast<double>(hi - lo + 1);
  }
  lp.first_max = kNaN;
  lp.first_max_t = kNaN;
  lp.growth = kNaN;
  for (const auto& e : lp.extrema) {
    if (e.maximum) {
      lp.first_max = e.value;
      lp.first_max_t = e.t;
      if (lp.value_at_eps2 > 0.0) lp.growth = e.value / lp.value_at_eps2;
      break;
    }
  }
  return lp;
}

FitResult growth_norms(std::span<const double> times,
                       std::span<const std::vector<cplx>> profiles, const KGrid& kgrid,
                       double t0, double t1) {
  FitResult fit;
  fit.model = "derivative_growth";
  std::vector<double> lt, ln, norms;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < t0 * (1.0 - 1e-12) || times[i] > t1 * (1.0 + 1e-12)) continue;
    const double nrm = derivative_norm(profiles[i], kgrid);
    if (!(nrm > 0.0)) continue;
    fit.t.push_back(times[i]);
    norms.push_back(nrm);
    lt.push_back(std::log(times[i]));
    ln.push_back(std::log(nrm));
  }
  if (lt.size() < 3) {
    throw Error(ErrorKind::InsufficientSnapshots, "growth fit needs three snapshots in range");
  }
  const Line l = fit_line(lt, ln);
  fit.r2 = l.r2;
  fit.set("exponent", l.slope);
  fit.set("prefactor", std::exp(l.intercept));
  fit.residual.resize(lt.size());
  for (std::size_t i = 0; i < lt.size(); ++i) fit.residual[i] = ln[i] - l.intercept - l.slope * lt[i];
  return fit;
}

FitResult pointwise_decay(const TraceStore& traces) {
  FitResult fit;
  fit.model = "pointwise_decay";
  double t_end = 0.0;
  for (const auto& r : traces.records) {
    if (std::isfinite(r.sup_w)) t_end = std::max(t_end, r.t);
  }
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& r : traces.records) {
    if (!std::isfinite(r.sup_w) || r.t < 0.1 * t_end || !(r.t > 0.0)) continue;
    const double v = r.t * r.sup_w;
    fit.t.push_back(r.t);
    fit.residual.push_back(v);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (fit.t.empty()) lo = hi = 0.0;
  fit.set("min", lo);
  fit.set("max", hi);
  fit.set("ratio", lo > 0.0 ? hi / lo : (hi == 0.0 ? 1.0 : kNaN));
  fit.r2 = 1.0;
  return fit;
}

std::vector<std::size_t> dyadic_snapshot_indices(const TraceStore& traces, double epsilon0) {
  std::vector<std::size_t> out;
  if (traces.snapshots.empty()) return out;
  const double base = 1.0 / (epsilon0 * epsilon0);
  const double last = traces.snapshots.back().t;
  for (int j = 0;; ++j) {
    const double tj = std::ldexp(base, j);
    if (tj > last + traces.dt) break;
    std::size_t best = 0;
    double dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < traces.snapshots.size(); ++i) {
      const double d = std::abs(traces.snapshots[i].t - tj);
      if (d < dist) {
        dist = d;
        best = i;
      }
    }
    if (dist <= traces.dt * (1.0 + 1e-9)) out.push_back(best);
  }
  return out;
}

ScatteringReport scattering_check(std::span<const double> times,
                                  std::span<const std::vector<cplx>> f,
                                  std::span<const std::vector<cplx>> g,
                                  std::span<const std::vector<cplx>> correction,
                                  const std::vector<char>& mask) {
  if (times.size() < 2) {
    throw Error(ErrorKind::InsufficientSnapshots, "scattering check needs two dyadic snapshots");
  }
  if (f.size() != times.size() || g.size() != times.size() || correction.size() != times.size()) {
    throw Error(ErrorKind::GridMismatch, "scattering inputs have inconsistent lengths");
  }
  ScatteringReport rep;
  rep.times.assign(times.begin(), times.end());
  const std::size_t nk = mask.size();
  for (std::size_t j = 0; j < times.size(); ++j) {
    if (f[j].size() != nk || g[j].size() != nk || correction[j].size() != nk) {
      throw Error(ErrorKind::GridMismatch, "scattering profile length differs from the mask");
    }
    for (std::size_t k = 0; k < nk; ++k) {
      if (mask[k]) rep.sup_correction = std::max(rep.sup_correction, std::abs(correction[j][k]));
    }
  }
  for (std::size_t j = 0; j + 1 < times.size(); ++j) {
    double dc = 0.0, dg = 0.0, df = 0.0;
    for (std::size_t k = 0; k < nk; ++k) {
      if (!mask[k]) continue;
      const cplx h0 = f[j][k] + g[j][k], h1 = f[j + 1][k] + g[j + 1][k];
      dc = std::max(dc, std::abs((h1 - correction[j + 1][k]) - (h0 - correction[j][k])));
      dg = std::max(dg, std::abs(h1 - h0));
      df = std::max(df, std::abs(f[j + 1][k] - f[j][k]));
    }
    rep.d_corrected.push_back(dc);
    rep.d_good.push_back(dg);
    rep.d_raw.push_back(df);
  }
  rep.decreasing = true;
  for (std::size_t j = 0; j + 1 < rep.d_corrected.size(); ++j) {
    if (!(rep.d_corrected[j + 1] < rep.d_corrected[j])) rep.decreasing = false;
  }
  const std::size_t m = rep.d_corrected.size();
  for (std::size_t j = m >= 3 ? m - 3 : 0; j < m; ++j) {
    const double ratio = rep.d_raw[j] > 0.0 ? rep.d_corrected[j] / rep.d_raw[j]
                                            : (rep.d_corrected[j] == 0.0 ? 0.0 : kNaN);
    rep.worst_tail_ratio = std::max(rep.worst_tail_ratio, ratio);
    if (std::isnan(ratio)) rep.worst_tail_ratio = kNaN;
  }
  return rep;
}

std::string format_fit(const FitResult& fit, const std::string& prefix) {
  std::ostringstream out;
  char buf[256];
  out << prefix << ".model=" << fit.model << '\n';
  for (const auto& [k, v] : fit.params) {
    std::snprintf(buf, sizeof buf, "%s.%s=%.17g\n", prefix.c_str(), k.c_str(), v);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "%s.r2=%.17g\n", prefix.c_str(), fit.r2);
  out << buf;
  return out.str();
}

}  // namespace kgmode
