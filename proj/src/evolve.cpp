#include "kgmode/evolve.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "kgmode/error.hpp"
#include "kgmode/hash.hpp"

namespace kgmode {

namespace {

constexpr double kSpongeFraction = 0.15;
constexpr double kSpongeRate = 1.0;

bool finite(const SimState& s) {
  if (!std::isfinite(s.A.real()) || !std::isfinite(s.A.imag())) return false;
  return std::all_of(s.f.begin(), s.f.end(), [](const cplx& z) {
    return std::isfinite(z.real()) && std::isfinite(z.imag());
  });
}

void interleave(std::vector<double>& out, std::span<const cplx> z) {
  for (const auto& v : z) {
    out.push_back(v.real());
    out.push_back(v.imag());
  }
}

std::vector<cplx> deinterleave(const double* p, std::size_t n) {
  std::vector<cplx> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = {p[2 * i], p[2 * i + 1]};
  return z;
}

long total_steps(const RunConfig& cfg) {
  return static_cast<long>(std::ceil(cfg.horizon() / cfg.dt - 1e-9));
}

}  // namespace

std::vector<cplx> k_derivative(std::span<const cplx> f, const KGrid& g) {
  const std::size_t n = f.size();
  std::vector<cplx> d(n);
  if (n < 3) return d;
  const auto& k = g.k;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t a = i == 0 ? 0 : (i == n - 1 ? n - 3 : i - 1);
    const std::size_t b = a + 1, c = a + 2;
    // Derivative at k[i] of the quadratic through (a, b, c).
    const double x = k[i];
    const double la = ((x - k[b]) + (x - k[c])) / ((k[a] - k[b]) * (k[a] - k[c]));
    const double lb = ((x - k[a]) + (x - k[c])) / ((k[b] - k[a]) * (k[b] - k[c]));
    const double lc = ((x - k[a]) + (x - k[b])) / ((k[c] - k[a]) * (k[c] - k[b]));
    d[i] = la * f[a] + lb * f[b] + lc * f[c];
  }
  return d;
}

double derivative_norm(std::span<const cplx> f, const KGrid& g) {
  const auto d = k_derivative(f, g);
  double s = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) s += g.w[i] * std::norm(d[i]);
  return std::sqrt(s);
}

Evolver::Evolver(const SpectralData& spectral, const RunConfig& cfg)
    : spectral_(spectral), cfg_(cfg), dt_(cfg.dt), lambda_(spectral.lambda) {
  fast_ = std::make_unique<FastTransform>(spectral);
  inv_r_.resize(spectral.nr());
  for (std::size_t i = 0; i < spectral.nr(); ++i) inv_r_[i] = 1.0 / spectral.radial.r[i];
  if (cfg.sponge) {
    const double R = spectral.radial.R;
    const double r0 = (1.0 - kSpongeFraction) * R;
    sponge_.assign(spectral.nr(), 0.0);
    for (std::size_t i = 0; i < spectral.nr(); ++i) {
      const double r = spectral.radial.r[i];
      if (r > r0) {
        sponge_[i] = kSpongeRate * 0.5 * (1.0 - std::cos(std::numbers::pi * (r - r0) / (R - r0)));
      }
    }
  }
}

SimState Evolver::initial_state() const {
  SimState s;
  s.A = cplx(0.5 * cfg_.epsilon0, 0.0);
  s.f.assign(spectral_.nk(), cplx{});
  return s;
}

Derivative Evolver::rhs(const SimState& s, double t, double* orthogonality) const {
  const std::size_t nk = spectral_.nk();
  const std::size_t nr = spectral_.nr();
  const auto& kg = spectral_.kgrid;
  Derivative d;
  d.df.assign(nk, cplx{});
  if (!cfg_.nonlinearity) {
    if (orthogonality != nullptr) *orthogonality = 0.0;
    return d;
  }

  std::vector<cplx> phase(nk);
  std::vector<double> c(nk);
  for (std::size_t k = 0; k < nk; ++k) {
    phase[k] = std::polar(1.0, t * kg.jk[k]);
    c[k] = kg.w[k] * (phase[k] * s.f[k]).imag() / kg.jk[k];
  }
  const double a = 2.0 * (s.A * std::polar(1.0, lambda_ * t)).real();

  std::vector<double> F(nk);
  std::vector<double> v;
  const bool need_v = orthogonality != nullptr;
  if (need_v) v.resize(nr);
  double P = fast_->fused_quadratic(c.data(), a, spectral_.phi.data(), spectral_.radial.w.data(),
                                    inv_r_.data(), F.data(), need_v ? v.data() : nullptr);
  if (need_v) *orthogonality = std::abs(spectral_.mode_overlap(v));

  if (!sponge_.empty()) {
    // -sigma(r) v_t, with v_t the inverse transform of Re w~.
    std::vector<double> cr(nk), vt(nr), src(nr), Fs(nk);
    for (std::size_t k = 0; k < nk; ++k) cr[k] = kg.w[k] * (phase[k] * s.f[k]).real();
    fast_->inverse(cr.data(), vt.data());
    for (std::size_t i = 0; i < nr; ++i) {
      src[i] = -spectral_.radial.w[i] * sponge_[i] * vt[i];
      P += src[i] * spectral_.phi[i];
    }
    fast_->forward(src.data(), Fs.data());
    for (std::size_t k = 0; k < nk; ++k) F[k] += Fs[k];
  }

  d.dA = std::polar(1.0, -lambda_ * t) * P / cplx(0.0, 2.0 * lambda_);
  for (std::size_t k = 0; k < nk; ++k) d.df[k] = std::conj(phase[k]) * F[k];
  return d;
}

void Evolver::step(SimState& s, double* orthogonality) const {
  const double h = dt_;
  const double t0 = static_cast<double>(s.step) * h;
  const std::size_t nk = s.f.size();
  double orth[4] = {0, 0, 0, 0};
  double* o = orthogonality != nullptr ? orth : nullptr;

  SimState tmp;
  tmp.f.resize(nk);
  auto stage = [&](const Derivative& d, double frac) {
    tmp.A = s.A + frac * h * d.dA;
    for (std::size_t k = 0; k < nk; ++k) tmp.f[k] = s.f[k] + frac * h * d.df[k];
  };

  const auto k1 = rhs(s, t0, o ? &orth[0] : nullptr);
  stage(k1, 0.5);
  const auto k2 = rhs(tmp, t0 + 0.5 * h, o ? &orth[1] : nullptr);
  stage(k2, 0.5);
  const auto k3 = rhs(tmp, t0 + 0.5 * h, o ? &orth[2] : nullptr);
  stage(k3, 1.0);
  const auto k4 = rhs(tmp, t0 + h, o ? &orth[3] : nullptr);

  s.A += h / 6.0 * (k1.dA + 2.0 * k2.dA + 2.0 * k3.dA + k4.dA);
  for (std::size_t k = 0; k < nk; ++k) {
    s.f[k] += h / 6.0 * (k1.df[k] + 2.0 * k2.df[k] + 2.0 * k3.df[k] + k4.df[k]);
  }
  ++s.step;
  s.t = static_cast<double>(s.step) * h;
  if (orthogonality != nullptr) *orthogonality = *std::max_element(orth, orth + 4);
  if (!finite(s)) {
    throw Error(ErrorKind::NonFinite, "non-finite state at step " + std::to_string(s.step));
  }
}

Reconstruction Evolver::reconstruct(const SimState& s) const {
  const std::size_t nk = spectral_.nk();
  const std::size_t nr = spectral_.nr();
  const auto& kg = spectral_.kgrid;
  std::vector<double> cre(nk), cim(nk), cv(nk);
  for (std::size_t k = 0; k < nk; ++k) {
    const cplx wt = std::polar(1.0, s.t * kg.jk[k]) * s.f[k];
    cre[k] = kg.w[k] * wt.real();
    cim[k] = kg.w[k] * wt.imag();
    cv[k] = cim[k] / kg.jk[k];
  }
  Reconstruction r;
  std::vector<double> wre(nr), wim(nr);
  r.v.resize(nr);
  fast_->inverse(cre.data(), wre.data());
  fast_->inverse(cim.data(), wim.data());
  fast_->inverse(cv.data(), r.v.data());
  const cplx mode = s.A * std::polar(1.0, lambda_ * s.t);
  r.a = 2.0 * mode.real();
  r.a_dot = 2.0 * (cplx(0.0, lambda_) * mode).real();
  r.w.resize(nr);
  r.v_t = wre;
  r.u.resize(nr);
  r.u_t.resize(nr);
  for (std::size_t i = 0; i < nr; ++i) {
    r.w[i] = {wre[i], wim[i]};
    r.u[i] = r.a * spectral_.phi[i] + r.v[i];
    r.u_t[i] = r.a_dot * spectral_.phi[i] + r.v_t[i];
  }
  return r;
}

double Evolver::energy(const SimState& s, const Reconstruction& rec) const {
  const auto& kg = spectral_.kgrid;
  double field = 0.0;
  for (std::size_t k = 0; k < kg.size(); ++k) field += kg.w[k] * std::norm(s.f[k]);
  const double mode = rec.a_dot * rec.a_dot + lambda_ * lambda_ * rec.a * rec.a;
  double cubic = 0.0;
  if (cfg_.nonlinearity) {
    for (std::size_t i = 0; i < spectral_.nr(); ++i) {
      const double u = rec.u[i];
      cubic += spectral_.radial.w[i] * u * u * u * inv_r_[i];
    }
  }
  return 0.5 * field + 0.5 * mode - cubic / 3.0;
}

double Evolver::energy(const SimState& s) const { return energy(s, reconstruct(s)); }

TraceRecord Evolver::record(const SimState& s, bool diagnostics) const {
  TraceRecord r;
  r.t = s.t;
  r.A = s.A;
  r.f_star = s.f[spectral_.kgrid.kstar_index];
  for (const auto& z : s.f) r.sup_f = std::max(r.sup_f, std::abs(z));
  r.dk_norm = derivative_norm(s.f, spectral_.kgrid);
  if (diagnostics) {
    const auto rec = reconstruct(s);
    double sup = 0.0;
    for (std::size_t i = 0; i < rec.w.size(); ++i) sup = std::max(sup, std::abs(rec.w[i]) * inv_r_[i]);
    r.sup_w = sup;
    r.energy = energy(s, rec);
    r.orthogonality = std::abs(spectral_.mode_overlap(rec.v));
  }
  return r;
}

std::vector<double> dyadic_times(double epsilon0, double horizon) {
  std::vector<double> t;
  const double base = 1.0 / (epsilon0 * epsilon0);
  for (int j = -2;; ++j) {
    const double tj = std::ldexp(base, j);
    if (tj > horizon + 1e-9) break;
    t.push_back(tj);
  }
  return t;
}

Container snapshot_container(const Snapshot& s) {
  Container c;
  c.meta["kind"] = "snapshot";
  c.set_number("step", static_cast<double>(s.step));
  c.set_number("t", s.t);
  std::vector<double> f;
  f.reserve(2 * s.f.size());
  interleave(f, s.f);
  c.arrays["f"] = std::move(f);
  return c;
}

Container to_container(const TraceStore& tr, const SimState& state, std::uint64_t config_hash) {
  Container c;
  c.meta["kind"] = "traces";
  c.meta["config_hash"] = hex(config_hash);
  c.set_number("dt", tr.dt);
  const std::size_t n = tr.records.size();
  std::vector<double> t(n), are(n), aim(n), fre(n), fim(n), sf(n), dk(n), sw(n), en(n), orth(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = tr.records[i];
    t[i] = r.t;
    are[i] = r.A.real();
    aim[i] = r.A.imag();
    fre[i] = r.f_star.real();
    fim[i] = r.f_star.imag();
    sf[i] = r.sup_f;
    dk[i] = r.dk_norm;
    sw[i] = r.sup_w;
    en[i] = r.energy;
    orth[i] = r.orthogonality;
  }
  c.arrays["rec.t"] = std::move(t);
  c.arrays["rec.A_re"] = std::move(are);
  c.arrays["rec.A_im"] = std::move(aim);
  c.arrays["rec.fstar_re"] = std::move(fre);
  c.arrays["rec.fstar_im"] = std::move(fim);
  c.arrays["rec.sup_f"] = std::move(sf);
  c.arrays["rec.dk_norm"] = std::move(dk);
  c.arrays["rec.sup_w"] = std::move(sw);
  c.arrays["rec.energy"] = std::move(en);
  c.arrays["rec.orth"] = std::move(orth);

  std::vector<double> ss, st, sf_all;
  for (const auto& s : tr.snapshots) {
    ss.push_back(static_cast<double>(s.step));
    st.push_back(s.t);
    interleave(sf_all, s.f);
  }
  c.arrays["snap.step"] = std::move(ss);
  c.arrays["snap.t"] = std::move(st);
  c.arrays["snap.f"] = std::move(sf_all);

  c.set_number("state.step", static_cast<double>(state.step));
  c.set_number("state.t", state.t);
  c.arrays["state.A"] = {state.A.real(), state.A.imag()};
  std::vector<double> f;
  interleave(f, state.f);
  c.arrays["state.f"] = std::move(f);
  return c;
}

TraceStore traces_from_container(const Container& c) {
  if (c.text("kind") != "traces") {
    throw Error(ErrorKind::CheckpointCorrupt, "container does not hold traces");
  }
  TraceStore tr;
  tr.dt = c.number("dt");
  const auto& t = c.array("rec.t");
  const std::size_t n = t.size();
  const char* cols[] = {"rec.A_re", "rec.A_im", "rec.fstar_re", "rec.fstar_im", "rec.sup_f",
                        "rec.dk_norm", "rec.sup_w", "rec.energy", "rec.orth"};
  for (const char* col : cols) {
    if (c.array(col).size() != n) throw Error(ErrorKind::CheckpointCorrupt, "trace column length");
  }
  tr.records.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = tr.records[i];
    r.t = t[i];
    r.A = {c.array("rec.A_re")[i], c.array("rec.A_im")[i]};
    r.f_star = {c.array("rec.fstar_re")[i], c.array("rec.fstar_im")[i]};
    r.sup_f = c.array("rec.sup_f")[i];
    r.dk_norm = c.array("rec.dk_norm")[i];
    r.sup_w = c.array("rec.sup_w")[i];
    r.energy = c.array("rec.energy")[i];
    r.orthogonality = c.array("rec.orth")[i];
  }
  const auto& ss = c.array("snap.step");
  const auto& st = c.array("snap.t");
  const auto& sf = c.array("snap.f");
  if (st.size() != ss.size() || (ss.empty() ? !sf.empty() : sf.size() % (2 * ss.size()) != 0)) {
    throw Error(ErrorKind::CheckpointCorrupt, "snapshot block malformed");
  }
  const std::size_t nk = ss.empty() ? 0 : sf.size() / (2 * ss.size());
  for (std::size_t i = 0; i < ss.size(); ++i) {
    tr.snapshots.push_back({static_cast<long>(ss[i]), st[i], deinterleave(sf.data() + 2 * nk * i, nk)});
  }
  return tr;
}

SimState state_from_container(const Container& c) {
  SimState s;
  s.step = static_cast<long>(c.number("state.step"));
  s.t = c.number("state.t");
  const auto& A = c.array("state.A");
  if (A.size() != 2) throw Error(ErrorKind::CheckpointCorrupt, "state amplitude malformed");
  s.A = {A[0], A[1]};
  const auto& f = c.array("state.f");
  if (f.size() % 2 != 0) throw Error(ErrorKind::CheckpointCorrupt, "state profile malformed");
  s.f = deinterleave(f.data(), f.size() / 2);
  return s;
}

std::string format_trace(const TraceStore& tr) {
  std::string out;
  out.reserve(tr.records.size() * 200);
  char buf[512];
  auto num = [](double v, char* dst, std::size_t cap) {
    if (std::isnan(v)) return std::snprintf(dst, cap, "nan");
    return std::snprintf(dst, cap, "%.17g", v);
  };
  for (const auto& r : tr.records) {
    const double vals[] = {r.t, r.A.real(), r.A.imag(), r.f_star.real(), r.f_star.imag(),
                           r.sup_f, r.dk_norm, r.sup_w, r.energy};
    std::size_t pos = 0;
    for (std::size_t i = 0; i < 9; ++i) {
      if (i > 0) buf[pos++] = ' ';
      pos += static_cast<std::size_t>(num(vals[i], buf + pos, sizeof buf - pos));
    }
    buf[pos++] = '\n';
    out.append(buf, pos);
  }
  return out;
}

RunResult run(const RunConfig& cfg, const SpectralData& spectral, const RunOptions& opts) {
  validate(cfg, spectral.lambda);
  const Evolver ev(spectral, cfg);
  const long nsteps = total_steps(cfg);
  const double dt = cfg.dt;

  // Snapshot steps: the regular cadence, the dyadic ladder and the last step.
  std::vector<long> snap_steps;
  for (long j = 0;; ++j) {
    const long n = std::llround(static_cast<double>(j) * cfg.snapshot_every / dt);
    if (n > nsteps) break;
    snap_steps.push_back(n);
  }
  for (double tj : dyadic_times(cfg.epsilon0, cfg.horizon())) {
    snap_steps.push_back(std::min(nsteps, static_cast<long>(std::ceil(tj / dt - 1e-9))));
  }
  snap_steps.push_back(nsteps);
  std::sort(snap_steps.begin(), snap_steps.end());
  snap_steps.erase(std::unique(snap_steps.begin(), snap_steps.end()), snap_steps.end());
  auto is_snap = [&](long n) { return std::binary_search(snap_steps.begin(), snap_steps.end(), n); };

  RunResult out;
  SimState state;
  TraceStore& tr = out.traces;
  tr.dt = dt;
  const std::uint64_t hash = cfg.hash();

  auto take_snapshot = [&](const SimState& s) {
    Snapshot snap{s.step, s.t, s.f};
    if (!opts.snapshot_dir.empty()) {
      char name[64];
      std::snprintf(name, sizeof name, "snap_%09ld.kgc", s.step);
      write_container(opts.snapshot_dir / name, snapshot_container(snap));
    }
    tr.snapshots.push_back(std::move(snap));
  };

  const bool resuming = opts.resume && !opts.checkpoint.empty() && std::filesystem::exists(opts.checkpoint);
  if (resuming) {
    const auto c = read_container(opts.checkpoint);
    if (c.text("config_hash") != hex(hash)) {
      throw Error(ErrorKind::HashMismatch, "checkpoint was written for a different configuration");
    }
    tr = traces_from_container(c);
    state = state_from_container(c);
    if (state.f.size() != spectral.nk()) {
      throw Error(ErrorKind::CheckpointCorrupt, "checkpoint profile does not match the k-grid");
    }
  } else {
    state = ev.initial_state();
    tr.records.push_back(ev.record(state, true));
    if (is_snap(0)) take_snapshot(state);
  }

  try {
    while (state.step < nsteps) {
      if (cfg.stop_after_steps >= 0 && state.step >= cfg.stop_after_steps) {
        out.steps = state.step;
        return out;
      }
      double orth = 0.0;
      ev.step(state, &orth);
      const bool diag = state.step % cfg.diag_every == 0 || state.step == nsteps;
      auto rec = ev.record(state, diag);
      rec.orthogonality = std::max(rec.orthogonality, orth);
      tr.records.push_back(rec);
      if (is_snap(state.step)) take_snapshot(state);
      if (!opts.checkpoint.empty() && state.step % cfg.checkpoint_every == 0 && state.step < nsteps) {
        write_container(opts.checkpoint, to_container(tr, state, hash));
      }
      if (opts.progress) opts.progress(state);
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::NonFinite && !opts.checkpoint.empty()) {
      auto dump = opts.checkpoint;
      dump.replace_filename("nonfinite_dump.kgc");
      write_container(dump, to_container(tr, state, hash));
    }
    throw;
  }
  if (!opts.checkpoint.empty()) write_container(opts.checkpoint, to_container(tr, state, hash));
  out.complete = true;
  out.steps = state.step;
  return out;
}

}  // namespace kgmode
