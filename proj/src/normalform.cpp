#include "kgmode/normalform.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <limits>
#include <random>

#include "kgmode/error.hpp"

namespace kgmode {

namespace {

constexpr double kTaperFraction = 0.2;
constexpr double kClampScale = 0.05;

double japanese(double k) { return std::sqrt(1.0 + k * k); }

KGrid node_set(std::vector<double> k, double k_max) {
  KGrid g;
  g.k_max = k_max;
  g.k_top = k_max;
  g.k = std::move(k);
  g.w.assign(g.k.size(), 0.0);
  g.jk.resize(g.k.size());
  for (std::size_t i = 0; i < g.k.size(); ++i) g.jk[i] = japanese(g.k[i]);
  return g;
}

double slope_of(const std::vector<ProbeBand>& bands, int lo, int hi) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  for (const auto& b : bands) {
    if (b.band < lo || b.band > hi || !(b.measured > 0.0)) continue;
    const double x = b.band, y = std::log2(b.measured);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    n += 1;
  }
  const double den = n * sxx - sx * sx;
  return den > 0.0 ? (n * sxy - sx * sy) / den : 0.0;
}

// Smooth dyadic bump: 1 at x = 2^band, support (2^{band-1}, 2^{band+1}).
double dyadic_bump(double x, int band) {
  if (!(x > 0.0)) return 0.0;
  const double y = std::log2(x) - band;
  if (std::abs(y) >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - y * y));
}

// Random smooth function: Gaussian bumps of width ell at spacing ell.
struct RandomProfile {
  std::vector<double> centers, coeffs;
  double ell = 1.0;

  RandomProfile(double lo, double hi, double ell_, std::mt19937_64& rng) : ell(ell_) {
    std::normal_distribution<double> n01(0.0, 1.0);
    for (double c = lo; c <= hi + 1e-12; c += ell) {
      centers.push_back(c);
      coeffs.push_back(n01(rng));
    }
  }
  double operator()(double x) const {
    if (centers.empty()) return 0.0;
    const double u = (x - centers.front()) / ell;
    const auto lo = static_cast<std::ptrdiff_t>(std::max(0.0, std::ceil(u - 8.0)));
    const auto hi = std::min(static_cast<std::ptrdiff_t>(centers.size()) - 1,
                             static_cast<std::ptrdiff_t>(std::floor(u + 8.0)));
    double s = 0.0;
    for (std::ptrdiff_t j = lo; j <= hi; ++j) {
      const double d = (x - centers[j]) / ell;
      s += coeffs[j] * std::exp(-0.5 * d * d);
    }
    return s;
  }
};

// Sum of a few cos(beta log(1 + x) + theta) with random amplitudes, cut off
// smoothly on [cutoff, cutoff + 8].
struct LogPeriodicProfile {
  static constexpr int kModes = 4;
  double a[kModes], beta[kModes], theta[kModes];
  double cutoff = 36.0;

  explicit LogPeriodicProfile(std::mt19937_64& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    std::uniform_real_distribution<double> ub(2.0, 8.0), ut(0.0, 2.0 * std::numbers::pi);
    for (int j = 0; j < kModes; ++j) {
      a[j] = n01(rng);
      beta[j] = ub(rng);
      theta[j] = ut(rng);
    }
  }
  double operator()(double x) const {
    if (x >= cutoff + 8.0) return 0.0;
    const double l = std::log1p(x);
    double s = 0.0;
    for (int j = 0; j < kModes; ++j) s += a[j] * std::cos(beta[j] * l + theta[j]);
    if (x > cutoff) s *= 0.5 * (1.0 + std::cos(std::numbers::pi * (x - cutoff) / 8.0));
    return s;
  }
};

// ||<rho>^p g||_{L2(rho^2 drho)} by the trapezoid rule on [lo, hi].
template <class G>
double radial_norm(const G& g, double lo, double hi, std::size_t n, int p) {
  const double h = (hi - lo) / static_cast<double>(n);
  double s = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    const double x = lo + h * static_cast<double>(i);
    const double v = std::pow(1.0 + x * x, 0.5 * p) * g(x) * x;
    s += (i == 0 || i == n ? 0.5 : 1.0) * v * v;
  }
  return std::sqrt(s * h);
}

}  // namespace

double phase_symbol(double jk, double jk1, double jk2, int e1, int e2) {
  return jk - e1 * jk1 - e2 * jk2;
}

double clamp_threshold(double jk, double jk1, double jk2) {
  return kClampScale / (jk + jk1 + jk2);
}

CorrectionKernel build_kernel(const SpectralData& s, const RunConfig& cfg, KernelOutput output) {
  if (!(cfg.k_cap > 0.0) || cfg.k_cap > 0.5 * s.kgrid.k_max) {
    throw Error(ErrorKind::InvalidConfig, "k_cap must lie in (0, k_max / 2]");
  }
  CorrectionKernel kn;
  kn.k_cap = cfg.k_cap;
  const std::size_t nw = std::min(s.radial.index_at_or_after(cfg.kernel_window) + 1, s.nr());
  RadialGrid wg;
  wg.dr = s.radial.dr;
  wg.r.assign(s.radial.r.begin(), s.radial.r.begin() + static_cast<std::ptrdiff_t>(nw));
  wg.R = wg.r.back();
  wg.w.assign(nw, wg.dr);
  wg.w.back() = 0.5 * wg.dr;
  kn.window = wg.R;
  kn.r = wg.r;
  kn.wr = wg.w;

  const double dk = std::numbers::pi / kn.window;
  std::vector<double> klow;
  for (int i = 1; i * dk <= cfg.k_cap * (1.0 + 1e-12); ++i) klow.push_back(i * dk);
  std::vector<double> kout;
  if (output == KernelOutput::Low) {
    kout = klow;
  } else {
    for (double k : s.kgrid.k) {
      if (k <= cfg.k_cap) kout.push_back(k);
    }
  }
  const std::size_t ni = klow.size(), no = kout.size();
  const double bytes = static_cast<double>(no) * ni * ni * (8.0 + 4.0) +
                       static_cast<double>(ni + no) * nw * 8.0;
  if (bytes > cfg.memory_cap_mb * 1024.0 * 1024.0) {
    throw Error(ErrorKind::MemoryBudget, "correction kernel exceeds the memory cap");
  }

  const std::span<const double> phi(s.phi.data(), nw);
  auto ein = generalized_eigenfunctions(s.potential, wg, node_set(klow, cfg.k_cap), phi);
  kn.e_in = std::move(ein.table);
  std::vector<double> eout_store;
  const std::vector<double>* eout = &kn.e_in;
  if (output == KernelOutput::KGridNodes) {
    eout_store = generalized_eigenfunctions(s.potential, wg, node_set(kout, cfg.k_cap), phi).table;
    eout = &eout_store;
  }

  kn.k_in = klow;
  kn.w_in.assign(ni, dk);
  kn.jk_in.resize(ni);
  for (std::size_t i = 0; i < ni; ++i) kn.jk_in[i] = japanese(klow[i]);
  kn.k_out = kout;
  kn.jk_out.resize(no);
  for (std::size_t i = 0; i < no; ++i) kn.jk_out[i] = japanese(kout[i]);

  std::vector<double> taper(nw);
  const double r0 = (1.0 - kTaperFraction) * kn.window;
  for (std::size_t n = 0; n < nw; ++n) {
    const double r = wg.r[n];
    const double om = r <= r0 ? 1.0 : 0.5 * (1.0 + std::cos(std::numbers::pi * (r - r0) / (kn.window - r0)));
    taper[n] = wg.w[n] * om / r;
  }

  kn.mu.assign(no * ni * ni, 0.0);
#pragma omp parallel
  {
    std::vector<double> tmp(ni * nw);
#pragma omp for schedule(dynamic)
    for (std::size_t k = 0; k < no; ++k) {
      const double* ek = eout->data() + k * nw;
      for (std::size_t i = 0; i < ni; ++i) {
        const double* ei = kn.e_in.data() + i * nw;
        double* ti = tmp.data() + i * nw;
        for (std::size_t n = 0; n < nw; ++n) ti[n] = ei[n] * ek[n] * taper[n];
      }
      double* m = kn.mu.data() + k * ni * ni;
      for (std::size_t i = 0; i < ni; ++i) {
        const double* ti = tmp.data() + i * nw;
        for (std::size_t j = i; j < ni; ++j) {
          const double* ej = kn.e_in.data() + j * nw;
          double acc = 0.0;
          for (std::size_t n = 0; n < nw; ++n) acc += ti[n] * ej[n];
          m[i * ni + j] = acc;
          m[j * ni + i] = acc;
        }
      }
    }
  }

  // Clamp mask. discarded_mass weighs cells by |mu| w w / (<k1><k2>); the symbol
  // variant divides by |Phi| floored at tau, so clamped cells count at 1 / tau.
  kn.clamp.assign(4 * no * ni * ni, 0);
  double dropped = 0.0, total = 0.0, dropped_sym = 0.0, total_sym = 0.0;
  for (int p = 0; p < 4; ++p) {
    const int e1 = kSignPairs[p][0], e2 = kSignPairs[p][1];
    for (std::size_t k = 0; k < no; ++k) {
      for (std::size_t i = 0; i < ni; ++i) {
        for (std::size_t j = 0; j < ni; ++j) {
          const double phase = phase_symbol(kn.jk_out[k], kn.jk_in[i], kn.jk_in[j], e1, e2);
          const double tau = clamp_threshold(kn.jk_out[k], kn.jk_in[i], kn.jk_in[j]);
          const double mag = std::abs(kn.mu_at(k, i, j)) * kn.w_in[i] * kn.w_in[j] /
                             (kn.jk_in[i] * kn.jk_in[j]);
          const bool clamped = std::abs(phase) < tau;
          total += mag;
          total_sym += mag / std::max(std::abs(phase), tau);
          if (clamped) {
            kn.clamp[((p * no + k) * ni + i) * ni + j] = 1;
            dropped += mag;
            dropped_sym += mag / tau;
          }
        }
      }
    }
  }
  kn.discarded_mass = total > 0.0 ? dropped / total : 0.0;
  kn.discarded_symbol_mass = total_sym > 0.0 ? dropped_sym / total_sym : 0.0;
  kn.radial_hash = hash_grid(s.radial);
  kn.kgrid_hash = hash_grid(s.kgrid);
  return kn;
}

std::vector<cplx> transfer_to_low(const CorrectionKernel& kn, const SpectralData& s,
                                  std::span<const cplx> f, double t) {
  if (f.size() != s.nk() || hash_grid(s.radial) != kn.radial_hash ||
      hash_grid(s.kgrid) != kn.kgrid_hash) {
    throw Error(ErrorKind::GridMismatch, "profile and kernel live on different grids");
  }
  const std::size_t nw = kn.n_window(), nr = s.nr();
  std::vector<double> wre(nw, 0.0), wim(nw, 0.0);
  for (std::size_t k = 0; k < s.nk(); ++k) {
    const cplx c = s.kgrid.w[k] * std::polar(1.0, t * s.kgrid.jk[k]) * f[k];
    const double* row = s.table.data() + k * nr;
    for (std::size_t n = 0; n < nw; ++n) {
      wre[n] += c.real() * row[n];
      wim[n] += c.imag() * row[n];
    }
  }
  std::vector<cplx> low(kn.n_in());
  for (std::size_t i = 0; i < kn.n_in(); ++i) {
    const double* e = kn.e_in.data() + i * nw;
    double re = 0.0, im = 0.0;
    for (std::size_t n = 0; n < nw; ++n) {
      re += kn.wr[n] * e[n] * wre[n];
      im += kn.wr[n] * e[n] * wim[n];
    }
    low[i] = std::polar(1.0, -t * kn.jk_in[i]) * cplx(re, im);
  }
  return low;
}

std::vector<cplx> correction(const CorrectionKernel& kn, std::span<const cplx> f_low, double t) {
  const std::size_t ni = kn.n_in(), no = kn.n_out();
  if (f_low.size() != ni) throw Error(ErrorKind::GridMismatch, "profile is not on K_low");
  std::vector<cplx> a(ni);
  for (std::size_t i = 0; i < ni; ++i) {
    a[i] = kn.w_in[i] * std::polar(1.0, t * kn.jk_in[i]) * f_low[i] / kn.jk_in[i];
  }
  std::vector<cplx> out(no);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < no; ++k) {
    cplx acc{};
    for (int p = 0; p < 4; ++p) {
      const int e1 = kSignPairs[p][0], e2 = kSignPairs[p][1];
      const std::uint8_t* cl = kn.clamp.data() + (p * no + k) * ni * ni;
      const double* m = kn.mu.data() + k * ni * ni;
      cplx part{};
      for (std::size_t i = 0; i < ni; ++i) {
        const cplx x1 = e1 > 0 ? a[i] : std::conj(a[i]);
        cplx row{};
        for (std::size_t j = 0; j < ni; ++j) {
          if (cl[i * ni + j]) continue;
          const cplx x2 = e2 > 0 ? a[j] : std::conj(a[j]);
          row += x2 * (m[i * ni + j] / phase_symbol(kn.jk_out[k], kn.jk_in[i], kn.jk_in[j], e1, e2));
        }
        part += x1 * row;
      }
      acc += static_cast<double>(e1 * e2) * part;
    }
    out[k] = -0.25 * std::polar(1.0, -t * kn.jk_out[k]) * acc;
  }
  return out;
}

std::vector<cplx> correction(const CorrectionKernel& kn, const SpectralData& s,
                             std::span<const cplx> f, double t) {
  return correction(kn, transfer_to_low(kn, s, f, t), t);
}

Container to_container(const CorrectionKernel& kn, const SpectralData& s) {
  Container c;
  c.meta["kind"] = "kernel";
  put_grids(c, s.radial, s.kgrid);
  c.set_number("window", kn.window);
  c.set_number("k_cap", kn.k_cap);
  c.set_number("discarded_mass", kn.discarded_mass);
  c.set_number("discarded_symbol_mass", kn.discarded_symbol_mass);
  c.arrays["k_in"] = kn.k_in;
  c.arrays["w_in"] = kn.w_in;
  c.arrays["k_out"] = kn.k_out;
  c.arrays["mu"] = kn.mu;
  auto& cells = c.arrays["clamp_cells"];  // flat indices of clamped cells
  for (std::size_t i = 0; i < kn.clamp.size(); ++i) {
    if (kn.clamp[i]) cells.push_back(static_cast<double>(i));
  }
  c.arrays["e_in"] = kn.e_in;
  c.arrays["r"] = kn.r;
  c.arrays["wr"] = kn.wr;
  return c;
}

CorrectionKernel kernel_from_container(const Container& c) {
  if (c.text("kind") != "kernel") {
    throw Error(ErrorKind::CheckpointCorrupt, "container does not hold a correction kernel");
  }
  CorrectionKernel kn;
  kn.window = c.number("window");
  kn.k_cap = c.number("k_cap");
  kn.discarded_mass = c.number("discarded_mass");
  kn.discarded_symbol_mass = c.number("discarded_symbol_mass");
  kn.k_in = c.array("k_in");
  kn.w_in = c.array("w_in");
  kn.k_out = c.array("k_out");
  kn.mu = c.array("mu");
  kn.e_in = c.array("e_in");
  kn.r = c.array("r");
  kn.wr = c.array("wr");
  for (double k : kn.k_in) kn.jk_in.push_back(japanese(k));
  for (double k : kn.k_out) kn.jk_out.push_back(japanese(k));
  const std::size_t ni = kn.n_in(), no = kn.n_out();
  kn.clamp.assign(4 * no * ni * ni, 0);
  for (double v : c.array("clamp_cells")) {
    const auto i = static_cast<std::size_t>(v);
    if (!(v >= 0.0) || i >= kn.clamp.size()) {
      throw Error(ErrorKind::CheckpointCorrupt, "clamp cell index out of range");
    }
    kn.clamp[i] = 1;
  }
  if (kn.w_in.size() != ni || kn.mu.size() != no * ni * ni ||
      kn.e_in.size() != ni * kn.r.size() || kn.wr.size() != kn.r.size()) {
    throw Error(ErrorKind::CheckpointCorrupt, "kernel arrays have inconsistent sizes");
  }
  kn.radial_hash = hash_grid(radial_from_container(c));
  kn.kgrid_hash = hash_grid(kgrid_from_container(c));
  return kn;
}

double pv_quadrature(std::span<const double> g, double x0, double h, double a) {
  const std::size_t n = g.size();
  if (n < 3 || !(h > 0.0)) throw Error(ErrorKind::PoleOnBoundary, "too few samples around the pole");
  const double xn = x0 + h * static_cast<double>(n - 1);
  const double u = (a - x0) / h;
  if (!(u > 1e-9) || !(u < static_cast<double>(n - 1) - 1e-9)) {
    throw Error(ErrorKind::PoleOnBoundary, "pole outside the open sample interval");
  }
  auto x = [&](std::size_t i) { return x0 + h * static_cast<double>(i); };
  const double m_real = std::round(u);
  if (std::abs(u - m_real) <= 1e-9) {
    const auto m = static_cast<std::size_t>(m_real);
    const std::size_t J = std::min(m, n - 1 - m);
    double sym = 0.5 * (g[m + 1] - g[m - 1]) / h;  // half of o(0) = 2 g'(a)
    for (std::size_t j = 1; j <= J; ++j) {
      const double o = (g[m + j] - g[m - j]) / (static_cast<double>(j) * h);
      sym += (j == J ? 0.5 : 1.0) * o;
    }
    sym *= h;
    double rest = 0.0;
    std::size_t lo = 0, hi = 0;
    if (m + J < n - 1) {
      lo = m + J;
      hi = n - 1;
    } else if (m > J) {
      lo = 0;
      hi = m - J;
    }
    for (std::size_t i = lo; i < hi; ++i) {
      rest += 0.5 * h * (g[i] / (x(i) - a) + g[i + 1] / (x(i + 1) - a));
    }
    return sym + rest;
  }
  // Subtraction form: int (g - g(a)) / (x - a) + g(a) log((xn - a) / (a - x0)).
  const auto c = static_cast<std::size_t>(std::clamp(std::floor(u) - 1.0, 0.0, static_cast<double>(n - 4)));
  double ga = 0.0;
  for (std::size_t i = c; i < c + 4; ++i) {
    double l = 1.0;
    for (std::size_t j = c; j < c + 4; ++j) {
      if (j != i) l *= (a - x(j)) / (x(i) - x(j));
    }
    ga += l * g[i];
  }
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = (g[i] - ga) / (x(i) - a);
    s += (i == 0 || i == n - 1 ? 0.5 : 1.0) * v;
  }
  return s * h + ga * std::log((xn - a) / (a - x0));
}

ProbeReport bilinear_scaling_probe(int trials, std::uint64_t seed) {
  ProbeReport rep;
  std::mt19937_64 rng(seed);
  constexpr int kPerBand = 64;

  for (int M = -4; M <= 0; ++M) rep.bilin1.push_back({M, 0.0, std::ldexp(1.0, M)});
  for (int K = -4; K <= 4; ++K) rep.bilin2.push_back({K, 0.0, std::ldexp(1.0, 2 * K) / (1.0 + std::ldexp(1.0, 2 * K))});

  for (int trial = 0; trial < trials; ++trial) {
    for (auto& b : rep.bilin1) {
      const int M = b.band;
      const double scale = std::ldexp(1.0, M);
      const double h = scale / kPerBand;
      const std::size_t n = static_cast<std::size_t>(64 * kPerBand) + 1;  // r in [0, 64 * 2^M]
      RandomProfile q(0.5 * scale, 2.0 * scale, scale / 8.0, rng);
      auto hh = [&](double rho) { return dyadic_bump(rho, M) * q(rho); };
      const double norm = radial_norm(hh, 0.5 * scale, 2.0 * scale, 4 * kPerBand, 0);
      std::vector<double> g(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double rho = h * static_cast<double>(i);
        g[i] = rho * rho * hh(rho) / norm;
      }
      double l2 = 0.0;
      for (std::size_t i = 1; i + 1 < n; ++i) {
        const double H = pv_quadrature(g, 0.0, h, h * static_cast<double>(i));
        l2 += h * H * H;
      }
      b.measured = std::max(b.measured, std::sqrt(l2));
    }

    // One random f per trial, shared by every K band. h lives on |s| ~ 2^L with
    // L = -3 so that |eta + sigma| ~ |eta| over the probed K range.
    // f = <x>^{-2} q with q log-periodic, so every dyadic band above unit scale
    // sees the same oscillation pattern and q is smooth below it.
    LogPeriodicProfile qf(rng);
    const double fnorm = radial_norm([&](double x) { return qf(x) / (1.0 + x * x); }, 0.0, qf.cutoff + 8.0, 16384, 2);
    auto ft = [&](double x) { return qf(x) / ((1.0 + x * x) * fnorm); };
    constexpr int kL = -3;
    const double s_lo = std::ldexp(0.5, kL), s_hi = std::ldexp(2.0, kL);
    RandomProfile qh(s_lo, s_hi, std::ldexp(0.125, kL), rng);
    auto ht = [&](double s) { return dyadic_bump(s, kL) * qh(s); };
    const double hnorm = radial_norm(ht, s_lo, s_hi, 512, 2);
    const double ds = std::ldexp(1.0 / 256.0, kL);
    std::vector<double> s_nodes, s_vals;
    for (double s = s_lo; s <= s_hi + 1e-12; s += ds) {
      s_nodes.push_back(s);
      s_vals.push_back(ht(s) / hnorm);
    }
    for (auto& b : rep.bilin2) {
      const int K = b.band;
      const double scale = std::ldexp(1.0, K);
      // Resolve both the band and the correlation length of f.
      const int per_band = std::max(kPerBand, static_cast<int>(std::ldexp(32.0, K)));
      const double h = scale / per_band;
      const auto n = static_cast<std::size_t>(2.25 * per_band) + 1;  // r in [0, 2.25 * 2^K]
      std::vector<double> g(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double r = h * static_cast<double>(i);
        const double bump = dyadic_bump(r, K);
        if (bump == 0.0) continue;
        double F = 0.0;
        for (std::size_t j = 0; j < s_nodes.size(); ++j) F += ds * ft(r + s_nodes[j]) * s_vals[j];
        g[i] = r * r * bump * F;
      }
      double sup = 0.0;
      for (std::size_t i = static_cast<std::size_t>(per_band / 2 + 1); i < static_cast<std::size_t>(2 * per_band); ++i) {
        sup = std::max(sup, std::abs(pv_quadrature(g, 0.0, h, h * static_cast<double>(i))));
      }
      b.measured = std::max(b.measured, sup);
    }
  }

  rep.slope1_low = slope_of(rep.bilin1, -4, 0);
  rep.slope2_low = slope_of(rep.bilin2, -4, 0);
  rep.slope2_high = slope_of(rep.bilin2, 1, 4);
  auto constants = [](const std::vector<ProbeBand>& set, double& hi, double& lo) {
    hi = 0.0;
    lo = std::numeric_limits<double>::infinity();
    for (const auto& b : set) {
      hi = std::max(hi, b.measured / b.predicted);
      lo = std::min(lo, b.measured / b.predicted);
    }
  };
  constants(rep.bilin1, rep.constant1, rep.constant1_min);
  constants(rep.bilin2, rep.constant2, rep.constant2_min);
  return rep;
}

}  // namespace kgmode
