#include <doctest.h>

#include "kgmode/container.hpp"
#include "kgmode/fgr.hpp"
#include "kgmode/spectral.hpp"
#include "support.hpp"

using namespace kgmode;
using kgtest::kind_of;

namespace {

const double kS2pi = std::sqrt(2.0 / std::numbers::pi);

RunConfig fixed_depth_config(PotentialFamily family, double depth) {
  RunConfig c = kgtest::small_config();
  c.potential.family = family;
  c.potential.depth = depth;
  c.target_lambda = 0.0;
  return c;
}

// Ground state of the unit square well: kappa = -k cot k with k^2 + kappa^2 = V0,
// bracketed on k in (pi/2, sqrt(V0)).
double square_well_energy(double v0) {
  auto g = [v0](double k) { return std::sqrt(v0 - k * k) + k / std::tan(k); };
  double lo = std::numbers::pi / 2 + 1e-15, hi = std::sqrt(v0);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0.0 ? lo : hi) = mid;
  }
  const double k = 0.5 * (lo + hi);
  return k * k - v0;
}

// Lowest Dirichlet eigenvalue of -y'' + V y on (0, L), second-order finite
// differences, by Sturm count of the tridiagonal pivots.
double fd_ground_energy(const PotentialSpec& v, double L, double h) {
  const auto n = static_cast<std::size_t>(std::llround(L / h)) - 1;
  auto count_below = [&](double e) {
    int neg = 0;
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = static_cast<double>(i + 1) * h;
      const double diag = 2.0 / (h * h) + v(r) - e;
      d = i == 0 ? diag : diag - 1.0 / (h * h * h * h * d);
      if (d < 0.0) ++neg;
    }
    return neg;
  };
  double lo = -v.depth, hi = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    (count_below(mid) >= 1 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

double wrap_pi(double x) {
  // representative of x mod pi in (-pi/2, pi/2]
  return x - std::numbers::pi * std::round(x / std::numbers::pi);
}

double k_norm(const KGrid& g, std::span<const double> f) {
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) s += g.w[i] * f[i] * f[i];
  return std::sqrt(s);
}

}  // namespace

TEST_SUITE("spectral") {
  TEST_CASE("no bound state without a potential") {
    const auto c = fixed_depth_config(PotentialFamily::GaussianWell, 0.0);
    const auto g = build_radial_grid(c.potential, c);
    CHECK(kind_of([&] { solve_bound_state(c.potential, g); }) == ErrorKind::NoBoundState);
  }

  TEST_CASE("too deep a well has two bound states") {
    const auto c = fixed_depth_config(PotentialFamily::SquareWell, 30.0);
    const auto g = build_radial_grid(c.potential, c);
    CHECK(kind_of([&] { solve_bound_state(c.potential, g); }) == ErrorKind::MultipleBoundStates);
  }

  TEST_CASE("square well energy against the matching condition") {
    const double v0 = 4.0;
    const auto c = fixed_depth_config(PotentialFamily::SquareWell, v0);
    const auto g = build_radial_grid(c.potential, c);
    const auto b = solve_bound_state(c.potential, g);
    const double oracle = square_well_energy(v0);
    CAPTURE(b.energy);
    CAPTURE(oracle);
    CHECK(std::abs(b.energy - oracle) <= 1e-8);
    CHECK(b.lambda == doctest::Approx(std::sqrt(1.0 + oracle)).epsilon(1e-8));
    CHECK(kgtest::radial_norm(g, b.phi) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("gaussian well V0 = 2 against a Richardson finite-difference solve") {
    const auto c = fixed_depth_config(PotentialFamily::GaussianWell, 2.0);
    const auto g = build_radial_grid(c.potential, c);
    const auto b = solve_bound_state(c.potential, g);
    const double e1 = fd_ground_energy(c.potential, 40.0, 0.01);
    const double e2 = fd_ground_energy(c.potential, 40.0, 0.005);
    const double oracle = std::sqrt(1.0 + (4.0 * e2 - e1) / 3.0);
    CAPTURE(b.lambda);
    CAPTURE(oracle);
    CHECK(std::abs(b.lambda - oracle) <= 1e-6);
  }

  TEST_CASE("depth tuning") {
    const auto& s = kgtest::tuned();
    CHECK(std::abs(s.lambda - 0.8) <= 1e-6);

    RunConfig c = kgtest::small_config();
    const auto g = build_radial_grid(c.potential, c);
    CHECK(kind_of([&] { tune_depth(0.4, c.potential, g); }) == ErrorKind::TargetUnreachable);

    // shallow-well limit: lambda -> 1 from below as the well gets weak and wide
    PotentialSpec wide{PotentialFamily::GaussianWell, 1.0, 5.0};
    c.potential = wide;
    c.k_max = 4.0;
    c.R = 0.0;
    const auto gw = build_radial_grid(wide, c);
    const auto tuned = tune_depth(0.99, wide, gw);
    CHECK(tuned.depth < 0.2);
    CHECK(solve_bound_state(tuned, gw).lambda == doctest::Approx(0.99).epsilon(1e-6));
  }

  TEST_CASE("free eigenfunctions are the sine basis") {
    const auto c = kgtest::small_config();
    const auto s = kgtest::free_spectral(c, 1.0);
    double worst = 0.0, worst_delta = 0.0;
    for (std::size_t k = 0; k < s.nk(); k += 7) {
      worst_delta = std::max(worst_delta, std::abs(wrap_pi(s.delta[k])));
      for (std::size_t n = 0; n < s.nr(); ++n) {
        worst = std::max(worst, std::abs(s.row(k)[n] - kS2pi * std::sin(s.kgrid.k[k] * s.radial.r[n])));
      }
    }
    CHECK(worst <= 1e-8);
    CHECK(worst_delta <= 1e-10);
  }

  TEST_CASE("square well phase shift") {
    const double v0 = 4.0;
    const auto c = fixed_depth_config(PotentialFamily::SquareWell, v0);
    const auto g = build_radial_grid(c.potential, c);
    const auto b = solve_bound_state(c.potential, g);
    const auto kg = build_kgrid(c, g.R, compute_kstar(b.lambda));
    const auto eig = generalized_eigenfunctions(c.potential, g, kg, b.phi);
    double worst = 0.0;
    for (std::size_t i = 0; i < kg.size(); ++i) {
      const double k = kg.k[i];
      const double kin = std::sqrt(k * k + v0);
      const double oracle = std::atan(k / kin * std::tan(kin)) - k;
      worst = std::max(worst, std::abs(wrap_pi(eig.delta[i] - oracle)));
    }
    CHECK(worst <= 1e-6);
  }

  TEST_CASE("exterior rows are shifted sines minus their mode overlap") {
    const auto& s = kgtest::tuned();
    const auto n0 = s.radial.index_at_or_after(s.potential.effective_support() + 1.0);
    double worst = 0.0;
    for (std::size_t k = 0; k < s.nk(); k += 5) {
      for (std::size_t n = n0; n < s.nr(); n += 3) {
        const double model =
            kS2pi * std::sin(s.kgrid.k[k] * s.radial.r[n] + s.delta[k]) - s.overlap[k] * s.phi[n];
        worst = std::max(worst, std::abs(s.row(k)[n] - model));
      }
    }
    CHECK(worst <= 1e-8 * kS2pi);
    // U-form Dirichlet condition: rows are O(r) at the first node
    double first = 0.0;
    for (std::size_t k = 0; k < s.nk(); ++k) first = std::max(first, std::abs(s.row(k)[0]));
    CHECK(first <= 2.0 * s.radial.dr * (s.kgrid.k_max + std::sqrt(s.potential.depth)));
  }

  TEST_CASE("mode is orthogonal to the continuum") {
    const auto& s = kgtest::tuned();
    CHECK(kgtest::radial_norm(s.radial, s.phi) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(kgtest::sup_abs(s.forward(std::span<const double>(s.phi))) <= 1e-6);
  }

  TEST_CASE("completeness including the mode projector") {
    const auto& s = kgtest::tuned();
    std::vector<double> f = kgtest::bump_field(s.radial, 20.0, 3.0);
    const auto near = kgtest::bump_field(s.radial, 2.0, 1.0);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] += 0.5 * near[i];
    const auto back = s.inverse(std::span<const double>(s.forward(std::span<const double>(f))));
    const double a = s.mode_overlap(f);
    std::vector<double> err(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) err[i] = back[i] + a * s.phi[i] - f[i];
    CHECK(kgtest::radial_norm(s.radial, err) <= 1e-5 * kgtest::radial_norm(s.radial, f));

    std::vector<double> p(s.nk());
    for (std::size_t k = 0; k < s.nk(); ++k) {
      const double x = s.kgrid.k[k] - 1.5;
      p[k] = std::exp(-x * x / 0.1);
    }
    const auto pp = s.forward(std::span<const double>(s.inverse(std::span<const double>(p))));
    CHECK(kgtest::sup_diff(pp, p) <= 1e-5 * kgtest::sup_abs(p));
  }

  TEST_CASE("free sine transform of a gaussian") {
    const auto s = kgtest::free_spectral(kgtest::small_config(), 1.0);
    std::vector<double> f(s.nr());
    for (std::size_t n = 0; n < s.nr(); ++n) f[n] = s.radial.r[n] * std::exp(-0.5 * s.radial.r[n] * s.radial.r[n]);
    const auto ft = s.forward(std::span<const double>(f));
    double worst = 0.0;
    for (std::size_t k = 0; k < s.nk(); ++k) {
      const double x = s.kgrid.k[k];
      worst = std::max(worst, std::abs(ft[k] - x * std::exp(-0.5 * x * x)));
    }
    CHECK(worst <= 1e-6);
  }

  TEST_CASE("Parseval and adjointness on random band-limited fields") {
    const auto& s = kgtest::tuned();
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 3; ++trial) {
      std::vector<double> f(s.nr(), 0.0);
      for (int j = 0; j < 6; ++j) {
        const auto b = kgtest::bump_field(s.radial, 10.0 + 90.0 * u(rng), 2.0 + 3.0 * u(rng));
        const double amp = 2.0 * u(rng) - 1.0;
        for (std::size_t i = 0; i < f.size(); ++i) f[i] += amp * b[i];
      }
      const auto pf = s.project_continuous(f);
      const auto ft = s.forward(std::span<const double>(f));
      CHECK(k_norm(s.kgrid, ft) == doctest::Approx(kgtest::radial_norm(s.radial, pf)).epsilon(1e-6));

      std::vector<double> gk(s.nk());
      for (std::size_t k = 0; k < s.nk(); ++k) gk[k] = std::cos(3.0 * s.kgrid.k[k] + trial) * std::exp(-s.kgrid.k[k]);
      const auto gi = s.inverse(std::span<const double>(gk));
      double lhs = 0.0, rhs = 0.0, scale = 0.0;
      for (std::size_t k = 0; k < s.nk(); ++k) {
        lhs += s.kgrid.w[k] * ft[k] * gk[k];
        scale += s.kgrid.w[k] * std::abs(ft[k] * gk[k]);
      }
      for (std::size_t n = 0; n < s.nr(); ++n) rhs += s.radial.w[n] * f[n] * gi[n];
      CHECK(std::abs(lhs - rhs) <= 1e-10 * scale);
    }
  }

  TEST_CASE("transform diagonalises the operator") {
    const auto& s = kgtest::tuned();
    const double c = 12.0, w = 2.5;
    std::vector<double> f(s.nr()), hf(s.nr());
    for (std::size_t n = 0; n < s.nr(); ++n) {
      const double r = s.radial.r[n];
      const double x = (r - c) / w;
      f[n] = std::exp(-x * x);
      const double f2 = f[n] * (4.0 * x * x - 2.0) / (w * w);
      hf[n] = -f2 + s.potential(r) * f[n];
    }
    const auto a = s.forward(std::span<const double>(hf));
    const auto b = s.forward(std::span<const double>(f));
    std::vector<double> k2b(b.size());
    for (std::size_t k = 0; k < b.size(); ++k) k2b[k] = s.kgrid.k[k] * s.kgrid.k[k] * b[k];
    CHECK(kgtest::sup_diff(a, k2b) <= 1e-4 * kgtest::sup_abs(k2b));
  }

  TEST_CASE("zero-energy genericity") {
    RunConfig c = kgtest::small_config();
    const auto g = build_radial_grid(c.potential, c);
    PotentialSpec free = c.potential;
    free.depth = 0.0;
    const auto r0 = check_genericity(free, g);
    CHECK(r0.zero_energy_regular);
    CHECK(r0.slope == doctest::Approx(1.0).epsilon(1e-12));

    const auto& s = kgtest::tuned();
    const auto rt = check_genericity(s.potential, g);
    CHECK(rt.zero_energy_regular);
    CHECK(std::abs(rt.slope) > 0.1);

    // the first bound state enters through a zero-energy resonance: bisect the slope sign
    PotentialSpec p = c.potential;
    double lo = 0.1, hi = s.potential.depth;
    REQUIRE(check_genericity({p.family, lo, p.width}, g).slope > 0.0);
    REQUIRE(check_genericity({p.family, hi, p.width}, g).slope < 0.0);
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
      const double mid = 0.5 * (lo + hi);
      (check_genericity({p.family, mid, p.width}, g).slope > 0.0 ? lo : hi) = mid;
    }
    p.depth = 0.5 * (lo + hi);
    const auto rc = check_genericity(p, g);
    CAPTURE(rc.slope);
    CAPTURE(rc.intercept);
    CHECK_FALSE(rc.zero_energy_regular);
  }

  TEST_CASE("container round trip is bit-exact") {
    const auto& s = kgtest::tuned();
    const auto back = spectral_from_container(decode(encode(to_container(s))));
    CHECK(back.lambda == s.lambda);
    CHECK(back.potential.depth == s.potential.depth);
    CHECK(back.table == s.table);
    CHECK(back.phi == s.phi);
    CHECK(back.delta == s.delta);
    CHECK(hash_grid(back.kgrid) == hash_grid(s.kgrid));
    CHECK(hash_grid(back.radial) == hash_grid(s.radial));

    auto bytes = encode(to_container(s));
    bytes[bytes.size() / 2] ^= 0x01;
    CHECK(kind_of([&] { decode(bytes); }) == ErrorKind::CheckpointCorrupt);
  }
}
