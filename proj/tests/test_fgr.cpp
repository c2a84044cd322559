#include <doctest.h>

#include "kgmode/fgr.hpp"
#include "kgmode/pipeline.hpp"
#include "support.hpp"

using namespace kgmode;
using kgtest::kind_of;

TEST_SUITE("fgr") {
  TEST_CASE("resonant wavenumber") {
    CHECK(compute_kstar(std::sqrt(2.0) / 2.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(compute_kstar(0.8) == doctest::Approx(std::sqrt(1.56)).epsilon(1e-15));
    for (double l : {0.51, 0.6, 0.8, 0.95}) {
      const double k = compute_kstar(l);
      CHECK(std::abs(std::sqrt(1.0 + k * k) - 2.0 * l) <= 1e-12);
    }
    CHECK(compute_kstar(0.5 + 1e-9) < 1e-4);
    CHECK(kind_of([] { compute_kstar(0.5); }) == ErrorKind::OutOfBand);
    CHECK(kind_of([] { compute_kstar(1.0); }) == ErrorKind::OutOfBand);
  }

  TEST_CASE("Fermi golden rule rate against the mollified-delta oracle") {
    const auto& s = kgtest::tuned();
    const auto res = compute_resonance(s, 0.4);
    CHECK(res.gamma > 0.0);
    CHECK(res.kstar == s.kgrid.k[res.kstar_index]);
    CHECK(res.gamma == doctest::Approx(std::numbers::pi / res.kstar * res.coupling_at_kstar() *
                                       res.coupling_at_kstar()));
    const auto table = mollified_gamma_table(res.coupling, s.kgrid, s.lambda);
    REQUIRE(table.eta.size() >= 2);
    CAPTURE(res.gamma);
    CAPTURE(table.extrapolated);
    CHECK(std::abs(res.gamma - table.extrapolated) <= 0.01 * res.gamma);
  }

  TEST_CASE("coupling is the transform of P_c phi^2 / r") {
    const auto& s = kgtest::tuned();
    const auto res = compute_resonance(s, 0.4);
    std::vector<double> q(s.nr());
    for (std::size_t n = 0; n < s.nr(); ++n) q[n] = s.phi[n] * s.phi[n] / s.radial.r[n];
    const auto ft = s.forward(std::span<const double>(q));
    CHECK(kgtest::sup_diff(ft, res.coupling) <= 1e-12 * kgtest::sup_abs(ft));

    const std::vector<double> zero(s.nr(), 0.0);
    const auto zc = coupling_profile(s, zero);
    CHECK(kgtest::sup_abs(zc) == 0.0);
    CHECK(kind_of([&] { compute_gamma(zc, s.kgrid, s.lambda); }) == ErrorKind::NonPositiveGamma);
  }

  TEST_CASE("amplitude envelope") {
    ResonanceData r;
    r.epsilon0 = 0.3;
    r.gamma = 0.11;
    r.lambda = 0.8;
    CHECK(r.rho(0.0) == 0.3);
    double prev = r.rho(0.0);
    for (double t = 1.0; t < 600.0; t *= 1.5) {
      const double x = r.rho(t);
      CHECK(x < prev);
      CHECK(x == doctest::Approx(0.3 / std::sqrt(1.0 + 0.09 * 0.11 / 0.8 * t)).epsilon(1e-14));
      prev = x;
    }
  }

  TEST_CASE("Jacobian of the resonant shell") {
    const auto& s = kgtest::tuned();
    const double target = 2.0 * s.lambda / s.kgrid.kstar;
    for (double eta : {1e-2, 3e-3, 1e-3}) {
      double sum = 0.0;
      for (std::size_t k = 0; k < s.nk(); ++k) sum += s.kgrid.w[k] * gaussian_delta(s.kgrid.jk[k] - 2.0 * s.lambda, eta);
      CAPTURE(eta);
      CHECK(sum == doctest::Approx(target).epsilon(0.01));
    }
    CHECK(gaussian_delta(0.0, 0.5) == doctest::Approx(1.0 / (0.5 * std::sqrt(2.0 * std::numbers::pi))));
  }

  TEST_CASE("rate is stable under k-grid refinement") {
    auto cfg = kgtest::small_config();
    cfg.k_refine = 16;
    const auto fine = build_spectrum(cfg).spectral;
    const double g8 = compute_resonance(kgtest::tuned(), 0.4).gamma;
    const double g16 = compute_resonance(fine, 0.4).gamma;
    CAPTURE(g8);
    CAPTURE(g16);
    CHECK(std::abs(g16 - g8) <= 0.005 * g8);
  }

  TEST_CASE("coupling at kstar is stable under radial refinement") {
    auto cfg = kgtest::small_config();
    const auto& coarse = kgtest::tuned();
    cfg.dr = coarse.radial.dr / 2.0;
    const auto fine = build_spectrum(cfg).spectral;
    REQUIRE(fine.nr() == 2 * coarse.nr());
    const double a = compute_resonance(coarse, 0.4).coupling_at_kstar();
    const double b = compute_resonance(fine, 0.4).coupling_at_kstar();
    CAPTURE(a);
    CAPTURE(b);
    CHECK(std::abs(a - b) <= 1e-5 * std::abs(a));
  }

  TEST_CASE("resonance container round trip") {
    const auto& s = kgtest::tuned();
    const auto res = compute_resonance(s, 0.4);
    const auto back = resonance_from_container(decode(encode(to_container(res, s.kgrid, s.radial))));
    CHECK(back.gamma == res.gamma);
    CHECK(back.coupling == res.coupling);
    CHECK(back.kstar_index == res.kstar_index);
  }
}
