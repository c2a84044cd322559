#include <doctest.h>

#include "kgmode/model.hpp"
#include "support.hpp"

using namespace kgmode;
using kgtest::kind_of;

TEST_SUITE("model") {
  TEST_CASE("config text round trip preserves every field and the hash") {
    RunConfig a;
    a.potential.family = PotentialFamily::SquareWell;
    a.potential.depth = 3.25;
    a.epsilon0 = 0.1 + 0.2;  // not exactly representable as written
    a.t_max = 123.0;
    a.k_refine = 12;
    a.nonlinearity = false;
    a.seed = 77;
    const RunConfig b = parse_config(format_config(a));
    CHECK(format_config(b) == format_config(a));
    CHECK(b.epsilon0 == a.epsilon0);
    CHECK(b.potential.family == PotentialFamily::SquareWell);
    CHECK(b.hash() == a.hash());
  }

  TEST_CASE("comments, blanks and whitespace are ignored") {
    const auto c = parse_config("# header\n\n  epsilon0 =  0.25   # trailing\nsponge=on\n");
    CHECK(c.epsilon0 == 0.25);
    CHECK(c.sponge);
  }

  TEST_CASE("hash ignores the output directory and the stop hook only") {
    RunConfig a;
    RunConfig b = a;
    b.output_dir = "elsewhere";
    b.stop_after_steps = 10;
    CHECK(a.hash() == b.hash());
    b.dt = 0.02;
    CHECK(a.hash() != b.hash());
  }

  TEST_CASE("malformed input is InvalidConfig") {
    CHECK(kind_of([] { parse_config("bogus = 1\n"); }) == ErrorKind::InvalidConfig);
    CHECK(kind_of([] { parse_config("epsilon0 = abc\n"); }) == ErrorKind::InvalidConfig);
    CHECK(kind_of([] { parse_config("epsilon0 = 0.3x\n"); }) == ErrorKind::InvalidConfig);
    CHECK(kind_of([] { parse_config("k_refine = 2.5\n"); }) == ErrorKind::InvalidConfig);
    CHECK(kind_of([] { parse_config("sponge = maybe\n"); }) == ErrorKind::InvalidConfig);
    CHECK(kind_of([] { parse_config("family = triangle\n"); }) == ErrorKind::InvalidConfig);
    CHECK(kind_of([] { parse_config("just text\n"); }) == ErrorKind::InvalidConfig);
  }

  TEST_CASE("invariants") {
    RunConfig c;
    c.dt = 1.0;  // dt <k_max> = 8.06
    CHECK(kind_of([&] { validate(c); }) == ErrorKind::InvalidConfig);
    c = RunConfig{};
    c.epsilon0 = 0.6;
    CHECK(kind_of([&] { validate(c); }) == ErrorKind::InvalidConfig);
    c = RunConfig{};
    c.epsilon0 = 0.0;
    CHECK(kind_of([&] { validate(c); }) == ErrorKind::InvalidConfig);
    c = RunConfig{};
    CHECK_NOTHROW(validate(c, 0.8));
    c.w_C = 0.3;  // limit at lambda = 0.8 is 0.2
    CHECK(kind_of([&] { validate(c, 0.8); }) == ErrorKind::InvalidConfig);
  }

  TEST_CASE("default horizon and resonance cutoff width") {
    RunConfig c;
    c.epsilon0 = 0.3;
    CHECK(c.horizon() == doctest::Approx(50.0 / 0.09).epsilon(1e-15));
    CHECK(c.chi_halfwidth(0.8) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(c.chi_halfwidth(0.6) == doctest::Approx(0.05).epsilon(1e-15));
  }

  TEST_CASE("potential profiles") {
    PotentialSpec g{PotentialFamily::GaussianWell, 2.0, 1.5};
    CHECK(g(0.0) == -2.0);
    CHECK(g(1.5) == doctest::Approx(-2.0 * std::exp(-0.5)).epsilon(1e-15));
    CHECK(std::abs(g(g.effective_support())) <= 1.01e-17);
    CHECK(g.breakpoints().empty());
    PotentialSpec s{PotentialFamily::SquareWell, 3.0, 1.0};
    CHECK(s(0.999) == -3.0);
    CHECK(s(1.0) == -3.0);
    CHECK(s(1.001) == 0.0);
    CHECK(s.breakpoints() == std::vector<double>{1.0});
  }

  TEST_CASE("grids for t_max = 200, k_max = 8") {
    RunConfig c;
    c.t_max = 200.0;
    const PotentialSpec spec{PotentialFamily::GaussianWell, 2.0, 1.0};
    const double kstar = std::sqrt(4.0 * 0.8 * 0.8 - 1.0);
    const auto g = build_grids(spec, c, kstar);
    CHECK(g.radial.R >= 212.0);
    CHECK(g.radial.dr <= 1.0 / 16.0);
    CHECK(g.radial.r.front() == doctest::Approx(g.radial.dr));
    CHECK(g.radial.r.back() == doctest::Approx(g.radial.R));

    // sigma_w on a node, so square-well discontinuities are never straddled
    const auto i = g.radial.index_at_or_after(spec.width);
    CHECK(std::abs(g.radial.r[i] - spec.width) < 1e-12);

    const auto& k = g.kgrid;
    REQUIRE(k.kstar_index < k.size());
    CHECK(k.k[k.kstar_index] == kstar);
    CHECK(k.k.front() > 0.0);
    CHECK(k.k_top <= c.k_max);
    for (std::size_t j = 1; j < k.size(); ++j) REQUIRE(k.k[j] > k.k[j - 1]);
    for (std::size_t j = 0; j < k.size(); ++j) {
      REQUIRE(k.jk[j] == std::sqrt(1.0 + k.k[j] * k.k[j]));
    }
    // resolution: base spacing below pi/R, refined band finer by k_refine
    CHECK(k.dk_base <= std::numbers::pi / g.radial.R + 1e-12);
    CHECK(k.dk_fine == doctest::Approx(k.dk_base / c.k_refine));
    const double spacing = k.k[k.kstar_index + 1] - k.k[k.kstar_index];
    CHECK(spacing == doctest::Approx(k.dk_fine).epsilon(1e-3));
    // weights integrate the interval [0, k_top]
    double total = 0.0;
    for (double w : k.w) total += w;
    CHECK(total == doctest::Approx(k.k_top).epsilon(1e-12));

    const auto again = build_grids(spec, c, kstar);
    CHECK(hash_grid(again.radial) == hash_grid(g.radial));
    CHECK(hash_grid(again.kgrid) == hash_grid(g.kgrid));
  }

  TEST_CASE("radius below the causal domain is rejected") {
    RunConfig c;
    c.t_max = 200.0;
    c.R = 150.0;
    const PotentialSpec spec{};
    CHECK(kind_of([&] { build_radial_grid(spec, c); }) == ErrorKind::InvalidConfig);
    c.R = 0.0;
    c.dr = 0.1;  // k_max = 8 needs dr <= 1/16
    CHECK(kind_of([&] { build_radial_grid(spec, c); }) == ErrorKind::InvalidConfig);
  }

  TEST_CASE("kstar must be inside the grid") {
    RunConfig c;
    CHECK(kind_of([&] { build_kgrid(c, 220.0, 9.0); }) == ErrorKind::InvalidConfig);
    CHECK(kind_of([&] { build_kgrid(c, 220.0, 0.0); }) == ErrorKind::InvalidConfig);
  }
}
