#include "support.hpp"

#include <mutex>

#include "kgmode/pipeline.hpp"

namespace kgtest {

kgmode::RunConfig small_config() {
  kgmode::RunConfig cfg;
  cfg.epsilon0 = 0.4;
  cfg.t_max = 200.0;
  cfg.R = 220.0;
  return cfg;
}

const kgmode::SpectralData& tuned() {
  static const kgmode::SpectralData s = kgmode::build_spectrum(small_config()).spectral;
  return s;
}

kgmode::SpectralData free_spectral(const kgmode::RunConfig& cfg, double kstar) {
  kgmode::SpectralData s;
  s.potential = cfg.potential;
  s.potential.depth = 0.0;
  s.radial = kgmode::build_radial_grid(s.potential, cfg);
  s.kgrid = kgmode::build_kgrid(cfg, s.radial.R, kstar);
  s.lambda = std::sqrt(1.0 + kstar * kstar) / 2.0;
  s.energy = s.lambda * s.lambda - 1.0;
  s.phi.assign(s.radial.size(), 0.0);
  auto eig = kgmode::generalized_eigenfunctions(s.potential, s.radial, s.kgrid, s.phi);
  s.table = std::move(eig.table);
  s.delta = std::move(eig.delta);
  s.overlap = std::move(eig.overlap);
  s.max_raw_overlap = eig.max_raw_overlap;
  s.n_interior = eig.n_interior;
  return s;
}

std::filesystem::path scratch_dir(const std::string& name) {
  static std::mutex m;
  std::lock_guard lock(m);
  auto p = std::filesystem::temp_directory_path() / ("kgmode_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

double radial_norm(const kgmode::RadialGrid& g, std::span<const double> f) {
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) s += g.w[i] * f[i] * f[i];
  return std::sqrt(s);
}

std::vector<double> bump_field(const kgmode::RadialGrid& g, double center, double width) {
  std::vector<double> f(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double r = g.r[i];
    const double x = (r - center) / width;
    f[i] = r * std::exp(-x * x);
  }
  return f;
}

}  // namespace kgtest
