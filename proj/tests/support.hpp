#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kgmode/error.hpp"
#include "kgmode/model.hpp"
#include "kgmode/spectral.hpp"

namespace kgtest {

using kgmode::cplx;

// The spectral data most tests share: tuned lambda = 0.8, R = 220.
kgmode::RunConfig small_config();
const kgmode::SpectralData& tuned();

// Free operator (V = 0) on the grids of cfg; phi is identically zero and the
// table is the plain sine basis produced by the library's eigenfunction code.
kgmode::SpectralData free_spectral(const kgmode::RunConfig& cfg, double kstar);

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

template <class F>
kgmode::ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const kgmode::Error& e) {
    return e.kind();
  }
  throw std::runtime_error("expected a kgmode::Error");
}

template <class T>
double sup_abs(std::span<const T> v) {
  double m = 0.0;
  for (const auto& x : v) m = std::max(m, static_cast<double>(std::abs(x)));
  return m;
}
template <class T>
double sup_abs(const std::vector<T>& v) {
  return sup_abs(std::span<const T>(v));
}

template <class T>
double sup_diff(const std::vector<T>& a, const std::vector<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, static_cast<double>(std::abs(a[i] - b[i])));
  return m;
}

// Weighted L2 norm on the radial grid.
double radial_norm(const kgmode::RadialGrid& g, std::span<const double> f);

// Smooth field supported well inside r < R, band-limited to a few units of k.
std::vector<double> bump_field(const kgmode::RadialGrid& g, double center, double width);

}  // namespace kgtest
