#include "kgmode/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

#include "kgmode/error.hpp"
#include "kgmode/hash.hpp"

namespace kgmode {

namespace {

// Values below this are treated as exactly zero when locating the support.
constexpr double kPotentialFloor = 1e-17;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) {
    throw Error(ErrorKind::InvalidConfig,
                "config: '" + key + "' expects a real number, got '" + value + "'");
  }
  return out;
}

long parse_long(const std::string& key, const std::string& value) {
  long out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorKind::InvalidConfig,
                "config: '" + key + "' expects an integer, got '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "on" || value == "1") return true;
  if (value == "false" || value == "off" || value == "0") return false;
  throw Error(ErrorKind::InvalidConfig,
              "config: '" + key + "' expects on/off, got '" + value + "'");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorKind::InvalidConfig, message);
}

// Antiderivative of erf.
double erf_integral(double y) {
  return y * std::erf(y) + std::exp(-y * y) / std::sqrt(std::numbers::pi);
}

// Unscaled node-count function S(k) = int_0^k (1 + (F-1) B(x)) dx with the
// erf plateau B centred on kstar.
struct DensityMap {
  double F, c1, c2, tau;

  double bump(double k) const {
    return 0.5 * (std::erf((k - c1) / tau) - std::erf((k - c2) / tau));
  }
  double density(double k) const { return 1.0 + (F - 1.0) * bump(k); }
  double count(double k) const {
    const auto ramp = [&](double c) {
      return tau * (erf_integral((k - c) / tau) - erf_integral(-c / tau));
    };
    return k + (F - 1.0) * 0.5 * (ramp(c1) - ramp(c2));
  }
  // Solves count(k) = target by safeguarded Newton from a bracketing guess.
  double invert(double target, double lo, double hi) const {
    double k = std::clamp(lo + (target - count(lo)) / density(lo), lo, hi);
    for (int it = 0; it < 100; ++it) {
      const double f = count(k) - target;
      if (f > 0.0) hi = k; else lo = k;
      double next = k - f / density(k);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - k) <= 1e-15 * std::max(1.0, k)) return next;
      k = next;
    }
    return k;
  }
};

}  // namespace

std::string to_string(PotentialFamily family) {
  return family == PotentialFamily::GaussianWell ? "gaussian-well" : "square-well";
}

PotentialFamily parse_family(const std::string& name) {
  if (name == "gaussian-well") return PotentialFamily::GaussianWell;
  if (name == "square-well") return PotentialFamily::SquareWell;
  throw Error(ErrorKind::InvalidConfig, "unknown potential family '" + name + "'");
}

double PotentialSpec::operator()(double r) const {
  switch (family) {
    case PotentialFamily::GaussianWell:
      return -depth * std::exp(-r * r / (2.0 * width * width));
    case PotentialFamily::SquareWell:
      return r <= width ? -depth : 0.0;
  }
  return 0.0;
}

double PotentialSpec::effective_support() const {
  if (family == PotentialFamily::SquareWell) return width;
  if (depth <= kPotentialFloor) return width;
  return width * std::sqrt(2.0 * std::log(depth / kPotentialFloor));
}

std::vector<double> PotentialSpec::breakpoints() const {
  if (family == PotentialFamily::SquareWell) return {width};
  return {};
}

std::size_t RadialGrid::index_at_or_after(double radius) const {
  const auto it = std::lower_bound(r.begin(), r.end(), radius - 1e-12 * dr);
  return static_cast<std::size_t>(it - r.begin());
}

double RunConfig::horizon() const {
  return t_max >= 0.0 ? t_max : 50.0 / (epsilon0 * epsilon0);
}

double RunConfig::chi_halfwidth(double lambda) const {
  if (w_C > 0.0) return w_C;
  return std::min(2.0 * lambda - 1.0, 2.0 - 2.0 * lambda) / 4.0;
}

std::uint64_t RunConfig::hash() const {
  RunConfig copy = *this;
  copy.output_dir = "";
  copy.stop_after_steps = -1;
  Fnv1a h;
  h.update(format_config(copy));
  return h.digest();
}

void apply_config_entry(RunConfig& cfg, const std::string& key,
                        const std::string& value) {
  using Setter = std::function<void(RunConfig&, const std::string&)>;
  static const std::map<std::string, Setter> setters = {
      {"family", [](RunConfig& c, const std::string& v) { c.potential.family = parse_family(v); }},
      {"depth", [](RunConfig& c, const std::string& v) { c.potential.depth = parse_double("depth", v); }},
      {"width", [](RunConfig& c, const std::string& v) { c.potential.width = parse_double("width", v); }},
      {"target_lambda", [](RunConfig& c, const std::string& v) { c.target_lambda = parse_double("target_lambda", v); }},
      {"epsilon0", [](RunConfig& c, const std::string& v) { c.epsilon0 = parse_double("epsilon0", v); }},
      {"t_max", [](RunConfig& c, const std::string& v) { c.t_max = parse_double("t_max", v); }},
      {"dt", [](RunConfig& c, const std::string& v) { c.dt = parse_double("dt", v); }},
      {"k_max", [](RunConfig& c, const std::string& v) { c.k_max = parse_double("k_max", v); }},
      {"R", [](RunConfig& c, const std::string& v) { c.R = parse_double("R", v); }},
      {"dr", [](RunConfig& c, const std::string& v) { c.dr = parse_double("dr", v); }},
      {"k_refine", [](RunConfig& c, const std::string& v) { c.k_refine = static_cast<int>(parse_long("k_refine", v)); }},
      {"w_C", [](RunConfig& c, const std::string& v) { c.w_C = parse_double("w_C", v); }},
      {"k_cap", [](RunConfig& c, const std::string& v) { c.k_cap = parse_double("k_cap", v); }},
      {"kernel_window", [](RunConfig& c, const std::string& v) { c.kernel_window = parse_double("kernel_window", v); }},
      {"memory_cap_mb", [](RunConfig& c, const std::string& v) { c.memory_cap_mb = parse_double("memory_cap_mb", v); }},
      {"snapshot_every", [](RunConfig& c, const std::string& v) { c.snapshot_every = parse_double("snapshot_every", v); }},
      {"diag_every", [](RunConfig& c, const std::string& v) { c.diag_every = static_cast<int>(parse_long("diag_every", v)); }},
      {"checkpoint_every", [](RunConfig& c, const std::string& v) { c.checkpoint_every = static_cast<int>(parse_long("checkpoint_every", v)); }},
      {"stop_after_steps", [](RunConfig& c, const std::string& v) { c.stop_after_steps = parse_long("stop_after_steps", v); }},
      {"probe_trials", [](RunConfig& c, const std::string& v) { c.probe_trials = static_cast<int>(parse_long("probe_trials", v)); }},
      {"seed", [](RunConfig& c, const std::string& v) { c.seed = static_cast<std::uint64_t>(parse_long("seed", v)); }},
      {"output_dir", [](RunConfig& c, const std::string& v) { c.output_dir = v; }},
      {"nonlinearity", [](RunConfig& c, const std::string& v) { c.nonlinearity = parse_bool("nonlinearity", v); }},
      {"sponge", [](RunConfig& c, const std::string& v) { c.sponge = parse_bool("sponge", v); }},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) {
    throw Error(ErrorKind::InvalidConfig, "config: unknown key '" + key + "'");
  }
  it->second(cfg, value);
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::InvalidConfig,
                  "config line " + std::to_string(lineno) + ": expected key=value");
    }
    apply_config_entry(cfg, trim(std::string_view(line).substr(0, eq)),
                       trim(std::string_view(line).substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const RunConfig& c) {
  std::ostringstream out;
  out << "family = " << to_string(c.potential.family) << '\n'
      << "depth = " << fmt(c.potential.depth) << '\n'
      << "width = " << fmt(c.potential.width) << '\n'
      << "target_lambda = " << fmt(c.target_lambda) << '\n'
      << "epsilon0 = " << fmt(c.epsilon0) << '\n'
      << "t_max = " << fmt(c.t_max) << '\n'
      << "dt = " << fmt(c.dt) << '\n'
      << "k_max = " << fmt(c.k_max) << '\n'
      << "R = " << fmt(c.R) << '\n'
      << "dr = " << fmt(c.dr) << '\n'
      << "k_refine = " << c.k_refine << '\n'
      << "w_C = " << fmt(c.w_C) << '\n'
      << "k_cap = " << fmt(c.k_cap) << '\n'
      << "kernel_window = " << fmt(c.kernel_window) << '\n'
      << "memory_cap_mb = " << fmt(c.memory_cap_mb) << '\n'
      << "snapshot_every = " << fmt(c.snapshot_every) << '\n'
      << "diag_every = " << c.diag_every << '\n'
      << "checkpoint_every = " << c.checkpoint_every << '\n'
      << "stop_after_steps = " << c.stop_after_steps << '\n'
      << "probe_trials = " << c.probe_trials << '\n'
      << "seed = " << c.seed << '\n'
      << "output_dir = " << c.output_dir.string() << '\n'
      << "nonlinearity = " << (c.nonlinearity ? "on" : "off") << '\n'
      << "sponge = " << (c.sponge ? "on" : "off") << '\n';
  return out.str();
}

void validate(const RunConfig& c) {
  require(c.potential.depth >= 0.0, "depth must be non-negative");
  require(c.potential.width > 0.0, "width must be positive");
  require(c.epsilon0 > 0.0 && c.epsilon0 <= 0.5, "epsilon0 must lie in (0, 0.5]");
  require(c.horizon() >= 0.0, "t_max must be non-negative");
  require(c.k_max > 0.0, "k_max must be positive");
  require(c.dt > 0.0, "dt must be positive");
  require(c.dt * std::sqrt(1.0 + c.k_max * c.k_max) <= 0.25 + 1e-12,
          "dt * <k_max> must not exceed 0.25");
  require(c.snapshot_every > 0.0, "snapshot_every must be positive");
  require(c.diag_every >= 1, "diag_every must be >= 1");
  require(c.checkpoint_every >= 1, "checkpoint_every must be >= 1");
  require(c.k_cap > 0.0, "k_cap must be positive");
  require(c.kernel_window > 0.0, "kernel_window must be positive");
  require(c.memory_cap_mb > 0.0, "memory_cap_mb must be positive");
  require(c.probe_trials >= 1, "probe_trials must be >= 1");
}

void validate(const RunConfig& c, double lambda) {
  validate(c);
  const double limit = std::min(2.0 * lambda - 1.0, 2.0 - 2.0 * lambda) / 2.0;
  require(c.chi_halfwidth(lambda) < limit,
          "w_C must be below min(2*lambda-1, 2-2*lambda)/2");
}

RadialGrid build_radial_grid(const PotentialSpec& spec, const RunConfig& cfg) {
  validate(cfg);
  const double dr_max = std::min(0.5 / cfg.k_max, spec.width / 10.0);
  double dr = cfg.dr;
  if (dr <= 0.0) {
    // Largest admissible spacing that puts sigma_w on a node.
    dr = spec.width / std::ceil(spec.width / dr_max - 1e-12);
  }
  require(dr <= dr_max * (1.0 + 1e-12),
          "dr must resolve both k_max and the potential width");

  const double support = spec.effective_support();
  const double causal = cfg.horizon() + support + 10.0;
  const double minimal = cfg.sponge ? support / 0.85 + 10.0 : causal;
  double R = cfg.R > 0.0 ? cfg.R : minimal;
  require(R >= minimal - 1e-9,
          cfg.sponge ? "R too small for the sponge layer"
                     : "R must exceed t_max + r_support + 10 (causal domain)");

  const auto n = static_cast<std::size_t>(std::ceil(R / dr - 1e-9));
  RadialGrid g;
  g.dr = dr;
  g.R = static_cast<double>(n) * dr;
  g.r.resize(n);
  g.w.assign(n, dr);
  for (std::size_t i = 0; i < n; ++i) g.r[i] = static_cast<double>(i + 1) * dr;
  g.w.back() = 0.5 * dr;
  return g;
}

KGrid build_kgrid(const RunConfig& cfg, double R, double kstar) {
  require(kstar > 0.0 && kstar < cfg.k_max, "kstar must lie inside (0, k_max)");
  require(cfg.k_refine >= 1, "k_refine must be >= 1");
  KGrid g;
  g.k_max = cfg.k_max;
  g.kstar = kstar;
  g.refine = cfg.k_refine;
  g.fine_lo = kstar - kRefineHalfwidth;
  g.fine_hi = kstar + kRefineHalfwidth;

  // The plateau edge sits 3 transition widths out, so the density is within
  // 2e-5 of its refined value on the whole band.
  const double a = kRefineHalfwidth + 3.0 * kRefineTransition;
  const DensityMap map{static_cast<double>(cfg.k_refine), kstar - a, kstar + a,
                       kRefineTransition};

  // Scale beta >= R/pi so that kstar lands on s = j + 1/2.
  const double s_star = map.count(kstar);
  const double j_star = std::ceil(R / std::numbers::pi * s_star - 0.5);
  const double beta = (j_star + 0.5) / s_star;
  const auto n = static_cast<std::size_t>(std::floor(beta * map.count(cfg.k_max)));
  require(n > static_cast<std::size_t>(j_star), "k-grid too short to contain kstar");

  g.dk_base = 1.0 / beta;
  g.dk_fine = g.dk_base / cfg.k_refine;
  g.k.resize(n);
  g.w.resize(n);
  double prev = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double target = (static_cast<double>(j) + 0.5) / beta;
    const double k = map.invert(target, prev, cfg.k_max);
    g.k[j] = k;
    g.w[j] = 1.0 / (beta * map.density(k));
    prev = k;
  }
  g.kstar_index = static_cast<std::size_t>(j_star);
  g.k[g.kstar_index] = kstar;
  g.k_top = map.invert(static_cast<double>(n) / beta, prev, cfg.k_max);

  g.jk.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.jk[i] = std::sqrt(1.0 + g.k[i] * g.k[i]);
  return g;
}

Grids build_grids(const PotentialSpec& spec, const RunConfig& cfg, double kstar) {
  Grids grids;
  grids.radial = build_radial_grid(spec, cfg);
  grids.kgrid = build_kgrid(cfg, grids.radial.R, kstar);
  const double table_mb = static_cast<double>(grids.radial.size()) *
                          static_cast<double>(grids.kgrid.size()) * 8.0 / (1024.0 * 1024.0);
  if (table_mb > cfg.memory_cap_mb) {
    throw Error(ErrorKind::MemoryBudget,
                "eigenfunction table would need " + std::to_string(table_mb) +
                    " MB, above memory_cap_mb");
  }
  return grids;
}

std::uint64_t hash_grid(const RadialGrid& grid) {
  Fnv1a h;
  h.update_value(grid.R);
  h.update_value(grid.dr);
  h.update(std::span<const double>(grid.r));
  h.update(std::span<const double>(grid.w));
  return h.digest();
}

std::uint64_t hash_grid(const KGrid& grid) {
  Fnv1a h;
  h.update_value(grid.k_max);
  h.update_value(grid.k_top);
  h.update_value(grid.kstar);
  h.update_value(grid.refine);
  h.update(std::span<const double>(grid.k));
  h.update(std::span<const double>(grid.w));
  return h.digest();
}

}  // namespace kgmode
