#include "kgmode/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "kgmode/error.hpp"
#include "kgmode/hash.hpp"

namespace kgmode {

namespace fs = std::filesystem;
using nlohmann::json;

SpectrumBuild build_spectrum(const RunConfig& cfg) {
  validate(cfg);
  const RadialGrid probe = build_radial_grid(cfg.potential, cfg);
  const PotentialSpec spec =
      cfg.target_lambda > 0.0 ? tune_depth(cfg.target_lambda, cfg.potential, probe) : cfg.potential;
  const BoundState bs = solve_bound_state(spec, probe);
  validate(cfg, bs.lambda);
  const Grids g = build_grids(spec, cfg, compute_kstar(bs.lambda));
  SpectrumBuild out;
  out.spectral = build_spectral(spec, g.radial, g.kgrid);
  out.genericity = check_genericity(spec, g.radial);
  return out;
}

// ---------------------------------------------------------------------------
// Analysis

AnalysisReport analyze_run(const RunConfig& cfg, const SpectralData& s, const ResonanceData& res,
                           const CorrectionKernel& kernel, const TraceStore& traces) {
  if (traces.records.empty()) throw Error(ErrorKind::InsufficientTrace, "empty trace");
  AnalysisReport a;
  const double lambda = s.lambda;
  const double eps = cfg.epsilon0;
  a.lambda = lambda;
  a.kstar = res.kstar;
  a.epsilon0 = eps;
  a.t_end = traces.records.back().t;
  a.gamma = res.gamma;
  a.gamma_mollified = mollified_gamma_table(res.coupling, s.kgrid, lambda).extrapolated;
  a.c0 = mode_self_coupling(s);

  double e0 = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : traces.records) {
    a.max_orthogonality = std::max(a.max_orthogonality, r.orthogonality);
    if (!std::isfinite(r.energy)) continue;
    if (!std::isfinite(e0)) e0 = r.energy;
    a.energy_drift = std::max(a.energy_drift, std::abs(r.energy - e0) / std::abs(e0));
  }

  std::vector<double> t;
  std::vector<cplx> A, fs;
  for (const auto& r : traces.records) {
    t.push_back(r.t);
    A.push_back(r.A);
    fs.push_back(r.f_star);
  }
  const auto B = normal_form_series(traces, lambda, a.c0);
  a.decay_A = fit_decay(t, A, lambda, eps, "A");
  a.decay_B = fit_decay(t, B, lambda, eps, "B");

  const ResonantModel model{lambda, res.gamma, res.coupling_at_kstar()};
  a.resonant = resonant_fit(t, fs, model, std::abs(A.front()));
  a.coupling_star = model.coupling_star;
  const double y0 = a.resonant.param("y0");
  a.alpha = res.gamma / lambda * y0 * y0;
  a.logp = log_periodicity(t, fs, a.alpha, eps, 4.0 * std::numbers::pi / lambda);

  // g at every snapshot plus the step nearest 5 eps0^-2.
  std::vector<double> st;
  std::vector<std::vector<cplx>> sf;
  for (const auto& snap : traces.snapshots) {
    st.push_back(snap.t);
    sf.push_back(snap.f);
  }
  a.g_ref_t = std::round(5.0 / (eps * eps) / traces.dt) * traces.dt;
  std::vector<double> gt = st;
  gt.push_back(a.g_ref_t);
  std::sort(gt.begin(), gt.end());
  gt.erase(std::unique(gt.begin(), gt.end(), [](double x, double y) { return std::abs(x - y) < 1e-9; }),
           gt.end());
  const ResonantInputs in{lambda, cfg.chi_halfwidth(lambda), res.coupling};
  const auto g_all = compute_g(traces, B, s.kgrid, in, gt);
  auto sup_abs = [](const std::vector<cplx>& v) {
    double m = 0.0;
    for (const auto& z : v) m = std::max(m, std::abs(z));
    return m;
  };
  std::vector<std::vector<cplx>> g_snap(st.size());
  for (std::size_t i = 0, j = 0; i < gt.size(); ++i) {
    const double v = sup_abs(g_all[i]);
    a.g_t.push_back(gt[i]);
    a.g_sup.push_back(v);
    a.g_max = std::max(a.g_max, v);
    if (std::abs(gt[i] - a.g_ref_t) < 1e-9) a.g_ref = v;
    if (j < st.size() && std::abs(gt[i] - st[j]) < 1e-9) g_snap[j++] = g_all[i];
  }
  a.g_ratio = a.g_ref > 0.0 ? a.g_max / a.g_ref : std::numeric_limits<double>::infinity();

  std::vector<std::vector<cplx>> sh(st.size());
  for (std::size_t i = 0; i < st.size(); ++i) {
    sh[i] = sf[i];
    for (std::size_t k = 0; k < sh[i].size(); ++k) sh[i][k] += g_snap[i][k];
  }
  const double t0 = 5.0 / (eps * eps);
  const double t1 = std::numeric_limits<double>::max();
  a.growth_f = growth_norms(st, sf, s.kgrid, t0, t1);
  a.growth_h = growth_norms(st, sh, s.kgrid, t0, t1);
  for (std::size_t i = 0; i < st.size(); ++i) {
    if (st[i] >= t0 * (1.0 - 1e-12)) {
      const double n = derivative_norm(sh[i], s.kgrid);
      if (n > 0.0) a.growth_h_norm.push_back(n);
    }
  }
  a.pointwise = pointwise_decay(traces);

  const auto idx = dyadic_snapshot_indices(traces, eps);
  std::vector<char> mask(s.nk(), 0);
  std::size_t n_low = 0;
  for (std::size_t k = 0; k < s.nk(); ++k) {
    mask[k] = s.kgrid.k[k] <= kernel.k_cap;
    n_low += mask[k] ? 1 : 0;
  }
  if (kernel.n_out() != n_low) {
    throw Error(ErrorKind::GridMismatch, "kernel outputs are not the k-grid nodes below k_cap");
  }
  std::vector<double> dt_times;
  std::vector<std::vector<cplx>> df, dg, dn;
  for (const auto i : idx) {
    dt_times.push_back(st[i]);
    df.push_back(sf[i]);
    dg.push_back(g_snap[i]);
    auto low = correction(kernel, s, sf[i], st[i]);
    std::vector<cplx> full(s.nk(), cplx{});
    for (std::size_t k = 0, j = 0; k < s.nk(); ++k) {
      if (mask[k]) full[k] = low[j++];
    }
    dn.push_back(std::move(full));
  }
  a.scattering = scattering_check(dt_times, df, dg, dn, mask);
  a.discarded_mass = kernel.discarded_mass;
  a.discarded_symbol_mass = kernel.discarded_symbol_mass;
  a.probes = bilinear_scaling_probe(cfg.probe_trials, cfg.seed);
  return a;
}

namespace {

class KeyValueWriter {
 public:
  void num(const std::string& key, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out_ << key << '=' << buf << '\n';
  }
  void text(const std::string& key, const std::string& v) { out_ << key << '=' << v << '\n'; }
  void list(const std::string& key, const std::vector<double>& v) {
    out_ << key << '=';
    char buf[64];
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", v[i]);
      out_ << (i ? "," : "") << buf;
    }
    out_ << '\n';
  }
  void raw(const std::string& s) { out_ << s; }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

}  // namespace

std::string format_analysis(const AnalysisReport& a) {
  KeyValueWriter w;
  w.text("code_version", kCodeVersion);
  w.num("lambda", a.lambda);
  w.num("kstar", a.kstar);
  w.num("epsilon0", a.epsilon0);
  w.num("t_end", a.t_end);
  w.num("gamma", a.gamma);
  w.num("gamma_mollified", a.gamma_mollified);
  w.num("gamma_rel_diff", std::abs(a.gamma - a.gamma_mollified) / a.gamma);
  w.num("c0", a.c0);
  w.num("energy_drift", a.energy_drift);
  w.num("max_orthogonality", a.max_orthogonality);
  w.raw(format_fit(a.decay_A, "decay_A"));
  w.raw(format_fit(a.decay_B, "decay_B"));
  // The judged decay law is the one on B.
  w.num("decay.slope", a.decay_B.param("slope"));
  w.num("decay.intercept", a.decay_B.param("intercept"));
  w.num("decay.gamma_fit", a.decay_B.param("gamma_fit"));
  w.num("decay.r2", a.decay_B.r2);
  w.raw(format_fit(a.resonant, "resonant"));
  w.num("resonant.alpha", a.alpha);
  w.num("resonant.coupling_star", a.coupling_star);
  std::vector<double> et, ev;
  for (const auto& e : a.logp.extrema) {
    et.push_back(e.t);
    ev.push_back(e.value);
  }
  w.list("logp.extrema_t", et);
  w.list("logp.extrema_value", ev);
  w.list("logp.ratios", a.logp.ratios);
  w.num("logp.max_ratio_spread", a.logp.max_ratio_spread);
  w.num("logp.value_at_eps2", a.logp.value_at_eps2);
  w.num("logp.first_max", a.logp.first_max);
  w.num("logp.first_max_t", a.logp.first_max_t);
  w.num("logp.growth", a.logp.growth);
  w.num("g.ref_t", a.g_ref_t);
  w.num("g.ref", a.g_ref);
  w.num("g.max", a.g_max);
  w.num("g.ratio", a.g_ratio);
  w.raw(format_fit(a.growth_f, "growth"));
  w.raw(format_fit(a.growth_h, "growth_h"));
  w.raw(format_fit(a.pointwise, "pointwise"));
  w.list("scattering.t", a.scattering.times);
  w.list("scattering.d_corrected", a.scattering.d_corrected);
  w.list("scattering.d_good", a.scattering.d_good);
  w.list("scattering.d_raw", a.scattering.d_raw);
  w.num("scattering.sup_correction", a.scattering.sup_correction);
  w.text("scattering.decreasing", a.scattering.decreasing ? "true" : "false");
  w.num("scattering.worst_tail_ratio", a.scattering.worst_tail_ratio);
  w.num("kernel.discarded_mass", a.discarded_mass);
  w.num("kernel.discarded_symbol_mass", a.discarded_symbol_mass);
  auto bands = [&](const std::string& key, const std::vector<ProbeBand>& b) {
    std::vector<double> band, m, p;
    for (const auto& x : b) {
      band.push_back(x.band);
      m.push_back(x.measured);
      p.push_back(x.predicted);
    }
    w.list(key + ".band", band);
    w.list(key + ".measured", m);
    w.list(key + ".predicted", p);
  };
  bands("probe.bilin1", a.probes.bilin1);
  bands("probe.bilin2", a.probes.bilin2);
  w.num("probe.slope1_low", a.probes.slope1_low);
  w.num("probe.slope2_low", a.probes.slope2_low);
  w.num("probe.slope2_high", a.probes.slope2_high);
  w.num("probe.constant1", a.probes.constant1);
  w.num("probe.constant1_min", a.probes.constant1_min);
  w.num("probe.constant2", a.probes.constant2);
  w.num("probe.constant2_min", a.probes.constant2_min);
  return w.str();
}

Container series_container(const AnalysisReport& a) {
  Container c;
  c.meta["kind"] = "analysis_series";
  c.arrays["g_t"] = a.g_t;
  c.arrays["g_sup"] = a.g_sup;
  c.arrays["growth_t"] = a.growth_f.t;
  c.arrays["growth_h_norm"] = a.growth_h_norm;
  c.arrays["scattering_t"] = a.scattering.times;
  c.arrays["d_corrected"] = a.scattering.d_corrected;
  c.arrays["d_good"] = a.scattering.d_good;
  c.arrays["d_raw"] = a.scattering.d_raw;
  return c;
}

namespace {

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos || line.empty() || line[0] == '#') continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

double kv_number(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw Error(ErrorKind::MissingDependency, "analysis report lacks " + key);
  return std::strtod(it->second.c_str(), nullptr);
}

std::string csv_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void write_report_bundle(const fs::path& dir, const std::string& analysis_text, const Container& series,
                         const TraceStore& traces, const SpectralData& spectral) {
  const auto kv = parse_key_values(analysis_text);
  const double lambda = kv_number(kv, "lambda");
  const double c0 = kv_number(kv, "c0");
  const double gamma = kv_number(kv, "gamma");
  const ResonantModel model{lambda, gamma, kv_number(kv, "resonant.coupling_star")};
  const double c2 = kv_number(kv, "resonant.c2");
  const double psi = kv_number(kv, "resonant.psi_inf");
  const double y0 = kv_number(kv, "resonant.y0");
  (void)spectral;

  fs::create_directories(dir);
  const std::size_t n = traces.records.size();
  const std::size_t stride = std::max<std::size_t>(1, n / 4000);
  const auto B = normal_form_series(traces, lambda, c0);

  std::string decay = "t,abs_A,abs_B,inv_abs_A2,inv_abs_B2\n";
  std::string resonant = "t,ell,abs_fstar,abs_model\n";
  for (std::size_t i = 0; i < n; i += stride) {
    const auto& r = traces.records[i];
    const double a = std::abs(r.A), b = std::abs(B[i]);
    decay += csv_number(r.t) + ',' + csv_number(a) + ',' + csv_number(b) + ',' +
             csv_number(1.0 / (a * a)) + ',' + csv_number(1.0 / (b * b)) + '\n';
    const double ell = std::log1p(gamma / lambda * y0 * y0 * r.t);
    resonant += csv_number(r.t) + ',' + csv_number(ell) + ',' + csv_number(std::abs(r.f_star)) + ',' +
                csv_number(std::abs(model(r.t, c2, psi, y0))) + '\n';
  }

  std::string growth = "t,dk_norm_f,dk_norm_h\n";
  {
    const auto& gt = series.array("growth_t");
    const auto& gh = series.array("growth_h_norm");
    for (std::size_t i = 0; i < gt.size() && i < gh.size(); ++i) {
      double nf = std::numeric_limits<double>::quiet_NaN();
      for (const auto& snap : traces.snapshots) {
        if (std::abs(snap.t - gt[i]) < 1e-9) {
          nf = derivative_norm(snap.f, spectral.kgrid);
          break;
        }
      }
      growth += csv_number(gt[i]) + ',' + csv_number(nf) + ',' + csv_number(gh[i]) + '\n';
    }
  }

  std::string scat = "j,t,d_corrected,d_good,d_raw\n";
  {
    const auto& t = series.array("scattering_t");
    const auto& dc = series.array("d_corrected");
    const auto& dg = series.array("d_good");
    const auto& dr = series.array("d_raw");
    for (std::size_t j = 0; j < dc.size(); ++j) {
      scat += std::to_string(j) + ',' + csv_number(t[j]) + ',' + csv_number(dc[j]) + ',' +
              csv_number(dg[j]) + ',' + csv_number(dr[j]) + '\n';
    }
  }

  std::string gb = "t,sup_g\n";
  {
    const auto& t = series.array("g_t");
    const auto& v = series.array("g_sup");
    for (std::size_t i = 0; i < t.size(); ++i) gb += csv_number(t[i]) + ',' + csv_number(v[i]) + '\n';
  }

  write_file_atomic(dir / "decay.csv", decay);
  write_file_atomic(dir / "resonant.csv", resonant);
  write_file_atomic(dir / "growth.csv", growth);
  write_file_atomic(dir / "scattering.csv", scat);
  write_file_atomic(dir / "g_bound.csv", gb);
  write_file_atomic(dir / "report.txt",
                    analysis_text +
                        "bundle.files=decay.csv,resonant.csv,growth.csv,scattering.csv,g_bound.csv\n");
}

// ---------------------------------------------------------------------------
// Run directory and manifest

namespace {

const char* const kStages[] = {"spectrum", "fgr", "kernel", "simulate", "analyze", "report"};

const std::map<std::string, std::vector<std::string>>& dependencies() {
  static const std::map<std::string, std::vector<std::string>> deps = {
      {"spectrum", {}},
      {"fgr", {"spectrum"}},
      {"kernel", {"spectrum"}},
      {"simulate", {"spectrum"}},
      {"analyze", {"fgr", "kernel", "simulate"}},
      {"report", {"analyze"}},
  };
  return deps;
}

// Stages that consume the output of `stage`, directly or not.
std::vector<std::string> downstream(const std::string& stage) {
  std::vector<std::string> out;
  for (const char* s : kStages) {
    std::vector<std::string> todo = dependencies().at(s);
    bool hit = false;
    while (!todo.empty() && !hit) {
      const std::string d = todo.back();
      todo.pop_back();
      if (d == stage) hit = true;
      for (const auto& x : dependencies().at(d)) todo.push_back(x);
    }
    if (hit) out.emplace_back(s);
  }
  return out;
}

struct RunDir {
  fs::path out;
  json manifest;
  RunConfig cfg;
  std::string hash;

  fs::path path(const std::string& name) const { return out / name; }
  bool done(const std::string& stage) const {
    return manifest.contains("stages") && manifest["stages"].contains(stage) &&
           manifest["stages"][stage].value("done", false);
  }
  void save() const { write_file_atomic(out / "manifest.json", manifest.dump(2) + "\n"); }
  void mark(const std::string& stage, const std::vector<std::string>& artifacts) {
    manifest["stages"][stage] = {{"done", true}, {"artifacts", artifacts}};
    save();
  }
  void invalidate_downstream(const std::string& stage) {
    for (const auto& s : downstream(stage)) manifest["stages"][s]["done"] = false;
  }
  void require(const std::string& stage) const {
    std::string missing;
    for (const auto& d : dependencies().at(stage)) {
      if (!done(d)) missing += (missing.empty() ? "" : ", ") + d;
    }
    if (!missing.empty()) {
      throw Error(ErrorKind::MissingDependency, stage + " needs completed stage(s): " + missing);
    }
  }
};

json fresh_manifest(const RunConfig& cfg) {
  json m;
  m["code_version"] = kCodeVersion;
  m["config"] = format_config(cfg);
  m["config_hash"] = hex(cfg.hash());
  m["grids"] = json::object();
  for (const char* s : kStages) m["stages"][s] = {{"done", false}, {"artifacts", json::array()}};
  return m;
}

fs::path resolve_out(const CommandOptions& opt, const RunConfig* cfg) {
  if (!opt.out.empty()) return opt.out;
  if (cfg) return cfg->output_dir;
  return "run";
}

json read_manifest(const fs::path& out) {
  const fs::path p = out / "manifest.json";
  if (!fs::exists(p)) {
    throw Error(ErrorKind::MissingDependency, "no manifest in " + out.string() + "; run spectrum first");
  }
  try {
    return json::parse(read_file(p));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, "unreadable manifest: " + std::string(e.what()));
  }
}

// Opens an existing run; a --config that disagrees with the stored one is a HashMismatch.
RunDir open_run(const CommandOptions& opt) {
  std::optional<RunConfig> given;
  if (opt.config) given = load_config(*opt.config);
  RunDir d;
  d.out = resolve_out(opt, given ? &*given : nullptr);
  d.manifest = read_manifest(d.out);
  d.cfg = parse_config(d.manifest.at("config").get<std::string>());
  d.hash = d.manifest.at("config_hash").get<std::string>();
  if (hex(d.cfg.hash()) != d.hash) {
    throw Error(ErrorKind::HashMismatch, "manifest config does not match its recorded hash");
  }
  if (given && hex(given->hash()) != d.hash) {
    throw Error(ErrorKind::HashMismatch, "--config differs from the configuration of " + d.out.string());
  }
  d.cfg.output_dir = d.out;
  return d;
}

void check_artifact_hash(const Container& c, const RunDir& d, const std::string& what) {
  const auto it = c.meta.find("config_hash");
  if (it == c.meta.end() || it->second != d.hash) {
    throw Error(ErrorKind::HashMismatch, what + " was written for a different configuration");
  }
}

void check_grids(const Container& c, const RunDir& d, const std::string& what) {
  const auto& g = d.manifest.at("grids");
  for (const char* key : {"radial.hash", "kgrid.hash"}) {
    const auto it = c.meta.find(key);
    if (it != c.meta.end() && g.contains(key) && it->second != g[key].get<std::string>()) {
      throw Error(ErrorKind::HashMismatch, what + " lives on different grids");
    }
  }
}

SpectralData load_spectral(const RunDir& d) {
  const auto c = read_container(d.path("spectral.kgc"));
  check_artifact_hash(c, d, "spectral.kgc");
  check_grids(c, d, "spectral.kgc");
  return spectral_from_container(c);
}

ResonanceData load_resonance(const RunDir& d) {
  const auto c = read_container(d.path("resonance.kgc"));
  check_artifact_hash(c, d, "resonance.kgc");
  check_grids(c, d, "resonance.kgc");
  return resonance_from_container(c);
}

CorrectionKernel load_kernel(const RunDir& d) {
  const auto c = read_container(d.path("kernel.kgc"));
  check_artifact_hash(c, d, "kernel.kgc");
  check_grids(c, d, "kernel.kgc");
  return kernel_from_container(c);
}

TraceStore load_traces(const RunDir& d) {
  const auto c = read_container(d.path("traces.kgc"));
  check_artifact_hash(c, d, "traces.kgc");
  return traces_from_container(c);
}

void write_tagged(const RunDir& d, const std::string& name, Container c) {
  c.meta["config_hash"] = d.hash;
  write_container(d.path(name), c);
}

void say(const CommandOptions& opt, const std::string& msg) {
  if (!opt.quiet) std::cerr << msg << '\n';
}

StageOutcome skipped(const std::string& stage) {
  return {true, stage + " already complete (use --force to rerun)"};
}

// Starts a stage: dependency check, idempotence, downstream invalidation.
bool begin_stage(RunDir& d, const std::string& stage, const CommandOptions& opt) {
  d.require(stage);
  if (d.done(stage) && !opt.force) return false;
  d.manifest["stages"][stage]["done"] = false;
  d.invalidate_downstream(stage);
  d.save();
  return true;
}

}  // namespace

StageOutcome cmd_spectrum(const CommandOptions& opt) {
  std::optional<RunConfig> given;
  if (opt.config) given = load_config(*opt.config);
  const fs::path out = resolve_out(opt, given ? &*given : nullptr);
  RunDir d;
  d.out = out;
  const bool have = fs::exists(out / "manifest.json");
  if (have) {
    d.manifest = read_manifest(out);
    d.cfg = parse_config(d.manifest.at("config").get<std::string>());
    d.hash = d.manifest.at("config_hash").get<std::string>();
    if (given && hex(given->hash()) != d.hash) {
      if (!opt.force) {
        throw Error(ErrorKind::HashMismatch,
                    out.string() + " holds a different configuration (use --force to replace it)");
      }
      d.cfg = *given;
      d.hash = hex(d.cfg.hash());
      d.manifest = fresh_manifest(d.cfg);
    }
  } else {
    d.cfg = given ? *given : RunConfig{};
    d.hash = hex(d.cfg.hash());
    d.manifest = fresh_manifest(d.cfg);
  }
  d.cfg.output_dir = out;
  fs::create_directories(out);
  if (!begin_stage(d, "spectrum", opt)) return skipped("spectrum");

  say(opt, "spectrum: tuning the potential and building the eigenfunction table");
  const SpectrumBuild b = build_spectrum(d.cfg);
  const SpectralData& s = b.spectral;
  write_tagged(d, "spectral.kgc", to_container(s));

  KeyValueWriter w;
  w.text("family", to_string(s.potential.family));
  w.num("depth", s.potential.depth);
  w.num("width", s.potential.width);
  w.num("lambda", s.lambda);
  w.num("energy", s.energy);
  w.num("R", s.radial.R);
  w.num("dr", s.radial.dr);
  w.num("n_r", static_cast<double>(s.nr()));
  w.num("n_k", static_cast<double>(s.nk()));
  w.num("kstar", s.kgrid.kstar);
  w.num("max_raw_overlap", s.max_raw_overlap);
  w.text("genericity.zero_energy_regular", b.genericity.zero_energy_regular ? "true" : "false");
  w.num("genericity.slope", b.genericity.slope);
  w.num("genericity.intercept", b.genericity.intercept);
  write_file_atomic(d.path("genericity.txt"), w.str());
  if (!b.genericity.zero_energy_regular) say(opt, "warning: zero energy is an eigenvalue or resonance");

  d.manifest["grids"]["radial.hash"] = hex(hash_grid(s.radial));
  d.manifest["grids"]["kgrid.hash"] = hex(hash_grid(s.kgrid));
  d.mark("spectrum", {"spectral.kgc", "genericity.txt"});
  char buf[160];
  std::snprintf(buf, sizeof buf, "spectrum: lambda = %.8f, N_r = %zu, N_k = %zu", s.lambda, s.nr(), s.nk());
  return {false, buf};
}

StageOutcome cmd_fgr(const CommandOptions& opt) {
  RunDir d = open_run(opt);
  if (!begin_stage(d, "fgr", opt)) return skipped("fgr");
  const SpectralData s = load_spectral(d);
  const ResonanceData res = compute_resonance(s, d.cfg.epsilon0);
  const auto table = mollified_gamma_table(res.coupling, s.kgrid, s.lambda);
  write_tagged(d, "resonance.kgc", to_container(res, s.kgrid, s.radial));
  write_file_atomic(d.path("resonance.txt"), format_resonance_report(res, table));
  d.mark("fgr", {"resonance.kgc", "resonance.txt"});
  char buf[160];
  std::snprintf(buf, sizeof buf, "fgr: Gamma = %.8g, mollified extrapolation %.8g", res.gamma,
                table.extrapolated);
  return {false, buf};
}

StageOutcome cmd_kernel(const CommandOptions& opt) {
  RunDir d = open_run(opt);
  if (!begin_stage(d, "kernel", opt)) return skipped("kernel");
  const SpectralData s = load_spectral(d);
  const CorrectionKernel kn = build_kernel(s, d.cfg, KernelOutput::KGridNodes);
  write_tagged(d, "kernel.kgc", to_container(kn, s));
  d.mark("kernel", {"kernel.kgc"});
  char buf[200];
  std::snprintf(buf, sizeof buf, "kernel: %zu inputs, %zu outputs, discarded mass %.3g (symbol-weighted %.3g)",
                kn.n_in(), kn.n_out(), kn.discarded_mass, kn.discarded_symbol_mass);
  return {false, buf};
}

StageOutcome cmd_simulate(const CommandOptions& opt) {
  RunDir d = open_run(opt);
  if (!begin_stage(d, "simulate", opt)) return skipped("simulate");
  const SpectralData s = load_spectral(d);
  RunConfig cfg = d.cfg;
  cfg.stop_after_steps = opt.stop_after;
  RunOptions ro;
  ro.checkpoint = d.path("checkpoint.kgc");
  ro.resume = opt.resume;
  const long total = std::lround(cfg.horizon() / cfg.dt);
  const long every = std::max<long>(1, total / 20);
  if (!opt.quiet) {
    ro.progress = [&](const SimState& st) {
      if (st.step % every == 0) {
        std::fprintf(stderr, "simulate: step %ld / %ld, t = %.2f, |A| = %.6f\n", st.step, total, st.t,
                     std::abs(st.A));
      }
    };
  }
  const RunResult r = run(cfg, s, ro);
  if (!r.complete) {
    return {false, "simulate: interrupted at step " + std::to_string(r.steps) +
                       "; rerun with --resume to continue from the last checkpoint"};
  }
  fs::rename(d.path("checkpoint.kgc"), d.path("traces.kgc"));
  write_file_atomic(d.path("trace.txt"), format_trace(r.traces));
  d.mark("simulate", {"traces.kgc", "trace.txt"});
  return {false, "simulate: " + std::to_string(r.steps) + " steps"};
}

StageOutcome cmd_analyze(const CommandOptions& opt) {
  RunDir d = open_run(opt);
  if (!begin_stage(d, "analyze", opt)) return skipped("analyze");
  const SpectralData s = load_spectral(d);
  const ResonanceData res = load_resonance(d);
  const CorrectionKernel kn = load_kernel(d);
  const TraceStore tr = load_traces(d);
  const AnalysisReport a = analyze_run(d.cfg, s, res, kn, tr);
  write_file_atomic(d.path("analysis.txt"), format_analysis(a));
  write_tagged(d, "analysis_series.kgc", series_container(a));
  d.mark("analyze", {"analysis.txt", "analysis_series.kgc"});
  char buf[200];
  std::snprintf(buf, sizeof buf, "analyze: Gamma_fit = %.6g (Gamma = %.6g), R^2 = %.5f",
                a.decay_B.param("gamma_fit"), a.gamma, a.decay_B.r2);
  return {false, buf};
}

StageOutcome cmd_report(const CommandOptions& opt) {
  RunDir d = open_run(opt);
  if (!begin_stage(d, "report", opt)) return skipped("report");
  const SpectralData s = load_spectral(d);
  const TraceStore tr = load_traces(d);
  const auto series = read_container(d.path("analysis_series.kgc"));
  check_artifact_hash(series, d, "analysis_series.kgc");
  write_report_bundle(d.path("report"), read_file(d.path("analysis.txt")), series, tr, s);
  d.mark("report", {"report/decay.csv", "report/resonant.csv", "report/growth.csv", "report/scattering.csv",
                    "report/g_bound.csv", "report/report.txt"});
  return {false, "report: bundle written to " + d.path("report").string()};
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingDependency:
      return 2;
    case ErrorKind::HashMismatch:
      return 3;
    default:
      return 1;
  }
}

namespace {

void apply_threads(int requested) {
  int n = requested;
  if (n <= 0) {
    if (const char* env = std::getenv("KGMODE_THREADS")) n = std::atoi(env);
  }
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

void write_error_record(const CommandOptions& opt, const std::string& command, const std::string& kind,
                        const std::string& message, int code) {
  fs::path out = opt.out;
  if (out.empty()) {
    try {
      out = opt.config ? load_config(*opt.config).output_dir : fs::path("run");
    } catch (const std::exception&) {
      out = "run";
    }
  }
  try {
    fs::create_directories(out);
    const json rec = {{"command", command},     {"kind", kind},
                      {"message", message},     {"exit_code", code},
                      {"code_version", kCodeVersion}};
    write_file_atomic(out / "error.json", rec.dump(2) + "\n");
  } catch (const std::exception&) {
    // The record is best effort; the exit code and stderr already carry the failure.
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Radial Klein-Gordon lab with one internal mode"};
  app.require_subcommand(1);
  CommandOptions opt;
  std::string config, out;
  app.add_option("--config", config, "Configuration file (key = value)");
  app.add_option("--out", out, "Run directory");
  app.add_flag("--resume", opt.resume, "Continue simulate from its checkpoint");
  app.add_flag("--force", opt.force, "Rerun a completed stage");
  app.add_option("--threads", opt.threads, "Worker threads (default: KGMODE_THREADS or all cores)");
  app.add_flag("--quiet", opt.quiet, "No progress output");
  app.fallthrough();
  struct Sub {
    const char* name;
    const char* help;
    StageOutcome (*fn)(const CommandOptions&);
  };
  const Sub subs[] = {
      {"spectrum", "Bound state, grids, eigenfunction table, genericity", cmd_spectrum},
      {"fgr", "Resonance coupling and Fermi golden rule rate", cmd_fgr},
      {"kernel", "Normal-form correction kernel", cmd_kernel},
      {"simulate", "Time evolution with traces and checkpoints", cmd_simulate},
      {"analyze", "Fits, scattering check and scaling probes", cmd_analyze},
      {"report", "CSV bundles and key=value report for plotting", cmd_report},
  };
  std::map<std::string, CLI::App*> handles;
  for (const auto& s : subs) handles[s.name] = app.add_subcommand(s.name, s.help);
  handles["simulate"]->add_option("--stop-after", opt.stop_after, "Stop after this many steps (testing)");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();  // program name
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (!config.empty()) opt.config = config;
  opt.out = out;
  apply_threads(opt.threads);

  std::string command;
  for (const auto& s : subs) {
    if (handles[s.name]->parsed()) command = s.name;
  }
  try {
    StageOutcome r;
    for (const auto& s : subs) {
      if (command == s.name) r = s.fn(opt);
    }
    std::cout << r.message << '\n';
    return 0;
  } catch (const Error& e) {
    const int code = exit_code(e.kind());
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << '\n';
    write_error_record(opt, command, std::string(to_string(e.kind())), e.what(), code);
    return code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    write_error_record(opt, command, "Internal", e.what(), 1);
    return 1;
  }
}

}  // namespace kgmode
