#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kgmode/analysis.hpp"
#include "kgmode/container.hpp"
#include "kgmode/error.hpp"
#include "kgmode/evolve.hpp"
#include "kgmode/fgr.hpp"
#include "kgmode/normalform.hpp"
#include "kgmode/spectral.hpp"

namespace kgmode {

inline constexpr const char* kCodeVersion = "kgmode 0.1.0";

// Potential tuning, bound state, grids and eigenfunction table for a config.
struct SpectrumBuild {
  SpectralData spectral;
  GenericityReport genericity;
};
SpectrumBuild build_spectrum(const RunConfig& cfg);

// Everything cmd_analyze derives from a finished run.
struct AnalysisReport {
  double lambda = 0.0, kstar = 0.0, epsilon0 = 0.0, t_end = 0.0;
  double gamma = 0.0, gamma_mollified = 0.0, c0 = 0.0;
  double energy_drift = 0.0;      // max |E(t) - E(0)| / |E(0)|
  double max_orthogonality = 0.0;  // max |(v, phi)|
  FitResult decay_A, decay_B;
  FitResult resonant;
  double alpha = 0.0;  // (Gamma / lambda) Y0^2 from the resonant fit
  double coupling_star = 0.0;
  LogPeriodicity logp;
  // sup_k |g| at every snapshot, and at the step nearest 5 eps0^-2
  std::vector<double> g_t, g_sup;
  double g_ref_t = 0.0, g_ref = 0.0, g_max = 0.0, g_ratio = 0.0;
  FitResult growth_f, growth_h;
  std::vector<double> growth_h_norm;  // ||d_k h|| at growth_h.t
  FitResult pointwise;
  ScatteringReport scattering;
  double discarded_mass = 0.0, discarded_symbol_mass = 0.0;
  ProbeReport probes;
};

AnalysisReport analyze_run(const RunConfig& cfg, const SpectralData& spectral,
                           const ResonanceData& res, const CorrectionKernel& kernel,
                           const TraceStore& traces);

// key=value lines, %.17g for every number.
std::string format_analysis(const AnalysisReport& a);
Container series_container(const AnalysisReport& a);

// Writes decay.csv, resonant.csv, growth.csv, scattering.csv, g_bound.csv and
// report.txt into dir. Series not stored in the report come from the traces.
void write_report_bundle(const std::filesystem::path& dir, const std::string& analysis_text,
                         const Container& series, const TraceStore& traces,
                         const SpectralData& spectral);

// Command-line layer. Every stage reads and updates <out>/manifest.json.
struct CommandOptions {
  std::filesystem::path out;  // empty: from the config, default "run"
  std::optional<std::filesystem::path> config;
  bool resume = false;
  bool force = false;
  int threads = 0;           // 0: KGMODE_THREADS or the OpenMP default
  long stop_after = -1;      // simulate only: stop after this many steps
  bool quiet = false;
};

struct StageOutcome {
  bool skipped = false;  // already complete, nothing written
  std::string message;
};

StageOutcome cmd_spectrum(const CommandOptions& opt);
StageOutcome cmd_fgr(const CommandOptions& opt);
StageOutcome cmd_kernel(const CommandOptions& opt);
StageOutcome cmd_simulate(const CommandOptions& opt);
StageOutcome cmd_analyze(const CommandOptions& opt);
StageOutcome cmd_report(const CommandOptions& opt);

// MissingDependency -> 2, HashMismatch -> 3, any other failure -> 1.
int exit_code(ErrorKind kind);

// Full command line (argv[0] is the program name). Failures are printed and
// recorded in <out>/error.json; the return value is the process exit code.
int run_cli(const std::vector<std::string>& args);

}  // namespace kgmode
