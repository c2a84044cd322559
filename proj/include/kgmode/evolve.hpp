#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "kgmode/container.hpp"
#include "kgmode/fast_transform.hpp"
#include "kgmode/fgr.hpp"
#include "kgmode/model.hpp"
#include "kgmode/spectral.hpp"

namespace kgmode {

struct SimState {
  long step = 0;
  double t = 0.0;
  cplx A{};
  std::vector<cplx> f;  // profile on the k-grid
};

struct Derivative {
  cplx dA{};
  std::vector<cplx> df;
};

// Physical-space fields in U-form (3d field times r).
struct Reconstruction {
  double a = 0.0, a_dot = 0.0;
  std::vector<cplx> w;       // inverse transform of e^{it<k>} f
  std::vector<double> v;     // inverse of <k>^{-1} Im w~
  std::vector<double> v_t;   // inverse of Re w~
  std::vector<double> u;     // a phi + v
  std::vector<double> u_t;   // a_dot phi + v_t
};

struct TraceRecord {
  double t = 0.0;
  cplx A{};
  cplx f_star{};
  double sup_f = 0.0;
  double dk_norm = 0.0;
  double sup_w = std::numeric_limits<double>::quiet_NaN();
  double energy = std::numeric_limits<double>::quiet_NaN();
  double orthogonality = 0.0;  // |(v, phi)| at the first RK stage
};

struct Snapshot {
  long step = 0;
  double t = 0.0;
  std::vector<cplx> f;
};

struct TraceStore {
  double dt = 0.0;
  std::vector<TraceRecord> records;
  std::vector<Snapshot> snapshots;
};

// L2 norm of d f / dk with 3-point nonuniform differences (one-sided at ends).
double derivative_norm(std::span<const cplx> f, const KGrid& kgrid);
std::vector<cplx> k_derivative(std::span<const cplx> f, const KGrid& kgrid);

// Profile-variable integrator for the coupled mode/field system.
class Evolver {
 public:
  Evolver(const SpectralData& spectral, const RunConfig& cfg);

  const SpectralData& spectral() const { return spectral_; }
  double dt() const { return dt_; }

  SimState initial_state() const;  // A = eps0/2, f = 0

  Derivative rhs(const SimState& s, double t, double* orthogonality = nullptr) const;
  // One RK4 step; NonFinite if the new state is not finite.
  void step(SimState& s, double* orthogonality = nullptr) const;

  Reconstruction reconstruct(const SimState& s) const;
  double energy(const SimState& s) const;
  double energy(const SimState& s, const Reconstruction& rec) const;
  TraceRecord record(const SimState& s, bool diagnostics) const;

  const FastTransform& transform() const { return *fast_; }

 private:
  const SpectralData& spectral_;
  RunConfig cfg_;
  double dt_ = 0.0;
  double lambda_ = 0.0;
  std::unique_ptr<FastTransform> fast_;
  std::vector<double> inv_r_;
  std::vector<double> sponge_;  // damping rate per node, empty if off
};

// Times t_j = 2^j eps0^{-2} within [0, horizon], j >= -2.
std::vector<double> dyadic_times(double epsilon0, double horizon);

struct RunOptions {
  std::filesystem::path checkpoint;  // empty: no checkpoints
  std::filesystem::path snapshot_dir;  // empty: snapshots kept in memory only
  bool resume = false;
  std::function<void(const SimState&)> progress;
};

struct RunResult {
  TraceStore traces;
  bool complete = false;  // false when stop_after_steps interrupted the run
  long steps = 0;
};

RunResult run(const RunConfig& cfg, const SpectralData& spectral, const RunOptions& opts = {});

// Binary persistence (traces carry the config hash for cross-stage checks).
Container to_container(const TraceStore& traces, const SimState& state, std::uint64_t config_hash);
TraceStore traces_from_container(const Container& c);
SimState state_from_container(const Container& c);
std::string format_trace(const TraceStore& traces);
Container snapshot_container(const Snapshot& s);

}  // namespace kgmode
