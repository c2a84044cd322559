#include <doctest.h>

#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "kgmode/pipeline.hpp"
#include "support.hpp"

using namespace kgmode;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path write_cfg(const fs::path& dir, const std::string& name, const RunConfig& c) {
  const fs::path p = dir / name;
  std::ofstream(p) << format_config(c);
  return p;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "kgmode");
  args.push_back("--quiet");
  return run_cli(args);
}

json manifest(const fs::path& out) {
  std::ifstream in(out / "manifest.json");
  return json::parse(in);
}

bool stage_done(const fs::path& out, const std::string& s) { return manifest(out)["stages"][s]["done"]; }

std::map<std::string, std::string> read_kv(const fs::path& p) {
  std::map<std::string, std::string> kv;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

RunConfig tiny() {
  RunConfig c = kgtest::small_config();
  c.t_max = 12.0;
  c.checkpoint_every = 100;
  return c;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("missing dependency exits 2 with an error record") {
    const auto out = kgtest::scratch_dir("cli_missing");
    CHECK(cli({"--out", out.string(), "fgr"}) == 2);
    std::ifstream in(out / "error.json");
    REQUIRE(in.good());
    const auto rec = json::parse(in);
    CHECK(rec["kind"] == "MissingDependency");
    CHECK(rec["exit_code"] == 2);
    CHECK(rec["command"] == "fgr");

    const auto cfg = write_cfg(out, "a.cfg", tiny());
    REQUIRE(cli({"--config", cfg.string(), "--out", out.string(), "spectrum"}) == 0);
    CHECK(cli({"--out", out.string(), "analyze"}) == 2);
  }

  TEST_CASE("a different config against an existing run exits 3") {
    const auto out = kgtest::scratch_dir("cli_hash");
    const auto a = write_cfg(out, "a.cfg", tiny());
    auto other = tiny();
    other.dt = 0.02;
    const auto b = write_cfg(out, "b.cfg", other);
    REQUIRE(cli({"--config", a.string(), "--out", out.string(), "spectrum"}) == 0);
    CHECK(cli({"--config", b.string(), "--out", out.string(), "fgr"}) == 3);
    std::ifstream in(out / "error.json");
    CHECK(json::parse(in)["kind"] == "HashMismatch");
    // the matching config is accepted
    CHECK(cli({"--config", a.string(), "--out", out.string(), "fgr"}) == 0);
  }

  TEST_CASE("completed stages are skipped; --force reruns and invalidates downstream") {
    const auto out = kgtest::scratch_dir("cli_force");
    const auto a = write_cfg(out, "a.cfg", tiny());
    REQUIRE(cli({"--config", a.string(), "--out", out.string(), "spectrum"}) == 0);
    REQUIRE(cli({"--out", out.string(), "fgr"}) == 0);
    const auto t0 = fs::last_write_time(out / "spectral.kgc");

    CommandOptions opt;
    opt.out = out;
    opt.quiet = true;
    CHECK(cmd_spectrum(opt).skipped);
    CHECK(fs::last_write_time(out / "spectral.kgc") == t0);
    CHECK(stage_done(out, "fgr"));

    opt.force = true;
    CHECK_FALSE(cmd_spectrum(opt).skipped);
    CHECK(stage_done(out, "spectrum"));
    CHECK_FALSE(stage_done(out, "fgr"));
    opt.force = false;
    CHECK_FALSE(cmd_fgr(opt).skipped);
    CHECK(stage_done(out, "fgr"));
  }

  TEST_CASE("interrupted simulate resumes to the uninterrupted result") {
    const auto whole = kgtest::scratch_dir("cli_whole");
    const auto cut = kgtest::scratch_dir("cli_cut");
    const auto cw = write_cfg(whole, "a.cfg", tiny());
    const auto cc = write_cfg(cut, "a.cfg", tiny());
    for (const auto& [dir, cfg] : {std::pair{whole, cw}, std::pair{cut, cc}}) {
      REQUIRE(cli({"--config", cfg.string(), "--out", dir.string(), "spectrum"}) == 0);
    }
    REQUIRE(cli({"--out", whole.string(), "simulate"}) == 0);

    CHECK(cli({"--out", cut.string(), "simulate", "--stop-after", "250"}) == 0);
    CHECK_FALSE(stage_done(cut, "simulate"));
    CHECK(fs::exists(cut / "checkpoint.kgc"));
    CHECK_FALSE(fs::exists(cut / "traces.kgc"));
    CHECK(cli({"--out", cut.string(), "--resume", "simulate"}) == 0);
    CHECK(stage_done(cut, "simulate"));

    const auto a = traces_from_container(read_container(whole / "traces.kgc"));
    const auto b = traces_from_container(read_container(cut / "traces.kgc"));
    REQUIRE(a.records.size() == b.records.size());
    bool same = a.snapshots.size() == b.snapshots.size();
    for (std::size_t i = 0; same && i < a.records.size(); ++i) {
      same = a.records[i].t == b.records[i].t && a.records[i].A == b.records[i].A &&
             a.records[i].f_star == b.records[i].f_star;
    }
    for (std::size_t i = 0; same && i < a.snapshots.size(); ++i) same = a.snapshots[i].f == b.snapshots[i].f;
    CHECK(same);
  }

  TEST_CASE("bad arguments are rejected before any stage runs") {
    const auto out = kgtest::scratch_dir("cli_args");
    CHECK(cli({"--out", out.string()}) != 0);
    CHECK(cli({"--out", out.string(), "spectrum", "--no-such-flag"}) != 0);
    CHECK_FALSE(fs::exists(out / "manifest.json"));
  }
}

TEST_SUITE("cli_smoke") {
  TEST_CASE("full pipeline on the smoke config") {
    const auto out = kgtest::scratch_dir("cli_smoke");
    const auto cfg = fs::path(KGMODE_SOURCE_DIR) / "configs" / "smoke.cfg";
    REQUIRE(cli({"--config", cfg.string(), "--out", out.string(), "spectrum"}) == 0);
    for (const char* s : {"fgr", "kernel", "simulate", "analyze", "report"}) {
      CAPTURE(s);
      REQUIRE(cli({"--out", out.string(), s}) == 0);
    }
    for (const char* s : {"spectrum", "fgr", "kernel", "simulate", "analyze", "report"}) CHECK(stage_done(out, s));
    for (const char* f : {"decay.csv", "resonant.csv", "growth.csv", "scattering.csv", "g_bound.csv"}) {
      CAPTURE(f);
      std::ifstream in(out / "report" / f);
      std::string header, first;
      REQUIRE(std::getline(in, header));
      CHECK(header.find(',') != std::string::npos);
      CHECK(std::getline(in, first));
    }
    const auto kv = read_kv(out / "report" / "report.txt");
    for (const char* key : {"gamma", "decay.gamma_fit", "decay.r2", "resonant.y0", "energy_drift", "epsilon0"}) {
      CAPTURE(key);
      CHECK(kv.count(key) == 1);
    }
    const double gamma = std::stod(kv.at("gamma"));
    CHECK(gamma == doctest::Approx(0.11365684).epsilon(1e-6));
    CHECK(std::stod(kv.at("energy_drift")) < 1e-6);
    CHECK(std::stod(kv.at("decay.r2")) > 0.99);
  }
}
