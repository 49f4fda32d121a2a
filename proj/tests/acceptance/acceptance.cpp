/// Acceptance suite: runs the shipped configurations and prints one PASS/FAIL
/// line per criterion. Gate tolerances live in the experiment bodies and are
/// persisted in each results.json; this driver only groups them.
///
/// Usage: acceptance [out_dir]   (default: ./acceptance_out)

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "conestable/harness.hpp"

using namespace conestable;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int id;
  const char* title;
  const char* run;                    ///< run directory holding the gates
  std::vector<std::string> prefixes;  ///< gate-name prefixes that belong to it
};

struct Run {
  const char* dir;
  const char* experiment;
  const char* config;
};

const std::vector<Run> kRuns = {
    {"sample_check", "sample-check", "sample_check.json"},
    {"survival_halfspace", "survival", "survival_halfspace.json"},
    {"harmonic_halfspace", "harmonic", "harmonic_halfspace.json"},
    {"conditioned", "conditioned", "conditioned.json"},
    {"jumprate", "jumprate", "jumprate.json"},
    {"duality", "duality", "duality.json"},
    {"ladder", "ladder", "ladder.json"},
    {"entrance", "entrance", "entrance.json"},
    {"extension", "extension", "extension.json"},
    {"admissibility", "admissibility", "admissibility.json"},
};

const std::vector<Criterion> kCriteria = {
    {1, "stable law characteristic function", "sample_check", {"charfn/"}},
    {2, "scaling property", "sample_check", {"scaling/"}},
    {3, "half-space survival exponent", "survival_halfspace", {"survival/beta/"}},
    {4, "harmonicity oracle", "harmonic_halfspace", {"harmonicity/"}},
    {5, "martingale conservativeness", "conditioned", {"martingale/"}},
    {6, "conditioned self-similarity", "conditioned", {"selfsim/"}},
    {7, "jump-kernel ratios", "jumprate", {"jumprate/"}},
    {8, "duality under inversion", "duality", {"duality/"}},
    {9, "ladder stationarity", "ladder", {"ladder/"}},
    {10, "entrance law", "entrance", {"entrance/"}},
    {11, "small-ball hitting exponent", "harmonic_halfspace", {"smallball/"}},
    {12, "recurrent extension", "extension", {"extension/"}},
    {13, "admissibility calculator", "admissibility", {"admissibility/"}},
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

bool starts_with_any(const std::string& s, const std::vector<std::string>& prefixes) {
  for (const auto& p : prefixes)
    if (s.rfind(p, 0) == 0) return true;
  return false;
}

/// Counts gates of one criterion; every gate is recomputed from its stored
/// fields so a stale pass flag cannot slip through.
bool judge(const Criterion& c, const fs::path& root, std::string& detail) {
  const auto file = root / c.run / "results.json";
  if (!fs::exists(file)) {
    detail = "missing " + file.string();
    return false;
  }
  const auto results = nlohmann::json::parse(slurp(file));
  if (results.contains("error")) {
    detail = "error: " + results.at("error").dump();
    return false;
  }
  std::size_t n = 0, passed = 0;
  std::string first_fail;
  for (const auto& g : results.at("gates")) {
    const auto name = g.at("name").get<std::string>();
    if (!starts_with_any(name, c.prefixes)) continue;
    StatReport s;
    s.gate_value = g.at("gate_value").get<double>();
    s.threshold = g.at("threshold").get<double>();
    s.op = g.at("op").get<std::string>();
    const bool ok = s.recompute() && g.at("pass").get<bool>();
    ++n;
    if (ok) ++passed;
    else if (first_fail.empty()) first_fail = name;
  }
  detail = std::to_string(passed) + "/" + std::to_string(n) + " gates";
  if (!first_fail.empty()) detail += ", first failure " + first_fail;
  return n > 0 && passed == n;
}

/// Runs sample-check twice and compares every artifact except timing.json.
bool reproducible(const fs::path& root, std::string& detail) {
  std::ifstream in(fs::path(CONESTABLE_CONFIG_DIR) / "sample_check.json");
  const auto config = ExperimentConfig::from_json("sample-check", nlohmann::json::parse(in));
  const auto a = root / "repro_a", b = root / "repro_b";
  fs::remove_all(a);
  fs::remove_all(b);
  run_experiment(config, a);
  run_experiment(config, b);
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename();
    if (name == "timing.json") continue;
    ++compared;
    if (!fs::exists(b / name) || slurp(entry.path()) != slurp(b / name)) {
      detail = "differs: " + name.string();
      return false;
    }
  }
  detail = std::to_string(compared) + " artifacts identical";
  return compared > 0;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
  fs::create_directories(root);

  for (const auto& r : kRuns) {
    std::ifstream in(fs::path(CONESTABLE_CONFIG_DIR) / r.config);
    const auto config = ExperimentConfig::from_json(r.experiment, nlohmann::json::parse(in));
    const auto outcome = run_experiment(config, root / r.dir);
    std::fprintf(stderr, "ran %s: %zu gates, %zu failed%s\n", r.dir, outcome.gates, outcome.failed.size(),
                 outcome.error ? " (error)" : "");
  }

  int failures = 0;
  auto line = [&](int id, const char* title, bool ok, const std::string& detail) {
    std::printf("%s criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", id, title, detail.c_str());
    if (!ok) ++failures;
  };
  for (const auto& c : kCriteria) {
    std::string detail;
    const bool ok = judge(c, root, detail);
    line(c.id, c.title, ok, detail);
  }
  std::string detail;
  const bool ok = reproducible(root, detail);
  line(14, "byte-identical reruns", ok, detail);
  std::fflush(stdout);
  return failures == 0 ? 0 : 1;
}
