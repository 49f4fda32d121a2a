#include "conestable/harness.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <sstream>

#include "conestable/error.hpp"
#include "conestable/parallel.hpp"

namespace conestable {

namespace fs = std::filesystem;

#ifndef CONESTABLE_VERSION
#define CONESTABLE_VERSION "unversioned"
#endif

const char* code_version() { return CONESTABLE_VERSION; }

namespace {

using Body = void (*)(const ExperimentConfig&, Artifacts&);

const std::map<std::string, Body>& registry() {
  static const std::map<std::string, Body> r{
      {"sample-check", run_sample_check}, {"survival", run_survival},   {"harmonic", run_harmonic},
      {"conditioned", run_conditioned},   {"entrance", run_entrance},   {"duality", run_duality},
      {"ladder", run_ladder},             {"jumprate", run_jumprate},   {"extension", run_extension},
      {"admissibility", run_admissibility}, {"report", run_report}};
  return r;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("io", "cannot write " + p.string());
  out << s;
}

}  // namespace

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"sample-check", "survival", "harmonic", "conditioned",
                                              "entrance",     "duality",  "ladder",   "jumprate",
                                              "extension",    "admissibility", "report"};
  return names;
}

ExperimentConfig ExperimentConfig::from_json(const std::string& experiment, const nlohmann::json& doc,
                                             std::optional<std::uint64_t> seed_override) {
  if (!registry().contains(experiment)) throw DomainError("unknown experiment: " + experiment);
  if (!doc.is_object()) throw DomainError("config must be a JSON object");
  ExperimentConfig c;
  c.experiment = experiment;
  c.doc = doc;
  if (seed_override) c.doc["seed"] = *seed_override;
  if (!c.doc.contains("seed")) throw DomainError("config: seed is required (no wall-clock default)");
  c.seed = c.doc.at("seed").get<std::uint64_t>();
  const auto p = c.doc.value("params", nlohmann::json::object());
  c.params = StableParams(p.value("alpha", 1.5), p.value("d", 2));
  if (c.doc.contains("cone")) {
    c.cone = cone_from_json(c.doc.at("cone"));
    if (c.cone.dim() != c.params.d) throw DomainError("config: cone dimension differs from params.d");
  } else {
    c.cone = ConeSpec::half_space(Direction(Point::basis(c.params.d, c.params.d - 1)));
  }
  return c;
}

Artifacts::Artifacts(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

void Artifacts::csv(const std::string& name, const std::vector<std::string>& header,
                    const std::vector<std::vector<double>>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "# manifest=manifest.json\n";
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << "\n";
  for (const auto& r : rows) {
    if (r.size() != header.size()) throw DomainError("csv " + name + ": row width differs from header");
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
    os << "\n";
  }
  const std::string file = name + ".csv";
  write_text(dir_ / file, os.str());
  files_.push_back(file);
}

void Artifacts::gate(StatReport r) { gates_.push_back(std::move(r)); }

bool Artifacts::all_pass() const {
  for (const auto& g : gates_)
    if (!g.pass) return false;
  return true;
}

RunOutcome run_experiment(const ExperimentConfig& config, const fs::path& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  Artifacts art(out_dir);
  RunOutcome out;
  nlohmann::json error;
  try {
    registry().at(config.experiment)(config, art);
  } catch (const std::exception& e) {
    out.error = true;
    out.message = e.what();
    error = {{"experiment", config.experiment}, {"message", e.what()}};
    const auto* lib = dynamic_cast<const Error*>(&e);
    error["type"] = lib ? lib->code() : "runtime";
  }

  nlohmann::json gates = nlohmann::json::array();
  for (const auto& g : art.gates()) {
    gates.push_back(g.to_json());
    if (!g.pass) out.failed.push_back(g.name);
  }
  out.gates = art.gates().size();
  out.ok = !out.error && out.failed.empty();

  nlohmann::json results{{"experiment", config.experiment},
                         {"all_pass", out.ok},
                         {"gates", gates},
                         {"gate_family_size", art.gates().size()},
                         {"results", art.results()}};
  if (out.error) results["error"] = error;
  write_text(out_dir / "results.json", results.dump(2) + "\n");
  if (out.error) write_text(out_dir / "error.json", error.dump(2) + "\n");

  auto files = art.files();
  files.push_back("results.json");
  if (out.error) files.push_back("error.json");
  std::sort(files.begin(), files.end());
  nlohmann::json manifest{{"experiment", config.experiment},
                          {"code_version", code_version()},
                          {"seed", config.seed},
                          {"config", config.doc},
                          {"artifacts", files},
                          {"timing", "timing.json"}};
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  nlohmann::json timing{{"wall_seconds", wall}, {"threads", worker_threads()}};
  write_text(out_dir / "timing.json", timing.dump(2) + "\n");
  return out;
}

}  // namespace conestable
