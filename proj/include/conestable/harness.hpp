#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "conestable/cone.hpp"
#include "conestable/stable.hpp"
#include "conestable/stats.hpp"

namespace conestable {

/// Library version written into every manifest.
const char* code_version();

/// Names of the experiments accepted by run_experiment.
const std::vector<std::string>& experiment_names();

/// Parsed experiment configuration.
///
/// The JSON document carries "seed" (required), optional "params"
/// {"alpha", "d"}, optional "cone" (see cone_from_json; default half-space
/// with normal e_d) and experiment-specific keys read through get().
struct ExperimentConfig {
  std::string experiment;
  StableParams params;
  ConeSpec cone = ConeSpec::punctured(2);
  std::uint64_t seed = 0;
  nlohmann::json doc;

  static ExperimentConfig from_json(const std::string& experiment, const nlohmann::json& doc,
                                    std::optional<std::uint64_t> seed_override = std::nullopt);

  template <class T>
  T get(const std::string& key, const T& fallback) const {
    return doc.contains(key) ? doc.at(key).get<T>() : fallback;
  }
  bool has(const std::string& key) const { return doc.contains(key); }
};

/// Collects the CSV tables, results and gates of one run and writes them to
/// the output directory.
class Artifacts {
 public:
  explicit Artifacts(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }

  /// Writes name.csv: a manifest reference line, a header row, then rows
  /// printed with 17 significant digits.
  void csv(const std::string& name, const std::vector<std::string>& header,
           const std::vector<std::vector<double>>& rows);
  void gate(StatReport r);
  nlohmann::json& results() { return results_; }

  const std::vector<StatReport>& gates() const { return gates_; }
  const std::vector<std::string>& files() const { return files_; }
  bool all_pass() const;

 private:
  std::filesystem::path dir_;
  nlohmann::json results_ = nlohmann::json::object();
  std::vector<StatReport> gates_;
  std::vector<std::string> files_;
};

struct RunOutcome {
  bool ok = false;          ///< every gate passed and no error occurred
  bool error = false;
  std::string message;
  std::size_t gates = 0;
  std::vector<std::string> failed;
};

/// Runs one experiment and writes manifest.json, results.json, the CSV
/// tables and timing.json (wall time and thread count, kept apart so the
/// other artifacts are byte-identical across runs). Errors are written to
/// error.json and reported in the outcome.
RunOutcome run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// Experiment bodies (dispatch targets of run_experiment).
void run_sample_check(const ExperimentConfig& c, Artifacts& a);
void run_survival(const ExperimentConfig& c, Artifacts& a);
void run_harmonic(const ExperimentConfig& c, Artifacts& a);
void run_conditioned(const ExperimentConfig& c, Artifacts& a);
void run_entrance(const ExperimentConfig& c, Artifacts& a);
void run_duality(const ExperimentConfig& c, Artifacts& a);
void run_ladder(const ExperimentConfig& c, Artifacts& a);
void run_jumprate(const ExperimentConfig& c, Artifacts& a);
void run_extension(const ExperimentConfig& c, Artifacts& a);
void run_admissibility(const ExperimentConfig& c, Artifacts& a);
void run_report(const ExperimentConfig& c, Artifacts& a);

}  // namespace conestable
