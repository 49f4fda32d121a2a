#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

#include "conestable/error.hpp"
#include "conestable/harness.hpp"

using namespace conestable;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("conestable_unit_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("configs require a seed and a known experiment") {
  const nlohmann::json doc = {{"N", 10}};
  CHECK_THROWS_AS(ExperimentConfig::from_json("survival", doc), DomainError);
  CHECK(ExperimentConfig::from_json("survival", doc, 5).seed == 5);
  CHECK_THROWS_AS(ExperimentConfig::from_json("nonsense", {{"seed", 1}}), DomainError);
  const auto c = ExperimentConfig::from_json(
      "survival", {{"seed", 3}, {"params", {{"alpha", 1.2}, {"d", 3}}}, {"cone", {{"kind", "punctured"}, {"d", 3}}}});
  CHECK(c.params.alpha == 1.2);
  CHECK(c.cone.kind() == ConeKind::Punctured);
  CHECK_THROWS(ExperimentConfig::from_json("survival", {{"seed", 3}, {"params", {{"alpha", 2.5}}}}));
  CHECK_THROWS_AS(ExperimentConfig::from_json("survival", {{"seed", 3}, {"cone", {{"kind", "punctured"}, {"d", 3}}}}),
                  DomainError);
}

TEST_CASE("sample-check artifacts are byte-identical across runs") {
  const nlohmann::json doc = {{"seed", 99}, {"N", 4000}, {"alphas", {1.5}}, {"dims", {2}}, {"thetas", {0.5, 1.0}}};
  const auto c = ExperimentConfig::from_json("sample-check", doc);
  const auto a = scratch("det_a"), b = scratch("det_b");
  const auto ra = run_experiment(c, a);
  const auto rb = run_experiment(c, b);
  CHECK(ra.ok == rb.ok);
  CHECK_FALSE(ra.error);
  for (const char* f : {"manifest.json", "results.json", "charfn.csv", "scaling.csv"})
    CHECK(slurp(a / f) == slurp(b / f));
  CHECK(fs::exists(a / "timing.json"));

  const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
  CHECK(manifest.at("seed") == 99);
  CHECK(manifest.at("code_version") == code_version());
  CHECK(manifest.at("config").at("N") == 4000);
  CHECK(slurp(a / "charfn.csv").rfind("# manifest=manifest.json\n", 0) == 0);

  // Every stored gate is recomputable from its persisted fields.
  const auto results = nlohmann::json::parse(slurp(a / "results.json"));
  for (const auto& g : results.at("gates")) {
    StatReport s;
    s.gate_value = g.at("gate_value").get<double>();
    s.threshold = g.at("threshold").get<double>();
    s.op = g.at("op").get<std::string>();
    CHECK(s.recompute() == g.at("pass").get<bool>());
  }
}

TEST_CASE("errors surface as a structured record") {
  const auto c = ExperimentConfig::from_json("sample-check", {{"seed", 1}, {"N", 100}, {"alphas", {2.5}}});
  const auto dir = scratch("err");
  const auto r = run_experiment(c, dir);
  CHECK(r.error);
  CHECK_FALSE(r.ok);
  const auto e = nlohmann::json::parse(slurp(dir / "error.json"));
  CHECK(e.at("type") == "domain");
  CHECK(nlohmann::json::parse(slurp(dir / "results.json")).at("all_pass") == false);
}

TEST_CASE("admissibility sweep and report aggregation") {
  const auto dir = scratch("adm");
  const auto r = run_experiment(ExperimentConfig::from_json("admissibility", {{"seed", 1}}), dir);
  CHECK(r.ok);
  CHECK(r.gates == 1);
  const auto rep = scratch("rep");
  const auto rr = run_experiment(
      ExperimentConfig::from_json("report", {{"seed", 1}, {"inputs", {dir.string()}}}), rep);
  CHECK(rr.ok);
  const auto missing = run_experiment(
      ExperimentConfig::from_json("report", {{"seed", 1}, {"inputs", {(dir / "absent").string()}}}), scratch("rep2"));
  CHECK(missing.error);
}

TEST_CASE("gate directions") {
  CHECK(make_upper_gate("u", 1.0, 0.1, 0.5, 1.0, "x < 1").pass);
  CHECK_FALSE(make_upper_gate("u", 1.0, 0.1, 1.0, 1.0, "x < 1").pass);
  CHECK(make_lower_gate("l", 0.9, 0.0, 0.9, 0.9, "x >= 0.9", true).pass);
  CHECK_FALSE(make_lower_gate("l", 0.9, 0.0, 0.9, 0.9, "x > 0.9").pass);
  auto p = make_p_gate("p", 0.1, 0.02, 100, 100, 0.01);
  CHECK(p.pass);
  CHECK(p.gate == "p > 0.01");
  p.op = "!=";
  CHECK_THROWS_AS(p.recompute(), DomainError);
}
