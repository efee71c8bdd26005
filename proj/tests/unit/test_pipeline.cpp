#include <algorithm>
#include <filesystem>
#include <functional>
#include <sstream>

#include "doctest.h"
#include "mixedabc/error.hpp"
#include "mixedabc/geometry.hpp"
#include "mixedabc/io.hpp"
#include "mixedabc/pipeline.hpp"
#include "mixedabc/synthetic.hpp"

using namespace mixedabc;
using namespace mixedabc::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mixedabc_test_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small generator dataset with schema and embeddings beside it, plus a
// config with settings cut down for unit-test speed.
json small_setup(const fs::path& dir, std::uint64_t seed = 3) {
  dataset::GeneratorConfig gc;
  gc.rows = 600;
  const auto [ds, gt] = dataset::generate_synthetic(gc, seed);
  dataset::save_csv(ds, dir / "data.csv");
  dataset::save_schema(dataset::synthetic_schema(true), dir / "schema.json");
  std::ostringstream tsv;
  geometry::write_embeddings(geometry::EmbeddingTable::from_map(gt.embeddings), tsv);
  io::write_file(dir / "embeddings.tsv", tsv.str());
  return {{"data", "data.csv"},
          {"schema", "schema.json"},
          {"embeddings", "embeddings.tsv"},
          {"seed", 11},
          {"surrogate", {{"n_trees", 40}, {"cv_folds", 3}}},
          {"mcmc", {{"n_iter", 1500}, {"burn_in", 500}}},
          {"abc", {{"n_sims", 150}}},
          {"out", "out"}};
}

PipelineConfig config_in(const fs::path& dir, const json& j) {
  io::write_file(dir / "cfg.json", j.dump());
  auto cfg = load_config(dir / "cfg.json");
  validate(cfg);
  return cfg;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("config parsing and validation") {
  const auto dir = scratch("config");
  const auto base = small_setup(dir);

  const auto cfg = config_in(dir, base);
  CHECK(cfg.data == dir / "data.csv");
  CHECK(cfg.out == dir / "out");
  CHECK(cfg.hp.n_trees == 40);
  CHECK(cfg.hp.max_depth == 4);
  CHECK(cfg.cv_folds == 3);
  CHECK(cfg.top_q == 3);
  CHECK(cfg.abc.sims_per_draw == 15);
  CHECK(cfg.candidates.size() == 6);
  CHECK_FALSE(cfg.cluster.enabled);

  auto with = [&](const std::string& key, json value) {
    json j = base;
    j[key] = std::move(value);
    return j;
  };
  CHECK(code_of([&] { config_in(dir, with("top_q", 0)); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([&] { config_in(dir, with("abc", {{"n_sims", 0}})); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([&] { config_in(dir, with("abc", {{"kernel_scale", "wide"}})); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([&] { config_in(dir, with("abc", {{"kernel_scale", -1.0}})); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([&] { config_in(dir, with("bogus", 1)); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([&] { config_in(dir, with("candidates", {"gamma"})); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([&] { config_in(dir, with("data", "missing.csv")); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([&] { config_in(dir, with("surrogate", {{"max_depth", 12}})); }) == ErrorCode::InvalidConfig);

  json no_emb = with("cluster", {{"enabled", true}});
  no_emb.erase("embeddings");
  CHECK(code_of([&] { config_in(dir, no_emb); }) == ErrorCode::InvalidConfig);

  io::write_file(dir / "broken.json", "{\"data\": ");
  CHECK(code_of([&] { load_config(dir / "broken.json"); }) == ErrorCode::InvalidConfig);

  // The echo parses back to the same settings.
  const auto again = config_from_json(to_json(cfg));
  CHECK(to_json(again) == to_json(cfg));
}

TEST_CASE("pipeline without clustering: four sections, deterministic, manifest") {
  const auto dir = scratch("plain");
  auto j = small_setup(dir);
  auto cfg = config_in(dir, j);
  const auto a = run_pipeline(cfg);
  CHECK(a.report.section_names() == std::vector<std::string>{"surrogate", "importance", "priors", "abc"});
  CHECK(a.report.sections()["importance"]["selected"].size() == 3);
  CHECK(a.report.sections()["abc"]["posterior"]["norm_weights"].size() == 150);
  CHECK(a.report.sections()["abc"]["validation"]["predicted"].size() == 150);

  cfg.out = dir / "out_again";
  const auto b = run_pipeline(cfg);
  CHECK(io::read_file(dir / "out" / "report.json") == io::read_file(dir / "out_again" / "report.json"));
  CHECK(io::read_file(dir / "out" / "posterior.svg") == io::read_file(dir / "out_again" / "posterior.svg"));

  const auto manifest = io::read_json(dir / "out" / "MANIFEST.json");
  CHECK(manifest["status"] == "complete");
  CHECK(manifest["failed_stage"].is_null());
  std::vector<std::string> listed;
  for (const auto& f : manifest["files"]) {
    listed.push_back(f["path"].get<std::string>());
    const auto bytes = io::read_file(dir / "out" / f["path"].get<std::string>());
    CHECK(f["sha256"] == io::sha256_hex(bytes));
    CHECK(f["bytes"] == bytes.size());
  }
  CHECK(listed == std::vector<std::string>{"report.json", "parity.svg", "importance.svg", "posterior.svg",
                                           "forward.svg"});
  // Every file in the output directory except the manifest is listed.
  std::size_t on_disk = 0;
  for (const auto& e : fs::directory_iterator(dir / "out")) on_disk += e.path().filename() != "MANIFEST.json";
  CHECK(on_disk == listed.size());

  // A different seed changes the report.
  cfg.seed = 12;
  cfg.out = dir / "out_seed";
  run_pipeline(cfg);
  CHECK(io::read_file(dir / "out" / "report.json") != io::read_file(dir / "out_seed" / "report.json"));
}

TEST_CASE("pipeline with k = 4 clusters") {
  const auto dir = scratch("clusters");
  auto j = small_setup(dir);
  j["cluster"] = {{"enabled", true}, {"k", 4}};
  const auto r = run_pipeline(config_in(dir, j));
  const auto& s = r.report.sections();
  CHECK(r.report.section_names().size() == 5);
  REQUIRE(s["clusters"]["per_cluster"].size() == 4);
  std::size_t rows = 0;
  for (const auto& c : s["clusters"]["per_cluster"]) {
    rows += c["n_rows"].get<std::size_t>();
    CHECK(c["abc"]["posterior"]["norm_weights"].size() == 150);
  }
  CHECK(rows == 600);
  CHECK(fs::exists(dir / "out" / "similarity_heatmap.svg"));
  for (int c = 0; c < 4; ++c) {
    CHECK(fs::exists(dir / "out" / ("posterior_cluster_" + std::to_string(c) + ".svg")));
    CHECK(fs::exists(dir / "out" / ("forward_cluster_" + std::to_string(c) + ".svg")));
  }
  CHECK(r.files.size() == 14);
}

TEST_CASE("an empty cluster section skips the heatmap and per-cluster plots") {
  const auto dir = scratch("empty_clusters");
  auto j = small_setup(dir);
  j["cluster"] = {{"enabled", true}, {"k", 4}};
  auto r = run_pipeline(config_in(dir, j));
  r.report.doc["sections"]["clusters"]["per_cluster"] = json::array();
  const auto files = emit_plots(r.report, dir / "replot");
  CHECK(files.size() == 4);
  CHECK_FALSE(fs::exists(dir / "replot" / "similarity_heatmap.svg"));
}

TEST_CASE("stage failures keep partial artifacts") {
  const auto dir = scratch("failure");
  auto j = small_setup(dir);

  SUBCASE("late stage") {
    j["cluster"] = {{"enabled", true}, {"k", 4}, {"geometry_column", "nonexistent"}};
    const auto cfg = config_in(dir, j);
    CHECK(code_of([&] { run_pipeline(cfg); }) == ErrorCode::StageFailure);
    const auto manifest = io::read_json(dir / "out" / "MANIFEST.json");
    CHECK(manifest["status"] == "failed");
    CHECK(manifest["failed_stage"] == "clusters");
    CHECK(manifest["error"].get<std::string>().find("MissingColumn") != std::string::npos);
    const auto report = io::read_json(dir / "out" / "report.json");
    CHECK(report["sections"].size() == 4);
    CHECK(report["meta"]["completed_stages"].size() == 4);
    CHECK(manifest["files"].size() == 5);
  }
  SUBCASE("first stage") {
    io::write_file(dir / "data.csv", "run_id,thickness\nR1,6.1\n");
    const auto cfg = config_in(dir, j);
    CHECK(code_of([&] { run_pipeline(cfg); }) == ErrorCode::StageFailure);
    const auto manifest = io::read_json(dir / "out" / "MANIFEST.json");
    CHECK(manifest["failed_stage"] == "surrogate");
    CHECK(manifest["files"].size() == 1);
    CHECK(io::read_json(dir / "out" / "report.json")["sections"].empty());
  }
}

TEST_CASE("observed run means and kernel scale modes") {
  const auto dir = scratch("modes");
  auto j = small_setup(dir);
  j["abc"] = {{"n_sims", 150}, {"observed", "run_means"}, {"kernel_scale", "median_distance"}};
  const auto r = run_pipeline(config_in(dir, j));
  const auto& a = r.report.sections()["abc"];
  CHECK(a["n_observed"] == 40);  // 600 rows in runs of 15
  const auto d = a["posterior"]["distances"].get<std::vector<double>>();
  auto sorted = d;
  std::sort(sorted.begin(), sorted.end());
  CHECK(a["kernel"]["s"].get<double>() == doctest::Approx(0.5 * (sorted[74] + sorted[75])));

  j["abc"] = {{"n_sims", 150}, {"kernel_scale", 2.5}};
  const auto r2 = run_pipeline(config_in(dir, j));
  CHECK(r2.report.sections()["abc"]["kernel"]["s"] == 2.5);
  const auto& resid = r2.report.sections()["priors"]["residual"];
  CHECK(r2.report.sections()["abc"]["kernel"]["mu"] == resid["kernel"]["mu"]);
}
