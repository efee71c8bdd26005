#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "mixedabc/distributions.hpp"
#include "mixedabc/surrogate.hpp"

namespace mixedabc::pipeline {

enum class ObservedMode { Pooled, RunMeans };

/// How the ABC kernel scale is chosen.
///   Residual: mu and s of the logistic fit to the holdout residuals.
///   MedianDistance: mu from the residual fit, s = median simulated distance.
///   Fixed: mu from the residual fit, s = fixed_scale.
enum class KernelScale { Residual, MedianDistance, Fixed };

struct AbcSettings {
  std::size_t n_sims = 1000;
  std::size_t sims_per_draw = 15;
  ObservedMode observed = ObservedMode::Pooled;
  bool standardize = false;
  KernelScale kernel_scale = KernelScale::Residual;
  double fixed_scale = 0.0;
};

struct ClusterSettings {
  bool enabled = false;
  int k = 4;
  std::string geometry_column = "geometry";
};

struct PipelineConfig {
  std::filesystem::path data;
  std::filesystem::path schema;
  std::optional<std::filesystem::path> embeddings;
  surrogate::Hyperparameters hp;
  int cv_folds = 10;
  double holdout_fraction = 0.2;
  std::vector<distfit::Family> candidates{std::begin(distfit::kAllFamilies), std::end(distfit::kAllFamilies)};
  std::size_t top_q = 3;
  std::size_t mcmc_iter = 20000;
  std::size_t mcmc_burn_in = 5000;
  AbcSettings abc;
  ClusterSettings cluster;
  double nominal = 6.2;
  double tolerance = 0.5;
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
};

/// Relative paths in `j` resolve against `base_dir`. Throws InvalidConfig on
/// unknown keys, bad types or values.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const PipelineConfig& cfg);

/// Value checks plus existence of every referenced path. Throws InvalidConfig.
void validate(const PipelineConfig& cfg);

/// Report as written to report.json: {"meta": ..., "sections": {...}}.
/// Sections, in execution order: surrogate, importance, priors, abc and,
/// with clustering enabled, clusters.
struct PipelineReport {
  nlohmann::json doc = {{"meta", nlohmann::json::object()}, {"sections", nlohmann::json::object()}};

  [[nodiscard]] const nlohmann::json& sections() const { return doc.at("sections"); }
  [[nodiscard]] std::vector<std::string> section_names() const;
};

inline constexpr const char* kStages[] = {"surrogate", "importance", "priors", "abc", "clusters"};

/// Runs every stage in memory. On failure throws StageFailure naming the
/// stage; `report` then holds the sections completed so far.
void run_stages(const PipelineConfig& cfg, PipelineReport& report);

struct RunResult {
  PipelineReport report;
  std::vector<std::filesystem::path> files;  // relative to cfg.out
  bool ok = true;
  std::string failed_stage;
  std::string error;
};

/// Runs the stages, then writes report.json, the plots and MANIFEST.json to
/// cfg.out. A StageFailure still writes the partial report and a manifest
/// recording the failed stage, then rethrows.
RunResult run_pipeline(const PipelineConfig& cfg);

/// SVGs for whichever sections are present. Returns paths relative to outdir.
std::vector<std::filesystem::path> emit_plots(const PipelineReport& report, const std::filesystem::path& outdir);

/// MANIFEST.json listing each file with its size and SHA-256.
void write_manifest(const std::filesystem::path& outdir, const std::vector<std::filesystem::path>& files,
                    const std::string& status, const std::string& failed_stage, const std::string& error);

/// Compact, key-sorted, newline-terminated: identical input gives identical
/// bytes.
std::string dump(const nlohmann::json& j);

}  // namespace mixedabc::pipeline
