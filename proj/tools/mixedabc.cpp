#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mixedabc/dataset.hpp"
#include "mixedabc/distfit.hpp"
#include "mixedabc/error.hpp"
#include "mixedabc/geometry.hpp"
#include "mixedabc/io.hpp"
#include "mixedabc/pipeline.hpp"
#include "mixedabc/plot.hpp"
#include "mixedabc/rng.hpp"
#include "mixedabc/surrogate.hpp"
#include "mixedabc/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mixedabc;

namespace {

constexpr int kOk = 0;
constexpr int kStageFailure = 1;
constexpr int kConfigError = 2;

struct DataArgs {
  std::string data;
  std::string schema;
  std::string embeddings;

  void add(CLI::App* app) {
    app->add_option("--data", data, "CSV file")->required()->check(CLI::ExistingFile);
    app->add_option("--schema", schema, "schema JSON")->required()->check(CLI::ExistingFile);
    app->add_option("--embeddings", embeddings, "embeddings TSV")->check(CLI::ExistingFile);
  }

  [[nodiscard]] std::pair<dataset::Dataset, dataset::Dataset> load() const {
    auto raw = dataset::load_dataset(data, dataset::load_schema(schema));
    if (embeddings.empty()) return {raw, dataset::preprocess(raw)};
    const auto map = geometry::load_embeddings(embeddings).to_map();
    auto pre = dataset::preprocess(raw, &map);
    return {std::move(raw), std::move(pre)};
  }
};

// Option values that override the config file when given on the command line.
struct PipelineOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> top_q;
  std::optional<std::size_t> n_sims;
  std::optional<int> k;
  std::optional<std::string> kernel_scale;
  bool cluster = false;
  bool no_cluster = false;

  void add(CLI::App* app) {
    app->add_option("--seed", seed, "root seed");
    app->add_option("--top-q", top_q, "number of features to infer");
    app->add_option("--n-sims", n_sims, "ABC parameter draws");
    app->add_option("--k", k, "number of clusters");
    app->add_option("--kernel-scale", kernel_scale, "residual, median_distance or a number");
    app->add_flag("--cluster", cluster, "enable stratified ABC");
    app->add_flag("--no-cluster", no_cluster, "disable stratified ABC");
  }

  void apply(pipeline::PipelineConfig& cfg) const {
    if (seed) cfg.seed = *seed;
    if (top_q) cfg.top_q = *top_q;
    if (n_sims) cfg.abc.n_sims = *n_sims;
    if (k) cfg.cluster.k = *k;
    if (cluster) cfg.cluster.enabled = true;
    if (no_cluster) cfg.cluster.enabled = false;
    if (kernel_scale) {
      json j = {{"data", cfg.data.string()}, {"schema", cfg.schema.string()}};
      const auto v = io::parse_double(*kernel_scale);
      j["abc"] = {{"kernel_scale", v ? json(*v) : json(*kernel_scale)}};
      const auto parsed = pipeline::config_from_json(j);
      cfg.abc.kernel_scale = parsed.abc.kernel_scale;
      cfg.abc.fixed_scale = parsed.abc.fixed_scale;
    }
  }
};

std::vector<distfit::Family> parse_families(const std::vector<std::string>& names) {
  std::vector<distfit::Family> out;
  for (const auto& n : names) out.push_back(distfit::family_from_name(n));
  if (out.empty()) out.assign(std::begin(distfit::kAllFamilies), std::end(distfit::kAllFamilies));
  return out;
}

int cmd_generate(std::size_t rows, std::uint64_t seed, const std::string& out, const std::string& truth,
                 const std::string& config, double noise_ratio, bool numeric_only) {
  dataset::GeneratorConfig gc;
  if (!config.empty()) gc = dataset::generator_config_from_json(io::read_json(config));
  if (rows > 0) gc.rows = rows;
  if (noise_ratio >= 0.0) gc.noise_ratio = noise_ratio;
  if (numeric_only) gc.categoricals = false;
  const auto [ds, gt] = dataset::generate_synthetic(gc, seed);
  const fs::path data_path(out);
  dataset::save_csv(ds, data_path);
  if (!truth.empty()) io::write_file(truth, dataset::to_json(gt).dump(2) + "\n");
  const auto dir = data_path.parent_path();
  dataset::save_schema(dataset::synthetic_schema(gc.categoricals), dir / "schema.json");
  if (gc.categoricals) {
    std::ostringstream tsv;
    geometry::write_embeddings(geometry::EmbeddingTable::from_map(gt.embeddings), tsv);
    io::write_file(dir / "embeddings.tsv", tsv.str());
  }
  std::cout << "wrote " << ds.size() << " rows to " << data_path.string() << "\n";
  return kOk;
}

int cmd_fit(const DataArgs& d, const json& hp_json, int folds, std::uint64_t seed, const std::string& out) {
  const auto hp = surrogate::hyperparameters_from_json(hp_json);
  surrogate::validate(hp);
  const auto [raw, pre] = d.load();
  const auto cv = surrogate::cross_validate(pre, hp, folds, stream_key(seed, "cv"));
  const auto model = surrogate::fit(pre, hp, stream_key(seed, "surrogate"));
  std::cout << surrogate::format_metrics(cv.aggregate) << "\n";
  for (const auto& [name, gain] : surrogate::feature_importance(model, 10)) {
    std::cout << "  " << name << " " << io::format_fixed(gain, 3) << "\n";
  }
  if (!out.empty()) {
    io::write_file(out, json{{"model", surrogate::to_json(model)}, {"cv", surrogate::to_json(cv)}}.dump() + "\n");
  }
  return kOk;
}

int cmd_priors(const DataArgs& d, std::vector<std::string> features, const std::vector<std::string>& candidates,
               std::size_t n_iter, std::size_t burn_in, std::uint64_t seed, const std::string& out) {
  const auto families = parse_families(candidates);
  const auto [raw, pre] = d.load();
  if (features.empty()) features = pre.feature_names();
  json result = json::object();
  for (const auto& name : features) {
    const auto column = pre.raw_column(pre.feature_index(name));
    distfit::McmcConfig mc;
    mc.n_iter = n_iter;
    mc.burn_in = burn_in;
    mc.seed = stream_key(seed, "prior:" + name);
    const auto fp = distfit::fit_prior(column, families, mc);
    result[name] = distfit::to_json(fp);
    std::cout << name << ": " << distfit::family_name(fp.family) << " (";
    for (std::size_t i = 0; i < fp.theta().size(); ++i) {
      std::cout << (i ? ", " : "") << io::format_fixed(fp.theta()[i], 4);
    }
    std::cout << ")\n";
  }
  if (!out.empty()) io::write_file(out, result.dump(2) + "\n");
  return kOk;
}

int cmd_cluster(const std::string& embeddings, int k, std::uint64_t seed, const std::string& out,
                const std::string& heatmap) {
  const auto table = geometry::load_embeddings(embeddings);
  const auto sim = geometry::cosine_matrix(table);
  const auto cm = geometry::spectral_cluster(sim, k, stream_key(seed, "cluster"));
  for (int c = 0; c < cm.k; ++c) {
    std::cout << "cluster_" << c << ":";
    for (const auto& m : cm.members(c)) std::cout << " " << m;
    std::cout << "\n";
  }
  if (!out.empty()) io::write_file(out, geometry::to_json(cm).dump(2) + "\n");
  if (!heatmap.empty()) io::write_file(heatmap, plot::heatmap_svg(sim.labels, sim.values, "cosine similarity"));
  return kOk;
}

pipeline::PipelineConfig load_pipeline_config(const std::string& path, const std::string& out,
                                              const PipelineOverrides& ov) {
  auto cfg = pipeline::load_config(path);
  if (!out.empty()) cfg.out = out;
  ov.apply(cfg);
  pipeline::validate(cfg);
  return cfg;
}

int run_pipeline_cmd(pipeline::PipelineConfig cfg) {
  try {
    const auto result = pipeline::run_pipeline(cfg);
    const auto& s = result.report.sections();
    std::cout << "surrogate: " << s["surrogate"]["cv_text"].get<std::string>() << "\n";
    std::cout << "ESS: " << s["abc"]["ess_text"].get<std::string>() << "\n";
    if (s.contains("clusters")) std::cout << "strata: " << s["clusters"]["strata_text"].get<std::string>() << "\n";
    std::cout << "wrote " << result.files.size() << " files to " << cfg.out.string() << "\n";
    return kOk;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::StageFailure) throw;
    std::cerr << "error: " << e.what() << "\n";
    return kStageFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surrogate-based inverse uncertainty quantification for mixed-type tabular data"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset with known ground truth");
  std::size_t rows = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::string truth;
  std::string gen_config;
  double noise_ratio = -1.0;
  bool numeric_only = false;
  gen->add_option("--rows", rows, "number of rows");
  gen->add_option("--seed", seed, "random seed");
  gen->add_option("--out", out, "output CSV")->required();
  gen->add_option("--truth", truth, "ground-truth JSON");
  gen->add_option("--config", gen_config, "generator config JSON")->check(CLI::ExistingFile);
  gen->add_option("--noise-ratio", noise_ratio, "noise sd as a fraction of signal sd");
  gen->add_flag("--numeric-only", numeric_only, "omit the categorical columns");

  auto* fit = app.add_subcommand("fit", "cross-validate and fit the surrogate");
  DataArgs fit_data;
  fit_data.add(fit);
  int n_trees = 300;
  double learning_rate = 0.1;
  int max_depth = 4;
  double lambda = 1.0;
  double min_gain = 1e-6;
  int folds = 10;
  fit->add_option("--n-trees", n_trees);
  fit->add_option("--learning-rate", learning_rate);
  fit->add_option("--max-depth", max_depth);
  fit->add_option("--lambda", lambda);
  fit->add_option("--min-gain", min_gain);
  fit->add_option("--folds", folds);
  fit->add_option("--seed", seed);
  fit->add_option("--out", out, "model JSON");

  auto* pri = app.add_subcommand("priors", "select and fit prior distributions");
  DataArgs pri_data;
  pri_data.add(pri);
  std::vector<std::string> features;
  std::vector<std::string> candidates;
  std::size_t n_iter = 20000;
  std::size_t burn_in = 5000;
  pri->add_option("--feature", features, "feature to fit (repeatable; default all)");
  pri->add_option("--candidates", candidates, "candidate families");
  pri->add_option("--n-iter", n_iter);
  pri->add_option("--burn-in", burn_in);
  pri->add_option("--seed", seed);
  pri->add_option("--out", out, "priors JSON");

  auto* clu = app.add_subcommand("cluster", "spectral clustering of label embeddings");
  std::string embeddings;
  int k = 4;
  std::string heatmap;
  clu->add_option("--embeddings", embeddings)->required()->check(CLI::ExistingFile);
  clu->add_option("--k", k);
  clu->add_option("--seed", seed);
  clu->add_option("--out", out, "cluster JSON");
  clu->add_option("--heatmap", heatmap, "similarity heatmap SVG");

  std::string config;
  PipelineOverrides ov;
  auto* abc_cmd = app.add_subcommand("abc", "run the pipeline through global weighted ABC");
  abc_cmd->add_option("--config", config)->required()->check(CLI::ExistingFile);
  abc_cmd->add_option("--out", out, "output directory");
  ov.add(abc_cmd);

  auto* pipe = app.add_subcommand("pipeline", "run every stage and write report, plots and manifest");
  pipe->add_option("--config", config)->required();
  pipe->add_option("--out", out, "output directory");
  ov.add(pipe);

  auto* plt = app.add_subcommand("plot", "render the plots of an existing report");
  std::string report_path;
  plt->add_option("--report", report_path)->required()->check(CLI::ExistingFile);
  plt->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*gen) return cmd_generate(rows, seed, out, truth, gen_config, noise_ratio, numeric_only);
    if (*fit) {
      const json hp = {{"n_trees", n_trees},
                       {"learning_rate", learning_rate},
                       {"max_depth", max_depth},
                       {"lambda", lambda},
                       {"min_gain", min_gain}};
      return cmd_fit(fit_data, hp, folds, seed, out);
    }
    if (*pri) return cmd_priors(pri_data, features, candidates, n_iter, burn_in, seed, out);
    if (*clu) return cmd_cluster(embeddings, k, seed, out, heatmap);
    if (*abc_cmd || *pipe) {
      pipeline::PipelineConfig cfg;
      try {
        cfg = load_pipeline_config(config, out, ov);
      } catch (const Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
      }
      if (*abc_cmd) cfg.cluster.enabled = false;
      return run_pipeline_cmd(cfg);
    }
    if (*plt) {
      pipeline::PipelineReport report;
      report.doc = io::read_json(report_path);
      const auto files = pipeline::emit_plots(report, out);
      for (const auto& f : files) std::cout << (fs::path(out) / f).string() << "\n";
      return kOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::InvalidConfig || e.code() == ErrorCode::InvalidHyperparameters ? kConfigError
                                                                                                 : kStageFailure;
  }
  return kOk;
}
