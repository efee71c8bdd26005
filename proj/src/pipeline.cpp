#include "mixedabc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "mixedabc/abc.hpp"
#include "mixedabc/dataset.hpp"
#include "mixedabc/distfit.hpp"
#include "mixedabc/error.hpp"
#include "mixedabc/geometry.hpp"
#include "mixedabc/io.hpp"
#include "mixedabc/plot.hpp"
#include "mixedabc/rng.hpp"
#include "mixedabc/stats.hpp"

namespace mixedabc::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void bad_config(const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); }

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) bad_config(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      bad_config("unknown key '" + key + "' in " + where);
    }
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::string observed_name(ObservedMode m) { return m == ObservedMode::Pooled ? "pooled" : "run_means"; }

}  // namespace

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
  PipelineConfig cfg;
  check_keys(j, "config",
             {"data", "schema", "embeddings", "out", "seed", "surrogate", "candidates", "top_q", "mcmc", "abc",
              "cluster", "ranking"});
  try {
    if (!j.contains("data")) bad_config("missing 'data'");
    if (!j.contains("schema")) bad_config("missing 'schema'");
    cfg.data = resolve(base_dir, j.at("data").get<std::string>());
    cfg.schema = resolve(base_dir, j.at("schema").get<std::string>());
    if (j.contains("embeddings") && !j["embeddings"].is_null()) {
      cfg.embeddings = resolve(base_dir, j["embeddings"].get<std::string>());
    }
    if (j.contains("out")) cfg.out = resolve(base_dir, j["out"].get<std::string>());
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("surrogate")) {
      const auto& s = j["surrogate"];
      check_keys(s, "surrogate",
                 {"n_trees", "learning_rate", "max_depth", "lambda", "min_gain", "cv_folds", "holdout_fraction"});
      cfg.hp = surrogate::hyperparameters_from_json(s, cfg.hp);
      cfg.cv_folds = s.value("cv_folds", cfg.cv_folds);
      cfg.holdout_fraction = s.value("holdout_fraction", cfg.holdout_fraction);
    }
    if (j.contains("candidates")) {
      cfg.candidates.clear();
      for (const auto& name : j["candidates"]) cfg.candidates.push_back(distfit::family_from_name(name.get<std::string>()));
    }
    if (j.contains("top_q")) {
      const auto q = j["top_q"].get<long long>();
      if (q < 1) bad_config("top_q must be at least 1");
      cfg.top_q = static_cast<std::size_t>(q);
    }
    if (j.contains("mcmc")) {
      check_keys(j["mcmc"], "mcmc", {"n_iter", "burn_in"});
      cfg.mcmc_iter = j["mcmc"].value("n_iter", cfg.mcmc_iter);
      cfg.mcmc_burn_in = j["mcmc"].value("burn_in", cfg.mcmc_burn_in);
    }
    if (j.contains("abc")) {
      const auto& a = j["abc"];
      check_keys(a, "abc", {"n_sims", "sims_per_draw", "observed", "standardize", "kernel_scale"});
      if (a.contains("n_sims")) {
        const auto n = a["n_sims"].get<long long>();
        if (n < 1) bad_config("abc.n_sims must be at least 1");
        cfg.abc.n_sims = static_cast<std::size_t>(n);
      }
      if (a.contains("sims_per_draw")) {
        const auto n = a["sims_per_draw"].get<long long>();
        if (n < 2) bad_config("abc.sims_per_draw must be at least 2");
        cfg.abc.sims_per_draw = static_cast<std::size_t>(n);
      }
      if (a.contains("observed")) {
        const auto o = a["observed"].get<std::string>();
        if (o == "pooled") {
          cfg.abc.observed = ObservedMode::Pooled;
        } else if (o == "run_means") {
          cfg.abc.observed = ObservedMode::RunMeans;
        } else {
          bad_config("abc.observed must be 'pooled' or 'run_means'");
        }
      }
      cfg.abc.standardize = a.value("standardize", cfg.abc.standardize);
      if (a.contains("kernel_scale")) {
        const auto& k = a["kernel_scale"];
        if (k.is_number()) {
          cfg.abc.kernel_scale = KernelScale::Fixed;
          cfg.abc.fixed_scale = k.get<double>();
        } else if (k == "residual") {
          cfg.abc.kernel_scale = KernelScale::Residual;
        } else if (k == "median_distance") {
          cfg.abc.kernel_scale = KernelScale::MedianDistance;
        } else {
          bad_config("abc.kernel_scale must be 'residual', 'median_distance' or a positive number");
        }
      }
    }
    if (j.contains("cluster")) {
      const auto& c = j["cluster"];
      check_keys(c, "cluster", {"enabled", "k", "geometry_column"});
      cfg.cluster.enabled = c.value("enabled", cfg.cluster.enabled);
      cfg.cluster.k = c.value("k", cfg.cluster.k);
      cfg.cluster.geometry_column = c.value("geometry_column", cfg.cluster.geometry_column);
    }
    if (j.contains("ranking")) {
      check_keys(j["ranking"], "ranking", {"nominal", "tolerance"});
      cfg.nominal = j["ranking"].value("nominal", cfg.nominal);
      cfg.tolerance = j["ranking"].value("tolerance", cfg.tolerance);
    }
  } catch (const json::exception& e) {
    bad_config(std::string("config: ") + e.what());
  }
  return cfg;
}

PipelineConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    bad_config("cannot parse " + path.string() + ": " + e.what());
  } catch (const Error& e) {
    bad_config(e.what());
  }
  return config_from_json(j, path.parent_path());
}

json to_json(const PipelineConfig& cfg) {
  json candidates = json::array();
  for (auto f : cfg.candidates) candidates.push_back(std::string(distfit::family_name(f)));
  json surrogate = surrogate::to_json(cfg.hp);
  surrogate["cv_folds"] = cfg.cv_folds;
  surrogate["holdout_fraction"] = cfg.holdout_fraction;
  json kernel;
  switch (cfg.abc.kernel_scale) {
    case KernelScale::Residual: kernel = "residual"; break;
    case KernelScale::MedianDistance: kernel = "median_distance"; break;
    case KernelScale::Fixed: kernel = cfg.abc.fixed_scale; break;
  }
  return {{"data", cfg.data.string()},
          {"schema", cfg.schema.string()},
          {"embeddings", cfg.embeddings ? json(cfg.embeddings->string()) : json(nullptr)},
          {"out", cfg.out.string()},
          {"seed", cfg.seed},
          {"surrogate", surrogate},
          {"candidates", candidates},
          {"top_q", cfg.top_q},
          {"mcmc", {{"n_iter", cfg.mcmc_iter}, {"burn_in", cfg.mcmc_burn_in}}},
          {"abc",
           {{"n_sims", cfg.abc.n_sims},
            {"sims_per_draw", cfg.abc.sims_per_draw},
            {"observed", observed_name(cfg.abc.observed)},
            {"standardize", cfg.abc.standardize},
            {"kernel_scale", kernel}}},
          {"cluster",
           {{"enabled", cfg.cluster.enabled}, {"k", cfg.cluster.k}, {"geometry_column", cfg.cluster.geometry_column}}},
          {"ranking", {{"nominal", cfg.nominal}, {"tolerance", cfg.tolerance}}}};
}

void validate(const PipelineConfig& cfg) {
  try {
    surrogate::validate(cfg.hp);
  } catch (const Error& e) {
    bad_config(e.what());
  }
  if (cfg.top_q < 1) bad_config("top_q must be at least 1");
  if (cfg.abc.n_sims < 1) bad_config("abc.n_sims must be at least 1");
  if (cfg.abc.sims_per_draw < 2) bad_config("abc.sims_per_draw must be at least 2");
  if (cfg.abc.kernel_scale == KernelScale::Fixed && !(cfg.abc.fixed_scale > 0.0)) {
    bad_config("abc.kernel_scale must be positive");
  }
  if (cfg.cv_folds < 2) bad_config("surrogate.cv_folds must be at least 2");
  if (!(cfg.holdout_fraction > 0.0 && cfg.holdout_fraction < 1.0)) {
    bad_config("surrogate.holdout_fraction must lie in (0, 1)");
  }
  if (cfg.candidates.empty()) bad_config("candidates must not be empty");
  if (cfg.mcmc_iter <= cfg.mcmc_burn_in) bad_config("mcmc.n_iter must exceed mcmc.burn_in");
  if (!(cfg.tolerance > 0.0)) bad_config("ranking.tolerance must be positive");
  if (cfg.cluster.enabled) {
    if (cfg.cluster.k < 1) bad_config("cluster.k must be at least 1");
    if (!cfg.embeddings) bad_config("clustering needs an embeddings file");
  }
  for (const auto* p : {&cfg.data, &cfg.schema}) {
    if (!fs::exists(*p)) bad_config("no such file: " + p->string());
  }
  if (cfg.embeddings && !fs::exists(*cfg.embeddings)) bad_config("no such file: " + cfg.embeddings->string());
}

std::vector<std::string> PipelineReport::section_names() const {
  std::vector<std::string> names;
  for (const char* s : kStages) {
    if (sections().contains(s)) names.emplace_back(s);
  }
  return names;
}

std::string dump(const json& j) { return j.dump() + "\n"; }

namespace {

struct PriorStage {
  abc::PriorSet priors;
  json section;
};

/// Priors for every model input: fitted for the selected features (pinned
/// to the median when no candidate fits), the median for the rest.
PriorStage build_priors(const dataset::Dataset& pre, const std::vector<std::string>& selected,
                        const PipelineConfig& cfg, const std::string& seed_prefix) {
  PriorStage out;
  out.section["features"] = json::array();
  const std::set<std::string> chosen(selected.begin(), selected.end());
  json pinned = json::object();
  for (std::size_t j = 0; j < pre.width(); ++j) {
    const auto& name = pre.features[j].name;
    const auto column = pre.raw_column(j);
    const double median = stats::median(column);
    if (!chosen.contains(name)) {
      out.priors[name] = abc::FeaturePrior::constant(median);
      pinned[name] = median;
      continue;
    }
    json entry = {{"feature", name}};
    try {
      distfit::McmcConfig mc;
      mc.n_iter = cfg.mcmc_iter;
      mc.burn_in = cfg.mcmc_burn_in;
      mc.seed = stream_key(cfg.seed, seed_prefix + name);
      std::vector<distfit::FittedPrior> all;
      auto fp = distfit::fit_prior(column, cfg.candidates, mc, &all);
      entry["prior"] = distfit::to_json(fp);
      entry["candidates"] = json::array();
      for (const auto& c : all) {
        entry["candidates"].push_back({{"family", std::string(distfit::family_name(c.family))},
                                       {"aic", c.aic},
                                       {"model_prob", c.model_prob},
                                       {"theta_hat", c.theta_hat}});
      }
      entry["pinned"] = nullptr;
      out.priors[name] = abc::FeaturePrior::fitted(std::move(fp));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateSample && e.code() != ErrorCode::NoValidCandidate &&
          e.code() != ErrorCode::TooFewValues && e.code() != ErrorCode::SupportViolation) {
        throw;
      }
      entry["prior"] = nullptr;
      entry["candidates"] = json::array();
      entry["pinned"] = median;
      entry["reason"] = e.what();
      out.priors[name] = abc::FeaturePrior::constant(median);
    }
    entry["sample_mean"] = stats::mean(column);
    entry["sample_sd"] = stats::sample_sd(column);
    out.section["features"].push_back(entry);
  }
  out.section["pinned"] = pinned;
  return out;
}

std::vector<double> observed_sample(const dataset::Dataset& ds, ObservedMode mode) {
  if (mode == ObservedMode::Pooled) return ds.targets;
  if (ds.run_ids.empty()) throw Error(ErrorCode::InvalidConfig, "run_means needs a run_id column");
  std::map<std::string, std::pair<double, std::size_t>> groups;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto& g = groups[ds.run_ids[i]];
    g.first += ds.targets[i];
    ++g.second;
  }
  std::vector<double> means;
  for (const auto& [_, g] : groups) means.push_back(g.first / static_cast<double>(g.second));
  return means;
}

struct AbcContext {
  const surrogate::SurrogateModel* model = nullptr;
  abc::NoiseModel noise;
  abc::KernelDescriptor residual_kernel;
};

/// Weighted ABC for one set of priors and observations, followed by
/// forward validation and the summary sufficiency diagnostic.
json abc_section(const AbcContext& ctx, const abc::PriorSet& priors, const std::vector<std::string>& selected,
                 std::span<const double> obs, const PipelineConfig& cfg, const std::string& stream) {
  const auto seed = stream_key(cfg.seed, stream);
  const auto sims =
      abc::simulate_forward(*ctx.model, priors, ctx.noise, cfg.abc.n_sims, cfg.abc.sims_per_draw, seed);
  const auto observed = abc::summarize(obs);
  const abc::WeighOptions opts{cfg.abc.standardize};

  abc::KernelDescriptor kernel = ctx.residual_kernel;
  if (cfg.abc.kernel_scale == KernelScale::MedianDistance) {
    const auto d = abc::summary_distances(sims, obs, opts);
    kernel.s = stats::median(d);
    if (!(kernel.s > 0.0)) kernel.s = ctx.residual_kernel.s;
  } else if (cfg.abc.kernel_scale == KernelScale::Fixed) {
    kernel.s = cfg.abc.fixed_scale;
  }
  const auto wp = abc::weigh(sims, obs, kernel, opts);

  json s;
  s["observed_mode"] = observed_name(cfg.abc.observed);
  s["n_observed"] = obs.size();
  s["n_sims"] = cfg.abc.n_sims;
  s["sims_per_draw"] = cfg.abc.sims_per_draw;
  s["kernel"] = abc::to_json(kernel);
  s["ess"] = wp.ess;
  s["ess_fraction"] = wp.ess_fraction();
  s["ess_text"] = abc::format_ess(wp.ess, wp.size());
  s["posterior"] = abc::to_json(wp);
  s["summaries"] = json::array();
  for (const auto& f : selected) {
    if (priors.at(f).prior) s["summaries"].push_back(abc::to_json(abc::posterior_summary(wp, f)));
  }
  const auto vr = abc::forward_validate(wp, *ctx.model, ctx.noise, obs, stream_key(seed, "validate"));
  auto v = abc::to_json(vr);
  v["observed"] = vr.observed;
  v["predicted"] = vr.predicted;
  s["validation"] = v;
  if (obs.size() >= 8) {
    s["sufficiency"] = abc::to_json(abc::sufficiency_check(obs, observed));
  } else {
    s["sufficiency"] = nullptr;
  }
  return s;
}

template <class F>
void run_stage(const char* name, PipelineReport& report, F&& body) {
  try {
    report.doc["sections"][name] = body();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::StageFailure) throw;
    throw Error(ErrorCode::StageFailure, std::string(name) + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::StageFailure, std::string(name) + ": " + e.what());
  }
}

}  // namespace

void run_stages(const PipelineConfig& cfg, PipelineReport& report) {
  dataset::Dataset raw;
  dataset::Dataset pre;
  std::optional<geometry::EmbeddingTable> embeddings;

  // Loading belongs to the surrogate stage: a bad data file is a stage failure.
  surrogate::SurrogateModel model;
  std::vector<std::string> selected;
  AbcContext ctx;
  abc::PriorSet global_priors;

  json cfg_echo = to_json(cfg);
  cfg_echo.erase("out");
  report.doc["meta"]["config"] = cfg_echo;

  run_stage("surrogate", report, [&] {
    const auto schema = dataset::load_schema(cfg.schema);
    raw = dataset::load_dataset(cfg.data, schema);
    if (cfg.embeddings) embeddings = geometry::load_embeddings(*cfg.embeddings);
    const auto emap = embeddings ? embeddings->to_map() : dataset::EmbeddingMap{};
    pre = dataset::preprocess(raw, embeddings ? &emap : nullptr);

    json meta = {{"rows", pre.size()},
                 {"features", pre.feature_names()},
                 {"target", pre.target_spec().name},
                 {"runs", std::set<std::string>(raw.run_ids.begin(), raw.run_ids.end()).size()}};
    report.doc["meta"]["data"] = meta;
    json ranking = json::array();
    if (!raw.run_ids.empty()) {
      for (const auto& r : dataset::rank_runs(raw, cfg.nominal, cfg.tolerance)) ranking.push_back(dataset::to_json(r));
    }
    report.doc["meta"]["run_ranking"] = ranking;

    const auto cv = surrogate::cross_validate(pre, cfg.hp, cfg.cv_folds, stream_key(cfg.seed, "cv"));
    model = surrogate::fit(pre, cfg.hp, stream_key(cfg.seed, "surrogate"));
    json s;
    s["cv"] = surrogate::to_json(cv);
    s["cv_text"] = surrogate::format_metrics(cv.aggregate);
    s["parity"] = {{"actual", pre.targets}, {"predicted", cv.oof_prediction}};
    s["hyperparameters"] = surrogate::to_json(cfg.hp);
    s["n_trees"] = model.trees.size();
    return s;
  });

  run_stage("importance", report, [&] {
    const auto ranking = surrogate::feature_importance(model, model.width());
    json r = json::array();
    for (const auto& [name, gain] : ranking) r.push_back({{"feature", name}, {"total_gain", gain}});
    const std::size_t q = std::min(cfg.top_q, ranking.size());
    for (std::size_t i = 0; i < q; ++i) selected.push_back(ranking[i].first);
    return json{{"ranking", r}, {"top_q", q}, {"selected", selected}};
  });

  run_stage("priors", report, [&] {
    auto stage = build_priors(pre, selected, cfg, "prior:");
    global_priors = std::move(stage.priors);

    // Residual distribution from a model that never saw the holdout rows.
    std::vector<std::size_t> order(pre.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Engine eng = make_engine(cfg.seed, "holdout");
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(eng, i)]);
    const auto n_hold = static_cast<std::size_t>(std::llround(cfg.holdout_fraction * static_cast<double>(pre.size())));
    if (n_hold < 8 || n_hold >= pre.size()) throw Error(ErrorCode::TooFewRows, "holdout split leaves too few rows");
    std::vector<std::size_t> hold(order.begin(), order.begin() + static_cast<long>(n_hold));
    std::vector<std::size_t> train(order.begin() + static_cast<long>(n_hold), order.end());
    std::sort(hold.begin(), hold.end());
    std::sort(train.begin(), train.end());
    const auto holdout_model = surrogate::fit(dataset::subset(pre, train), cfg.hp, stream_key(cfg.seed, "holdout"));
    const auto res = surrogate::residuals(holdout_model, dataset::subset(pre, hold));

    std::vector<distfit::Family> continuous;
    for (auto f : cfg.candidates) {
      if (!distfit::is_discrete(f)) continuous.push_back(f);
    }
    if (continuous.empty()) continuous = {distfit::Family::Logistic};
    distfit::McmcConfig mc;
    mc.n_iter = cfg.mcmc_iter;
    mc.burn_in = cfg.mcmc_burn_in;
    mc.seed = stream_key(cfg.seed, "residual");
    std::vector<distfit::FittedPrior> all;
    const auto best = distfit::fit_prior(res, continuous, mc, &all);

    // The kernel is always logistic; its parameters come from the best fit
    // when that is logistic, else from the logistic MLE.
    std::vector<double> logistic_theta;
    if (best.family == distfit::Family::Logistic) {
      logistic_theta = best.theta();
    } else {
      logistic_theta = distfit::fit_family(distfit::Family::Logistic, res).theta;
    }
    ctx.model = &model;
    ctx.noise = {best.family, best.theta(), 1.0};
    ctx.residual_kernel = {"logistic_pdf", logistic_theta[0], logistic_theta[1]};

    json r;
    r["n_holdout"] = n_hold;
    r["fit"] = distfit::to_json(best);
    r["candidates"] = json::array();
    for (const auto& c : all) {
      r["candidates"].push_back({{"family", std::string(distfit::family_name(c.family))},
                                 {"aic", c.aic},
                                 {"model_prob", c.model_prob},
                                 {"theta_hat", c.theta_hat}});
    }
    r["mean"] = stats::mean(res);
    r["sd"] = stats::sample_sd(res);
    r["noise"] = abc::to_json(ctx.noise);
    r["kernel"] = abc::to_json(ctx.residual_kernel);
    stage.section["residual"] = r;
    return stage.section;
  });

  run_stage("abc", report, [&] {
    const auto obs = observed_sample(pre, cfg.abc.observed);
    return abc_section(ctx, global_priors, selected, obs, cfg, "abc");
  });

  if (!cfg.cluster.enabled) return;

  run_stage("clusters", report, [&] {
    const auto cat = raw.categories.find(cfg.cluster.geometry_column);
    if (cat == raw.categories.end()) {
      throw Error(ErrorCode::MissingColumn, "no categorical column '" + cfg.cluster.geometry_column + "'");
    }
    const auto& labels_by_row = cat->second;
    const std::set<std::string> present(labels_by_row.begin(), labels_by_row.end());
    dataset::EmbeddingMap restricted;
    const auto emap = embeddings->to_map();
    for (const auto& label : present) {
      const auto it = emap.find(label);
      if (it == emap.end()) throw Error(ErrorCode::UnknownGeometry, "no embedding for geometry '" + label + "'");
      restricted[label] = it->second;
    }
    const auto sim = geometry::cosine_matrix(geometry::EmbeddingTable::from_map(restricted));
    const auto cm = geometry::spectral_cluster(sim, cfg.cluster.k, stream_key(cfg.seed, "cluster"));

    std::vector<std::vector<std::size_t>> rows(static_cast<std::size_t>(cm.k));
    for (std::size_t i = 0; i < labels_by_row.size(); ++i) {
      rows[static_cast<std::size_t>(cm.cluster_of(labels_by_row[i]))].push_back(i);
    }

    json section;
    section["model"] = geometry::to_json(cm);
    json values = json::array();
    for (std::size_t i = 0; i < sim.values.rows(); ++i) {
      values.push_back(std::vector<double>(sim.values.row(i).begin(), sim.values.row(i).end()));
    }
    section["similarity"] = {{"labels", sim.labels}, {"values", values}};
    std::vector<std::pair<std::string, std::size_t>> sizes;
    section["per_cluster"] = json::array();
    for (int c = 0; c < cm.k; ++c) {
      const auto& idx = rows[static_cast<std::size_t>(c)];
      const std::string name = "cluster_" + std::to_string(c);
      sizes.emplace_back(name, idx.size());
      const auto stratum = dataset::subset(pre, idx);
      json entry = {{"cluster", c}, {"name", name}, {"members", cm.members(c)}, {"n_rows", idx.size()}};
      if (idx.size() < 2) {
        entry["priors"] = nullptr;
        entry["abc"] = nullptr;
        section["per_cluster"].push_back(entry);
        continue;
      }
      auto stage = build_priors(stratum, selected, cfg, "prior:" + name + ":");
      entry["priors"] = stage.section;
      const auto obs = observed_sample(stratum, cfg.abc.observed);
      entry["abc"] = abc_section(ctx, stage.priors, selected, obs, cfg, "abc:" + name);
      section["per_cluster"].push_back(entry);
    }
    section["strata_text"] = geometry::format_strata(sizes);
    return section;
  });
}

namespace {

std::vector<double> doubles(const json& j) { return j.get<std::vector<double>>(); }

std::vector<plot::PosteriorPanel> panels_of(const json& abc_section) {
  std::vector<plot::PosteriorPanel> panels;
  const auto& post = abc_section.at("posterior");
  const auto names = post.at("feature_names").get<std::vector<std::string>>();
  const auto weights = doubles(post.at("norm_weights"));
  for (const auto& s : abc_section.at("summaries")) {
    plot::PosteriorPanel p;
    p.feature = s.at("feature").get<std::string>();
    const auto col = static_cast<std::size_t>(std::find(names.begin(), names.end(), p.feature) - names.begin());
    for (const auto& row : post.at("draws")) p.values.push_back(row.at(col).get<double>());
    p.weights = weights;
    p.ci95_lo = s.at("ci95").at(0).get<double>();
    p.ci95_hi = s.at("ci95").at(1).get<double>();
    p.ci50_lo = s.at("ci50").at(0).get<double>();
    p.ci50_hi = s.at("ci50").at(1).get<double>();
    p.median = s.at("median").get<double>();
    p.mean = s.at("mean").get<double>();
    panels.push_back(std::move(p));
  }
  return panels;
}

}  // namespace

std::vector<fs::path> emit_plots(const PipelineReport& report, const fs::path& outdir) {
  std::vector<fs::path> files;
  auto emit = [&](const std::string& name, const std::string& svg) {
    io::write_file(outdir / name, svg);
    files.emplace_back(name);
  };
  const auto& s = report.sections();
  if (s.contains("surrogate")) {
    const auto& p = s["surrogate"].at("parity");
    emit("parity.svg", plot::parity_svg(doubles(p.at("actual")), doubles(p.at("predicted")),
                                        "out-of-fold predictions, " + s["surrogate"].at("cv_text").get<std::string>()));
  }
  if (s.contains("importance")) {
    std::vector<std::pair<std::string, double>> ranking;
    for (const auto& r : s["importance"].at("ranking")) {
      ranking.emplace_back(r.at("feature").get<std::string>(), r.at("total_gain").get<double>());
    }
    emit("importance.svg", plot::importance_svg(ranking, 10));
  }
  if (s.contains("abc")) {
    const auto& a = s["abc"];
    emit("posterior.svg", plot::posterior_svg(panels_of(a), "posterior, ESS " + a.at("ess_text").get<std::string>()));
    const auto& v = a.at("validation");
    emit("forward.svg", plot::forward_svg(doubles(v.at("observed")), doubles(v.at("predicted")), "forward validation"));
  }
  if (s.contains("clusters") && !s["clusters"].at("per_cluster").empty()) {
    const auto& c = s["clusters"];
    Matrix values;
    for (const auto& row : c.at("similarity").at("values")) values.append_row(doubles(row));
    emit("similarity_heatmap.svg",
         plot::heatmap_svg(c.at("similarity").at("labels").get<std::vector<std::string>>(), values,
                           "cosine similarity"));
    for (const auto& entry : c.at("per_cluster")) {
      if (entry.at("abc").is_null()) continue;
      const auto name = entry.at("name").get<std::string>();
      const auto& a = entry.at("abc");
      emit("posterior_" + name + ".svg",
           plot::posterior_svg(panels_of(a), name + " posterior, ESS " + a.at("ess_text").get<std::string>()));
      const auto& v = a.at("validation");
      emit("forward_" + name + ".svg",
           plot::forward_svg(doubles(v.at("observed")), doubles(v.at("predicted")), name + " forward validation"));
    }
  }
  return files;
}

void write_manifest(const fs::path& outdir, const std::vector<fs::path>& files, const std::string& status,
                    const std::string& failed_stage, const std::string& error) {
  json list = json::array();
  for (const auto& f : files) {
    const auto bytes = io::read_file(outdir / f);
    list.push_back({{"path", f.generic_string()}, {"sha256", io::sha256_hex(bytes)}, {"bytes", bytes.size()}});
  }
  json m = {{"status", status},
            {"failed_stage", failed_stage.empty() ? json(nullptr) : json(failed_stage)},
            {"error", error.empty() ? json(nullptr) : json(error)},
            {"files", list}};
  io::write_file(outdir / "MANIFEST.json", m.dump(2) + "\n");
}

RunResult run_pipeline(const PipelineConfig& cfg) {
  RunResult result;
  try {
    run_stages(cfg, result.report);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::StageFailure) throw;
    result.ok = false;
    result.error = e.what();
    for (const char* s : kStages) {
      if (!result.report.sections().contains(s)) {
        result.failed_stage = s;
        break;
      }
    }
  }
  result.report.doc["meta"]["completed_stages"] = result.report.section_names();
  io::write_file(cfg.out / "report.json", dump(result.report.doc));
  result.files.emplace_back("report.json");
  try {
    for (auto& f : emit_plots(result.report, cfg.out)) result.files.push_back(std::move(f));
  } catch (const Error&) {
    if (result.ok) throw;
  }
  write_manifest(cfg.out, result.files, result.ok ? "complete" : "failed", result.failed_stage, result.error);
  if (!result.ok) throw Error(ErrorCode::StageFailure, result.error.substr(result.error.find(": ") + 2));
  return result;
}

}  // namespace mixedabc::pipeline
