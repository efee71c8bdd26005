#include "mixedabc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "mixedabc/error.hpp"
#include "mixedabc/io.hpp"
#include "mixedabc/rng.hpp"
#include "mixedabc/stats.hpp"

namespace mixedabc::dataset {

namespace {

using distfit::Family;

const std::vector<std::string> kClusterNames = {"Triangular", "Rhomboid", "Circular", "Rectangular"};

// Geometry labels per family, shaped like insert designation prefixes.
const std::vector<std::vector<std::string>> kGeometryLabels = {
    {"TCMT", "TNMG", "TPUN"},
    {"CCMT", "CNMG", "DCMT", "DNMG", "VNMG"},
    {"RCMT", "RNGN"},
    {"LCMX", "LNUX"}};

const std::vector<std::vector<std::string>> kFamilyTokens = {
    {"triangular", "three", "edges", "sixty"},
    {"rhombic", "four", "edges", "acute"},
    {"round", "circular", "continuous", "edge"},
    {"rectangular", "four", "edges", "right"}};

const std::vector<std::string> kRecipes = {"recipe_A", "recipe_B", "recipe_C", "recipe_D", "recipe_E"};

// Mean pieces-per-run multiplier for each geometry family.
constexpr double kPiecesMultiplier[] = {1.0, 1.25, 0.35, 0.55};

std::vector<TrueFeature> base_features() {
  return {{"pieces", Family::NegativeBinomial, {2.322, 0.009}, {}},
          {"position", Family::DiscreteUniform, {7, 42}, {}},
          {"area", Family::Logistic, {1763.00, 214.22}, {}},
          {"total_area", Family::Logistic, {80034.27, 3687.89}, {}},
          {"area_sd", Family::Cauchy, {578.56, 30.15}, {}},
          {"area_diff", Family::Normal, {4865.79, 3016.80}, {}}};
}

double negbin_mean(double n, double p) { return n * (1.0 - p) / p; }

double population_sd_of(const TrueFeature& f) {
  const auto& t = f.theta;
  switch (f.family) {
    case Family::Normal: return t[1];
    case Family::Logistic: return t[1] * std::numbers::pi / std::sqrt(3.0);
    case Family::NegativeBinomial: return std::sqrt(t[0] * (1.0 - t[1])) / t[1];
    default: return 1.0;
  }
}

// Embedding axes: vertices of a regular tetrahedron (pairwise cosine -1/3).
const double kAxes[4][3] = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};

}  // namespace

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  GeneratorConfig cfg;
  try {
    cfg.rows = j.value("rows", cfg.rows);
    cfg.cluster_proportions = j.value("cluster_proportions", cfg.cluster_proportions);
    cfg.noise_ratio = j.value("noise_ratio", cfg.noise_ratio);
    cfg.run_size = j.value("run_size", cfg.run_size);
    cfg.categoricals = j.value("categoricals", cfg.categoricals);
    cfg.embedding_jitter = j.value("embedding_jitter", cfg.embedding_jitter);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("generator config: ") + e.what());
  }
  return cfg;
}

nlohmann::json to_json(const GeneratorConfig& cfg) {
  return {{"rows", cfg.rows},
          {"cluster_proportions", cfg.cluster_proportions},
          {"noise_ratio", cfg.noise_ratio},
          {"run_size", cfg.run_size},
          {"categoricals", cfg.categoricals},
          {"embedding_jitter", cfg.embedding_jitter}};
}

double TargetFunction::operator()(double pieces, double area, double area_diff, int cluster) const {
  auto u = [&](const char* name, double x) {
    const auto& [c, s] = standardizer.at(name);
    return (x - c) / s;
  };
  const double ua = u("area", area);
  double y = intercept + coef_area * ua + coef_pieces * u("pieces", pieces) +
             coef_interaction * ua * u("area_diff", area_diff);
  if (use_offsets) y += cluster_offsets.at(static_cast<std::size_t>(cluster));
  return y;
}

std::string TargetFunction::symbolic() const {
  std::ostringstream os;
  os << "thickness = " << io::format_double(intercept) << " + " << io::format_double(coef_area)
     << "*u(area) + " << io::format_double(coef_pieces) << "*u(pieces) + "
     << io::format_double(coef_interaction) << "*u(area)*u(area_diff)";
  if (use_offsets) os << " + offset[geometry_family]";
  os << " + eps; u(x) = (x - center_x) / scale_x; eps ~ Logistic(0, s)";
  return os.str();
}

const TrueFeature& GroundTruth::feature(const std::string& name) const {
  for (const auto& f : features) {
    if (f.name == name) return f;
  }
  throw Error(ErrorCode::UnknownFeature, "ground truth has no feature '" + name + "'");
}

std::vector<std::size_t> apportion(std::span<const double> weights, std::size_t total) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> out(weights.size());
  std::vector<double> rem(weights.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * weights[i] / sum;
    out[i] = static_cast<std::size_t>(std::floor(exact));
    rem[i] = exact - static_cast<double>(out[i]);
    assigned += out[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++out[order[k % order.size()]];
  return out;
}

Schema synthetic_schema(bool categoricals) {
  Schema s = {{"run_id", ColumnKind::Categorical, ColumnRole::RunId, Encoding::None},
              {"position_id", ColumnKind::Integer, ColumnRole::PositionId, Encoding::None},
              {"pieces", ColumnKind::Integer, ColumnRole::Feature, Encoding::Standardize},
              {"position", ColumnKind::Integer, ColumnRole::Feature, Encoding::Standardize},
              {"area", ColumnKind::Continuous, ColumnRole::Feature, Encoding::Standardize},
              {"total_area", ColumnKind::Continuous, ColumnRole::Feature, Encoding::Standardize},
              {"area_sd", ColumnKind::Continuous, ColumnRole::Feature, Encoding::Standardize},
              {"area_diff", ColumnKind::Continuous, ColumnRole::Feature, Encoding::Standardize}};
  if (categoricals) {
    s.push_back({"recipe", ColumnKind::Categorical, ColumnRole::Feature, Encoding::BinaryEncode});
    s.push_back({"geometry", ColumnKind::Categorical, ColumnRole::Feature, Encoding::EmbeddingRef});
  }
  s.push_back({"thickness", ColumnKind::Continuous, ColumnRole::Target, Encoding::None});
  return s;
}

std::pair<Dataset, GroundTruth> generate_synthetic(const GeneratorConfig& cfg, std::uint64_t seed) {
  if (cfg.rows < 1) throw Error(ErrorCode::InvalidConfig, "rows must be at least 1");
  if (cfg.cluster_proportions.size() != kClusterNames.size()) {
    throw Error(ErrorCode::InvalidConfig, "cluster_proportions needs one entry per geometry family (4)");
  }
  for (double p : cfg.cluster_proportions) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw Error(ErrorCode::InvalidConfig, "cluster proportions must be nonnegative");
    }
  }
  const double psum = std::accumulate(cfg.cluster_proportions.begin(), cfg.cluster_proportions.end(), 0.0);
  if (!(psum > 0.0)) throw Error(ErrorCode::InvalidConfig, "cluster proportions sum to zero");
  if (!(cfg.noise_ratio >= 0.0)) throw Error(ErrorCode::InvalidConfig, "noise_ratio must be nonnegative");
  if (cfg.run_size < 1) throw Error(ErrorCode::InvalidConfig, "run_size must be at least 1");

  const std::size_t n = cfg.rows;
  const std::size_t k = kClusterNames.size();
  GroundTruth gt;
  gt.seed = seed;
  gt.rows = n;
  gt.cluster_names = kClusterNames;
  gt.proportions_input = cfg.cluster_proportions;
  for (double p : cfg.cluster_proportions) gt.proportions.push_back(p / psum);
  gt.renormalized = std::abs(psum - 1.0) > 1e-9 && std::abs(psum - 100.0) > 1e-9;
  gt.recipes = cfg.categoricals ? kRecipes : std::vector<std::string>{};

  // Cluster membership: exact apportionment, then a seeded shuffle.
  gt.cluster_counts = apportion(cfg.cluster_proportions, n);
  gt.row_clusters.reserve(n);
  for (std::size_t c = 0; c < k; ++c) gt.row_clusters.insert(gt.row_clusters.end(), gt.cluster_counts[c], static_cast<int>(c));
  {
    Engine eng = make_engine(seed, "cluster");
    for (std::size_t i = n; i > 1; --i) std::swap(gt.row_clusters[i - 1], gt.row_clusters[uniform_index(eng, i)]);
  }

  gt.features = base_features();
  for (auto& f : gt.features) {
    for (std::size_t c = 0; c < k; ++c) {
      auto t = f.theta;
      if (f.name == "pieces") {
        const double m = kPiecesMultiplier[c] * negbin_mean(t[0], t[1]);
        t[1] = t[0] / (t[0] + m);
      }
      f.cluster_theta.push_back(t);
    }
  }

  // Raw numeric columns, each from its own stream.
  Matrix rows(n, gt.features.size());
  for (std::size_t j = 0; j < gt.features.size(); ++j) {
    const auto& f = gt.features[j];
    Engine eng = make_engine(seed, "feature:" + f.name);
    for (std::size_t i = 0; i < n; ++i) {
      rows(i, j) = distfit::draw(f.family, f.cluster_theta[static_cast<std::size_t>(gt.row_clusters[i])], eng);
    }
  }

  // Geometry vocabulary, embeddings and descriptions.
  {
    Engine eng = make_engine(seed, "embedding");
    std::normal_distribution<double> jitter(0.0, 1.0);
    for (std::size_t c = 0; c < k; ++c) {
      for (const auto& label : kGeometryLabels[c]) {
        gt.label_cluster[label] = static_cast<int>(c);
        std::vector<double> v(3);
        for (int d = 0; d < 3; ++d) v[d] = kAxes[c][d] / std::sqrt(3.0) + cfg.embedding_jitter * jitter(eng);
        gt.embeddings[label] = v;
        auto tokens = kFamilyTokens[c];
        tokens.push_back(label);
        tokens.push_back(std::string("clearance_") + label[1]);
        gt.descriptions[label] = tokens;
      }
    }
  }

  std::vector<std::string> geometry(n);
  std::vector<std::string> recipe(n);
  {
    Engine geng = make_engine(seed, "geometry");
    Engine reng = make_engine(seed, "recipe");
    for (std::size_t i = 0; i < n; ++i) {
      const auto& labels = kGeometryLabels[static_cast<std::size_t>(gt.row_clusters[i])];
      geometry[i] = labels[uniform_index(geng, labels.size())];
      recipe[i] = kRecipes[uniform_index(reng, kRecipes.size())];
    }
  }

  // Target.
  auto& tf = gt.target;
  for (const auto& f : gt.features) {
    if (f.name == "pieces" || f.name == "area" || f.name == "area_diff") {
      tf.standardizer[f.name] = {distfit::family_center(f.family, f.theta), population_sd_of(f)};
    }
  }
  tf.use_offsets = cfg.categoricals;
  gt.signal_features = {"area", "pieces"};
  std::vector<double> signal(n);
  for (std::size_t i = 0; i < n; ++i) signal[i] = tf(rows(i, 0), rows(i, 2), rows(i, 5), gt.row_clusters[i]);
  gt.signal_sd = stats::population_sd(signal);
  gt.noise_sd = cfg.noise_ratio * gt.signal_sd;
  gt.noise_scale = gt.noise_sd * std::sqrt(3.0) / std::numbers::pi;
  std::vector<double> targets = signal;
  if (gt.noise_scale > 0.0) {
    Engine eng = make_engine(seed, "noise");
    const double theta[2] = {0.0, gt.noise_scale};
    for (auto& y : targets) y += distfit::draw(Family::Logistic, theta, eng);
  }

  // True means of every model-visible column.
  gt.cluster_feature_means.assign(k, {});
  for (std::size_t c = 0; c < k; ++c) {
    auto& m = gt.cluster_feature_means[c];
    for (const auto& f : gt.features) m[f.name] = distfit::family_center(f.family, f.cluster_theta[c]);
    if (cfg.categoricals) {
      const auto& labels = kGeometryLabels[c];
      for (int d = 0; d < 3; ++d) {
        double acc = 0.0;
        for (const auto& l : labels) acc += gt.embeddings[l][static_cast<std::size_t>(d)];
        m["geometry_e" + std::to_string(d)] = acc / static_cast<double>(labels.size());
      }
      const std::size_t bits = code_width(kRecipes.size());
      for (std::size_t b = 0; b < bits; ++b) {
        double acc = 0.0;
        for (std::uint32_t code = 0; code < kRecipes.size(); ++code) acc += (code >> b) & 1U;
        m["recipe_b" + std::to_string(b)] = acc / static_cast<double>(kRecipes.size());
      }
    }
  }
  for (const auto& [name, v] : gt.cluster_feature_means[0]) {
    double acc = 0.0;
    for (std::size_t c = 0; c < k; ++c) acc += gt.proportions[c] * gt.cluster_feature_means[c].at(name);
    gt.feature_means[name] = acc;
  }
  {
    const auto& [cp, sp] = tf.standardizer.at("pieces");
    gt.target_mean = tf.intercept + tf.coef_pieces * (gt.feature_means.at("pieces") - cp) / sp;
    if (tf.use_offsets) {
      for (std::size_t c = 0; c < k; ++c) gt.target_mean += gt.proportions[c] * tf.cluster_offsets[c];
    }
  }

  Dataset ds;
  ds.columns = synthetic_schema(cfg.categoricals);
  for (const auto& f : gt.features) {
    const bool integer = distfit::is_discrete(f.family);
    ds.features.push_back({f.name, f.name, integer ? ColumnKind::Integer : ColumnKind::Continuous});
  }
  ds.rows = std::move(rows);
  ds.targets = std::move(targets);
  for (std::size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "R%04zu", i / cfg.run_size + 1);
    ds.run_ids.emplace_back(buf);
    ds.position_ids.push_back(static_cast<std::int64_t>(i % cfg.run_size + 1));
  }
  if (cfg.categoricals) {
    ds.categories["recipe"] = std::move(recipe);
    ds.categories["geometry"] = std::move(geometry);
  }
  return {std::move(ds), std::move(gt)};
}

nlohmann::json to_json(const GroundTruth& gt) {
  nlohmann::json feats = nlohmann::json::array();
  for (const auto& f : gt.features) {
    feats.push_back({{"name", f.name},
                     {"family", std::string(distfit::family_name(f.family))},
                     {"theta", f.theta},
                     {"cluster_theta", f.cluster_theta}});
  }
  nlohmann::json stdz = nlohmann::json::object();
  for (const auto& [name, cs] : gt.target.standardizer) stdz[name] = {{"center", cs.first}, {"scale", cs.second}};
  nlohmann::json emb = nlohmann::json::object();
  for (const auto& [label, v] : gt.embeddings) emb[label] = v;
  return {{"seed", gt.seed},
          {"rows", gt.rows},
          {"features", feats},
          {"feature_means", gt.feature_means},
          {"cluster_feature_means", gt.cluster_feature_means},
          {"clusters",
           {{"names", gt.cluster_names},
            {"proportions_input", gt.proportions_input},
            {"proportions", gt.proportions},
            {"renormalized", gt.renormalized},
            {"counts", gt.cluster_counts},
            {"label_cluster", gt.label_cluster},
            {"row_clusters", gt.row_clusters}}},
          {"geometry", {{"embeddings", emb}, {"descriptions", gt.descriptions}}},
          {"recipes", gt.recipes},
          {"target",
           {{"symbolic", gt.target.symbolic()},
            {"intercept", gt.target.intercept},
            {"coef_area", gt.target.coef_area},
            {"coef_pieces", gt.target.coef_pieces},
            {"coef_interaction", gt.target.coef_interaction},
            {"standardizer", stdz},
            {"cluster_offsets", gt.target.use_offsets ? nlohmann::json(gt.target.cluster_offsets)
                                                      : nlohmann::json(nullptr)},
            {"signal_features", gt.signal_features},
            {"signal_sd", gt.signal_sd},
            {"noise", {{"family", "logistic"}, {"mu", 0.0}, {"s", gt.noise_scale}, {"sd", gt.noise_sd}}},
            {"mean", gt.target_mean}}}};
}

}  // namespace mixedabc::dataset
