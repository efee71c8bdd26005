#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mixedabc/dataset.hpp"
#include "mixedabc/distributions.hpp"

namespace mixedabc::dataset {

struct GeneratorConfig {
  std::size_t rows = 4000;
  /// Geometry-family shares (triangular, rhomboid, circular, rectangular);
  /// percentages or fractions, renormalized to sum to 1.
  std::vector<double> cluster_proportions = {26.77, 57.36, 8.06, 22.75};
  /// Noise sd as a fraction of the sd of the noiseless target.
  double noise_ratio = 0.1;
  std::size_t run_size = 15;
  /// Emit the `recipe` and `geometry` categorical columns (and the
  /// geometry-dependent target offsets). Off leaves six numeric features.
  bool categoricals = true;
  /// Per-component sd of the jitter added to each family's embedding axis.
  double embedding_jitter = 0.12;
};

GeneratorConfig generator_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GeneratorConfig& cfg);

struct TrueFeature {
  std::string name;
  distfit::Family family = distfit::Family::Normal;
  std::vector<double> theta;               // base (population) parameters
  std::vector<std::vector<double>> cluster_theta;  // per geometry family
};

/// thickness = intercept + a*u(area) + b*u(pieces) + c*u(area)*u(area_diff)
///             + offset[family] + noise,  u(x) = (x - center_x) / scale_x
struct TargetFunction {
  double intercept = 6.2;
  double coef_area = 0.30;
  double coef_pieces = -0.20;
  double coef_interaction = 0.08;
  std::map<std::string, std::pair<double, double>> standardizer;  // name -> (center, scale)
  std::vector<double> cluster_offsets = {0.05, -0.05, 0.10, 0.0};
  bool use_offsets = true;

  [[nodiscard]] double operator()(double pieces, double area, double area_diff, int cluster) const;
  [[nodiscard]] std::string symbolic() const;
};

struct GroundTruth {
  std::uint64_t seed = 0;
  std::size_t rows = 0;
  std::vector<TrueFeature> features;
  std::vector<std::string> cluster_names;
  std::vector<double> proportions_input;
  std::vector<double> proportions;
  bool renormalized = false;
  std::vector<std::size_t> cluster_counts;
  std::vector<int> row_clusters;
  std::map<std::string, int> label_cluster;  // geometry label -> family index
  EmbeddingMap embeddings;
  std::map<std::string, std::vector<std::string>> descriptions;
  std::vector<std::string> recipes;
  TargetFunction target;
  std::vector<std::string> signal_features;
  double signal_sd = 0.0;
  double noise_sd = 0.0;
  double noise_scale = 0.0;  // logistic s

  /// True mean of every model-visible column, raw features and encoded
  /// categorical components alike (Cauchy columns report their location).
  std::map<std::string, double> feature_means;
  std::vector<std::map<std::string, double>> cluster_feature_means;

  /// Expected target under the generating distributions.
  double target_mean = 0.0;

  [[nodiscard]] const TrueFeature& feature(const std::string& name) const;
};

nlohmann::json to_json(const GroundTruth& gt);

/// Schema of the generated CSV.
Schema synthetic_schema(bool categoricals);

std::pair<Dataset, GroundTruth> generate_synthetic(const GeneratorConfig& cfg, std::uint64_t seed);

/// Largest-remainder apportionment of `total` items by (nonnegative) weights.
std::vector<std::size_t> apportion(std::span<const double> weights, std::size_t total);

}  // namespace mixedabc::dataset
