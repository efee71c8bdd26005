#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mixedabc/dataset.hpp"

namespace mixedabc::surrogate {

struct Hyperparameters {
  int n_trees = 300;
  double learning_rate = 0.1;
  int max_depth = 4;  // 0 gives a model that predicts base_score
  double lambda = 1.0;
  double min_gain = 1e-6;
};

void validate(const Hyperparameters& hp);

/// Internal nodes send x to `left` when x[feature] < threshold.
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double leaf_value = 0.0;
  double gain = 0.0;

  [[nodiscard]] bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  [[nodiscard]] double leaf_value(std::span<const double> x) const;
  friend bool operator==(const Tree&, const Tree&) = default;
};

struct SurrogateModel {
  double base_score = 0.0;
  std::vector<Tree> trees;
  Hyperparameters hp;
  std::vector<std::string> feature_names;
  std::vector<dataset::ColumnScaling> scaling;  // frozen preprocessing per column
  std::vector<double> total_gain;

  [[nodiscard]] std::size_t width() const noexcept { return feature_names.size(); }

  /// Prediction for an encoded (preprocessed) feature vector.
  [[nodiscard]] double predict(std::span<const double> x) const;

  /// Prediction using only the first `n_trees` trees.
  [[nodiscard]] double predict_prefix(std::span<const double> x, std::size_t n_trees) const;

  /// Maps raw feature values through the frozen scaling.
  [[nodiscard]] std::vector<double> encode(std::span<const double> raw) const;

  [[nodiscard]] std::vector<double> predict(const dataset::Dataset& ds) const;
};

/// Squared-loss gradient boosting with exact greedy splits. The learner has
/// no random component; `seed` is accepted for interface symmetry and
/// recorded nowhere.
SurrogateModel fit(const dataset::Dataset& ds, const Hyperparameters& hp, std::uint64_t seed = 0);

/// Training MSE after 0, 1, ..., n_trees trees.
std::vector<double> training_mse_path(const SurrogateModel& m, const dataset::Dataset& ds);

struct Metrics {
  double r2 = 0.0;
  double mse = 0.0;
  double mae = 0.0;
};

Metrics metrics(std::span<const double> y, std::span<const double> yhat);

/// "R² = 0.777, MAE = 0.179, MSE = 0.052"
std::string format_metrics(const Metrics& m);

struct CvReport {
  int k = 0;
  std::vector<Metrics> folds;
  Metrics aggregate;                   // on pooled out-of-fold predictions
  std::vector<double> oof_prediction;  // row aligned
  std::vector<int> fold_of_row;
};

CvReport cross_validate(const dataset::Dataset& ds, const Hyperparameters& hp, int k, std::uint64_t seed);

/// Features by descending total_gain (ties by feature order), at most top_q.
std::vector<std::pair<std::string, double>> feature_importance(const SurrogateModel& m, std::size_t top_q);

/// y - predict(x), row by row.
std::vector<double> residuals(const SurrogateModel& m, const dataset::Dataset& holdout);

nlohmann::json to_json(const SurrogateModel& m);
SurrogateModel model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Hyperparameters& hp);
Hyperparameters hyperparameters_from_json(const nlohmann::json& j, Hyperparameters defaults = {});
nlohmann::json to_json(const Metrics& m);
nlohmann::json to_json(const CvReport& r);

}  // namespace mixedabc::surrogate
