#include "mixedabc/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mixedabc/error.hpp"
#include "mixedabc/io.hpp"
#include "mixedabc/parallel.hpp"
#include "mixedabc/rng.hpp"

namespace mixedabc::surrogate {

namespace {

struct Split {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

// Lexicographic preference: larger gain, then lower feature index, then
// lower threshold.
bool better(const Split& a, const Split& b) {
  if (a.gain != b.gain) return a.gain > b.gain;
  if (a.feature != b.feature) return a.feature < b.feature;
  return a.threshold < b.threshold;
}

double score(double g, double h, double lambda) { return g * g / (h + lambda); }

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, const std::vector<std::vector<std::uint32_t>>& presorted,
              const Hyperparameters& hp)
      : x_(x), presorted_(presorted), hp_(hp), goes_left_(x.rows(), 0) {}

  Tree build(const std::vector<double>& resid, std::vector<double>& total_gain) {
    resid_ = &resid;
    total_gain_ = &total_gain;
    tree_ = Tree{};
    grow(presorted_, 0);
    return std::move(tree_);
  }

 private:
  // `sorted[f]` lists the node's rows ordered by feature f.
  int grow(const std::vector<std::vector<std::uint32_t>>& sorted, int depth) {
    const auto& rows = sorted.front();
    const auto& r = *resid_;
    double g = 0.0;
    for (auto i : rows) g += r[i];
    const double h = static_cast<double>(rows.size());

    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();

    Split best;
    if (depth < hp_.max_depth && rows.size() >= 2) {
      const double parent = score(g, h, hp_.lambda);
      for (std::size_t f = 0; f < sorted.size(); ++f) {
        const auto& idx = sorted[f];
        double gl = 0.0;
        for (std::size_t i = 0; i + 1 < idx.size(); ++i) {
          gl += r[idx[i]];
          const double xi = x_(idx[i], f);
          const double xn = x_(idx[i + 1], f);
          if (!(xi < xn)) continue;
          const double hl = static_cast<double>(i + 1);
          const double gain = score(gl, hl, hp_.lambda) + score(g - gl, h - hl, hp_.lambda) - parent;
          double thr = xi + 0.5 * (xn - xi);
          if (!(thr > xi) || thr > xn) thr = xn;
          const Split cand{gain, static_cast<int>(f), thr};
          if (best.feature < 0 || better(cand, best)) best = cand;
        }
      }
    }

    if (best.feature < 0 || !(best.gain > hp_.min_gain)) {
      tree_.nodes[id].leaf_value = g / (h + hp_.lambda);
      return id;
    }

    const auto bf = static_cast<std::size_t>(best.feature);
    for (auto i : rows) goes_left_[i] = x_(i, bf) < best.threshold;
    std::vector<std::vector<std::uint32_t>> left(sorted.size());
    std::vector<std::vector<std::uint32_t>> right(sorted.size());
    for (std::size_t f = 0; f < sorted.size(); ++f) {
      for (auto i : sorted[f]) (goes_left_[i] ? left[f] : right[f]).push_back(i);
    }
    // Recompute the node's gain from the partition itself so the stored
    // value is independent of the scan's running sums.
    double gl = 0.0;
    for (auto i : left.front()) gl += r[i];
    double gr = 0.0;
    for (auto i : right.front()) gr += r[i];
    const double hl = static_cast<double>(left.front().size());
    const double hr = static_cast<double>(right.front().size());
    const double gain = score(gl, hl, hp_.lambda) + score(gr, hr, hp_.lambda) - score(g, h, hp_.lambda);

    tree_.nodes[id].feature = best.feature;
    tree_.nodes[id].threshold = best.threshold;
    tree_.nodes[id].gain = std::max(gain, 0.0);
    (*total_gain_)[bf] += tree_.nodes[id].gain;
    const int l = grow(left, depth + 1);
    const int rr = grow(right, depth + 1);
    tree_.nodes[id].left = l;
    tree_.nodes[id].right = rr;
    return id;
  }

  const Matrix& x_;
  const std::vector<std::vector<std::uint32_t>>& presorted_;
  const Hyperparameters& hp_;
  std::vector<char> goes_left_;
  const std::vector<double>* resid_ = nullptr;
  std::vector<double>* total_gain_ = nullptr;
  Tree tree_;
};

void check_width(const SurrogateModel& m, std::size_t width) {
  if (width != m.width()) {
    throw Error(ErrorCode::WidthMismatch, "feature vector has width " + std::to_string(width) +
                                              ", model expects " + std::to_string(m.width()));
  }
}

}  // namespace

void validate(const Hyperparameters& hp) {
  if (hp.n_trees < 1) throw Error(ErrorCode::InvalidHyperparameters, "n_trees must be at least 1");
  if (hp.max_depth < 0 || hp.max_depth > 8) {
    throw Error(ErrorCode::InvalidHyperparameters, "max_depth must lie in [0, 8]");
  }
  if (!(hp.learning_rate > 0.0 && hp.learning_rate <= 1.0)) {
    throw Error(ErrorCode::InvalidHyperparameters, "learning_rate must lie in (0, 1]");
  }
  if (!(hp.lambda >= 0.0)) throw Error(ErrorCode::InvalidHyperparameters, "lambda must be nonnegative");
  if (!(hp.min_gain >= 0.0)) throw Error(ErrorCode::InvalidHyperparameters, "min_gain must be nonnegative");
}

double Tree::leaf_value(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right);
  }
  return nodes[i].leaf_value;
}

double SurrogateModel::predict(std::span<const double> x) const { return predict_prefix(x, trees.size()); }

double SurrogateModel::predict_prefix(std::span<const double> x, std::size_t n_trees) const {
  check_width(*this, x.size());
  double sum = 0.0;
  const std::size_t n = std::min(n_trees, trees.size());
  for (std::size_t t = 0; t < n; ++t) sum += trees[t].leaf_value(x);
  return base_score + hp.learning_rate * sum;
}

std::vector<double> SurrogateModel::encode(std::span<const double> raw) const {
  check_width(*this, raw.size());
  std::vector<double> out(raw.begin(), raw.end());
  for (std::size_t i = 0; i < out.size() && i < scaling.size(); ++i) {
    out[i] = (out[i] - scaling[i].mean) / scaling[i].sd;
  }
  return out;
}

std::vector<double> SurrogateModel::predict(const dataset::Dataset& ds) const {
  check_width(*this, ds.width());
  std::vector<double> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) out[i] = predict(ds.rows.row(i));
  return out;
}

SurrogateModel fit(const dataset::Dataset& ds, const Hyperparameters& hp, std::uint64_t /*seed*/) {
  validate(hp);
  if (ds.size() == 0) throw Error(ErrorCode::EmptyDataset, "no training rows");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!std::isfinite(ds.targets[i])) {
      throw Error(ErrorCode::NonFiniteTarget, "target of row " + std::to_string(i + 1) + " is not finite");
    }
  }
  const std::size_t n = ds.size();
  const std::size_t w = ds.width();

  SurrogateModel m;
  m.hp = hp;
  m.feature_names = ds.feature_names();
  m.scaling = ds.scaling ? *ds.scaling : std::vector<dataset::ColumnScaling>(w);
  m.total_gain.assign(w, 0.0);
  m.base_score = std::accumulate(ds.targets.begin(), ds.targets.end(), 0.0) / static_cast<double>(n);

  std::vector<std::vector<std::uint32_t>> presorted(std::max<std::size_t>(w, 1));
  for (std::size_t f = 0; f < presorted.size(); ++f) {
    auto& idx = presorted[f];
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), 0U);
    if (f < w) {
      std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return ds.rows(a, f) < ds.rows(b, f); });
    }
  }
  if (w == 0) presorted.clear();

  std::vector<double> pred(n, m.base_score);
  std::vector<double> resid(n);
  // Sum of learning_rate-free leaf values, kept so predictions match
  // predict() bit for bit (base + eta * sum).
  std::vector<double> leaf_sum(n, 0.0);
  TreeBuilder builder(ds.rows, presorted, hp);
  for (int t = 0; t < hp.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) resid[i] = ds.targets[i] - pred[i];
    Tree tree;
    if (w == 0 || hp.max_depth == 0) {
      // A root-only tree would still shift predictions by its leaf value;
      // depth 0 means "no trees contribute", so keep a zero leaf.
      tree.nodes.emplace_back();
    } else {
      tree = builder.build(resid, m.total_gain);
    }
    for (std::size_t i = 0; i < n; ++i) {
      leaf_sum[i] += tree.leaf_value(ds.rows.row(i));
      pred[i] = m.base_score + hp.learning_rate * leaf_sum[i];
    }
    m.trees.push_back(std::move(tree));
  }
  return m;
}

std::vector<double> training_mse_path(const SurrogateModel& m, const dataset::Dataset& ds) {
  check_width(m, ds.width());
  std::vector<double> leaf_sum(ds.size(), 0.0);
  std::vector<double> out;
  auto mse = [&] {
    double acc = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const double e = ds.targets[i] - (m.base_score + m.hp.learning_rate * leaf_sum[i]);
      acc += e * e;
    }
    return acc / static_cast<double>(ds.size());
  };
  out.push_back(mse());
  for (const auto& tree : m.trees) {
    for (std::size_t i = 0; i < ds.size(); ++i) leaf_sum[i] += tree.leaf_value(ds.rows.row(i));
    out.push_back(mse());
  }
  return out;
}

Metrics metrics(std::span<const double> y, std::span<const double> yhat) {
  const double n = static_cast<double>(y.size());
  const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double ss_res = 0.0;
  double ss_tot = 0.0;
  double abs_err = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - yhat[i];
    ss_res += e * e;
    abs_err += std::abs(e);
    ss_tot += (y[i] - ybar) * (y[i] - ybar);
  }
  Metrics m;
  m.mse = ss_res / n;
  m.mae = abs_err / n;
  m.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  return m;
}

std::string format_metrics(const Metrics& m) {
  return "R² = " + io::format_fixed(m.r2, 3) + ", MAE = " + io::format_fixed(m.mae, 3) +
         ", MSE = " + io::format_fixed(m.mse, 3);
}

CvReport cross_validate(const dataset::Dataset& ds, const Hyperparameters& hp, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidHyperparameters, "k must be at least 2");
  const std::size_t n = ds.size();
  if (n < static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::TooFewRows, std::to_string(n) + " rows for " + std::to_string(k) + " folds");
  }
  validate(hp);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Engine eng = make_engine(seed, "cv");
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(eng, i)]);

  CvReport rep;
  rep.k = k;
  rep.fold_of_row.assign(n, 0);
  const auto uk = static_cast<std::size_t>(k);
  for (std::size_t f = 0; f < uk; ++f) {
    for (std::size_t p = f * n / uk; p < (f + 1) * n / uk; ++p) rep.fold_of_row[perm[p]] = static_cast<int>(f);
  }
  rep.oof_prediction.assign(n, 0.0);
  rep.folds.resize(uk);
  parallel_for(uk, [&](std::size_t f) {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    for (std::size_t i = 0; i < n; ++i) (rep.fold_of_row[i] == static_cast<int>(f) ? test : train).push_back(i);
    const auto model = fit(dataset::subset(ds, train), hp, seed);
    std::vector<double> y;
    std::vector<double> yhat;
    for (auto i : test) {
      rep.oof_prediction[i] = model.predict(ds.rows.row(i));
      y.push_back(ds.targets[i]);
      yhat.push_back(rep.oof_prediction[i]);
    }
    rep.folds[f] = metrics(y, yhat);
  });
  rep.aggregate = metrics(ds.targets, rep.oof_prediction);
  return rep;
}

std::vector<std::pair<std::string, double>> feature_importance(const SurrogateModel& m, std::size_t top_q) {
  std::vector<std::size_t> order(m.total_gain.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return m.total_gain[a] > m.total_gain[b]; });
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < order.size() && i < top_q; ++i) {
    out.emplace_back(m.feature_names[order[i]], m.total_gain[order[i]]);
  }
  return out;
}

std::vector<double> residuals(const SurrogateModel& m, const dataset::Dataset& holdout) {
  const auto pred = m.predict(holdout);
  std::vector<double> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) out[i] = holdout.targets[i] - pred[i];
  return out;
}

nlohmann::json to_json(const Hyperparameters& hp) {
  return {{"n_trees", hp.n_trees},
          {"learning_rate", hp.learning_rate},
          {"max_depth", hp.max_depth},
          {"lambda", hp.lambda},
          {"min_gain", hp.min_gain}};
}

Hyperparameters hyperparameters_from_json(const nlohmann::json& j, Hyperparameters hp) {
  try {
    hp.n_trees = j.value("n_trees", hp.n_trees);
    hp.learning_rate = j.value("learning_rate", hp.learning_rate);
    hp.max_depth = j.value("max_depth", hp.max_depth);
    hp.lambda = j.value("lambda", hp.lambda);
    hp.min_gain = j.value("min_gain", hp.min_gain);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("surrogate hyperparameters: ") + e.what());
  }
  return hp;
}

nlohmann::json to_json(const SurrogateModel& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees) {
    nlohmann::json feature = nlohmann::json::array();
    nlohmann::json threshold = nlohmann::json::array();
    nlohmann::json left = nlohmann::json::array();
    nlohmann::json right = nlohmann::json::array();
    nlohmann::json value = nlohmann::json::array();
    nlohmann::json gain = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      value.push_back(n.leaf_value);
      gain.push_back(n.gain);
    }
    trees.push_back({{"feature", feature},
                     {"threshold", threshold},
                     {"left", left},
                     {"right", right},
                     {"value", value},
                     {"gain", gain}});
  }
  nlohmann::json scaling = nlohmann::json::array();
  for (const auto& s : m.scaling) {
    scaling.push_back({{"mean", s.mean}, {"sd", s.sd}, {"standardized", s.standardized}});
  }
  return {{"base_score", m.base_score},
          {"hyperparameters", to_json(m.hp)},
          {"feature_names", m.feature_names},
          {"scaling", scaling},
          {"total_gain", m.total_gain},
          {"trees", trees}};
}

SurrogateModel model_from_json(const nlohmann::json& j) {
  try {
    SurrogateModel m;
    m.base_score = j.at("base_score").get<double>();
    m.hp = hyperparameters_from_json(j.at("hyperparameters"));
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    for (const auto& s : j.at("scaling")) {
      m.scaling.push_back({s.at("mean").get<double>(), s.at("sd").get<double>(), s.at("standardized").get<bool>()});
    }
    m.total_gain = j.at("total_gain").get<std::vector<double>>();
    for (const auto& t : j.at("trees")) {
      Tree tree;
      const auto& f = t.at("feature");
      for (std::size_t i = 0; i < f.size(); ++i) {
        TreeNode n;
        n.feature = f[i].get<int>();
        n.threshold = t.at("threshold")[i].get<double>();
        n.left = t.at("left")[i].get<int>();
        n.right = t.at("right")[i].get<int>();
        n.leaf_value = t.at("value")[i].get<double>();
        n.gain = t.at("gain")[i].get<double>();
        tree.nodes.push_back(n);
      }
      m.trees.push_back(std::move(tree));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("surrogate model: ") + e.what());
  }
}

nlohmann::json to_json(const Metrics& m) { return {{"r2", m.r2}, {"mse", m.mse}, {"mae", m.mae}}; }

nlohmann::json to_json(const CvReport& r) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : r.folds) folds.push_back(to_json(f));
  return {{"k", r.k}, {"aggregate", to_json(r.aggregate)}, {"folds", folds}, {"formatted", format_metrics(r.aggregate)}};
}

}  // namespace mixedabc::surrogate
