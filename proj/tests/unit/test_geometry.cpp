#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "mixedabc/error.hpp"
#include "mixedabc/geometry.hpp"
#include "mixedabc/synthetic.hpp"

using namespace mixedabc;
using namespace mixedabc::geometry;

namespace {

EmbeddingTable table(std::vector<std::pair<std::string, std::vector<double>>> rows) {
  EmbeddingTable t;
  for (auto& [n, v] : rows) {
    t.names.push_back(n);
    t.vectors.append_row(v);
  }
  return t;
}

struct Planted {
  SimilarityMatrix sim;
  std::vector<int> truth;
};

// Block sizes from the four-family shares; within-block similarity drawn
// from [0.85, 1], cross-block from [0, 0.3].
Planted planted(std::uint64_t seed, std::size_t n = 40) {
  const std::vector<double> shares{26.77, 57.36, 8.06, 22.75};
  const auto sizes = dataset::apportion(shares, n);
  Planted p;
  for (std::size_t c = 0; c < sizes.size(); ++c) p.truth.insert(p.truth.end(), sizes[c], static_cast<int>(c));
  std::mt19937_64 g(seed);
  std::shuffle(p.truth.begin(), p.truth.end(), g);
  std::uniform_real_distribution<double> within(0.85, 1.0);
  std::uniform_real_distribution<double> cross(0.0, 0.3);
  p.sim.values = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    p.sim.labels.push_back("L" + std::to_string(i));
    p.sim.values(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = p.truth[i] == p.truth[j] ? within(g) : cross(g);
      p.sim.values(i, j) = v;
      p.sim.values(j, i) = v;
    }
  }
  return p;
}

}  // namespace

TEST_CASE("cosine_matrix") {
  auto t = table({{"a", {1, 0, 0}}, {"b", {0, 1, 0}}, {"c", {-2, 0, 0}}, {"d", {3, 0, 0}}, {"e", {0.3, -0.7, 2}}});
  auto s = cosine_matrix(t);
  CHECK(s.values(0, 1) == 0.0);
  CHECK(s.values(0, 2) == -1.0);
  CHECK(s.values(0, 3) == 1.0);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(s.values(i, i) == 1.0);
    for (std::size_t j = 0; j < 5; ++j) CHECK(s.values(i, j) == s.values(j, i));
  }
  auto z = table({{"a", {1, 0}}, {"zero", {0, 0}}});
  CHECK_THROWS_WITH_AS(cosine_matrix(z), doctest::Contains("ZeroVector: embedding of 'zero'"), Error);
}

TEST_CASE("embedding TSV") {
  std::istringstream in("TCMT\t0.5\t0.25\t-1\nRCMT\t1e-3\t2\t3\n\n");
  auto t = parse_embeddings(in);
  REQUIRE(t.size() == 2);
  CHECK(t.dim() == 3);
  CHECK(t.vectors(1, 0) == 1e-3);
  std::ostringstream out;
  write_embeddings(t, out);
  std::istringstream back(out.str());
  auto u = parse_embeddings(back);
  CHECK(u.names == t.names);
  CHECK(u.vectors == t.vectors);
  std::istringstream ragged("a\t1\t2\nb\t1\n");
  CHECK_THROWS_WITH_AS(parse_embeddings(ragged), doctest::Contains("ParseError"), Error);
  std::istringstream bad("a\t1\tx\n");
  CHECK_THROWS_AS(parse_embeddings(bad), Error);
}

TEST_CASE("Jacobi eigensolver against Eigen") {
  std::mt19937_64 g(2);
  std::normal_distribution<double> z;
  const std::size_t n = 30;
  Matrix a(n, n);
  Eigen::MatrixXd e(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = z(g);
      a(i, j) = a(j, i) = v;
      e(static_cast<long>(i), static_cast<long>(j)) = e(static_cast<long>(j), static_cast<long>(i)) = v;
    }
  }
  auto mine = jacobi_eigen(a);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(e);
  for (std::size_t k = 0; k < n; ++k) {
    CHECK(std::abs(mine.values[k] - ref.eigenvalues()(static_cast<long>(k))) <= 1e-10);
    double resid = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double av = 0.0;
      for (std::size_t j = 0; j < n; ++j) av += a(i, j) * mine.vectors(j, k);
      resid = std::max(resid, std::abs(av - mine.values[k] * mine.vectors(i, k)));
    }
    CHECK(resid <= 1e-10);
  }
}

TEST_CASE("normalized Laplacian spectrum") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto p = planted(seed);
    // Sprinkle negative similarities; they are clipped.
    p.sim.values(0, 1) = p.sim.values(1, 0) = -0.4;
    auto ev = jacobi_eigen(normalized_laplacian(p.sim.values)).values;
    CHECK(std::abs(ev.front()) <= 1e-8);
    for (double v : ev) {
      CHECK(v >= -1e-8);
      CHECK(v <= 2.0 + 1e-8);
    }
  }
}

TEST_CASE("spectral_cluster") {
  SUBCASE("perfect two-block affinity") {
    SimilarityMatrix s;
    s.values = Matrix(6, 6);
    const std::vector<int> truth{0, 1, 0, 1, 1, 0};
    for (std::size_t i = 0; i < 6; ++i) {
      s.labels.push_back(std::string(1, static_cast<char>('a' + i)));
      for (std::size_t j = 0; j < 6; ++j) s.values(i, j) = truth[i] == truth[j] ? 1.0 : 0.0;
    }
    auto cm = spectral_cluster(s, 2, 1);
    CHECK(adjusted_rand_index(cm.assignment, truth) == 1.0);
    CHECK(cm.inner_similarity == std::vector<double>{1.0, 1.0});
  }
  SUBCASE("planted four blocks") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto p = planted(seed);
      auto cm = spectral_cluster(p.sim, 4, seed);
      CAPTURE(seed);
      CHECK(adjusted_rand_index(cm.assignment, p.truth) == 1.0);
      for (double v : cm.inner_similarity) CHECK(v >= 0.85);
    }
  }
  SUBCASE("deterministic and scale invariant") {
    auto [ds, gt] = dataset::generate_synthetic({.rows = 50}, 3);
    auto t = EmbeddingTable::from_map(gt.embeddings);
    auto a = spectral_cluster(cosine_matrix(t), 4, 9);
    auto b = spectral_cluster(cosine_matrix(t), 4, 9);
    CHECK(a.assignment == b.assignment);
    auto scaled = t;
    for (auto& v : scaled.vectors.data()) v *= 7.5;
    CHECK(spectral_cluster(cosine_matrix(scaled), 4, 9).assignment == a.assignment);
    std::vector<int> truth;
    for (const auto& name : t.names) truth.push_back(gt.label_cluster.at(name));
    CHECK(adjusted_rand_index(a.assignment, truth) == 1.0);
    CHECK(a.cluster_of(t.names[0]) == 0);
    CHECK_THROWS_WITH_AS((void)a.cluster_of("XXXX"), doctest::Contains("UnknownGeometry"), Error);
  }
  SUBCASE("isolated labels") {
    auto p = planted(4, 20);
    // Label 0 loses every positive similarity.
    for (std::size_t j = 1; j < 20; ++j) p.sim.values(0, j) = p.sim.values(j, 0) = -0.2;
    auto cm = spectral_cluster(p.sim, 4, 1);
    REQUIRE(cm.isolated == std::vector<std::string>{"L0"});
    CHECK(cm.members(cm.assignment[0]).size() == 1);
    for (std::size_t j = 1; j < 20; ++j) CHECK(cm.assignment[j] != cm.assignment[0]);
    for (std::size_t j = 1; j < 20; ++j) p.sim.values(1, j) = p.sim.values(j, 1) = (j == 1 ? 1.0 : 0.0);
    CHECK_THROWS_WITH_AS(spectral_cluster(p.sim, 2, 1), doctest::Contains("DisconnectedDegenerate"), Error);
  }
  SUBCASE("invalid k") {
    auto p = planted(1, 10);
    CHECK_THROWS_AS(spectral_cluster(p.sim, 1, 1), Error);
    CHECK_THROWS_AS(spectral_cluster(p.sim, 11, 1), Error);
  }
}

TEST_CASE("k-means") {
  std::mt19937_64 g(5);
  std::normal_distribution<double> z;
  Matrix pts;
  for (int i = 0; i < 300; ++i) pts.append_row(std::vector<double>{z(g) + (i % 3) * 1.5, z(g)});
  auto km = kmeans(pts, 3, 7);
  for (std::size_t i = 1; i < km.objective_history.size(); ++i) {
    CHECK(km.objective_history[i] <= km.objective_history[i - 1]);
  }
  CHECK(km.objective == km.objective_history.back());
  auto again = kmeans(pts, 3, 7);
  CHECK(again.assignment == km.assignment);
  CHECK(again.restart == km.restart);
  // Restart 0 of the full run is the single-restart run.
  CHECK(km.objective <= kmeans(pts, 3, 7, 1).objective);
}

TEST_CASE("adjusted Rand index") {
  CHECK(adjusted_rand_index({0, 0, 1, 1}, {1, 1, 0, 0}) == 1.0);
  CHECK(adjusted_rand_index({0, 0, 1, 1}, {0, 1, 0, 1}) == doctest::Approx(-0.5));
}

TEST_CASE("stratify") {
  auto [ds, gt] = dataset::generate_synthetic({.rows = 4178}, 11);
  ClusterModel cm;
  cm.k = 4;
  for (const auto& [label, c] : gt.label_cluster) {
    cm.labels.push_back(label);
    cm.assignment.push_back(c);
  }
  auto strata = stratify(ds, cm, "geometry");
  std::size_t total = 0;
  std::vector<std::pair<std::string, std::size_t>> sizes;
  for (const auto& [c, part] : strata) {
    total += part.size();
    sizes.emplace_back(gt.cluster_names[static_cast<std::size_t>(c)], part.size());
    CHECK(part.size() == gt.cluster_counts[static_cast<std::size_t>(c)]);
  }
  CHECK(total == ds.size());
  // Row order is preserved and every row lands in its generating family.
  std::vector<std::size_t> cursor(4, 0);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const auto c = static_cast<std::size_t>(gt.row_clusters[r]);
    CHECK(strata.at(static_cast<int>(c)).targets[cursor[c]++] == ds.targets[r]);
  }
  CHECK(format_strata(sizes) == "Triangular " + std::to_string(sizes[0].second) + ", Rhomboid " +
                                    std::to_string(sizes[1].second) + ", Circular " + std::to_string(sizes[2].second) +
                                    ", Rectangular " + std::to_string(sizes[3].second));
  CHECK(format_strata({{"Triangular", 973}, {"Rhomboid", 2085}, {"Circular", 293}, {"Rectangular", 827}}) ==
        "Triangular 973, Rhomboid 2085, Circular 293, Rectangular 827");

  ClusterModel one;
  one.k = 2;
  one.labels = cm.labels;
  one.assignment.assign(cm.labels.size(), 0);
  CHECK(stratify(ds, one, "geometry").size() == 1);

  cm.labels.pop_back();
  cm.assignment.pop_back();
  CHECK_THROWS_WITH_AS(stratify(ds, cm, "geometry"), doctest::Contains("UnknownGeometry: row"), Error);
}

TEST_CASE("fallback_embed") {
  using Desc = std::vector<std::pair<std::string, std::vector<std::string>>>;
  SUBCASE("identical descriptions") {
    auto t = fallback_embed(Desc{{"a", {"x", "y", "z"}}, {"b", {"x", "y", "z"}}}, 3, 1);
    CHECK(cosine_matrix(t).values(0, 1) == doctest::Approx(1.0));
  }
  SUBCASE("more shared tokens, more similar") {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      auto t = fallback_embed(Desc{{"base", {"a", "b", "c", "d"}}, {"three", {"a", "b", "c", "e"}}, {"one", {"a", "f", "g", "h"}}},
                              16, seed);
      auto s = cosine_matrix(t);
      wins += s.values(0, 1) > s.values(0, 2);
    }
    CHECK(wins >= 95);
  }
  SUBCASE("disjoint token sets") {
    // Two independent isotropic directions in 3-D have a cosine uniform on
    // [-1, 1], so the mean absolute similarity is 1/2.
    double abs_sum = 0.0;
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      auto t = fallback_embed(Desc{{"p", {"a", "b", "c", "d"}}, {"q", {"e", "f", "g", "h"}}}, 3, seed);
      const double s = cosine_matrix(t).values(0, 1);
      abs_sum += std::abs(s);
      sum += s;
    }
    CHECK(std::abs(abs_sum / 100.0 - 0.5) <= 3.0 * std::sqrt(1.0 / 12.0) / 10.0);
    CHECK(std::abs(sum / 100.0) <= 3.0 * std::sqrt(1.0 / 3.0) / 10.0);
  }
  SUBCASE("errors and determinism") {
    CHECK_THROWS_WITH_AS(fallback_embed(Desc{{"a", {}}}, 3, 1), doctest::Contains("EmptyDescription"), Error);
    CHECK_THROWS_AS(fallback_embed(Desc{{"a", {"x"}}}, 1, 1), Error);
    auto a = fallback_embed(Desc{{"a", {"x", "y"}}}, 3, 5);
    auto b = fallback_embed(Desc{{"a", {"x", "y"}}}, 3, 5);
    CHECK(a.vectors == b.vectors);
  }
}
