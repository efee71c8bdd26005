#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mixedabc/dataset.hpp"
#include "mixedabc/matrix.hpp"

namespace mixedabc::geometry {

struct EmbeddingTable {
  std::vector<std::string> names;
  Matrix vectors;  // one row per name

  [[nodiscard]] std::size_t size() const noexcept { return names.size(); }
  [[nodiscard]] std::size_t dim() const noexcept { return vectors.cols(); }
  [[nodiscard]] dataset::EmbeddingMap to_map() const;
  static EmbeddingTable from_map(const dataset::EmbeddingMap& m);
};

/// label<TAB>v1<TAB>...<TAB>v_dim per line.
EmbeddingTable parse_embeddings(std::istream& in);
EmbeddingTable load_embeddings(const std::filesystem::path& path);
void write_embeddings(const EmbeddingTable& t, std::ostream& out);

struct SimilarityMatrix {
  std::vector<std::string> labels;
  Matrix values;
};

/// Exactly symmetric with a unit diagonal. Throws ZeroVector.
SimilarityMatrix cosine_matrix(const EmbeddingTable& emb);

struct Eigen {
  std::vector<double> values;  // ascending
  Matrix vectors;              // column j belongs to values[j]
};

/// Cyclic Jacobi rotations for a symmetric matrix.
Eigen jacobi_eigen(Matrix a, double tol = 1e-13, int max_sweeps = 100);

/// I - D^-1/2 A D^-1/2 with A = max(sim, 0) elementwise.
Matrix normalized_laplacian(const Matrix& similarity);

struct KMeansResult {
  std::vector<int> assignment;
  Matrix centers;
  double objective = 0.0;
  std::vector<double> objective_history;  // of the chosen restart, one entry per iteration
  int restart = 0;
};

/// k-means++ seeding then Lloyd iterations, repeated `restarts` times; the
/// lowest objective wins, earlier restarts on ties.
KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, int restarts = 20, int max_iter = 300);

struct ClusterModel {
  std::vector<std::string> labels;
  std::vector<int> assignment;  // clusters numbered by first appearance
  int k = 0;
  std::vector<double> inner_similarity;  // minimum pairwise cosine per cluster
  std::vector<double> eigenvalues;       // Laplacian spectrum, ascending
  int eigengap_k = 0;                    // diagnostic only
  std::vector<std::string> isolated;     // labels with no positive affinity to others

  [[nodiscard]] int cluster_of(const std::string& label) const;
  [[nodiscard]] std::vector<std::string> members(int cluster) const;
};

/// Labels with zero affinity to every other label get a cluster of their
/// own; DisconnectedDegenerate when that leaves no room for the rest.
ClusterModel spectral_cluster(const SimilarityMatrix& sim, int k, std::uint64_t seed);

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

/// Rows grouped by the cluster of their geometry label, order preserved.
/// Throws UnknownGeometry.
std::map<int, dataset::Dataset> stratify(const dataset::Dataset& ds, const ClusterModel& cm,
                                         const std::string& geometry_column);

/// "Triangular 973, Rhomboid 2085"
std::string format_strata(const std::vector<std::pair<std::string, std::size_t>>& sizes);

/// Token-hash random projection: every token maps to a Gaussian vector drawn
/// from a stream keyed by (seed, token); a description is the normalized
/// mean of its token vectors.
EmbeddingTable fallback_embed(const std::vector<std::pair<std::string, std::vector<std::string>>>& descriptions,
                              std::size_t dim, std::uint64_t seed);

nlohmann::json to_json(const ClusterModel& cm);

}  // namespace mixedabc::geometry
