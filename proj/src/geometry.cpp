#include "mixedabc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "mixedabc/error.hpp"
#include "mixedabc/io.hpp"
#include "mixedabc/parallel.hpp"
#include "mixedabc/rng.hpp"

namespace mixedabc::geometry {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc;
}

struct Lloyd {
  std::vector<int> assignment;
  Matrix centers;
  double objective = 0.0;
  std::vector<double> history;
};

Lloyd run_kmeans(const Matrix& pts, int k, Engine& eng, int max_iter) {
  const std::size_t n = pts.rows();
  const auto uk = static_cast<std::size_t>(k);
  Lloyd out;
  out.centers = Matrix(uk, pts.cols());

  // k-means++ seeding.
  std::vector<char> chosen(n, 0);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = uniform_index(eng, n);
  for (std::size_t c = 0; c < uk; ++c) {
    std::size_t pick = first;
    if (c > 0) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) total += d2[i];
      if (total > 0.0) {
        const double u = uniform_open01(eng) * total;
        double cum = 0.0;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          cum += d2[i];
          if (cum >= u && d2[i] > 0.0) {
            pick = i;
            break;
          }
        }
      } else {
        pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), 0) - chosen.begin());
      }
    }
    chosen[pick] = 1;
    std::copy(pts.row(pick).begin(), pts.row(pick).end(), out.centers.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(pts.row(i), out.centers.row(c)));
  }

  out.assignment.assign(n, -1);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = out.assignment[i];
      double best_d = best >= 0 ? sq_dist(pts.row(i), out.centers.row(static_cast<std::size_t>(best)))
                                : std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < uk; ++c) {
        const double d = sq_dist(pts.row(i), out.centers.row(c));
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      if (best != out.assignment[i]) {
        out.assignment[i] = best;
        changed = true;
      }
    }
    // Empty clusters take the point farthest from its own center.
    for (std::size_t c = 0; c < uk; ++c) {
      if (std::find(out.assignment.begin(), out.assignment.end(), static_cast<int>(c)) != out.assignment.end()) continue;
      std::vector<std::size_t> sizes(uk, 0);
      for (int a : out.assignment) ++sizes[static_cast<std::size_t>(a)];
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto a = static_cast<std::size_t>(out.assignment[i]);
        if (sizes[a] < 2) continue;
        const double d = sq_dist(pts.row(i), out.centers.row(a));
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far == n) break;
      out.assignment[far] = static_cast<int>(c);
      changed = true;
    }
    Matrix centers(uk, pts.cols());
    std::vector<double> count(uk, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto a = static_cast<std::size_t>(out.assignment[i]);
      count[a] += 1.0;
      for (std::size_t j = 0; j < pts.cols(); ++j) centers(a, j) += pts(i, j);
    }
    for (std::size_t c = 0; c < uk; ++c) {
      if (count[c] == 0.0) {
        std::copy(out.centers.row(c).begin(), out.centers.row(c).end(), centers.row(c).begin());
        continue;
      }
      for (std::size_t j = 0; j < pts.cols(); ++j) centers(c, j) /= count[c];
    }
    out.centers = std::move(centers);
    double obj = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      obj += sq_dist(pts.row(i), out.centers.row(static_cast<std::size_t>(out.assignment[i])));
    }
    out.history.push_back(obj);
    out.objective = obj;
    if (!changed) break;
  }
  return out;
}

// Cluster ids renumbered in order of first appearance.
std::vector<int> canonical(const std::vector<int>& a) {
  std::map<int, int> remap;
  std::vector<int> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto [it, inserted] = remap.try_emplace(a[i], static_cast<int>(remap.size()));
    out[i] = it->second;
  }
  return out;
}

}  // namespace

dataset::EmbeddingMap EmbeddingTable::to_map() const {
  dataset::EmbeddingMap m;
  for (std::size_t i = 0; i < names.size(); ++i) m[names[i]] = {vectors.row(i).begin(), vectors.row(i).end()};
  return m;
}

EmbeddingTable EmbeddingTable::from_map(const dataset::EmbeddingMap& m) {
  EmbeddingTable t;
  for (const auto& [name, v] : m) {
    if (!t.names.empty() && v.size() != t.dim()) {
      throw Error(ErrorCode::ParseError, "embedding '" + name + "' has dimension " + std::to_string(v.size()));
    }
    t.names.push_back(name);
    t.vectors.append_row(v);
  }
  return t;
}

EmbeddingTable parse_embeddings(std::istream& in) {
  EmbeddingTable t;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = io::chomp(line);
    if (line.empty()) continue;
    const auto fields = io::split(line, '\t');
    if (fields.size() < 2) throw Error(ErrorCode::ParseError, "embeddings line " + std::to_string(line_no) + ": no vector");
    std::vector<double> v;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      auto x = io::parse_double(fields[i]);
      if (!x) {
        throw Error(ErrorCode::ParseError,
                    "embeddings line " + std::to_string(line_no) + ": '" + fields[i] + "' is not a number");
      }
      v.push_back(*x);
    }
    if (!t.names.empty() && v.size() != t.dim()) {
      throw Error(ErrorCode::ParseError, "embeddings line " + std::to_string(line_no) + ": expected dimension " +
                                             std::to_string(t.dim()) + ", got " + std::to_string(v.size()));
    }
    if (!seen.insert(fields[0]).second) {
      throw Error(ErrorCode::ParseError, "embeddings line " + std::to_string(line_no) + ": duplicate label '" + fields[0] + "'");
    }
    t.names.push_back(fields[0]);
    t.vectors.append_row(v);
  }
  if (t.names.empty()) throw Error(ErrorCode::EmptyFile, "no embeddings");
  return t;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return parse_embeddings(in);
}

void write_embeddings(const EmbeddingTable& t, std::ostream& out) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    out << t.names[i];
    for (double v : t.vectors.row(i)) out << '\t' << io::format_double(v);
    out << '\n';
  }
}

SimilarityMatrix cosine_matrix(const EmbeddingTable& emb) {
  const std::size_t n = emb.size();
  if (n < 2) throw Error(ErrorCode::InvalidConfig, "cosine similarity needs at least 2 labels");
  std::vector<double> norm(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (double v : emb.vectors.row(i)) acc += v * v;
    norm[i] = std::sqrt(acc);
    if (!(norm[i] > 0.0)) throw Error(ErrorCode::ZeroVector, "embedding of '" + emb.names[i] + "' is the zero vector");
  }
  SimilarityMatrix s{emb.names, Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    s.values(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t d = 0; d < emb.dim(); ++d) dot += emb.vectors(i, d) * emb.vectors(j, d);
      const double c = std::clamp(dot / (norm[i] * norm[j]), -1.0, 1.0);
      s.values(i, j) = c;
      s.values(j, i) = c;
    }
  }
  return s;
}

Eigen jacobi_eigen(Matrix a, double tol, int max_sweeps) {
  const std::size_t n = a.rows();
  Matrix v(n, n);
  for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;
  double total = 0.0;
  for (double x : a.data()) total += x * x;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (off <= tol * tol * std::max(total, 1e-300)) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t r = 0; r < n; ++r) {
          const double arp = a(r, p);
          const double arq = a(r, q);
          a(r, p) = c * arp - s * arq;
          a(r, q) = s * arp + c * arq;
        }
        for (std::size_t r = 0; r < n; ++r) {
          const double apr = a(p, r);
          const double aqr = a(q, r);
          a(p, r) = c * apr - s * aqr;
          a(q, r) = s * apr + c * aqr;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
          const double vrp = v(r, p);
          const double vrq = v(r, q);
          v(r, p) = c * vrp - s * vrq;
          v(r, q) = s * vrp + c * vrq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return a(x, x) < a(y, y); });
  Eigen e;
  e.vectors = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    e.values.push_back(a(src, src));
    // Sign convention: the largest-magnitude component is positive.
    std::size_t big = 0;
    for (std::size_t r = 1; r < n; ++r) {
      if (std::abs(v(r, src)) > std::abs(v(big, src))) big = r;
    }
    const double sign = v(big, src) < 0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < n; ++r) e.vectors(r, j) = sign * v(r, src);
  }
  return e;
}

Matrix normalized_laplacian(const Matrix& sim) {
  const std::size_t n = sim.rows();
  std::vector<double> dinv(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += std::max(sim(i, j), 0.0);
    dinv[i] = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;
  }
  Matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = (i == j ? 1.0 : 0.0) - dinv[i] * std::max(sim(i, j), 0.0) * dinv[j];
      l(i, j) = v;
      l(j, i) = v;
    }
  }
  return l;
}

KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, int restarts, int max_iter) {
  if (k < 1 || static_cast<std::size_t>(k) > points.rows()) {
    throw Error(ErrorCode::InvalidConfig, "k-means needs 1 <= k <= number of points");
  }
  if (restarts < 1) throw Error(ErrorCode::InvalidConfig, "restarts must be at least 1");
  std::vector<Lloyd> runs(static_cast<std::size_t>(restarts));
  parallel_for(runs.size(), [&](std::size_t r) {
    Engine eng = make_engine(seed, "kmeans", r);
    runs[r] = run_kmeans(points, k, eng, max_iter);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].objective < runs[best].objective) best = r;
  }
  KMeansResult out;
  out.assignment = runs[best].assignment;
  out.centers = runs[best].centers;
  out.objective = runs[best].objective;
  out.objective_history = runs[best].history;
  out.restart = static_cast<int>(best);
  return out;
}

int ClusterModel::cluster_of(const std::string& label) const {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw Error(ErrorCode::UnknownGeometry, "geometry '" + label + "' has no cluster");
  return assignment[static_cast<std::size_t>(it - labels.begin())];
}

std::vector<std::string> ClusterModel::members(int cluster) const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (assignment[i] == cluster) out.push_back(labels[i]);
  }
  return out;
}

ClusterModel spectral_cluster(const SimilarityMatrix& sim, int k, std::uint64_t seed) {
  const std::size_t n = sim.labels.size();
  if (k < 2 || static_cast<std::size_t>(k) > n) {
    throw Error(ErrorCode::InvalidConfig, "k must lie in [2, " + std::to_string(n) + "], got " + std::to_string(k));
  }
  ClusterModel cm;
  cm.labels = sim.labels;
  cm.k = k;

  const auto full = jacobi_eigen(normalized_laplacian(sim.values));
  cm.eigenvalues = full.values;
  {
    double gap = -1.0;
    for (std::size_t i = 1; i < std::min<std::size_t>(n, 11); ++i) {
      const double g = full.values[i] - full.values[i - 1];
      if (g > gap) {
        gap = g;
        cm.eigengap_k = static_cast<int>(i);
      }
    }
  }

  std::vector<std::size_t> connected;
  std::vector<std::size_t> isolated;
  for (std::size_t i = 0; i < n; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < n && !any; ++j) any = j != i && sim.values(i, j) > 0.0;
    (any ? connected : isolated).push_back(i);
  }
  for (auto i : isolated) cm.isolated.push_back(sim.labels[i]);
  const auto k_rest = static_cast<std::size_t>(k) - std::min(isolated.size(), static_cast<std::size_t>(k));
  if (!connected.empty() && k_rest < 1) {
    throw Error(ErrorCode::DisconnectedDegenerate, std::to_string(isolated.size()) +
                                                       " labels have no positive similarity to any other; k = " +
                                                       std::to_string(k) + " leaves no cluster for the rest");
  }
  if (k_rest > connected.size()) {
    throw Error(ErrorCode::DisconnectedDegenerate, "k = " + std::to_string(k) + " exceeds the available structure");
  }

  std::vector<int> raw(n, 0);
  int next = 0;
  if (!connected.empty()) {
    if (k_rest == 1) {
      for (auto i : connected) raw[i] = 0;
      next = 1;
    } else {
      const std::size_t m = connected.size();
      Matrix sub(m, m);
      for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = 0; b < m; ++b) sub(a, b) = sim.values(connected[a], connected[b]);
      }
      const auto eig = jacobi_eigen(normalized_laplacian(sub));
      Matrix u(m, k_rest);
      for (std::size_t a = 0; a < m; ++a) {
        double norm = 0.0;
        for (std::size_t j = 0; j < k_rest; ++j) norm += eig.vectors(a, j) * eig.vectors(a, j);
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < k_rest; ++j) u(a, j) = norm > 0.0 ? eig.vectors(a, j) / norm : 0.0;
      }
      const auto km = kmeans(u, static_cast<int>(k_rest), seed, 20);
      for (std::size_t a = 0; a < m; ++a) raw[connected[a]] = km.assignment[a];
      next = static_cast<int>(k_rest);
    }
  }
  for (auto i : isolated) raw[i] = next++;
  cm.assignment = canonical(raw);

  cm.inner_similarity.assign(static_cast<std::size_t>(k), 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (cm.assignment[i] != cm.assignment[j]) continue;
      auto& s = cm.inner_similarity[static_cast<std::size_t>(cm.assignment[i])];
      s = std::min(s, sim.values(i, j));
    }
  }
  return cm;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::InvalidConfig, "label vectors differ in length");
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> ra;
  std::map<int, double> rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1.0;
    ra[a[i]] += 1.0;
    rb[b[i]] += 1.0;
  }
  auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0;
  for (const auto& [key, v] : table) index += c2(v);
  double sa = 0.0;
  double sb = 0.0;
  for (const auto& [key, v] : ra) sa += c2(v);
  for (const auto& [key, v] : rb) sb += c2(v);
  const double expected = sa * sb / c2(static_cast<double>(a.size()));
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

std::map<int, dataset::Dataset> stratify(const dataset::Dataset& ds, const ClusterModel& cm,
                                         const std::string& geometry_column) {
  auto col = ds.categories.find(geometry_column);
  if (col == ds.categories.end()) {
    throw Error(ErrorCode::MissingColumn, "'" + geometry_column + "' is not a categorical column");
  }
  std::map<std::string, int> lookup;
  for (std::size_t i = 0; i < cm.labels.size(); ++i) lookup[cm.labels[i]] = cm.assignment[i];
  std::map<int, std::vector<std::size_t>> rows;
  for (std::size_t r = 0; r < col->second.size(); ++r) {
    auto it = lookup.find(col->second[r]);
    if (it == lookup.end()) {
      throw Error(ErrorCode::UnknownGeometry,
                  "row " + std::to_string(r + 1) + ": geometry '" + col->second[r] + "' has no cluster");
    }
    rows[it->second].push_back(r);
  }
  std::map<int, dataset::Dataset> out;
  for (const auto& [c, idx] : rows) out.emplace(c, dataset::subset(ds, idx));
  return out;
}

std::string format_strata(const std::vector<std::pair<std::string, std::size_t>>& sizes) {
  std::string out;
  for (const auto& [name, n] : sizes) {
    if (!out.empty()) out += ", ";
    out += name + " " + std::to_string(n);
  }
  return out;
}

EmbeddingTable fallback_embed(const std::vector<std::pair<std::string, std::vector<std::string>>>& descriptions,
                              std::size_t dim, std::uint64_t seed) {
  if (dim < 2) throw Error(ErrorCode::InvalidConfig, "embedding dimension must be at least 2");
  EmbeddingTable t;
  for (const auto& [label, tokens] : descriptions) {
    if (tokens.empty()) throw Error(ErrorCode::EmptyDescription, "description of '" + label + "' has no tokens");
    std::vector<double> v(dim, 0.0);
    for (const auto& tok : tokens) {
      Engine eng = make_engine(seed, "token:" + tok);
      std::normal_distribution<double> z;
      for (auto& x : v) x += z(eng);
    }
    double norm = 0.0;
    for (auto& x : v) {
      x /= static_cast<double>(tokens.size());
      norm += x * x;
    }
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) throw Error(ErrorCode::ZeroVector, "description of '" + label + "' embeds to zero");
    for (auto& x : v) x /= norm;
    t.names.push_back(label);
    t.vectors.append_row(v);
  }
  return t;
}

nlohmann::json to_json(const ClusterModel& cm) {
  nlohmann::json clusters = nlohmann::json::array();
  for (int c = 0; c < cm.k; ++c) {
    clusters.push_back({{"id", c},
                        {"members", cm.members(c)},
                        {"inner_similarity", cm.inner_similarity[static_cast<std::size_t>(c)]}});
  }
  return {{"k", cm.k},
          {"clusters", clusters},
          {"eigenvalues", cm.eigenvalues},
          {"eigengap_k", cm.eigengap_k},
          {"isolated", cm.isolated}};
}

}  // namespace mixedabc::geometry
