#include "mixedabc/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "mixedabc/error.hpp"
#include "mixedabc/io.hpp"
#include "mixedabc/stats.hpp"

namespace mixedabc::dataset {

namespace {

template <typename E>
struct EnumName {
  E value;
  const char* name;
};

constexpr EnumName<ColumnKind> kKinds[] = {{ColumnKind::Continuous, "continuous"},
                                           {ColumnKind::Integer, "integer"},
                                           {ColumnKind::Binary, "binary"},
                                           {ColumnKind::Categorical, "categorical"}};
constexpr EnumName<ColumnRole> kRoles[] = {{ColumnRole::Feature, "feature"},
                                           {ColumnRole::Target, "target"},
                                           {ColumnRole::RunId, "run_id"},
                                           {ColumnRole::PositionId, "position_id"}};
constexpr EnumName<Encoding> kEncodings[] = {{Encoding::None, "none"},
                                             {Encoding::Standardize, "standardize"},
                                             {Encoding::BinaryEncode, "binary_encode"},
                                             {Encoding::EmbeddingRef, "embedding_ref"}};

template <typename E, std::size_t N>
E parse_enum(const EnumName<E> (&table)[N], const std::string& s, const char* what) {
  for (const auto& e : table) {
    if (s == e.name) return e.value;
  }
  throw Error(ErrorCode::InvalidSchema, std::string("unknown ") + what + " '" + s + "'");
}

template <typename E, std::size_t N>
std::string enum_name(const EnumName<E> (&table)[N], E v) {
  for (const auto& e : table) {
    if (e.value == v) return e.name;
  }
  return "unknown";
}

bool is_numeric_kind(ColumnKind k) { return k != ColumnKind::Categorical; }

bool is_feature_column(const ColumnSpec& c) { return c.role == ColumnRole::Feature; }

std::string location(std::size_t row, const std::string& col) {
  return "row " + std::to_string(row) + ", column '" + col + "'";
}

}  // namespace

std::string to_string(ColumnKind k) { return enum_name(kKinds, k); }
std::string to_string(ColumnRole r) { return enum_name(kRoles, r); }
std::string to_string(Encoding e) { return enum_name(kEncodings, e); }

void validate_schema(const Schema& schema) {
  std::set<std::string> names;
  int targets = 0;
  int run_ids = 0;
  int positions = 0;
  for (const auto& c : schema) {
    if (c.name.empty()) throw Error(ErrorCode::InvalidSchema, "column with empty name");
    if (!names.insert(c.name).second) {
      throw Error(ErrorCode::InvalidSchema, "duplicate column '" + c.name + "'");
    }
    switch (c.role) {
      case ColumnRole::Target:
        ++targets;
        if (!is_numeric_kind(c.kind) || c.kind == ColumnKind::Binary) {
          throw Error(ErrorCode::InvalidSchema, "target '" + c.name + "' must be continuous or integer");
        }
        break;
      case ColumnRole::RunId: ++run_ids; break;
      case ColumnRole::PositionId:
        ++positions;
        if (c.kind != ColumnKind::Integer) {
          throw Error(ErrorCode::InvalidSchema, "position_id '" + c.name + "' must be integer");
        }
        break;
      case ColumnRole::Feature:
        if (c.kind == ColumnKind::Categorical && c.encoding != Encoding::BinaryEncode &&
            c.encoding != Encoding::EmbeddingRef) {
          throw Error(ErrorCode::InvalidSchema,
                      "categorical '" + c.name + "' needs binary_encode or embedding_ref");
        }
        if (c.kind != ColumnKind::Categorical &&
            (c.encoding == Encoding::BinaryEncode || c.encoding == Encoding::EmbeddingRef)) {
          throw Error(ErrorCode::InvalidSchema,
                      "encoding " + to_string(c.encoding) + " applies to categorical columns only");
        }
        if (c.kind == ColumnKind::Binary && c.encoding == Encoding::Standardize) {
          throw Error(ErrorCode::InvalidSchema, "binary column '" + c.name + "' cannot be standardized");
        }
        break;
    }
  }
  if (targets != 1) {
    throw Error(ErrorCode::InvalidSchema,
                "exactly one target column required, found " + std::to_string(targets));
  }
  if (run_ids > 1 || positions > 1) {
    throw Error(ErrorCode::InvalidSchema, "at most one run_id and one position_id column");
  }
}

Schema schema_from_json(const nlohmann::json& j) {
  const nlohmann::json& cols = j.is_object() ? j.at("columns") : j;
  if (!cols.is_array()) throw Error(ErrorCode::InvalidSchema, "schema must list columns");
  Schema out;
  try {
    for (const auto& c : cols) {
      ColumnSpec spec;
      spec.name = c.at("name").get<std::string>();
      spec.kind = parse_enum(kKinds, c.at("kind").get<std::string>(), "kind");
      spec.role = parse_enum(kRoles, c.value("role", std::string("feature")), "role");
      spec.encoding = parse_enum(kEncodings, c.value("encoding", std::string("none")), "encoding");
      out.push_back(std::move(spec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidSchema, e.what());
  }
  validate_schema(out);
  return out;
}

nlohmann::json schema_to_json(const Schema& schema) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : schema) {
    cols.push_back({{"name", c.name},
                    {"kind", to_string(c.kind)},
                    {"role", to_string(c.role)},
                    {"encoding", to_string(c.encoding)}});
  }
  return {{"columns", cols}};
}

Schema load_schema(const std::filesystem::path& path) {
  return schema_from_json(io::read_json(path));
}

void save_schema(const Schema& schema, const std::filesystem::path& path) {
  io::write_file(path, schema_to_json(schema).dump(2) + "\n");
}

std::vector<std::string> Dataset::feature_names() const {
  std::vector<std::string> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(f.name);
  return out;
}

std::size_t Dataset::feature_index(const std::string& name) const {
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].name == name) return i;
  }
  throw Error(ErrorCode::UnknownFeature, "no feature column '" + name + "'");
}

const ColumnSpec& Dataset::target_spec() const {
  for (const auto& c : columns) {
    if (c.role == ColumnRole::Target) return c;
  }
  throw Error(ErrorCode::InvalidSchema, "dataset has no target column");
}

std::vector<double> Dataset::raw_column(std::size_t feature) const {
  auto col = rows.column(feature);
  if (scaling) {
    const auto& s = (*scaling)[feature];
    for (auto& v : col) v = v * s.sd + s.mean;
    // Undo the rounding error of the affine round trip on count columns.
    const auto kind = features[feature].kind;
    if (s.standardized && (kind == ColumnKind::Integer || kind == ColumnKind::Binary)) {
      for (auto& v : col) v = std::round(v);
    }
  }
  return col;
}

Dataset parse_dataset(std::istream& in, const Schema& schema) {
  validate_schema(schema);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::EmptyFile, "no header row");
  if (line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
  const auto header = io::split(io::chomp(line), ',');

  std::vector<std::size_t> pos(schema.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    auto it = std::find(header.begin(), header.end(), schema[c].name);
    if (it == header.end()) throw Error(ErrorCode::MissingColumn, "'" + schema[c].name + "'");
    pos[c] = static_cast<std::size_t>(it - header.begin());
  }

  Dataset ds;
  ds.columns = schema;
  for (const auto& c : schema) {
    if (is_feature_column(c) && is_numeric_kind(c.kind)) ds.features.push_back({c.name, c.name, c.kind});
    if (is_feature_column(c) && c.kind == ColumnKind::Categorical) ds.categories[c.name];
  }
  const std::size_t width = ds.features.size();
  std::vector<double> row(width);

  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    line = io::chomp(line);
    if (line.empty()) continue;
    ++row_no;
    const auto cells = io::split(line, ',');
    std::size_t f = 0;
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const auto& spec = schema[c];
      if (pos[c] >= cells.size() || cells[pos[c]].empty()) {
        throw Error(ErrorCode::TypeMismatch, location(row_no, spec.name) + ": missing value");
      }
      const std::string& cell = cells[pos[c]];
      if (spec.role == ColumnRole::RunId) {
        ds.run_ids.push_back(cell);
        continue;
      }
      if (spec.kind == ColumnKind::Categorical) {
        ds.categories[spec.name].push_back(cell);
        continue;
      }
      const auto value = io::parse_double(cell);
      if (!value || !std::isfinite(*value)) {
        throw Error(ErrorCode::TypeMismatch, location(row_no, spec.name) + ": '" + cell + "' is not a number");
      }
      const double v = *value;
      if ((spec.kind == ColumnKind::Integer && v != std::floor(v)) ||
          (spec.kind == ColumnKind::Binary && v != 0.0 && v != 1.0)) {
        throw Error(ErrorCode::TypeMismatch,
                    location(row_no, spec.name) + ": '" + cell + "' is not " + to_string(spec.kind));
      }
      switch (spec.role) {
        case ColumnRole::Target: ds.targets.push_back(v); break;
        case ColumnRole::PositionId: ds.position_ids.push_back(static_cast<std::int64_t>(v)); break;
        case ColumnRole::Feature: row[f++] = v; break;
        case ColumnRole::RunId: break;
      }
    }
    ds.rows.append_row(row);
  }
  if (row_no == 0) throw Error(ErrorCode::EmptyFile, "header without data rows");
  if (width == 0) ds.rows = Matrix(row_no, 0);
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return parse_dataset(in, schema);
}

void write_csv(const Dataset& ds, std::ostream& out) {
  if (ds.scaling) throw Error(ErrorCode::InvalidConfig, "write_csv expects a raw dataset");
  for (std::size_t c = 0; c < ds.columns.size(); ++c) {
    out << (c ? "," : "") << ds.columns[c].name;
  }
  out << '\n';
  for (std::size_t r = 0; r < ds.size(); ++r) {
    std::size_t f = 0;
    for (std::size_t c = 0; c < ds.columns.size(); ++c) {
      const auto& spec = ds.columns[c];
      if (c) out << ',';
      if (spec.role == ColumnRole::RunId) {
        out << ds.run_ids[r];
      } else if (spec.role == ColumnRole::PositionId) {
        out << ds.position_ids[r];
      } else if (spec.role == ColumnRole::Target) {
        out << io::format_double(ds.targets[r]);
      } else if (spec.kind == ColumnKind::Categorical) {
        out << ds.categories.at(spec.name)[r];
      } else {
        out << io::format_double(ds.rows(r, f++));
      }
    }
    out << '\n';
  }
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ostringstream os;
  write_csv(ds, os);
  io::write_file(path, os.str());
}

std::map<std::string, std::uint32_t> binary_codes(std::vector<std::string> categories) {
  std::sort(categories.begin(), categories.end());
  categories.erase(std::unique(categories.begin(), categories.end()), categories.end());
  std::map<std::string, std::uint32_t> out;
  for (std::size_t i = 0; i < categories.size(); ++i) out[categories[i]] = static_cast<std::uint32_t>(i);
  return out;
}

std::size_t code_width(std::size_t n_categories) {
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n_categories) ++bits;
  return bits;
}

Dataset preprocess(const Dataset& ds, const EmbeddingMap* embeddings) {
  if (ds.scaling) throw Error(ErrorCode::InvalidConfig, "dataset is already preprocessed");
  Dataset out;
  out.columns = ds.columns;
  out.targets = ds.targets;
  out.run_ids = ds.run_ids;
  out.position_ids = ds.position_ids;
  out.categories = ds.categories;

  // Build the encoded columns one schema column at a time.
  std::vector<std::vector<double>> cols;
  std::vector<ColumnScaling> scaling;
  std::size_t raw_index = 0;
  for (const auto& spec : ds.columns) {
    if (!is_feature_column(spec)) continue;
    if (spec.kind != ColumnKind::Categorical) {
      auto col = ds.rows.column(raw_index++);
      ColumnScaling s;
      const bool scale = spec.kind != ColumnKind::Binary && spec.encoding == Encoding::Standardize;
      if (scale) {
        s.mean = stats::mean(col);
        s.sd = stats::population_sd(col);
        if (!(s.sd > 0.0)) throw Error(ErrorCode::ZeroVariance, "column '" + spec.name + "' is constant");
        s.standardized = true;
        for (auto& v : col) v = (v - s.mean) / s.sd;
      }
      out.features.push_back({spec.name, spec.name, spec.kind});
      cols.push_back(std::move(col));
      scaling.push_back(s);
      continue;
    }

    const auto& labels = ds.categories.at(spec.name);
    if (spec.encoding == Encoding::BinaryEncode) {
      const auto codes = binary_codes(labels);
      if (codes.size() < 2) {
        throw Error(ErrorCode::ZeroVariance, "categorical '" + spec.name + "' has a single category");
      }
      const std::size_t bits = code_width(codes.size());
      std::vector<std::string> order(codes.size());
      for (const auto& [label, code] : codes) order[code] = label;
      out.category_codes[spec.name] = order;
      for (std::size_t b = 0; b < bits; ++b) {
        std::vector<double> col(labels.size());
        for (std::size_t r = 0; r < labels.size(); ++r) col[r] = (codes.at(labels[r]) >> b) & 1U;
        out.features.push_back({spec.name + "_b" + std::to_string(b), spec.name, ColumnKind::Binary});
        cols.push_back(std::move(col));
        scaling.push_back({});
      }
    } else {
      if (!embeddings || embeddings->empty()) {
        throw Error(ErrorCode::InvalidConfig, "column '" + spec.name + "' needs an embedding table");
      }
      const std::size_t dim = embeddings->begin()->second.size();
      std::vector<std::vector<double>> comp(dim, std::vector<double>(labels.size()));
      for (std::size_t r = 0; r < labels.size(); ++r) {
        auto it = embeddings->find(labels[r]);
        if (it == embeddings->end()) {
          throw Error(ErrorCode::UnknownGeometry, location(r + 1, spec.name) + ": no embedding for '" +
                                                      labels[r] + "'");
        }
        for (std::size_t d = 0; d < dim; ++d) comp[d][r] = it->second.at(d);
      }
      for (std::size_t d = 0; d < dim; ++d) {
        out.features.push_back({spec.name + "_e" + std::to_string(d), spec.name, ColumnKind::Continuous});
        cols.push_back(std::move(comp[d]));
        scaling.push_back({});
      }
    }
  }

  out.rows = Matrix(ds.size(), cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    for (std::size_t r = 0; r < ds.size(); ++r) out.rows(r, c) = cols[c][r];
  }
  out.scaling = std::move(scaling);
  return out;
}

std::vector<double> inverse_transform_row(const Dataset& ds, std::span<const double> row) {
  if (row.size() != ds.width()) {
    throw Error(ErrorCode::WidthMismatch, "row width " + std::to_string(row.size()) + ", expected " +
                                              std::to_string(ds.width()));
  }
  std::vector<double> out(row.begin(), row.end());
  if (ds.scaling) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] * (*ds.scaling)[i].sd + (*ds.scaling)[i].mean;
  }
  return out;
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> rows) {
  Dataset out;
  out.columns = ds.columns;
  out.features = ds.features;
  out.scaling = ds.scaling;
  out.category_codes = ds.category_codes;
  out.rows = Matrix(rows.size(), ds.width());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = ds.rows.row(rows[i]);
    std::copy(src.begin(), src.end(), out.rows.row(i).begin());
    out.targets.push_back(ds.targets[rows[i]]);
    if (!ds.run_ids.empty()) out.run_ids.push_back(ds.run_ids[rows[i]]);
    if (!ds.position_ids.empty()) out.position_ids.push_back(ds.position_ids[rows[i]]);
  }
  for (const auto& [name, labels] : ds.categories) {
    auto& dst = out.categories[name];
    for (auto r : rows) dst.push_back(labels[r]);
  }
  return out;
}

std::vector<RunSummary> rank_runs(const Dataset& ds, double nominal, double tolerance) {
  if (!(tolerance > 0.0)) throw Error(ErrorCode::InvalidConfig, "tolerance must be positive");
  if (ds.run_ids.empty()) throw Error(ErrorCode::InvalidConfig, "dataset has no run_id column");
  std::map<std::string, std::vector<double>> groups;
  for (std::size_t i = 0; i < ds.size(); ++i) groups[ds.run_ids[i]].push_back(ds.targets[i]);

  std::vector<RunSummary> runs;
  for (const auto& [id, ys] : groups) {
    RunSummary r;
    r.run_id = id;
    r.mean_thickness = stats::mean(ys);
    r.sd_thickness = stats::sample_sd(ys);
    r.n_measurements = ys.size();
    runs.push_back(std::move(r));
  }
  auto dev = [&](const RunSummary& r) { return std::abs(r.mean_thickness - nominal); };
  // std::map iteration already orders by run_id, so a stable sort keeps the
  // lexicographic tie-break.
  std::stable_sort(runs.begin(), runs.end(), [&](const RunSummary& a, const RunSummary& b) {
    const bool ia = dev(a) <= tolerance;
    const bool ib = dev(b) <= tolerance;
    if (ia != ib) return ia;
    if (ia) {
      if (a.sd_thickness != b.sd_thickness) return a.sd_thickness < b.sd_thickness;
      return dev(a) < dev(b);
    }
    if (dev(a) != dev(b)) return dev(a) < dev(b);
    return a.sd_thickness < b.sd_thickness;
  });
  for (std::size_t i = 0; i < runs.size(); ++i) runs[i].rank = i + 1;
  return runs;
}

nlohmann::json to_json(const RunSummary& r) {
  return {{"run_id", r.run_id},
          {"mean_thickness", r.mean_thickness},
          {"sd_thickness", r.sd_thickness},
          {"n_measurements", r.n_measurements},
          {"rank", r.rank}};
}

}  // namespace mixedabc::dataset
