#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mixedabc/matrix.hpp"

namespace mixedabc::dataset {

enum class ColumnKind { Continuous, Integer, Binary, Categorical };
enum class ColumnRole { Feature, Target, RunId, PositionId };
enum class Encoding { None, Standardize, BinaryEncode, EmbeddingRef };

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::Continuous;
  ColumnRole role = ColumnRole::Feature;
  Encoding encoding = Encoding::None;

  friend bool operator==(const ColumnSpec&, const ColumnSpec&) = default;
};

using Schema = std::vector<ColumnSpec>;

/// Checks the schema invariants: exactly one target, unique names, and
/// categorical columns encoded by binary code or embedding only.
void validate_schema(const Schema& schema);

Schema schema_from_json(const nlohmann::json& j);
nlohmann::json schema_to_json(const Schema& schema);
Schema load_schema(const std::filesystem::path& path);
void save_schema(const Schema& schema, const std::filesystem::path& path);

/// One column of the feature matrix. Raw datasets hold one per numeric
/// feature column; encoding expands categoricals into several.
struct FeatureColumn {
  std::string name;
  std::string source;
  ColumnKind kind = ColumnKind::Continuous;

  friend bool operator==(const FeatureColumn&, const FeatureColumn&) = default;
};

/// Affine map applied to a feature column: encoded = (raw - mean) / sd.
/// Columns that are not standardized carry the identity (0, 1).
struct ColumnScaling {
  double mean = 0.0;
  double sd = 1.0;
  bool standardized = false;

  friend bool operator==(const ColumnScaling&, const ColumnScaling&) = default;
};

/// Category label -> embedding vector.
using EmbeddingMap = std::map<std::string, std::vector<double>>;

struct Dataset {
  Schema columns;
  std::vector<FeatureColumn> features;
  Matrix rows;
  std::vector<double> targets;
  std::vector<std::string> run_ids;                 // empty when no run_id column
  std::vector<std::int64_t> position_ids;           // empty when no position_id column
  std::map<std::string, std::vector<std::string>> categories;  // raw labels, row aligned
  std::map<std::string, std::vector<std::string>> category_codes;  // binary code order
  std::optional<std::vector<ColumnScaling>> scaling;  // present iff preprocessed

  [[nodiscard]] std::size_t size() const noexcept { return targets.size(); }
  [[nodiscard]] std::size_t width() const noexcept { return features.size(); }
  [[nodiscard]] std::vector<std::string> feature_names() const;
  [[nodiscard]] std::size_t feature_index(const std::string& name) const;
  [[nodiscard]] const ColumnSpec& target_spec() const;

  /// Column values on the raw (unstandardized) scale; integer columns come
  /// back as exact integers.
  [[nodiscard]] std::vector<double> raw_column(std::size_t feature) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Parses CSV text (header row first) against the schema. Rejects missing
/// cells; the first offending location is reported.
Dataset parse_dataset(std::istream& in, const Schema& schema);
Dataset load_dataset(const std::filesystem::path& path, const Schema& schema);

/// Writes a raw dataset back to CSV in schema column order.
void write_csv(const Dataset& ds, std::ostream& out);
void save_csv(const Dataset& ds, const std::filesystem::path& path);

/// Standardizes continuous/integer features (population sd), expands
/// binary-encoded categoricals to ceil(log2(#categories)) bit columns and
/// embedding-referenced categoricals to their vector components.
Dataset preprocess(const Dataset& ds, const EmbeddingMap* embeddings = nullptr);

/// Maps a preprocessed row back to raw units using the stored scaling.
std::vector<double> inverse_transform_row(const Dataset& ds, std::span<const double> row);

/// Row subset preserving order, scaling and metadata.
Dataset subset(const Dataset& ds, std::span<const std::size_t> rows);

/// Code assigned to each category: lexicographic rank.
std::map<std::string, std::uint32_t> binary_codes(std::vector<std::string> categories);
std::size_t code_width(std::size_t n_categories);

struct RunSummary {
  std::string run_id;
  double mean_thickness = 0.0;
  double sd_thickness = 0.0;
  std::size_t n_measurements = 0;
  std::size_t rank = 0;
};

/// Ranks production runs: runs whose mean lies within `tolerance` of
/// `nominal` come first (by sd, then distance to nominal); the rest follow
/// by distance to nominal, then sd; run_id breaks ties.
std::vector<RunSummary> rank_runs(const Dataset& ds, double nominal, double tolerance);

nlohmann::json to_json(const RunSummary& r);

std::string to_string(ColumnKind k);
std::string to_string(ColumnRole r);
std::string to_string(Encoding e);

}  // namespace mixedabc::dataset
