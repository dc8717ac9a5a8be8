#pragma once

#include "rdbssl/errors.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rdbssl::rdb {

enum class ColumnKind { continuous, categorical, reference };

std::string_view to_string(ColumnKind kind);

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  std::string references;  // referenced table, only for ColumnKind::reference
};

struct TableSpec {
  std::string name;
  // CSV column holding row identifiers. Without one, rows are keyed by their
  // 0-based ordinal and the table cannot be referenced.
  std::optional<std::string> primary_key;
  std::vector<ColumnSpec> columns;

  const ColumnSpec* find(std::string_view column) const;
};

struct RdbSchema {
  std::vector<TableSpec> tables;
  std::string target_table;
  std::string target_column;
  std::string positive_label = "1";

  int table_index(std::string_view name) const;  // -1 when absent
  const TableSpec& table(std::string_view name) const;
};

enum class SchemaErrorCode {
  parse,
  unknown_column_kind,
  unresolved_reference,
  missing_target,
  invalid_target,
  duplicate_name,
};

class SchemaError : public DataError {
 public:
  SchemaError(SchemaErrorCode code, const std::string& what) : DataError(what), code_(code) {}
  SchemaErrorCode code() const { return code_; }

 private:
  SchemaErrorCode code_;
};

// Schema files are YAML; see docs/schema.md for the grammar.
RdbSchema parse_schema(std::string_view text);
RdbSchema load_schema(const std::filesystem::path& path);
void validate(const RdbSchema& schema);
std::string dump_schema(const RdbSchema& schema);

constexpr std::int32_t kMissingCode = 0;
inline constexpr std::string_view kMissingSymbol = "<missing>";

struct Column {
  ColumnSpec spec;
  std::vector<double> numbers;         // continuous; NaN marks a missing cell
  std::vector<std::int32_t> codes;     // categorical; kMissingCode marks a missing cell
  std::vector<std::string> vocabulary; // categorical; vocabulary[0] is the missing symbol
  std::vector<std::int64_t> refs;      // reference; referenced row ordinal, -1 for null
};

struct Table {
  std::string name;
  std::vector<std::string> keys;
  std::unordered_map<std::string, std::int64_t> key_index;
  std::vector<Column> columns;  // feature and reference columns, schema order, target excluded
  std::size_t rows = 0;

  const Column* find(std::string_view column) const;
};

// Label value for the target table rows.
constexpr std::int8_t kUnlabeled = -1;

struct Rdb {
  RdbSchema schema;
  std::vector<Table> tables;  // schema order
  // One entry per target-table row: 1 positive, 0 negative, kUnlabeled.
  std::vector<std::int8_t> labels;

  const Table& table(std::string_view name) const;
  std::size_t total_rows() const;
};

// Reads `<table>.csv` for every table in `csv_directory`.
Rdb load_rdb(const RdbSchema& schema, const std::filesystem::path& csv_directory);

// Writes `schema.yaml` plus one CSV per table; load_rdb() of the result
// reproduces `rdb` exactly (floats are written with round-trip precision).
void write_rdb(const Rdb& rdb, const std::filesystem::path& directory);

// Cell-level construction used by the synthetic generators. `cells` holds one
// vector per table, each a header-ordered list of rows.
struct TableCells {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
Rdb build_rdb(const RdbSchema& schema, const std::vector<TableCells>& cells);

}  // namespace rdbssl::rdb
