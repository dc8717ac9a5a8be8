#include "rdbssl/rdb.hpp"

#include "rdbssl/csv.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace rdbssl::rdb {

namespace {

void check_keys(const YAML::Node& node, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw SchemaError(SchemaErrorCode::parse, "schema: unknown key '" + key + "' in " + where);
  }
}

std::string required_string(const YAML::Node& node, const char* key, const std::string& where) {
  if (!node[key] || !node[key].IsScalar()) {
    throw SchemaError(SchemaErrorCode::parse, "schema: " + where + " needs a '" + key + "' string");
  }
  return node[key].as<std::string>();
}

ColumnKind parse_kind(const std::string& kind, const std::string& where) {
  if (kind == "continuous") return ColumnKind::continuous;
  if (kind == "categorical") return ColumnKind::categorical;
  if (kind == "reference") return ColumnKind::reference;
  throw SchemaError(SchemaErrorCode::unknown_column_kind,
                    "schema: unknown column kind '" + kind + "' for " + where);
}

double parse_number(const std::string& cell, const std::string& table, const std::string& column,
                    std::size_t row) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw DataError("table '" + table + "', column '" + column + "', row " + std::to_string(row) +
                    ": cannot parse '" + cell + "' as a number");
  }
  return value;
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::continuous:
      return "continuous";
    case ColumnKind::categorical:
      return "categorical";
    case ColumnKind::reference:
      return "reference";
  }
  return "?";
}

const ColumnSpec* TableSpec::find(std::string_view column) const {
  for (const auto& c : columns) {
    if (c.name == column) return &c;
  }
  return nullptr;
}

int RdbSchema::table_index(std::string_view name) const {
  for (std::size_t i = 0; i < tables.size(); ++i) {
    if (tables[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

const TableSpec& RdbSchema::table(std::string_view name) const {
  const int i = table_index(name);
  if (i < 0) throw std::out_of_range("no table '" + std::string(name) + "'");
  return tables[static_cast<std::size_t>(i)];
}

RdbSchema parse_schema(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw SchemaError(SchemaErrorCode::parse, std::string("schema: ") + e.what());
  }
  if (!root.IsMap()) throw SchemaError(SchemaErrorCode::parse, "schema: top level must be a mapping");
  check_keys(root, {"target", "tables"}, "schema");

  RdbSchema schema;
  if (!root["target"]) {
    throw SchemaError(SchemaErrorCode::missing_target, "schema: missing target designation");
  }
  const YAML::Node target = root["target"];
  if (!target.IsMap() || !target["table"] || !target["column"]) {
    throw SchemaError(SchemaErrorCode::missing_target,
                      "schema: target needs both 'table' and 'column'");
  }
  check_keys(target, {"table", "column", "positive_label"}, "target");
  schema.target_table = target["table"].as<std::string>();
  schema.target_column = target["column"].as<std::string>();
  if (target["positive_label"]) schema.positive_label = target["positive_label"].as<std::string>();

  const YAML::Node tables = root["tables"];
  if (!tables || !tables.IsSequence()) {
    throw SchemaError(SchemaErrorCode::parse, "schema: 'tables' must be a list");
  }
  for (const auto& t : tables) {
    check_keys(t, {"name", "primary_key", "columns"}, "table");
    TableSpec spec;
    spec.name = required_string(t, "name", "table");
    if (t["primary_key"]) spec.primary_key = t["primary_key"].as<std::string>();
    if (t["columns"]) {
      if (!t["columns"].IsSequence()) {
        throw SchemaError(SchemaErrorCode::parse, "schema: columns of '" + spec.name + "' must be a list");
      }
      for (const auto& c : t["columns"]) {
        const std::string where = "table '" + spec.name + "'";
        check_keys(c, {"name", "kind", "references"}, "column of " + where);
        ColumnSpec col;
        col.name = required_string(c, "name", "column of " + where);
        col.kind = parse_kind(required_string(c, "kind", "column '" + col.name + "'"),
                              spec.name + "." + col.name);
        if (col.kind == ColumnKind::reference) {
          col.references = required_string(c, "references", "reference column '" + col.name + "'");
        } else if (c["references"]) {
          throw SchemaError(SchemaErrorCode::parse,
                            "schema: only reference columns may name 'references' (" + col.name + ")");
        }
        spec.columns.push_back(std::move(col));
      }
    }
    schema.tables.push_back(std::move(spec));
  }
  validate(schema);
  return schema;
}

RdbSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError(SchemaErrorCode::parse, "cannot open schema file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_schema(buf.str());
}

void validate(const RdbSchema& schema) {
  if (schema.target_table.empty() || schema.target_column.empty()) {
    throw SchemaError(SchemaErrorCode::missing_target, "schema: missing target designation");
  }
  std::set<std::string> table_names;
  for (const auto& t : schema.tables) {
    if (!table_names.insert(t.name).second) {
      throw SchemaError(SchemaErrorCode::duplicate_name, "schema: duplicate table '" + t.name + "'");
    }
    std::set<std::string> cols;
    if (t.primary_key) cols.insert(*t.primary_key);
    for (const auto& c : t.columns) {
      if (!cols.insert(c.name).second) {
        throw SchemaError(SchemaErrorCode::duplicate_name,
                          "schema: duplicate column '" + c.name + "' in table '" + t.name + "'");
      }
    }
  }
  for (const auto& t : schema.tables) {
    for (const auto& c : t.columns) {
      if (c.kind != ColumnKind::reference) continue;
      const int ref = schema.table_index(c.references);
      if (ref < 0) {
        throw SchemaError(SchemaErrorCode::unresolved_reference,
                          "schema: unresolved reference target '" + c.references + "' in " + t.name +
                              "." + c.name);
      }
      if (!schema.tables[static_cast<std::size_t>(ref)].primary_key) {
        throw SchemaError(SchemaErrorCode::unresolved_reference,
                          "schema: unresolved reference target '" + c.references +
                              "' (table has no primary_key) in " + t.name + "." + c.name);
      }
    }
  }
  const int ti = schema.table_index(schema.target_table);
  if (ti < 0) {
    throw SchemaError(SchemaErrorCode::invalid_target,
                      "schema: target table '" + schema.target_table + "' does not exist");
  }
  const ColumnSpec* tc = schema.tables[static_cast<std::size_t>(ti)].find(schema.target_column);
  if (tc == nullptr) {
    throw SchemaError(SchemaErrorCode::invalid_target, "schema: target column '" +
                                                           schema.target_column +
                                                           "' is not in table '" +
                                                           schema.target_table + "'");
  }
  if (tc->kind != ColumnKind::categorical) {
    throw SchemaError(SchemaErrorCode::invalid_target,
                      "schema: target column '" + schema.target_column + "' must be categorical");
  }
}

std::string dump_schema(const RdbSchema& schema) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "target" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "table" << YAML::Value << schema.target_table;
  out << YAML::Key << "column" << YAML::Value << schema.target_column;
  out << YAML::Key << "positive_label" << YAML::Value << YAML::DoubleQuoted << schema.positive_label;
  out << YAML::EndMap;
  out << YAML::Key << "tables" << YAML::Value << YAML::BeginSeq;
  for (const auto& t : schema.tables) {
    out << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << t.name;
    if (t.primary_key) out << YAML::Key << "primary_key" << YAML::Value << *t.primary_key;
    out << YAML::Key << "columns" << YAML::Value << YAML::BeginSeq;
    for (const auto& c : t.columns) {
      out << YAML::Flow << YAML::BeginMap;
      out << YAML::Key << "name" << YAML::Value << c.name;
      out << YAML::Key << "kind" << YAML::Value << std::string(to_string(c.kind));
      if (c.kind == ColumnKind::reference) out << YAML::Key << "references" << YAML::Value << c.references;
      out << YAML::EndMap;
    }
    out << YAML::EndSeq << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

const Column* Table::find(std::string_view column) const {
  for (const auto& c : columns) {
    if (c.spec.name == column) return &c;
  }
  return nullptr;
}

const Table& Rdb::table(std::string_view name) const {
  for (const auto& t : tables) {
    if (t.name == name) return t;
  }
  throw std::out_of_range("no table '" + std::string(name) + "'");
}

std::size_t Rdb::total_rows() const {
  std::size_t n = 0;
  for (const auto& t : tables) n += t.rows;
  return n;
}

Rdb build_rdb(const RdbSchema& schema, const std::vector<TableCells>& cells) {
  validate(schema);
  if (cells.size() != schema.tables.size()) {
    throw DataError("expected cells for " + std::to_string(schema.tables.size()) + " tables, got " +
                    std::to_string(cells.size()));
  }
  Rdb db;
  db.schema = schema;
  db.tables.resize(schema.tables.size());

  // Header positions per table, and primary-key indices (needed before references resolve).
  std::vector<std::map<std::string, std::size_t>> position(schema.tables.size());
  for (std::size_t ti = 0; ti < schema.tables.size(); ++ti) {
    const TableSpec& spec = schema.tables[ti];
    const TableCells& tc = cells[ti];
    std::set<std::string> expected;
    if (spec.primary_key) expected.insert(*spec.primary_key);
    for (const auto& c : spec.columns) expected.insert(c.name);
    std::set<std::string> got;
    for (std::size_t k = 0; k < tc.header.size(); ++k) {
      if (!got.insert(tc.header[k]).second) {
        throw DataError("table '" + spec.name + "': duplicate header '" + tc.header[k] + "'");
      }
      position[ti][tc.header[k]] = k;
    }
    if (got != expected) {
      std::string want, have;
      for (const auto& e : expected) want += " " + e;
      for (const auto& e : got) have += " " + e;
      throw DataError("table '" + spec.name + "': header mismatch, expected {" + want +
                      " } got {" + have + " }");
    }
    Table& table = db.tables[ti];
    table.name = spec.name;
    table.rows = tc.rows.size();
    for (std::size_t r = 0; r < tc.rows.size(); ++r) {
      if (tc.rows[r].size() != tc.header.size()) {
        throw DataError("table '" + spec.name + "', row " + std::to_string(r + 1) + ": expected " +
                        std::to_string(tc.header.size()) + " cells, got " +
                        std::to_string(tc.rows[r].size()));
      }
      std::string key = spec.primary_key ? tc.rows[r][position[ti][*spec.primary_key]] : std::to_string(r);
      if (key.empty()) {
        throw DataError("table '" + spec.name + "', row " + std::to_string(r + 1) + ": empty primary key");
      }
      if (!table.key_index.emplace(key, static_cast<std::int64_t>(r)).second) {
        throw DataError("table '" + spec.name + "': duplicate primary key '" + key + "'");
      }
      table.keys.push_back(std::move(key));
    }
  }

  for (std::size_t ti = 0; ti < schema.tables.size(); ++ti) {
    const TableSpec& spec = schema.tables[ti];
    const TableCells& tc = cells[ti];
    Table& table = db.tables[ti];
    const bool is_target_table = spec.name == schema.target_table;
    for (const auto& cs : spec.columns) {
      const std::size_t pos = position[ti][cs.name];
      if (is_target_table && cs.name == schema.target_column) {
        std::set<std::string> seen;
        db.labels.reserve(tc.rows.size());
        for (std::size_t r = 0; r < tc.rows.size(); ++r) {
          const std::string& cell = tc.rows[r][pos];
          if (cell.empty()) {
            db.labels.push_back(kUnlabeled);
            continue;
          }
          seen.insert(cell);
          db.labels.push_back(cell == schema.positive_label ? 1 : 0);
        }
        if (seen.size() > 2) {
          throw DataError("target column '" + cs.name + "' is not binary (" +
                          std::to_string(seen.size()) + " distinct values)");
        }
        continue;
      }
      Column col;
      col.spec = cs;
      switch (cs.kind) {
        case ColumnKind::continuous:
          col.numbers.reserve(tc.rows.size());
          for (std::size_t r = 0; r < tc.rows.size(); ++r) {
            const std::string& cell = tc.rows[r][pos];
            col.numbers.push_back(cell.empty() ? std::numeric_limits<double>::quiet_NaN()
                                               : parse_number(cell, spec.name, cs.name, r + 1));
          }
          break;
        case ColumnKind::categorical: {
          std::set<std::string> symbols;
          for (const auto& row : tc.rows) {
            if (!row[pos].empty()) symbols.insert(row[pos]);
          }
          col.vocabulary.emplace_back(kMissingSymbol);
          std::map<std::string, std::int32_t> code;
          for (const auto& s : symbols) {
            code[s] = static_cast<std::int32_t>(col.vocabulary.size());
            col.vocabulary.push_back(s);
          }
          col.codes.reserve(tc.rows.size());
          for (const auto& row : tc.rows) {
            col.codes.push_back(row[pos].empty() ? kMissingCode : code.at(row[pos]));
          }
          break;
        }
        case ColumnKind::reference: {
          const int ref_table = schema.table_index(cs.references);
          const Table& target = db.tables[static_cast<std::size_t>(ref_table)];
          col.refs.reserve(tc.rows.size());
          for (std::size_t r = 0; r < tc.rows.size(); ++r) {
            const std::string& cell = tc.rows[r][pos];
            if (cell.empty()) {
              col.refs.push_back(-1);
              continue;
            }
            auto it = target.key_index.find(cell);
            if (it == target.key_index.end()) {
              throw DataError("table '" + spec.name + "', column '" + cs.name + "', row " +
                              std::to_string(r + 1) + ": reference to nonexistent key '" + cell +
                              "' in table '" + cs.references + "'");
            }
            col.refs.push_back(it->second);
          }
          break;
        }
      }
      table.columns.push_back(std::move(col));
    }
  }
  return db;
}

Rdb load_rdb(const RdbSchema& schema, const std::filesystem::path& csv_directory) {
  std::vector<TableCells> cells;
  for (const auto& spec : schema.tables) {
    const auto path = csv_directory / (spec.name + ".csv");
    auto rows = csv::read_file(path);
    if (rows.empty()) throw DataError("table '" + spec.name + "': " + path.string() + " has no header row");
    TableCells tc;
    tc.header = std::move(rows.front());
    for (std::size_t r = 1; r < rows.size(); ++r) {
      // A blank line parses as one empty field; skip it unless the table really has one column.
      if (rows[r].size() == 1 && rows[r][0].empty() && tc.header.size() > 1) continue;
      tc.rows.push_back(std::move(rows[r]));
    }
    cells.push_back(std::move(tc));
  }
  return build_rdb(schema, cells);
}

void write_rdb(const Rdb& db, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  {
    std::ofstream out(directory / "schema.yaml");
    if (!out) throw DataError("cannot write " + (directory / "schema.yaml").string());
    out << dump_schema(db.schema);
  }
  for (std::size_t ti = 0; ti < db.tables.size(); ++ti) {
    const TableSpec& spec = db.schema.tables[ti];
    const Table& table = db.tables[ti];
    const bool is_target_table = spec.name == db.schema.target_table;
    std::ofstream out(directory / (spec.name + ".csv"), std::ios::binary);
    if (!out) throw DataError("cannot write " + (directory / (spec.name + ".csv")).string());
    csv::Row header;
    if (spec.primary_key) header.push_back(*spec.primary_key);
    for (const auto& cs : spec.columns) header.push_back(cs.name);
    out << csv::format_row(header) << "\n";
    const std::string negative = db.schema.positive_label == "0" ? "1" : "0";
    for (std::size_t r = 0; r < table.rows; ++r) {
      csv::Row row;
      if (spec.primary_key) row.push_back(table.keys[r]);
      for (const auto& cs : spec.columns) {
        if (is_target_table && cs.name == db.schema.target_column) {
          const auto label = db.labels[r];
          row.push_back(label == kUnlabeled ? "" : label == 1 ? db.schema.positive_label : negative);
          continue;
        }
        const Column& col = *table.find(cs.name);
        switch (cs.kind) {
          case ColumnKind::continuous:
            row.push_back(std::isnan(col.numbers[r]) ? "" : format_number(col.numbers[r]));
            break;
          case ColumnKind::categorical:
            row.push_back(col.codes[r] == kMissingCode ? "" : col.vocabulary[static_cast<std::size_t>(col.codes[r])]);
            break;
          case ColumnKind::reference: {
            const auto target = col.refs[r];
            const auto& ref_table = db.tables[static_cast<std::size_t>(db.schema.table_index(cs.references))];
            row.push_back(target < 0 ? "" : ref_table.keys[static_cast<std::size_t>(target)]);
            break;
          }
        }
      }
      out << csv::format_row(row) << "\n";
    }
  }
}

}  // namespace rdbssl::rdb
