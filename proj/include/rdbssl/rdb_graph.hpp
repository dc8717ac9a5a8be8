#pragma once

#include "rdbssl/rdb.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rdbssl::rdb {

// Feature layout of one node type (one table). Reference columns become
// edges; the target column never appears here.
struct TypeLayout {
  std::string name;
  std::vector<std::string> continuous;
  std::vector<std::string> categorical;
  std::vector<int> vocab_sizes;  // per categorical column, including the missing symbol

  std::size_t slot_count() const { return continuous.size() + categorical.size(); }
};

struct GraphSchema {
  std::vector<TypeLayout> types;
  std::vector<std::string> edge_labels;  // "table.column" of each reference column
  int target_type = -1;

  int type_index(std::string_view name) const;
};

// A_i: per-slot values of one node. numbers[k] is NaN when missing; codes use
// kMissingCode for missing.
struct NodeAttributes {
  std::vector<double> numbers;
  std::vector<std::int32_t> codes;

  bool operator==(const NodeAttributes& other) const;
};

struct Edge {
  std::int64_t src = 0;
  std::int64_t dst = 0;
  std::int32_t label = 0;

  bool operator==(const Edge&) const = default;
};

struct Incidence {
  std::int64_t neighbor = 0;
  std::int32_t label = 0;
  bool outgoing = true;
};

// x = (A, E) over the whole database: one node per row, one labelled edge
// per non-null reference cell.
struct RdbGraph {
  GraphSchema schema;
  std::vector<std::int32_t> node_type;
  std::vector<std::int64_t> node_row;
  std::vector<std::int64_t> type_offset;  // first node id of each type
  std::vector<NodeAttributes> attributes;
  std::vector<Edge> edges;
  std::vector<std::vector<Incidence>> incidence;  // per node, in edge order
  std::vector<std::int8_t> labels;                // per target-table row

  std::size_t node_count() const { return node_type.size(); }
  std::int64_t node_of(int type, std::int64_t row) const { return type_offset[static_cast<std::size_t>(type)] + row; }
  std::size_t target_rows() const { return labels.size(); }
};

RdbGraph build_rdb_graph(const Rdb& db);

// Rooted subgraph for one target row. Node 0 is always the target node.
struct Subgraph {
  std::vector<std::int32_t> node_type;
  std::vector<std::int64_t> source_node;  // node id in the RdbGraph
  std::vector<NodeAttributes> attributes;
  std::vector<Edge> edges;                // local ids, original direction and label
  std::int64_t target_row = 0;
  std::optional<int> label;

  std::size_t node_count() const { return node_type.size(); }
};

struct SampleOptions {
  int depth = 3;
  // Cap per (edge label, direction) neighbour group of each expanded node.
  int fanout_cap = 32;
  // Keep other target-table rows out of the subgraph, so the root is the
  // only node of the target table.
  bool isolate_target_rows = true;
};

// Breadth-first expansion from the target row, traversing edges in both
// directions; a pure function of its arguments.
Subgraph sample_subgraph(const RdbGraph& graph, std::int64_t target_row, const SampleOptions& options,
                         std::uint64_t seed);

std::vector<Subgraph> sample_all(const RdbGraph& graph, const SampleOptions& options, std::uint64_t seed);

// Copy with every label removed; pretraining only ever sees these.
std::vector<Subgraph> strip_labels(std::span<const Subgraph> subgraphs);

// ceil(S% of n) indices, sorted, with each class represented within one
// sample of its proportional share. Requires both classes to be present.
std::vector<std::size_t> stratified_split(std::span<const int> labels, double s_percent,
                                          std::uint64_t seed);

// One JSON object per line: target row, label, nodes (id, type, attributes), edges (i, r, j).
std::string dump_subgraph(const GraphSchema& schema, const Subgraph& subgraph);

}  // namespace rdbssl::rdb
