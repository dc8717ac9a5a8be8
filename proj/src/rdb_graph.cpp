#include "rdbssl/rdb_graph.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <random>
#include <unordered_map>

namespace rdbssl::rdb {

int GraphSchema::type_index(std::string_view name) const {
  for (std::size_t i = 0; i < types.size(); ++i) {
    if (types[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

bool NodeAttributes::operator==(const NodeAttributes& other) const {
  if (codes != other.codes || numbers.size() != other.numbers.size()) return false;
  for (std::size_t k = 0; k < numbers.size(); ++k) {
    const bool a = std::isnan(numbers[k]), b = std::isnan(other.numbers[k]);
    if (a != b || (!a && numbers[k] != other.numbers[k])) return false;
  }
  return true;
}

RdbGraph build_rdb_graph(const Rdb& db) {
  RdbGraph g;
  const RdbSchema& schema = db.schema;
  g.schema.target_type = schema.table_index(schema.target_table);

  std::int64_t offset = 0;
  for (std::size_t ti = 0; ti < db.tables.size(); ++ti) {
    const Table& table = db.tables[ti];
    TypeLayout layout;
    layout.name = table.name;
    for (const Column& c : table.columns) {
      if (c.spec.kind == ColumnKind::continuous) layout.continuous.push_back(c.spec.name);
      if (c.spec.kind == ColumnKind::categorical) {
        layout.categorical.push_back(c.spec.name);
        layout.vocab_sizes.push_back(static_cast<int>(c.vocabulary.size()));
      }
      if (c.spec.kind == ColumnKind::reference) g.schema.edge_labels.push_back(table.name + "." + c.spec.name);
    }
    g.schema.types.push_back(std::move(layout));
    g.type_offset.push_back(offset);
    offset += static_cast<std::int64_t>(table.rows);
  }

  const auto n = static_cast<std::size_t>(offset);
  g.node_type.reserve(n);
  g.node_row.reserve(n);
  g.attributes.reserve(n);
  g.incidence.resize(n);
  for (std::size_t ti = 0; ti < db.tables.size(); ++ti) {
    const Table& table = db.tables[ti];
    for (std::size_t r = 0; r < table.rows; ++r) {
      NodeAttributes a;
      for (const Column& c : table.columns) {
        if (c.spec.kind == ColumnKind::continuous) a.numbers.push_back(c.numbers[r]);
        if (c.spec.kind == ColumnKind::categorical) a.codes.push_back(c.codes[r]);
      }
      g.node_type.push_back(static_cast<std::int32_t>(ti));
      g.node_row.push_back(static_cast<std::int64_t>(r));
      g.attributes.push_back(std::move(a));
    }
  }

  std::int32_t label = 0;
  for (std::size_t ti = 0; ti < db.tables.size(); ++ti) {
    const Table& table = db.tables[ti];
    for (const Column& c : table.columns) {
      if (c.spec.kind != ColumnKind::reference) continue;
      const int dst_type = schema.table_index(c.spec.references);
      for (std::size_t r = 0; r < table.rows; ++r) {
        if (c.refs[r] < 0) continue;
        const Edge e{g.node_of(static_cast<int>(ti), static_cast<std::int64_t>(r)), g.node_of(dst_type, c.refs[r]),
                     label};
        g.incidence[static_cast<std::size_t>(e.src)].push_back({e.dst, label, true});
        g.incidence[static_cast<std::size_t>(e.dst)].push_back({e.src, label, false});
        g.edges.push_back(e);
      }
      ++label;
    }
  }
  g.labels = db.labels;
  return g;
}

Subgraph sample_subgraph(const RdbGraph& graph, std::int64_t target_row, const SampleOptions& options,
                         std::uint64_t seed) {
  if (target_row < 0 || static_cast<std::size_t>(target_row) >= graph.target_rows()) {
    throw std::out_of_range("sample_subgraph: target row " + std::to_string(target_row) +
                            " outside [0, " + std::to_string(graph.target_rows()) + ")");
  }
  if (options.depth < 0) throw std::invalid_argument("sample_subgraph: depth < 0");
  if (options.fanout_cap < 1) throw std::invalid_argument("sample_subgraph: fanout_cap < 1");

  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(target_row), static_cast<std::uint32_t>(target_row >> 32)};
  std::mt19937_64 rng(seq);

  const int target_type = graph.schema.target_type;
  const std::int64_t root = graph.node_of(target_type, target_row);

  std::unordered_map<std::int64_t, std::int64_t> local;
  std::vector<std::int64_t> order{root};
  local.emplace(root, 0);
  std::deque<std::pair<std::int64_t, int>> frontier{{root, 0}};

  while (!frontier.empty()) {
    const auto [node, level] = frontier.front();
    frontier.pop_front();
    if (level >= options.depth) continue;

    // Group neighbours by (label, direction), preserving first-seen order.
    std::map<std::pair<std::int32_t, bool>, std::vector<std::int64_t>> groups;
    std::vector<std::pair<std::int32_t, bool>> group_order;
    for (const Incidence& inc : graph.incidence[static_cast<std::size_t>(node)]) {
      if (options.isolate_target_rows && graph.node_type[static_cast<std::size_t>(inc.neighbor)] == target_type &&
          inc.neighbor != root) {
        continue;
      }
      const auto key = std::make_pair(inc.label, inc.outgoing);
      auto [it, inserted] = groups.try_emplace(key);
      if (inserted) group_order.push_back(key);
      it->second.push_back(inc.neighbor);
    }
    for (const auto& key : group_order) {
      auto& members = groups[key];
      const auto cap = static_cast<std::size_t>(options.fanout_cap);
      if (members.size() > cap) {
        for (std::size_t k = 0; k < cap; ++k) {
          std::uniform_int_distribution<std::size_t> pick(k, members.size() - 1);
          std::swap(members[k], members[pick(rng)]);
        }
        members.resize(cap);
      }
      for (std::int64_t nb : members) {
        if (local.count(nb)) continue;
        local.emplace(nb, static_cast<std::int64_t>(order.size()));
        order.push_back(nb);
        frontier.emplace_back(nb, level + 1);
      }
    }
  }

  Subgraph sg;
  sg.target_row = target_row;
  const auto lbl = graph.labels[static_cast<std::size_t>(target_row)];
  if (lbl != kUnlabeled) sg.label = lbl;
  for (std::int64_t node : order) {
    sg.node_type.push_back(graph.node_type[static_cast<std::size_t>(node)]);
    sg.source_node.push_back(node);
    sg.attributes.push_back(graph.attributes[static_cast<std::size_t>(node)]);
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (const Incidence& inc : graph.incidence[static_cast<std::size_t>(order[i])]) {
      if (!inc.outgoing) continue;
      auto it = local.find(inc.neighbor);
      if (it == local.end()) continue;
      sg.edges.push_back({static_cast<std::int64_t>(i), it->second, inc.label});
    }
  }
  return sg;
}

std::vector<Subgraph> sample_all(const RdbGraph& graph, const SampleOptions& options, std::uint64_t seed) {
  std::vector<Subgraph> out;
  out.reserve(graph.target_rows());
  for (std::size_t r = 0; r < graph.target_rows(); ++r) {
    out.push_back(sample_subgraph(graph, static_cast<std::int64_t>(r), options, seed));
  }
  return out;
}

std::vector<Subgraph> strip_labels(std::span<const Subgraph> subgraphs) {
  std::vector<Subgraph> out(subgraphs.begin(), subgraphs.end());
  for (auto& s : out) s.label.reset();
  return out;
}

std::vector<std::size_t> stratified_split(std::span<const int> labels, double s_percent, std::uint64_t seed) {
  if (!(s_percent > 0.0) || s_percent > 100.0) {
    throw std::invalid_argument("stratified_split: S must be in (0, 100], got " + std::to_string(s_percent));
  }
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      pos.push_back(i);
    } else if (labels[i] == 0) {
      neg.push_back(i);
    } else {
      throw std::invalid_argument("stratified_split: labels must be binary");
    }
  }
  if (pos.empty() || neg.empty()) {
    throw DataError(std::string("stratified_split: the ") + (pos.empty() ? "positive" : "negative") +
                    " class has no members");
  }
  const std::size_t n = labels.size();
  const auto k = static_cast<std::size_t>(std::ceil(s_percent * static_cast<double>(n) / 100.0 - 1e-9));
  auto take_pos = static_cast<std::size_t>(
      std::llround(static_cast<double>(k) * static_cast<double>(pos.size()) / static_cast<double>(n)));
  if (k >= 2) take_pos = std::clamp<std::size_t>(take_pos, 1, k - 1);
  take_pos = std::min(take_pos, pos.size());
  std::size_t take_neg = k - take_pos;
  if (take_neg > neg.size()) {
    take_pos += take_neg - neg.size();
    take_neg = neg.size();
  }

  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  std::vector<std::size_t> out(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(take_pos));
  out.insert(out.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(take_neg));
  std::sort(out.begin(), out.end());
  return out;
}

std::string dump_subgraph(const GraphSchema& schema, const Subgraph& sg) {
  nlohmann::json j;
  j["target_row"] = sg.target_row;
  j["label"] = sg.label ? nlohmann::json(*sg.label) : nlohmann::json(nullptr);
  auto& nodes = j["nodes"] = nlohmann::json::array();
  for (std::size_t i = 0; i < sg.node_count(); ++i) {
    const TypeLayout& layout = schema.types[static_cast<std::size_t>(sg.node_type[i])];
    nlohmann::json attrs = nlohmann::json::object();
    for (std::size_t k = 0; k < layout.continuous.size(); ++k) {
      const double v = sg.attributes[i].numbers[k];
      attrs[layout.continuous[k]] = std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v);
    }
    for (std::size_t k = 0; k < layout.categorical.size(); ++k) {
      attrs[layout.categorical[k]] = sg.attributes[i].codes[k];
    }
    nodes.push_back({{"id", i}, {"type", layout.name}, {"attributes", attrs}});
  }
  auto& edges = j["edges"] = nlohmann::json::array();
  for (const Edge& e : sg.edges) {
    edges.push_back({e.src, schema.edge_labels[static_cast<std::size_t>(e.label)], e.dst});
  }
  return j.dump();
}

}  // namespace rdbssl::rdb
