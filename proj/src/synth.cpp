#include "rdbssl/synth.hpp"

#include "rdbssl/errors.hpp"
#include "rdbssl/util.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <queue>
#include <random>

namespace rdbssl::synth {

namespace {

using rdb::ColumnKind;

std::string cell(double v) { return fmt::format("{:.17g}", v); }

rdb::TableSpec entity_table(std::initializer_list<std::pair<const char*, ColumnKind>> columns) {
  rdb::TableSpec t{"entity", "id", {}};
  for (const auto& [name, kind] : columns) t.columns.push_back({name, kind, ""});
  t.columns.push_back({"y", ColumnKind::categorical, ""});
  return t;
}

rdb::RdbSchema single_target_schema(rdb::TableSpec entity) {
  rdb::RdbSchema s;
  s.tables.push_back(std::move(entity));
  s.target_table = "entity";
  s.target_column = "y";
  return s;
}

// Pairwise MI of two standard normals with correlation rho.
double gaussian_mi_bits(double rho) { return -0.5 * std::log2(1.0 - rho * rho); }

}  // namespace

std::string_view to_string(TrapKind kind) {
  switch (kind) {
    case TrapKind::punctual_trap:
      return "punctual_trap";
    case TrapKind::xor_trap:
      return "xor_trap";
    case TrapKind::graph_mutual_noise:
      return "graph_mutual_noise";
  }
  return "?";
}

TrapKind parse_trap_kind(std::string_view name) {
  for (TrapKind k : {TrapKind::punctual_trap, TrapKind::xor_trap, TrapKind::graph_mutual_noise}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown trap kind '" + std::string(name) +
                    "' (expected punctual_trap, xor_trap or graph_mutual_noise)");
}

void TrapSpec::validate() const {
  if (kind == TrapKind::graph_mutual_noise) {
    if (n < 2) throw ConfigError("graph_mutual_noise: n_nodes must be >= 2");
    if (!(edge_prob > 0.0 && edge_prob <= 0.1)) {
      throw ConfigError(fmt::format("graph_mutual_noise: edge_prob {} outside (0, 0.1]", edge_prob));
    }
  } else if (n < 1) {
    throw ConfigError(std::string(to_string(kind)) + ": n must be >= 1");
  }
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError(fmt::format("trap rho {} outside [0, 1)", rho));
}

rdb::Rdb gen_punctual_trap(std::size_t n, double rho, std::uint64_t seed) {
  TrapSpec{TrapKind::punctual_trap, n, rho, 0.01, seed}.validate();
  std::mt19937_64 rng(derive_seed(seed, {1}));
  std::normal_distribution<double> z;
  const double residual = std::sqrt(1.0 - rho * rho);
  rdb::TableCells cells{{"id", "a00", "a01", "a02", "y"}, {}};
  cells.rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a00 = z(rng);
    const double a01 = z(rng);
    const double a02 = rho * a01 + residual * z(rng);
    cells.rows.push_back({std::to_string(i), cell(a00), cell(a01), cell(a02), a00 > 0.0 ? "1" : "0"});
  }
  return rdb::build_rdb(single_target_schema(entity_table({{"a00", ColumnKind::continuous},
                                                           {"a01", ColumnKind::continuous},
                                                           {"a02", ColumnKind::continuous}})),
                        {cells});
}

rdb::Rdb gen_xor_trap(std::size_t n, std::uint64_t seed) {
  TrapSpec{TrapKind::xor_trap, n, 0.0, 0.01, seed}.validate();
  std::mt19937_64 rng(derive_seed(seed, {2}));
  std::bernoulli_distribution coin;
  rdb::TableCells cells{{"id", "a", "b", "y"}, {}};
  cells.rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool a = coin(rng);
    const bool b = coin(rng);
    cells.rows.push_back({std::to_string(i), a ? "1" : "0", b ? "1" : "0", a != b ? "1" : "0"});
  }
  return rdb::build_rdb(
      single_target_schema(entity_table({{"a", ColumnKind::categorical}, {"b", ColumnKind::categorical}})), {cells});
}

rdb::Rdb gen_graph_mutual_noise(std::size_t n_nodes, double edge_prob, double rho, std::uint64_t seed) {
  TrapSpec{TrapKind::graph_mutual_noise, n_nodes, rho, edge_prob, seed}.validate();

  // Bernoulli(edge_prob) over the n(n-1)/2 unordered pairs by geometric skipping.
  std::mt19937_64 edge_rng(derive_seed(seed, {3, 1}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double log_q = std::log1p(-edge_prob);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<std::vector<std::size_t>> adjacency(n_nodes);
  std::size_t i = 0;
  std::size_t j = 0;  // next candidate is (i, i + 1 + j)
  while (i + 1 < n_nodes) {
    const double u = 1.0 - unit(edge_rng);  // (0, 1]
    double skip = std::floor(std::log(u) / log_q);
    while (i + 1 < n_nodes) {
      const double remaining = static_cast<double>(n_nodes - i - 1 - j);
      if (skip < remaining) break;
      skip -= remaining;
      ++i;
      j = 0;
    }
    if (i + 1 >= n_nodes) break;
    j += static_cast<std::size_t>(skip);
    const std::size_t a = i;
    const std::size_t b = i + 1 + j;
    edges.emplace_back(a, b);
    adjacency[a].push_back(b);
    adjacency[b].push_back(a);
    ++j;
    if (i + 1 + j >= n_nodes) {
      ++i;
      j = 0;
    }
  }

  std::mt19937_64 value_rng(derive_seed(seed, {3, 2}));
  std::normal_distribution<double> z;
  const double residual = std::sqrt(1.0 - rho * rho);
  std::vector<double> a0(n_nodes, 0.0);
  std::vector<char> seen(n_nodes, 0);
  for (std::size_t root = 0; root < n_nodes; ++root) {
    if (seen[root]) continue;
    seen[root] = 1;
    a0[root] = z(value_rng);
    std::queue<std::size_t> frontier;
    frontier.push(root);
    while (!frontier.empty()) {
      const std::size_t u = frontier.front();
      frontier.pop();
      for (std::size_t v : adjacency[u]) {
        if (seen[v]) continue;
        seen[v] = 1;
        a0[v] = rho * a0[u] + residual * z(value_rng);
        frontier.push(v);
      }
    }
  }

  std::mt19937_64 signal_rng(derive_seed(seed, {3, 3}));
  rdb::TableCells entity{{"id", "a0", "signal", "y"}, {}};
  for (std::size_t k = 0; k < n_nodes; ++k) {
    const double signal = z(signal_rng);
    entity.rows.push_back({std::to_string(k), cell(a0[k]), cell(signal), signal > 0.0 ? "1" : "0"});
  }
  rdb::TableCells link{{"src", "dst"}, {}};
  for (const auto& [a, b] : edges) link.rows.push_back({std::to_string(a), std::to_string(b)});

  auto schema =
      single_target_schema(entity_table({{"a0", ColumnKind::continuous}, {"signal", ColumnKind::continuous}}));
  schema.tables.push_back(
      {"link", std::nullopt, {{"src", ColumnKind::reference, "entity"}, {"dst", ColumnKind::reference, "entity"}}});
  return rdb::build_rdb(schema, {entity, link});
}

rdb::Rdb generate(const TrapSpec& spec) {
  switch (spec.kind) {
    case TrapKind::punctual_trap:
      return gen_punctual_trap(spec.n, spec.rho, spec.seed);
    case TrapKind::xor_trap:
      return gen_xor_trap(spec.n, spec.seed);
    case TrapKind::graph_mutual_noise:
      return gen_graph_mutual_noise(spec.n, spec.edge_prob, spec.rho, spec.seed);
  }
  throw ConfigError("unknown trap kind");
}

std::string trap_metadata(const TrapSpec& spec) {
  spec.validate();
  nlohmann::ordered_json j;
  j["kind"] = to_string(spec.kind);
  j["n"] = spec.n;
  j["seed"] = spec.seed;
  nlohmann::ordered_json info;
  switch (spec.kind) {
    case TrapKind::punctual_trap:
      j["rho"] = spec.rho;
      info["I(a00;y)"] = 1.0;
      info["I(a01;y)"] = 0.0;
      info["I(a02;y)"] = 0.0;
      info["I(a00;a01)"] = 0.0;
      info["I(a01;a02)"] = gaussian_mi_bits(spec.rho);
      j["roles"] = {{"a00", "punctual signal"}, {"a01", "punctual + mutual noise"}, {"a02", "punctual + mutual noise"}};
      break;
    case TrapKind::xor_trap:
      info["I(a;b)"] = 0.0;
      info["I(a;y)"] = 0.0;
      info["I(b;y)"] = 0.0;
      info["I(a;b;y)"] = -1.0;
      j["roles"] = {{"a", "mutual signal"}, {"b", "mutual signal"}};
      break;
    case TrapKind::graph_mutual_noise:
      j["rho"] = spec.rho;
      j["edge_prob"] = spec.edge_prob;
      info["I(signal;y)"] = 1.0;
      info["I(a0;y)"] = 0.0;
      info["I(a0_i;a0_j|y) tree edge"] = gaussian_mi_bits(spec.rho);
      j["roles"] = {{"signal", "punctual signal"}, {"a0", "graph mutual noise"}};
      break;
  }
  j["information_bits"] = info;
  return j.dump(2) + "\n";
}

void write_dataset(const TrapSpec& spec, const std::filesystem::path& directory) {
  const auto db = generate(spec);
  rdb::write_rdb(db, directory);
  std::ofstream out(directory / "metadata.json", std::ios::binary);
  if (!out) throw DataError("cannot write " + (directory / "metadata.json").string());
  out << trap_metadata(spec);
}

}  // namespace rdbssl::synth
