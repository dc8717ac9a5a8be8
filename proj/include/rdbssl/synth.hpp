#pragma once

#include "rdbssl/rdb.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace rdbssl::synth {

enum class TrapKind { punctual_trap, xor_trap, graph_mutual_noise };

std::string_view to_string(TrapKind kind);
TrapKind parse_trap_kind(std::string_view name);  // throws ConfigError

struct TrapSpec {
  TrapKind kind = TrapKind::punctual_trap;
  std::size_t n = 2000;    // rows, or entity count for graph_mutual_noise
  double rho = 0.9;        // correlation of the mutual-noise pair
  double edge_prob = 0.01; // graph_mutual_noise only
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

// Table "entity": id, a00, a01, a02 (continuous), y.
// a00 ~ N(0,1) carries all the signal (y = 1{a00 > 0}); (a01, a02) are standard
// normals with correlation rho, independent of a00 and y.
rdb::Rdb gen_punctual_trap(std::size_t n, double rho, std::uint64_t seed);

// Table "entity": id, a, b (categorical fair coins), y = a XOR b.
rdb::Rdb gen_xor_trap(std::size_t n, std::uint64_t seed);

// Tables "entity" (id, a0, signal, y) and "link" (src, dst -> entity).
// Each unordered pair is linked with probability edge_prob. a0 follows a
// Gaussian chain along a breadth-first spanning forest, so tree edges have
// correlation rho; a0 is independent of y = 1{signal > 0}.
rdb::Rdb gen_graph_mutual_noise(std::size_t n_nodes, double edge_prob, double rho, std::uint64_t seed);

rdb::Rdb generate(const TrapSpec& spec);

// JSON sidecar: the trap parameters plus analytic information quantities in bits.
std::string trap_metadata(const TrapSpec& spec);

// schema.yaml, one CSV per table, and metadata.json.
void write_dataset(const TrapSpec& spec, const std::filesystem::path& directory);

}  // namespace rdbssl::synth
