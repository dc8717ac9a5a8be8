#include "rdbssl/encoder.hpp"

#include "rdbssl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace rdbssl::gnn {

namespace {

using ad::Tape;
using ad::Var;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Tensor uniform_tensor(Index rows, Index cols, double bound, std::uint64_t seed, std::string_view name) {
  const std::uint64_t key = fnv1a(name);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) t(i, j) = dist(rng);
  }
  return t;
}

Index embed_input_width(const rdb::TypeLayout& layout, int embed_width) {
  return static_cast<Index>(2 * layout.continuous.size() + layout.categorical.size() * static_cast<std::size_t>(embed_width));
}

std::string type_prefix(const rdb::TypeLayout& layout) { return "embed." + layout.name; }

Var apply(Var x, Activation act) { return act == Activation::relu ? ad::relu(x) : x; }

}  // namespace

void add_fan_in_uniform(ParamStore& params, const std::string& name, Index rows, Index cols, Index fan_in,
                        std::uint64_t seed) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
  params.add(name, uniform_tensor(rows, cols, bound, seed, name));
}

std::string_view to_string(Backbone b) { return b == Backbone::gcn ? "gcn" : "pna"; }
std::string_view to_string(PredictionSource s) {
  return s == PredictionSource::graph_embedding ? "graph_embedding" : "target_node";
}
std::string_view to_string(MessageDirection d) {
  return d == MessageDirection::undirected ? "undirected" : "directed";
}

Backbone parse_backbone(std::string_view s) {
  if (s == "gcn" || s == "GCN") return Backbone::gcn;
  if (s == "pna" || s == "PNA") return Backbone::pna;
  throw ConfigError("unknown backbone '" + std::string(s) + "' (expected gcn or pna)");
}

PredictionSource parse_prediction_source(std::string_view s) {
  if (s == "graph_embedding") return PredictionSource::graph_embedding;
  if (s == "target_node") return PredictionSource::target_node;
  throw ConfigError("unknown prediction source '" + std::string(s) +
                    "' (expected graph_embedding or target_node)");
}

MessageDirection parse_message_direction(std::string_view s) {
  if (s == "undirected") return MessageDirection::undirected;
  if (s == "directed") return MessageDirection::directed;
  throw ConfigError("unknown message direction '" + std::string(s) + "' (expected undirected or directed)");
}

void EncoderConfig::validate() const {
  if (layers < 1) throw ConfigError("encoder layers must be >= 1, got " + std::to_string(layers));
  if (hidden < 1) throw ConfigError("encoder hidden width must be >= 1, got " + std::to_string(hidden));
  if (embed_width < 1) throw ConfigError("encoder embed_width must be >= 1, got " + std::to_string(embed_width));
}

FeatureStats compute_feature_stats(const rdb::RdbGraph& graph) {
  FeatureStats stats;
  const auto& types = graph.schema.types;
  std::vector<std::vector<double>> sum(types.size()), sq(types.size());
  std::vector<std::vector<std::size_t>> count(types.size());
  for (std::size_t t = 0; t < types.size(); ++t) {
    sum[t].assign(types[t].continuous.size(), 0.0);
    sq[t].assign(types[t].continuous.size(), 0.0);
    count[t].assign(types[t].continuous.size(), 0);
  }
  for (std::size_t n = 0; n < graph.node_count(); ++n) {
    const auto t = static_cast<std::size_t>(graph.node_type[n]);
    const auto& numbers = graph.attributes[n].numbers;
    for (std::size_t k = 0; k < numbers.size(); ++k) {
      if (std::isnan(numbers[k])) continue;
      sum[t][k] += numbers[k];
      ++count[t][k];
    }
  }
  stats.continuous.resize(types.size());
  for (std::size_t t = 0; t < types.size(); ++t) {
    stats.continuous[t].resize(types[t].continuous.size());
    for (std::size_t k = 0; k < types[t].continuous.size(); ++k) {
      if (count[t][k] > 0) stats.continuous[t][k].mean = sum[t][k] / static_cast<double>(count[t][k]);
    }
  }
  for (std::size_t n = 0; n < graph.node_count(); ++n) {
    const auto t = static_cast<std::size_t>(graph.node_type[n]);
    const auto& numbers = graph.attributes[n].numbers;
    for (std::size_t k = 0; k < numbers.size(); ++k) {
      if (std::isnan(numbers[k])) continue;
      const double d = numbers[k] - stats.continuous[t][k].mean;
      sq[t][k] += d * d;
    }
  }
  for (std::size_t t = 0; t < types.size(); ++t) {
    for (std::size_t k = 0; k < types[t].continuous.size(); ++k) {
      if (count[t][k] == 0) continue;
      const double sd = std::sqrt(sq[t][k] / static_cast<double>(count[t][k]));
      stats.continuous[t][k].scale = sd > 0.0 ? sd : 1.0;
    }
  }
  return stats;
}

GraphBatch collate(std::span<const rdb::Subgraph> subgraphs) {
  std::vector<std::size_t> all(subgraphs.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return collate(subgraphs, all);
}

GraphBatch collate(std::span<const rdb::Subgraph> subgraphs, std::span<const std::size_t> pick) {
  GraphBatch b;
  b.graph_offset.push_back(0);
  for (std::size_t g = 0; g < pick.size(); ++g) {
    const rdb::Subgraph& sg = subgraphs[pick[g]];
    if (sg.node_count() == 0) throw std::invalid_argument("collate: subgraph without nodes");
    const auto base = static_cast<std::int64_t>(b.node_type.size());
    b.node_type.insert(b.node_type.end(), sg.node_type.begin(), sg.node_type.end());
    b.attributes.insert(b.attributes.end(), sg.attributes.begin(), sg.attributes.end());
    b.graph_of_node.insert(b.graph_of_node.end(), sg.node_count(), static_cast<int>(g));
    for (const rdb::Edge& e : sg.edges) b.edges.push_back({e.src + base, e.dst + base, e.label});
    b.graph_offset.push_back(static_cast<int>(b.node_type.size()));
  }
  return b;
}

Topology make_topology(const GraphBatch& batch, MessageDirection direction) {
  const int n = batch.node_count();
  std::vector<std::set<int>> sources(static_cast<std::size_t>(n));
  for (const rdb::Edge& e : batch.edges) {
    const int s = static_cast<int>(e.src), d = static_cast<int>(e.dst);
    if (s < 0 || d < 0 || s >= n || d >= n) throw std::out_of_range("make_topology: edge endpoint out of range");
    if (s == d) continue;
    // A referencing row receives messages from the row it references.
    sources[static_cast<std::size_t>(s)].insert(d);
    if (direction == MessageDirection::undirected) sources[static_cast<std::size_t>(d)].insert(s);
  }

  auto neighbors = std::make_shared<ad::NeighborLists>(static_cast<std::size_t>(n));
  std::vector<double> degree(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& nb = (*neighbors)[static_cast<std::size_t>(i)];
    nb.assign(sources[static_cast<std::size_t>(i)].begin(), sources[static_cast<std::size_t>(i)].end());
    degree[static_cast<std::size_t>(i)] = 1.0 + static_cast<double>(nb.size());
  }

  std::vector<Eigen::Triplet<double>> triplets;
  for (int i = 0; i < n; ++i) {
    const double di = degree[static_cast<std::size_t>(i)];
    triplets.emplace_back(i, i, 1.0 / di);
    for (int j : (*neighbors)[static_cast<std::size_t>(i)]) {
      triplets.emplace_back(i, j, 1.0 / std::sqrt(di * degree[static_cast<std::size_t>(j)]));
    }
  }
  auto norm = std::make_shared<ad::SparseMatrix>(n, n);
  norm->setFromTriplets(triplets.begin(), triplets.end());

  Topology topo;
  topo.gcn_norm = std::move(norm);
  topo.neighbors = std::move(neighbors);
  topo.segment = batch.graph_of_node;
  topo.graph_count = batch.graph_count();
  for (int g = 0; g < topo.graph_count; ++g) topo.targets.push_back(batch.target_node(g));
  return topo;
}

void init_encoder_params(ParamStore& params, const EncoderModel& model, std::uint64_t seed) {
  const EncoderConfig& cfg = model.config;
  cfg.validate();
  const Index h = cfg.hidden;
  for (const rdb::TypeLayout& layout : model.schema.types) {
    const std::string prefix = type_prefix(layout);
    const Index in = embed_input_width(layout, cfg.embed_width);
    if (in > 0) add_fan_in_uniform(params, prefix + ".weight", h, in, in, seed);
    add_fan_in_uniform(params, prefix + ".bias", 1, h, in, seed);
    for (std::size_t k = 0; k < layout.categorical.size(); ++k) {
      const std::string name = prefix + "." + layout.categorical[k] + ".table";
      params.add(name, uniform_tensor(layout.vocab_sizes[k], cfg.embed_width, 1.0, seed, name));
    }
  }
  const Index layer_in = cfg.backbone == Backbone::gcn ? h : 5 * h;
  for (int t = 1; t <= cfg.layers; ++t) {
    const std::string prefix = "gnn." + std::to_string(t);
    add_fan_in_uniform(params, prefix + ".weight", h, layer_in, layer_in, seed);
    add_fan_in_uniform(params, prefix + ".bias", 1, h, layer_in, seed);
  }
  add_fan_in_uniform(params, "readout.score_weight", h, h, h, seed);
  add_fan_in_uniform(params, "readout.score_vector", 1, h, h, seed);
  add_fan_in_uniform(params, "readout.value_weight", h, h, h, seed);
  add_fan_in_uniform(params, "head.hidden.weight", h, h, h, seed);
  add_fan_in_uniform(params, "head.hidden.bias", 1, h, h, seed);
  add_fan_in_uniform(params, "head.output.weight", 1, h, h, seed);
  add_fan_in_uniform(params, "head.output.bias", 1, 1, h, seed);
}

Var embed_nodes(Tape& tape, ParamStore& params, const EncoderModel& model, const GraphBatch& batch) {
  const auto& types = model.schema.types;
  const int n = batch.node_count();
  if (n == 0) throw std::invalid_argument("embed_nodes: empty batch");
  std::vector<std::vector<int>> members(types.size());
  for (int i = 0; i < n; ++i) {
    const int t = batch.node_type[static_cast<std::size_t>(i)];
    if (t < 0 || static_cast<std::size_t>(t) >= types.size()) {
      throw DataError("embed_nodes: unknown node type " + std::to_string(t));
    }
    members[static_cast<std::size_t>(t)].push_back(i);
  }

  std::vector<Var> blocks;
  std::vector<int> position(static_cast<std::size_t>(n));
  int stacked = 0;
  for (std::size_t t = 0; t < types.size(); ++t) {
    const auto& rows = members[t];
    if (rows.empty()) continue;
    const rdb::TypeLayout& layout = types[t];
    const std::string prefix = type_prefix(layout);
    const auto m = static_cast<Index>(rows.size());
    const auto c = static_cast<Index>(layout.continuous.size());

    std::vector<Var> parts;
    if (c > 0) {
      Tensor values = Tensor::Zero(m, c);
      Tensor missing = Tensor::Zero(m, c);
      for (Index r = 0; r < m; ++r) {
        const auto& numbers = batch.attributes[static_cast<std::size_t>(rows[static_cast<std::size_t>(r)])].numbers;
        if (static_cast<Index>(numbers.size()) != c) throw DataError("embed_nodes: attribute count mismatch");
        for (Index k = 0; k < c; ++k) {
          const double v = numbers[static_cast<std::size_t>(k)];
          if (std::isnan(v)) {
            missing(r, k) = 1.0;
          } else {
            const ColumnStats& s = model.stats.continuous.at(t).at(static_cast<std::size_t>(k));
            values(r, k) = (v - s.mean) / s.scale;
          }
        }
      }
      parts.push_back(tape.constant(std::move(values), "continuous"));
      parts.push_back(tape.constant(std::move(missing), "missing"));
    }
    for (std::size_t k = 0; k < layout.categorical.size(); ++k) {
      const int vocab = layout.vocab_sizes[k];
      std::vector<int> codes(rows.size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& a = batch.attributes[static_cast<std::size_t>(rows[r])].codes;
        if (a.size() != layout.categorical.size()) throw DataError("embed_nodes: attribute count mismatch");
        const int code = a[k];
        codes[r] = code >= 0 && code < vocab ? code : 0;
      }
      parts.push_back(ad::gather_rows(tape.param(params, prefix + "." + layout.categorical[k] + ".table"),
                                      std::move(codes)));
    }

    Var bias = tape.param(params, prefix + ".bias");
    Var block;
    if (parts.empty()) {
      block = tape.constant(Tensor::Zero(m, bias.cols()), "featureless") + bias;
    } else {
      block = ad::linear(ad::concat_cols(parts), tape.param(params, prefix + ".weight"), bias);
    }
    blocks.push_back(block);
    for (int i : rows) position[static_cast<std::size_t>(i)] = stacked++;
  }
  Var stacked_rows = blocks.size() == 1 ? blocks.front() : ad::concat_rows(blocks);
  return ad::gather_rows(stacked_rows, std::move(position));
}

Var gcn_layer(Var h, const Topology& topo, Var weight, const Var* bias, Activation act) {
  Var agg = ad::spmm(topo.gcn_norm, h);
  return apply(bias ? ad::linear(agg, weight, *bias) : ad::linear(agg, weight), act);
}

Var pna_aggregate(Var h, const Topology& topo) {
  const Var parts[] = {h, ad::neighbor_mean(h, topo.neighbors), ad::neighbor_min(h, topo.neighbors),
                       ad::neighbor_max(h, topo.neighbors), ad::neighbor_std(h, topo.neighbors)};
  return ad::concat_cols(parts);
}

Var pna_layer(Var h, const Topology& topo, Var weight, const Var* bias, Activation act) {
  Var x = pna_aggregate(h, topo);
  return apply(bias ? ad::linear(x, weight, *bias) : ad::linear(x, weight), act);
}

Var attention_scores(Var h, const ReadoutWeights& w) {
  return ad::matmul_nt(ad::tanh(ad::matmul_nt(h, w.score_weight)), w.score_vector);
}

Var attention_readout(Var h, const Topology& topo, const ReadoutWeights& w) {
  Var weights = ad::segment_softmax(attention_scores(h, w), topo.segment, topo.graph_count);
  Var values = ad::matmul_nt(h, w.value_weight);
  return ad::segment_sum(ad::hadamard(values, weights), topo.segment, topo.graph_count);
}

Var predict_head(Var source, const HeadWeights& w) {
  Var hidden = ad::relu(ad::linear(source, w.hidden_weight, w.hidden_bias));
  return ad::linear(hidden, w.output_weight, w.output_bias);
}

HeadWeights head_weights(Tape& tape, ParamStore& params) {
  return {tape.param(params, "head.hidden.weight"), tape.param(params, "head.hidden.bias"),
          tape.param(params, "head.output.weight"), tape.param(params, "head.output.bias")};
}

NodeRepresentations encode(Tape& tape, ParamStore& params, const EncoderModel& model, const GraphBatch& batch,
                           const Topology& topo) {
  const EncoderConfig& cfg = model.config;
  NodeRepresentations reps;
  reps.layers.push_back(embed_nodes(tape, params, model, batch));
  for (int t = 1; t <= cfg.layers; ++t) {
    const std::string prefix = "gnn." + std::to_string(t);
    Var weight = tape.param(params, prefix + ".weight");
    Var bias = tape.param(params, prefix + ".bias");
    Var prev = reps.layers.back();
    reps.layers.push_back(cfg.backbone == Backbone::gcn ? gcn_layer(prev, topo, weight, &bias)
                                                        : pna_layer(prev, topo, weight, &bias));
  }
  const ReadoutWeights rw{tape.param(params, "readout.score_weight"), tape.param(params, "readout.score_vector"),
                          tape.param(params, "readout.value_weight")};
  reps.graph = attention_readout(reps.final(), topo, rw);
  return reps;
}

Var prediction_input(const EncoderModel& model, const NodeRepresentations& reps, const Topology& topo) {
  if (model.config.prediction_source == PredictionSource::graph_embedding) return reps.graph;
  return ad::gather_rows(reps.final(), topo.targets);
}

Var predict_logits(Tape& tape, ParamStore& params, const EncoderModel& model, const NodeRepresentations& reps,
                   const Topology& topo) {
  return predict_head(prediction_input(model, reps, topo), head_weights(tape, params));
}

double mean_pairwise_cosine(const Tensor& h) {
  std::vector<Index> keep;
  for (Index i = 0; i < h.rows(); ++i) {
    if (h.row(i).norm() > 0.0) keep.push_back(i);
  }
  const auto m = static_cast<Index>(keep.size());
  if (m < 2) return 0.0;
  Tensor unit(m, h.cols());
  for (Index k = 0; k < m; ++k) unit.row(k) = h.row(keep[static_cast<std::size_t>(k)]).normalized();
  const Tensor gram = unit * unit.transpose();
  return (gram.sum() - gram.trace()) / static_cast<double>(m * (m - 1));
}

}  // namespace rdbssl::gnn
