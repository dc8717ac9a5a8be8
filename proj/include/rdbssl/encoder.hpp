#pragma once

#include "rdbssl/autodiff.hpp"
#include "rdbssl/rdb_graph.hpp"

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rdbssl::gnn {

enum class Backbone { gcn, pna };
enum class PredictionSource { graph_embedding, target_node };
enum class MessageDirection { undirected, directed };

std::string_view to_string(Backbone b);
std::string_view to_string(PredictionSource s);
std::string_view to_string(MessageDirection d);
Backbone parse_backbone(std::string_view s);
PredictionSource parse_prediction_source(std::string_view s);
MessageDirection parse_message_direction(std::string_view s);

struct EncoderConfig {
  Backbone backbone = Backbone::gcn;
  int layers = 3;
  int hidden = 64;
  int embed_width = 8;  // width of each categorical lookup vector
  PredictionSource prediction_source = PredictionSource::graph_embedding;
  MessageDirection direction = MessageDirection::undirected;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

// Standardisation constants for continuous slots, per type and column.
struct ColumnStats {
  double mean = 0.0;
  double scale = 1.0;
  bool operator==(const ColumnStats&) const = default;
};
struct FeatureStats {
  std::vector<std::vector<ColumnStats>> continuous;  // [type][continuous column]
  bool operator==(const FeatureStats&) const = default;
};

// Mean and population std over every row of each table (std 0 becomes 1).
FeatureStats compute_feature_stats(const rdb::RdbGraph& graph);

// Everything besides trainable parameters that a forward pass needs.
struct EncoderModel {
  EncoderConfig config;
  rdb::GraphSchema schema;
  FeatureStats stats;
};

// Several subgraphs laid out as one block-diagonal graph.
struct GraphBatch {
  std::vector<std::int32_t> node_type;
  std::vector<rdb::NodeAttributes> attributes;
  std::vector<rdb::Edge> edges;
  std::vector<int> graph_of_node;
  std::vector<int> graph_offset;  // graph g owns nodes [graph_offset[g], graph_offset[g+1])

  int graph_count() const { return static_cast<int>(graph_offset.size()) - 1; }
  int node_count() const { return static_cast<int>(node_type.size()); }
  int target_node(int graph) const { return graph_offset[static_cast<std::size_t>(graph)]; }
};

GraphBatch collate(std::span<const rdb::Subgraph> subgraphs);
GraphBatch collate(std::span<const rdb::Subgraph> subgraphs, std::span<const std::size_t> pick);

// Constant structure shared by every layer of one forward pass.
struct Topology {
  std::shared_ptr<const ad::SparseMatrix> gcn_norm;     // D^-1/2 (A + I) D^-1/2
  std::shared_ptr<const ad::NeighborLists> neighbors;  // message sources per node
  std::vector<int> segment;                            // graph of each node
  int graph_count = 0;
  std::vector<int> targets;                            // target node of each graph
};

Topology make_topology(const GraphBatch& batch, MessageDirection direction);

// Encoder weights plus the prediction head. Every tensor is drawn from its
// own stream keyed by (seed, name), so adding parameters elsewhere never
// changes these values.
void init_encoder_params(ParamStore& params, const EncoderModel& model, std::uint64_t seed);
// Adds `name` drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)) on the (seed, name) stream.
void add_fan_in_uniform(ParamStore& params, const std::string& name, Index rows, Index cols, Index fan_in,
                        std::uint64_t seed);

// h^0: per-type linear map of [standardised continuous values, missing
// indicators, categorical lookup vectors] plus a per-type bias vector.
ad::Var embed_nodes(ad::Tape& tape, ParamStore& params, const EncoderModel& model, const GraphBatch& batch);

enum class Activation { relu, identity };

// act(Â h W^T + b).
ad::Var gcn_layer(ad::Var h, const Topology& topo, ad::Var weight, const ad::Var* bias,
                  Activation act = Activation::relu);
// [h ‖ mean ‖ min ‖ max ‖ std] of neighbour states; zeros for isolated nodes.
ad::Var pna_aggregate(ad::Var h, const Topology& topo);
// act([h ‖ aggregates] W^T + b).
ad::Var pna_layer(ad::Var h, const Topology& topo, ad::Var weight, const ad::Var* bias,
                  Activation act = Activation::relu);

// score_i = v . tanh(W h_i); weights softmax within each graph; h_g = sum_i weight_i U h_i.
struct ReadoutWeights {
  ad::Var score_weight;
  ad::Var score_vector;
  ad::Var value_weight;
};
ad::Var attention_scores(ad::Var h, const ReadoutWeights& w);
ad::Var attention_readout(ad::Var h, const Topology& topo, const ReadoutWeights& w);

// Two-layer MLP to one logit per row.
struct HeadWeights {
  ad::Var hidden_weight;
  ad::Var hidden_bias;
  ad::Var output_weight;
  ad::Var output_bias;
};
ad::Var predict_head(ad::Var source, const HeadWeights& w);
HeadWeights head_weights(ad::Tape& tape, ParamStore& params);

struct NodeRepresentations {
  std::vector<ad::Var> layers;  // h^0 ... h^T
  ad::Var graph;                // h_g, one row per graph

  ad::Var initial() const { return layers.front(); }
  ad::Var final() const { return layers.back(); }
};

NodeRepresentations encode(ad::Tape& tape, ParamStore& params, const EncoderModel& model,
                           const GraphBatch& batch, const Topology& topo);

// Rows fed to the prediction head: h_g, or h^T of each target node.
ad::Var prediction_input(const EncoderModel& model, const NodeRepresentations& reps, const Topology& topo);
ad::Var predict_logits(ad::Tape& tape, ParamStore& params, const EncoderModel& model,
                       const NodeRepresentations& reps, const Topology& topo);

// Mean cosine similarity over all row pairs with nonzero norm (over-smoothing diagnostic).
double mean_pairwise_cosine(const Tensor& h);

}  // namespace rdbssl::gnn
