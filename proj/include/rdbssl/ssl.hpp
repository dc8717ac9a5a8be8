#pragma once

#include "rdbssl/encoder.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace rdbssl::ssl {

// beta and donor choice for one corrupted batch. Slots are ordered
// continuous columns first, then categorical columns.
struct CorruptionPlan {
  double mask_rate = 0.0;
  std::vector<std::vector<std::uint8_t>> keep;  // beta_i: 1 keeps the slot, 0 takes the donor's value
  std::vector<int> donor;                       // -1 when the node is untouched
  std::vector<int> skipped;                     // nodes drawn for masking with no same-type donor
};

struct ContinuousTarget {
  int node = 0;
  int column = 0;
  double value = 0.0;  // original raw value
};
struct CategoricalTarget {
  int node = 0;
  int column = 0;
  int code = 0;
};
struct ReconstructionTargets {
  std::vector<ContinuousTarget> continuous;
  std::vector<CategoricalTarget> categorical;

  bool empty() const { return continuous.empty() && categorical.empty(); }
};

struct CorruptionOptions {
  double mask_rate = 0.15;
  // Reconstruct every observed slot instead of the masked ones only.
  bool reconstruct_all = false;
};

struct Corruption {
  gnn::GraphBatch batch;  // A'
  CorruptionPlan plan;
  ReconstructionTargets targets;
};

// A'_i = beta * A_i + (1 - beta) * A_j with j a uniformly drawn other node of the
// same type in the batch. Missing original continuous values are never targets.
Corruption corrupt_features(const gnn::GraphBatch& batch, const CorruptionOptions& options, std::uint64_t seed);

// Per type: one hidden ReLU layer on h'^T, then a linear head per column.
void init_decoder_params(ParamStore& params, const gnn::EncoderModel& model, std::uint64_t seed);

// Decoder outputs gathered at the target slots.
struct SlotPredictions {
  std::optional<ad::Var> continuous;          // one row per continuous target
  std::vector<double> continuous_targets;     // same order, in the decoder's (standardised) scale
  std::vector<ad::Var> categorical_logits;    // one block per categorical column
  std::vector<std::vector<int>> categorical_targets;
};

SlotPredictions decode(ad::Tape& tape, ParamStore& params, const gnn::EncoderModel& model,
                       const gnn::GraphBatch& batch, ad::Var h_final, const ReconstructionTargets& targets);

// mean squared error over continuous slots + mean cross-entropy over
// categorical slots. Throws DataError("degenerate denoising batch") when empty.
ad::Var generative_loss(const SlotPredictions& predictions);

enum class ContrastiveMode { infograph, infonode };

struct PairOptions {
  // Negatives kept per positive, per pair kind; <= 0 keeps every candidate.
  int negatives_per_positive = 1;
  // Allow node0-nodeT negatives (i, j), i != j, within one graph.
  bool same_graph_node_negatives = false;
};

using Pair = std::pair<int, int>;

struct PairSet {
  std::vector<Pair> positive_node_graph;  // (node, graph)
  std::vector<Pair> negative_node_graph;
  std::vector<Pair> positive_node_node;   // (node for h^0, node for h^T); infonode only
  std::vector<Pair> negative_node_node;
};

PairSet build_pairs(std::span<const int> graph_of_node, int graph_count, ContrastiveMode mode,
                    const PairOptions& options, std::uint64_t seed);

// Dot-product score per pair, one row each.
ad::Var pair_scores(ad::Var left, ad::Var right, std::span<const Pair> pairs);

// -mean log sigmoid(pos) - mean log(1 - sigmoid(neg)).
ad::Var ebm_nce(ad::Var positive_scores, ad::Var negative_scores);

ad::Var infograph_loss(ad::Var h_final, ad::Var h_graph, const PairSet& pairs);
ad::Var infonode_loss(ad::Var h_initial, ad::Var h_final, ad::Var h_graph, const PairSet& pairs);

// alpha0 * L_G + alpha1 * L_C; both weights >= 0 and not both zero.
ad::Var hybrid_loss(ad::Var generative, ad::Var contrastive, double alpha0, double alpha1);

struct SslBatchOutcome {
  std::optional<double> generative;
  std::optional<double> infograph;
  std::optional<double> infonode;
  std::optional<double> hybrid;
  std::size_t positive_pairs = 0;
  std::size_t negative_pairs = 0;
  double mean_positive_score = 0.0;
  double mean_negative_score = 0.0;
};

}  // namespace rdbssl::ssl
