#pragma once

#include "rdbssl/encoder.hpp"
#include "rdbssl/ssl.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace rdbssl::train {

enum class Strategy { untrained, generative, infograph, infonode, hybrid };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view s);

struct PretrainOptions {
  Strategy strategy = Strategy::generative;
  int epochs = 200;
  int batch_size = 32;
  ssl::CorruptionOptions corruption;
  double alpha0 = 1.0;
  double alpha1 = 1.0;
  ssl::ContrastiveMode hybrid_contrastive = ssl::ContrastiveMode::infonode;
  ssl::PairOptions pairs;
  AdamOptions adam;
};

struct EpochSummary {
  int epoch = 0;
  double mean_loss = 0.0;
  int batches = 0;
  int skipped_batches = 0;  // no masked slot to reconstruct
};

struct PretrainResult {
  std::vector<EpochSummary> history;
  ssl::SslBatchOutcome last_batch;
  std::vector<double> layer_cosine;  // mean pairwise cosine of h^t rows, t = 0..T
};

// Index batches for one epoch: a seeded shuffle cut into batch_size chunks;
// a trailing batch of one graph is merged into the previous one.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, int batch_size, std::uint64_t seed);

// Trains `encoder` in place on label-free subgraphs. Decoder weights used by
// the generative objective live in a private store and are discarded.
// Throws std::logic_error if any subgraph still carries a label.
PretrainResult pretrain(ParamStore& encoder, const gnn::EncoderModel& model, std::span<const rdb::Subgraph> subgraphs,
                        const PretrainOptions& options, std::uint64_t seed);

// Mean pairwise cosine per layer on the first `limit` subgraphs.
std::vector<double> oversmoothing_profile(ParamStore& encoder, const gnn::EncoderModel& model,
                                          std::span<const rdb::Subgraph> subgraphs, std::size_t limit = 256);

}  // namespace rdbssl::train
