#include "rdbssl/pretrain.hpp"

#include "rdbssl/errors.hpp"
#include "rdbssl/util.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <numeric>
#include <optional>
#include <random>

namespace rdbssl::train {

namespace {

using ad::Tape;
using ad::Var;

bool uses_generative(Strategy s) { return s == Strategy::generative || s == Strategy::hybrid; }
bool uses_contrastive(Strategy s) {
  return s == Strategy::infograph || s == Strategy::infonode || s == Strategy::hybrid;
}

double mean_pair_score(const Tensor& left, const Tensor& right, std::span<const ssl::Pair> pairs) {
  if (pairs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [i, j] : pairs) total += left.row(i).dot(right.row(j));
  return total / static_cast<double>(pairs.size());
}

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::untrained:
      return "untrained";
    case Strategy::generative:
      return "generative";
    case Strategy::infograph:
      return "infograph";
    case Strategy::infonode:
      return "infonode";
    case Strategy::hybrid:
      return "hybrid";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view s) {
  for (Strategy k : {Strategy::untrained, Strategy::generative, Strategy::infograph, Strategy::infonode,
                     Strategy::hybrid}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown strategy '" + std::string(s) +
                    "' (expected untrained, generative, infograph, infonode or hybrid)");
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, int batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  const auto size = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < count; start += size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(count, start + size)));
  }
  if (batches.size() >= 2 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

PretrainResult pretrain(ParamStore& encoder, const gnn::EncoderModel& model, std::span<const rdb::Subgraph> subgraphs,
                        const PretrainOptions& options, std::uint64_t seed) {
  for (const auto& sg : subgraphs) {
    if (sg.label) throw std::logic_error("pretrain: subgraphs must be label-free");
  }
  PretrainResult result;
  const Strategy strategy = options.strategy;
  if (strategy == Strategy::untrained) return result;
  if (subgraphs.empty()) throw DataError("pretrain: no subgraphs");
  if (options.epochs < 0) throw ConfigError("pretrain: epochs must be >= 0");
  if (uses_contrastive(strategy) && subgraphs.size() < 2) {
    throw DataError("pretrain: contrastive objectives need at least two subgraphs");
  }
  if (strategy == Strategy::hybrid) {
    if (!(options.alpha0 >= 0.0) || !(options.alpha1 >= 0.0) || (options.alpha0 == 0.0 && options.alpha1 == 0.0)) {
      throw ConfigError("pretrain: hybrid needs alpha0, alpha1 >= 0, not both zero");
    }
  }

  ParamStore decoder;
  if (uses_generative(strategy)) ssl::init_decoder_params(decoder, model, derive_seed(seed, {3}));
  const ssl::ContrastiveMode mode =
      strategy == Strategy::infograph
          ? ssl::ContrastiveMode::infograph
          : (strategy == Strategy::hybrid ? options.hybrid_contrastive : ssl::ContrastiveMode::infonode);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const auto batches = epoch_batches(subgraphs.size(), options.batch_size,
                                       derive_seed(seed, {1, static_cast<std::uint64_t>(epoch)}));
    EpochSummary summary;
    summary.epoch = epoch;
    double loss_total = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const bool final_batch = epoch + 1 == options.epochs && b + 1 == batches.size();
      const auto batch = gnn::collate(subgraphs, batches[b]);
      const auto topo = gnn::make_topology(batch, model.config.direction);
      Tape tape;
      ssl::SslBatchOutcome outcome;
      std::optional<Var> generative, contrastive;

      if (uses_generative(strategy)) {
        const auto corruption = ssl::corrupt_features(
            batch, options.corruption, derive_seed(seed, {2, static_cast<std::uint64_t>(epoch), b}));
        if (corruption.targets.empty()) {
          ++summary.skipped_batches;
          spdlog::debug("pretrain: epoch {} batch {} has no masked slot; skipped", epoch, b);
          continue;
        }
        const auto reps = gnn::encode(tape, encoder, model, corruption.batch, topo);
        generative = ssl::generative_loss(
            ssl::decode(tape, decoder, model, corruption.batch, reps.final(), corruption.targets));
        outcome.generative = generative->scalar();
      }
      if (uses_contrastive(strategy)) {
        const auto reps = gnn::encode(tape, encoder, model, batch, topo);
        const auto pairs = ssl::build_pairs(batch.graph_of_node, batch.graph_count(), mode, options.pairs,
                                            derive_seed(seed, {4, static_cast<std::uint64_t>(epoch), b}));
        if (mode == ssl::ContrastiveMode::infograph) {
          contrastive = ssl::infograph_loss(reps.final(), reps.graph, pairs);
          outcome.infograph = contrastive->scalar();
        } else {
          contrastive = ssl::infonode_loss(reps.initial(), reps.final(), reps.graph, pairs);
          outcome.infonode = contrastive->scalar();
        }
        if (final_batch) {
          const Tensor& h0 = reps.initial().value();
          const Tensor& ht = reps.final().value();
          const Tensor& hg = reps.graph.value();
          outcome.positive_pairs = pairs.positive_node_graph.size() + pairs.positive_node_node.size();
          outcome.negative_pairs = pairs.negative_node_graph.size() + pairs.negative_node_node.size();
          const double pos_ng = mean_pair_score(ht, hg, pairs.positive_node_graph);
          const double neg_ng = mean_pair_score(ht, hg, pairs.negative_node_graph);
          const double pos_nn = mean_pair_score(h0, ht, pairs.positive_node_node);
          const double neg_nn = mean_pair_score(h0, ht, pairs.negative_node_node);
          const auto weight = [](std::size_t a, std::size_t total) {
            return total == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(total);
          };
          outcome.mean_positive_score = weight(pairs.positive_node_graph.size(), outcome.positive_pairs) * pos_ng +
                                        weight(pairs.positive_node_node.size(), outcome.positive_pairs) * pos_nn;
          outcome.mean_negative_score = weight(pairs.negative_node_graph.size(), outcome.negative_pairs) * neg_ng +
                                        weight(pairs.negative_node_node.size(), outcome.negative_pairs) * neg_nn;
        }
      }

      Var loss;
      if (strategy == Strategy::hybrid) {
        loss = ssl::hybrid_loss(*generative, *contrastive, options.alpha0, options.alpha1);
        outcome.hybrid = loss.scalar();
      } else {
        loss = generative ? *generative : *contrastive;
      }
      tape.backward(loss);
      optimizer_step(encoder, options.adam);
      if (uses_generative(strategy)) optimizer_step(decoder, options.adam);

      loss_total += loss.scalar();
      ++summary.batches;
      if (final_batch) result.last_batch = outcome;
    }
    summary.mean_loss = summary.batches > 0 ? loss_total / summary.batches : 0.0;
    spdlog::debug("pretrain[{}] epoch {}: loss {:.6f} over {} batches", to_string(strategy), epoch, summary.mean_loss,
                  summary.batches);
    result.history.push_back(summary);
  }

  result.layer_cosine = oversmoothing_profile(encoder, model, subgraphs);
  std::string profile;
  for (double c : result.layer_cosine) profile += fmt::format("{}{:.4f}", profile.empty() ? "" : " ", c);
  spdlog::info("pretrain[{}] done: final loss {:.6f}; mean pairwise cosine per layer: {}", to_string(strategy),
               result.history.empty() ? 0.0 : result.history.back().mean_loss, profile);
  return result;
}

std::vector<double> oversmoothing_profile(ParamStore& encoder, const gnn::EncoderModel& model,
                                          std::span<const rdb::Subgraph> subgraphs, std::size_t limit) {
  if (subgraphs.empty()) return {};
  const auto batch = gnn::collate(subgraphs.first(std::min(limit, subgraphs.size())));
  const auto topo = gnn::make_topology(batch, model.config.direction);
  Tape tape;
  const auto reps = gnn::encode(tape, encoder, model, batch, topo);
  std::vector<double> out;
  for (const Var& h : reps.layers) out.push_back(gnn::mean_pairwise_cosine(h.value()));
  return out;
}

}  // namespace rdbssl::train
