#include "rdbssl/ssl.hpp"

#include "rdbssl/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

namespace rdbssl::ssl {

namespace {

using ad::Tape;
using ad::Var;

std::string decoder_prefix(const rdb::TypeLayout& layout) { return "decoder." + layout.name; }

// Draws `count` pairs from a candidate pool of size `pool`: all of them when
// count < 0, distinct ones when the pool allows, with replacement otherwise.
template <typename Draw, typename Enumerate>
std::vector<Pair> sample_pairs(std::int64_t pool, std::int64_t count, std::mt19937_64& rng, Draw draw,
                               Enumerate enumerate) {
  if (pool == 0) return {};
  if (count < 0) return enumerate();
  std::vector<Pair> out;
  out.reserve(static_cast<std::size_t>(count));
  if (2 * count <= pool) {
    std::set<Pair> seen;
    while (static_cast<std::int64_t>(out.size()) < count) {
      const Pair p = draw(rng);
      if (seen.insert(p).second) out.push_back(p);
    }
    return out;
  }
  std::vector<Pair> all = enumerate();
  if (count <= pool) {
    for (std::int64_t k = 0; k < count; ++k) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), all.size() - 1);
      std::swap(all[static_cast<std::size_t>(k)], all[pick(rng)]);
    }
    all.resize(static_cast<std::size_t>(count));
    return all;
  }
  std::uniform_int_distribution<std::size_t> pick(0, all.size() - 1);
  for (std::int64_t k = 0; k < count; ++k) out.push_back(all[pick(rng)]);
  return out;
}

std::vector<int> firsts(std::span<const Pair> pairs) {
  std::vector<int> out;
  out.reserve(pairs.size());
  for (const Pair& p : pairs) out.push_back(p.first);
  return out;
}

std::vector<int> seconds(std::span<const Pair> pairs) {
  std::vector<int> out;
  out.reserve(pairs.size());
  for (const Pair& p : pairs) out.push_back(p.second);
  return out;
}

}  // namespace

Corruption corrupt_features(const gnn::GraphBatch& batch, const CorruptionOptions& options, std::uint64_t seed) {
  if (batch.node_count() == 0) throw DataError("corrupt_features: empty batch");
  if (!(options.mask_rate >= 0.0 && options.mask_rate <= 1.0)) {
    throw std::invalid_argument("corrupt_features: mask_rate must be in [0, 1]");
  }
  const auto n = static_cast<std::size_t>(batch.node_count());
  std::map<std::int32_t, std::vector<int>> by_type;
  for (std::size_t i = 0; i < n; ++i) by_type[batch.node_type[i]].push_back(static_cast<int>(i));

  Corruption out;
  out.batch = batch;
  out.plan.mask_rate = options.mask_rate;
  out.plan.keep.resize(n);
  out.plan.donor.assign(n, -1);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = batch.attributes[i];
    const std::size_t c = a.numbers.size();
    auto& keep = out.plan.keep[i];
    keep.assign(c + a.codes.size(), 1);
    bool any = false;
    for (auto& bit : keep) {
      if (unit(rng) < options.mask_rate) {
        bit = 0;
        any = true;
      }
    }
    if (any) {
      const auto& pool = by_type[batch.node_type[i]];
      if (pool.size() < 2) {
        std::fill(keep.begin(), keep.end(), 1);
        out.plan.skipped.push_back(static_cast<int>(i));
        spdlog::debug("corrupt_features: node {} has no same-type donor; left unmasked", i);
      } else {
        const auto self = static_cast<std::size_t>(std::find(pool.begin(), pool.end(), static_cast<int>(i)) - pool.begin());
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 2);
        std::size_t k = pick(rng);
        if (k >= self) ++k;
        const int j = pool[k];
        out.plan.donor[i] = j;
        auto& corrupted = out.batch.attributes[i];
        const auto& donor = batch.attributes[static_cast<std::size_t>(j)];
        for (std::size_t s = 0; s < keep.size(); ++s) {
          if (keep[s]) continue;
          if (s < c) {
            corrupted.numbers[s] = donor.numbers[s];
          } else {
            corrupted.codes[s - c] = donor.codes[s - c];
          }
        }
      }
    }
    for (std::size_t s = 0; s < keep.size(); ++s) {
      if (keep[s] && !options.reconstruct_all) continue;
      if (s < c) {
        if (!std::isnan(a.numbers[s])) out.targets.continuous.push_back({static_cast<int>(i), static_cast<int>(s), a.numbers[s]});
      } else {
        out.targets.categorical.push_back({static_cast<int>(i), static_cast<int>(s - c), a.codes[s - c]});
      }
    }
  }
  return out;
}

void init_decoder_params(ParamStore& params, const gnn::EncoderModel& model, std::uint64_t seed) {
  const Index h = model.config.hidden;
  for (const rdb::TypeLayout& layout : model.schema.types) {
    if (layout.slot_count() == 0) continue;
    const std::string prefix = decoder_prefix(layout);
    gnn::add_fan_in_uniform(params, prefix + ".hidden.weight", h, h, h, seed);
    gnn::add_fan_in_uniform(params, prefix + ".hidden.bias", 1, h, h, seed);
    for (const std::string& col : layout.continuous) {
      gnn::add_fan_in_uniform(params, prefix + "." + col + ".weight", 1, h, h, seed);
      gnn::add_fan_in_uniform(params, prefix + "." + col + ".bias", 1, 1, h, seed);
    }
    for (std::size_t k = 0; k < layout.categorical.size(); ++k) {
      const std::string& col = layout.categorical[k];
      gnn::add_fan_in_uniform(params, prefix + "." + col + ".weight", layout.vocab_sizes[k], h, h, seed);
      gnn::add_fan_in_uniform(params, prefix + "." + col + ".bias", 1, layout.vocab_sizes[k], h, seed);
    }
  }
}

SlotPredictions decode(Tape& tape, ParamStore& params, const gnn::EncoderModel& model, const gnn::GraphBatch& batch,
                       Var h_final, const ReconstructionTargets& targets) {
  const auto& types = model.schema.types;
  // (type, column) -> indices into the target lists
  std::map<std::pair<int, int>, std::vector<std::size_t>> continuous_groups, categorical_groups;
  std::map<int, std::vector<int>> type_nodes;
  for (std::size_t k = 0; k < targets.continuous.size(); ++k) {
    const auto& t = targets.continuous[k];
    const int type = batch.node_type[static_cast<std::size_t>(t.node)];
    continuous_groups[{type, t.column}].push_back(k);
    type_nodes[type].push_back(t.node);
  }
  for (std::size_t k = 0; k < targets.categorical.size(); ++k) {
    const auto& t = targets.categorical[k];
    const int type = batch.node_type[static_cast<std::size_t>(t.node)];
    categorical_groups[{type, t.column}].push_back(k);
    type_nodes[type].push_back(t.node);
  }

  std::map<int, Var> hidden;
  std::map<int, std::map<int, int>> local_row;
  for (auto& [type, nodes] : type_nodes) {
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    for (std::size_t r = 0; r < nodes.size(); ++r) local_row[type][nodes[r]] = static_cast<int>(r);
    const std::string prefix = decoder_prefix(types.at(static_cast<std::size_t>(type)));
    hidden[type] = ad::relu(ad::linear(ad::gather_rows(h_final, nodes), tape.param(params, prefix + ".hidden.weight"),
                                       tape.param(params, prefix + ".hidden.bias")));
  }

  SlotPredictions out;
  std::vector<Var> continuous_blocks;
  for (const auto& [key, members] : continuous_groups) {
    const auto [type, column] = key;
    const rdb::TypeLayout& layout = types[static_cast<std::size_t>(type)];
    const std::string prefix = decoder_prefix(layout) + "." + layout.continuous[static_cast<std::size_t>(column)];
    Var pred = ad::linear(hidden[type], tape.param(params, prefix + ".weight"), tape.param(params, prefix + ".bias"));
    const gnn::ColumnStats& stats =
        model.stats.continuous.at(static_cast<std::size_t>(type)).at(static_cast<std::size_t>(column));
    std::vector<int> rows;
    for (std::size_t k : members) {
      rows.push_back(local_row[type][targets.continuous[k].node]);
      out.continuous_targets.push_back((targets.continuous[k].value - stats.mean) / stats.scale);
    }
    continuous_blocks.push_back(ad::gather_rows(pred, std::move(rows)));
  }
  if (!continuous_blocks.empty()) {
    out.continuous = continuous_blocks.size() == 1 ? continuous_blocks.front() : ad::concat_rows(continuous_blocks);
  }
  for (const auto& [key, members] : categorical_groups) {
    const auto [type, column] = key;
    const rdb::TypeLayout& layout = types[static_cast<std::size_t>(type)];
    const std::string prefix = decoder_prefix(layout) + "." + layout.categorical[static_cast<std::size_t>(column)];
    Var logits = ad::linear(hidden[type], tape.param(params, prefix + ".weight"), tape.param(params, prefix + ".bias"));
    const int vocab = layout.vocab_sizes[static_cast<std::size_t>(column)];
    std::vector<int> rows, labels;
    for (std::size_t k : members) {
      rows.push_back(local_row[type][targets.categorical[k].node]);
      const int code = targets.categorical[k].code;
      labels.push_back(code >= 0 && code < vocab ? code : 0);
    }
    out.categorical_logits.push_back(ad::gather_rows(logits, std::move(rows)));
    out.categorical_targets.push_back(std::move(labels));
  }
  return out;
}

Var generative_loss(const SlotPredictions& predictions) {
  std::optional<Var> loss;
  if (predictions.continuous) {
    const Var pred = *predictions.continuous;
    if (static_cast<std::size_t>(pred.rows()) != predictions.continuous_targets.size()) {
      throw ShapeError("generative_loss: " + std::to_string(pred.rows()) + " predictions for " +
                       std::to_string(predictions.continuous_targets.size()) + " targets");
    }
    Tensor target(pred.rows(), 1);
    for (Index r = 0; r < pred.rows(); ++r) target(r, 0) = predictions.continuous_targets[static_cast<std::size_t>(r)];
    loss = ad::mean(ad::square(pred - pred.tape()->constant(std::move(target), "targets")));
  }
  if (predictions.categorical_logits.size() != predictions.categorical_targets.size()) {
    throw ShapeError("generative_loss: categorical logits and targets differ in count");
  }
  std::vector<Var> ce;
  for (std::size_t k = 0; k < predictions.categorical_logits.size(); ++k) {
    if (predictions.categorical_targets[k].empty()) continue;
    ce.push_back(ad::softmax_cross_entropy(predictions.categorical_logits[k], predictions.categorical_targets[k]));
  }
  if (!ce.empty()) {
    Var term = ad::mean(ce.size() == 1 ? ce.front() : ad::concat_rows(ce));
    loss = loss ? *loss + term : term;
  }
  if (!loss) throw DataError("degenerate denoising batch: no masked slots to reconstruct");
  return *loss;
}

PairSet build_pairs(std::span<const int> graph_of_node, int graph_count, ContrastiveMode mode,
                    const PairOptions& options, std::uint64_t seed) {
  if (graph_count < 2) throw DataError("build_pairs: a batch of one graph has no negatives");
  const auto n = static_cast<int>(graph_of_node.size());
  std::vector<std::int64_t> sizes(static_cast<std::size_t>(graph_count), 0);
  for (int g : graph_of_node) ++sizes[static_cast<std::size_t>(g)];

  PairSet pairs;
  for (int i = 0; i < n; ++i) pairs.positive_node_graph.emplace_back(i, graph_of_node[static_cast<std::size_t>(i)]);
  if (mode == ContrastiveMode::infonode) {
    for (int i = 0; i < n; ++i) pairs.positive_node_node.emplace_back(i, i);
  }

  std::mt19937_64 rng(seed);
  const std::int64_t npp = options.negatives_per_positive;
  auto wanted = [npp](std::size_t positives) { return npp <= 0 ? -1 : npp * static_cast<std::int64_t>(positives); };
  std::uniform_int_distribution<int> any_node(0, n - 1);
  std::uniform_int_distribution<int> other_graph(0, graph_count - 2);

  pairs.negative_node_graph = sample_pairs(
      static_cast<std::int64_t>(n) * (graph_count - 1), wanted(pairs.positive_node_graph.size()), rng,
      [&](std::mt19937_64& r) {
        const int i = any_node(r);
        int g = other_graph(r);
        if (g >= graph_of_node[static_cast<std::size_t>(i)]) ++g;
        return Pair{i, g};
      },
      [&] {
        std::vector<Pair> all;
        for (int i = 0; i < n; ++i) {
          for (int g = 0; g < graph_count; ++g) {
            if (g != graph_of_node[static_cast<std::size_t>(i)]) all.emplace_back(i, g);
          }
        }
        return all;
      });

  if (mode == ContrastiveMode::infonode) {
    auto eligible = [&](int i, int j) {
      if (options.same_graph_node_negatives) return i != j;
      return graph_of_node[static_cast<std::size_t>(i)] != graph_of_node[static_cast<std::size_t>(j)];
    };
    std::int64_t pool = static_cast<std::int64_t>(n) * n;
    if (options.same_graph_node_negatives) {
      pool -= n;
    } else {
      for (std::int64_t s : sizes) pool -= s * s;
    }
    pairs.negative_node_node = sample_pairs(
        pool, wanted(pairs.positive_node_node.size()), rng,
        [&](std::mt19937_64& r) {
          for (;;) {
            const int i = any_node(r), j = any_node(r);
            if (eligible(i, j)) return Pair{i, j};
          }
        },
        [&] {
          std::vector<Pair> all;
          for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
              if (eligible(i, j)) all.emplace_back(i, j);
            }
          }
          return all;
        });
  }
  return pairs;
}

Var pair_scores(Var left, Var right, std::span<const Pair> pairs) {
  return ad::row_dot(ad::gather_rows(left, firsts(pairs)), ad::gather_rows(right, seconds(pairs)));
}

Var ebm_nce(Var positive_scores, Var negative_scores) {
  if (positive_scores.rows() == 0 || negative_scores.rows() == 0) {
    throw DataError("ebm_nce: empty positive or negative pair set");
  }
  return -ad::mean(ad::log_sigmoid(positive_scores)) - ad::mean(ad::log_sigmoid(-negative_scores));
}

Var infograph_loss(Var h_final, Var h_graph, const PairSet& pairs) {
  if (pairs.positive_node_graph.empty() || pairs.negative_node_graph.empty()) {
    throw DataError("infograph_loss: empty node-graph pair set");
  }
  return ebm_nce(pair_scores(h_final, h_graph, pairs.positive_node_graph),
                 pair_scores(h_final, h_graph, pairs.negative_node_graph));
}

Var infonode_loss(Var h_initial, Var h_final, Var h_graph, const PairSet& pairs) {
  if (pairs.positive_node_node.empty() || pairs.negative_node_node.empty()) {
    throw DataError("infonode_loss: empty node-node pair set");
  }
  Var node_term = ebm_nce(pair_scores(h_initial, h_final, pairs.positive_node_node),
                          pair_scores(h_initial, h_final, pairs.negative_node_node));
  return node_term + infograph_loss(h_final, h_graph, pairs);
}

Var hybrid_loss(Var generative, Var contrastive, double alpha0, double alpha1) {
  if (!(alpha0 >= 0.0) || !(alpha1 >= 0.0)) throw ConfigError("hybrid_loss: alpha0 and alpha1 must be >= 0");
  if (alpha0 == 0.0 && alpha1 == 0.0) throw ConfigError("hybrid_loss: alpha0 and alpha1 are both zero");
  return alpha0 * generative + alpha1 * contrastive;
}

}  // namespace rdbssl::ssl
