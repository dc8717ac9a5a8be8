#include "rdbssl/selftest.hpp"

#include "rdbssl/checkpoint.hpp"
#include "rdbssl/gradcheck.hpp"
#include "rdbssl/info.hpp"
#include "rdbssl/pretrain.hpp"
#include "rdbssl/probe.hpp"

#include <fmt/format.h>

#include <cmath>
#include <functional>
#include <random>

namespace rdbssl::selftest {

namespace {

using ad::Tape;
using ad::Var;

constexpr std::string_view kSchema = R"(
target: {table: loan, column: status}
tables:
  - name: client
    primary_key: id
    columns:
      - {name: age, kind: continuous}
      - {name: segment, kind: categorical}
  - name: loan
    primary_key: id
    columns:
      - {name: client_id, kind: reference, references: client}
      - {name: amount, kind: continuous}
      - {name: term, kind: categorical}
      - {name: status, kind: categorical}
  - name: payment
    primary_key: id
    columns:
      - {name: loan_id, kind: reference, references: loan}
      - {name: paid, kind: continuous}
      - {name: channel, kind: categorical}
)";

Check attempt(std::string name, const std::function<std::string(bool&)>& body) {
  Check c{std::move(name), false, ""};
  try {
    c.detail = body(c.passed);
  } catch (const std::exception& e) {
    c.passed = false;
    c.detail = std::string("threw: ") + e.what();
  }
  return c;
}

gnn::EncoderModel small_model(const rdb::RdbGraph& graph, gnn::Backbone backbone) {
  gnn::EncoderModel m;
  m.config.backbone = backbone;
  m.config.layers = 2;
  m.config.hidden = 4;
  m.config.embed_width = 2;
  m.schema = graph.schema;
  m.stats = gnn::compute_feature_stats(graph);
  return m;
}

std::string gradient_oracle(bool& passed) {
  const auto graph = rdb::build_rdb_graph(canonical_fixture());
  const auto subgraphs = rdb::sample_all(graph, {2, 32, true}, 0);
  double worst = 0.0;
  for (gnn::Backbone bb : {gnn::Backbone::gcn, gnn::Backbone::pna}) {
    const auto model = small_model(graph, bb);
    ParamStore ps;
    gnn::init_encoder_params(ps, model, 1);
    ssl::init_decoder_params(ps, model, 1);
    const auto batch = gnn::collate(subgraphs);
    const auto topo = gnn::make_topology(batch, model.config.direction);
    const auto corruption = ssl::corrupt_features(batch, {0.5, false}, 4);
    const auto pairs =
        ssl::build_pairs(batch.graph_of_node, batch.graph_count(), ssl::ContrastiveMode::infonode, {1, false}, 2);
    std::vector<double> targets;
    for (const auto& s : subgraphs) targets.push_back(*s.label);

    auto generative = [&](Tape& t, ParamStore& p) {
      const auto reps = gnn::encode(t, p, model, corruption.batch, topo);
      return ssl::generative_loss(ssl::decode(t, p, model, corruption.batch, reps.final(), corruption.targets));
    };
    auto infonode = [&](Tape& t, ParamStore& p) {
      const auto reps = gnn::encode(t, p, model, batch, topo);
      return ssl::infonode_loss(reps.initial(), reps.final(), reps.graph, pairs);
    };
    const std::vector<ad::LossFn> losses{
        generative,
        [&](Tape& t, ParamStore& p) {
          const auto reps = gnn::encode(t, p, model, batch, topo);
          return ssl::infograph_loss(reps.final(), reps.graph, pairs);
        },
        infonode,
        [&](Tape& t, ParamStore& p) { return ssl::hybrid_loss(generative(t, p), infonode(t, p), 1.0, 1.0); },
        [&](Tape& t, ParamStore& p) {
          const auto reps = gnn::encode(t, p, model, batch, topo);
          return ad::mean(ad::binary_cross_entropy_with_logits(gnn::predict_logits(t, p, model, reps, topo), targets));
        },
    };
    for (std::size_t k = 0; k < losses.size(); ++k) {
      ad::GradCheckOptions opt;
      opt.probe_count = 16;
      opt.seed = k;
      worst = std::max(worst, ad::finite_diff_check(losses[k], ps, opt).max_relative_error);
    }
  }
  passed = worst < 1e-4;
  return fmt::format("max relative error {:.2e} over 5 losses x 2 backbones", worst);
}

std::string loss_baselines(bool& passed) {
  const std::vector<int> graph_of{0, 0, 1, 1};
  const auto pairs = ssl::build_pairs(graph_of, 2, ssl::ContrastiveMode::infonode, {1, false}, 0);
  Tape tape;
  const Var zeros = tape.constant(Tensor::Zero(4, 3));
  const Var graphs = tape.constant(Tensor::Zero(2, 3));
  const double ig = ssl::infograph_loss(zeros, graphs, pairs).scalar();
  const double in = ssl::infonode_loss(zeros, zeros, graphs, pairs).scalar();
  passed = std::abs(ig - 2 * std::log(2.0)) < 1e-9 && std::abs(in - 4 * std::log(2.0)) < 1e-9;
  return fmt::format("infograph {:.12f}, infonode {:.12f}", ig, in);
}

std::string auc_oracle(bool& passed) {
  std::mt19937_64 rng(0);
  int mismatches = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 10 + static_cast<std::size_t>(trial) * 5;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 7);
      y[i] = static_cast<int>(i % 2);
    }
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (y[i] == 1 && y[j] == 0) {
          pairs += 1;
          wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
      }
    }
    if (eval::roc_auc(std::span<const double>(s), y) != wins / pairs) ++mismatches;
  }
  const std::vector<double> example{0.1, 0.4, 0.35, 0.8};
  const double worked = eval::roc_auc(std::span<const double>(example), std::vector<int>{0, 0, 1, 1});
  passed = mismatches == 0 && worked == 0.75;
  return fmt::format("{} mismatches in 20 instances; worked example {}", mismatches, worked);
}

std::string graph_counts(bool& passed) {
  const auto graph = rdb::build_rdb_graph(canonical_fixture());
  const auto sub = rdb::sample_subgraph(graph, 0, {1, 32, true}, 0);
  passed = graph.node_count() == 13 && graph.edges.size() == 10 && sub.node_count() == 4 && sub.edges.size() == 3;
  return fmt::format("graph {} nodes / {} edges; loan 1 depth 1: {} nodes / {} edges", graph.node_count(),
                     graph.edges.size(), sub.node_count(), sub.edges.size());
}

std::string xor_information(bool& passed) {
  const std::vector<int> a{0, 0, 1, 1}, b{0, 1, 0, 1}, y{0, 1, 1, 0};
  const double pair = std::max({info::mi_discrete(a, b), info::mi_discrete(a, y), info::mi_discrete(b, y)});
  const double co = info::co_information(a, b, y);
  passed = pair < 1e-12 && std::abs(co + 1.0) < 1e-12;
  return fmt::format("max pairwise MI {:.1e} bits, co-information {} bits", pair, co);
}

std::string pretrain_determinism(bool& passed) {
  auto db = canonical_fixture();
  auto hash = [](const rdb::Rdb& d) {
    const auto graph = rdb::build_rdb_graph(d);
    const auto model = small_model(graph, gnn::Backbone::gcn);
    ParamStore ps;
    gnn::init_encoder_params(ps, model, 5);
    train::PretrainOptions opt;
    opt.strategy = train::Strategy::hybrid;
    opt.epochs = 3;
    opt.batch_size = 2;
    train::pretrain(ps, model, rdb::strip_labels(rdb::sample_all(graph, {2, 32, true}, 0)), opt, 5);
    return ckpt::checkpoint_hash(model, ps, "hybrid");
  };
  const auto first = hash(db);
  const auto second = hash(db);
  for (auto& l : db.labels) l = l == 1 ? 0 : 1;
  const auto flipped = hash(db);
  passed = first == second && first == flipped;
  return fmt::format("hybrid checkpoint {} (rerun {}, labels flipped {})", first.substr(0, 12),
                     first == second ? "same" : "differs", first == flipped ? "same" : "differs");
}

}  // namespace

rdb::Rdb canonical_fixture() {
  const auto schema = rdb::parse_schema(kSchema);
  std::vector<rdb::TableCells> cells(3);
  cells[0] = {{"id", "age", "segment"}, {{"1", "34", "gold"}, {"2", "51", "silver"}, {"3", "28", "gold"}}};
  cells[1] = {{"id", "client_id", "amount", "term", "status"},
              {{"1", "1", "1200", "12m", "1"},
               {"2", "2", "800", "24m", "0"},
               {"3", "2", "450.5", "12m", "1"},
               {"4", "3", "3000", "36m", "0"}}};
  cells[2] = {{"id", "loan_id", "paid", "channel"},
              {{"1", "1", "100", "card"},
               {"2", "1", "120", "transfer"},
               {"3", "2", "80", "card"},
               {"4", "3", "45", "cash, counter"},
               {"5", "3", "", "card"},
               {"6", "4", "300", "transfer"}}};
  return rdb::build_rdb(schema, cells);
}

std::vector<Check> run_selftest() {
  return {
      attempt("gradient oracle", gradient_oracle),
      attempt("contrastive loss baselines", loss_baselines),
      attempt("roc_auc pairwise oracle", auc_oracle),
      attempt("rdb graph counts", graph_counts),
      attempt("xor co-information", xor_information),
      attempt("pretraining determinism and label freedom", pretrain_determinism),
  };
}

}  // namespace rdbssl::selftest
