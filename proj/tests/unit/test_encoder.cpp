#include "rdbssl/encoder.hpp"
#include "rdbssl/errors.hpp"
#include "rdbssl/gradcheck.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

using namespace rdbssl;
using namespace rdbssl::gnn;
using rdbssl::ad::Tape;
using rdbssl::ad::Var;

namespace {

const std::filesystem::path kToy = std::filesystem::path(RDBSSL_TEST_DATA) / "toy";

Tensor mat(Index r, Index c, std::initializer_list<double> v) {
  Tensor t(r, c);
  auto it = v.begin();
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < c; ++j) t(i, j) = *it++;
  }
  return t;
}

// Single-type schema: one continuous and one categorical (vocab 3) slot.
rdb::GraphSchema tiny_schema() {
  rdb::GraphSchema s;
  s.types.push_back({"item", {"x"}, {"c"}, {3}});
  s.edge_labels = {"item.parent"};
  s.target_type = 0;
  return s;
}

EncoderModel tiny_model(Backbone backbone, int layers, int hidden) {
  EncoderModel m;
  m.config.backbone = backbone;
  m.config.layers = layers;
  m.config.hidden = hidden;
  m.config.embed_width = 2;
  m.schema = tiny_schema();
  m.stats.continuous = {{ColumnStats{0.0, 1.0}}};
  return m;
}

GraphBatch single_graph(int n, std::vector<std::pair<int, int>> edges, std::vector<double> xs = {}) {
  GraphBatch b;
  for (int i = 0; i < n; ++i) {
    b.node_type.push_back(0);
    const double x = xs.empty() ? 0.1 * (i + 1) : xs[static_cast<std::size_t>(i)];
    b.attributes.push_back({{x}, {i % 3}});
    b.graph_of_node.push_back(0);
  }
  for (auto [s, d] : edges) b.edges.push_back({s, d, 0});
  b.graph_offset = {0, n};
  return b;
}

struct ToyData {
  rdb::Rdb db;
  rdb::RdbGraph graph;
  EncoderModel model;
};

ToyData load_toy(Backbone backbone, int layers, int hidden) {
  auto schema = rdb::load_schema(kToy / "schema.yaml");
  ToyData d{rdb::load_rdb(schema, kToy), {}, {}};
  d.graph = rdb::build_rdb_graph(d.db);
  d.model.config.backbone = backbone;
  d.model.config.layers = layers;
  d.model.config.hidden = hidden;
  d.model.schema = d.graph.schema;
  d.model.stats = compute_feature_stats(d.graph);
  return d;
}

}  // namespace

TEST(Config, ValidatesAndParses) {
  EncoderConfig c;
  EXPECT_NO_THROW(c.validate());
  c.layers = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(parse_backbone("pna"), Backbone::pna);
  EXPECT_EQ(parse_prediction_source("target_node"), PredictionSource::target_node);
  EXPECT_THROW(parse_backbone("gat"), ConfigError);
  EXPECT_EQ(to_string(MessageDirection::directed), "directed");
}

TEST(FeatureStats, PopulationMeanAndScale) {
  auto toy = load_toy(Backbone::gcn, 1, 4);
  const int client = toy.graph.schema.type_index("client");
  const auto& s = toy.model.stats.continuous[static_cast<std::size_t>(client)][0];
  std::vector<double> ages;
  for (std::size_t n = 0; n < toy.graph.node_count(); ++n) {
    if (toy.graph.node_type[n] == client) ages.push_back(toy.graph.attributes[n].numbers[0]);
  }
  const double mean = std::accumulate(ages.begin(), ages.end(), 0.0) / static_cast<double>(ages.size());
  double var = 0.0;
  for (double a : ages) var += (a - mean) * (a - mean);
  var /= static_cast<double>(ages.size());
  EXPECT_NEAR(s.mean, mean, 1e-12);
  EXPECT_NEAR(s.scale, std::sqrt(var), 1e-12);
}

TEST(Embed, IdenticalNodesIdenticalRows) {
  auto model = tiny_model(Backbone::gcn, 1, 4);
  ParamStore ps;
  init_encoder_params(ps, model, 3);
  auto b = single_graph(2, {}, {0.5, 0.5});
  b.attributes[1] = b.attributes[0];
  Tape tape;
  const Tensor h0 = embed_nodes(tape, ps, model, b).value();
  EXPECT_TRUE(h0.row(0) == h0.row(1));
}

TEST(Embed, ZeroTablesAndBiasGiveZero) {
  EncoderModel model;
  model.config.hidden = 5;
  model.config.layers = 1;
  model.schema.types.push_back({"tag", {}, {"kind"}, {4}});
  model.stats.continuous = {{}};
  ParamStore ps;
  init_encoder_params(ps, model, 1);
  ps.value("embed.tag.kind.table").setZero();
  ps.value("embed.tag.bias").setZero();
  GraphBatch b;
  b.node_type = {0, 0, 0};
  b.attributes = {{{}, {1}}, {{}, {2}}, {{}, {3}}};
  b.graph_of_node = {0, 0, 0};
  b.graph_offset = {0, 3};
  Tape tape;
  EXPECT_TRUE(embed_nodes(tape, ps, model, b).value().isZero(0.0));
}

TEST(Embed, UnseenCodeMapsToMissingAndUnknownTypeThrows) {
  auto model = tiny_model(Backbone::gcn, 1, 4);
  ParamStore ps;
  init_encoder_params(ps, model, 3);
  auto b = single_graph(2, {});
  b.attributes[0].codes[0] = 0;
  b.attributes[1] = b.attributes[0];
  b.attributes[1].codes[0] = 17;
  Tape tape;
  const Tensor h0 = embed_nodes(tape, ps, model, b).value();
  EXPECT_TRUE(h0.row(0) == h0.row(1));

  b.node_type[1] = 4;
  Tape tape2;
  EXPECT_THROW(embed_nodes(tape2, ps, model, b), DataError);
}

TEST(Embed, MissingContinuousUsesIndicator) {
  auto model = tiny_model(Backbone::gcn, 1, 3);
  ParamStore ps;
  init_encoder_params(ps, model, 5);
  auto b = single_graph(2, {}, {0.0, std::nan("")});
  b.attributes[1].codes = b.attributes[0].codes;
  Tape tape;
  const Tensor h0 = embed_nodes(tape, ps, model, b).value();
  const Tensor w = ps.value("embed.item.weight");
  // Row difference equals the weight column of the missing indicator.
  EXPECT_TRUE((h0.row(1) - h0.row(0)).isApprox(w.col(1).transpose(), 1e-12));
}

TEST(Embed, ToyFixtureShape) {
  auto toy = load_toy(Backbone::gcn, 2, 6);
  ParamStore ps;
  init_encoder_params(ps, toy.model, 0);
  const auto sg = rdb::sample_subgraph(toy.graph, 0, {1, 32, true}, 0);
  ASSERT_EQ(sg.node_count(), 4u);
  const auto batch = collate(std::span(&sg, 1));
  Tape tape;
  const auto topo = make_topology(batch, MessageDirection::undirected);
  const auto reps = encode(tape, ps, toy.model, batch, topo);
  ASSERT_EQ(reps.layers.size(), 3u);
  for (const Var& h : reps.layers) {
    EXPECT_EQ(h.rows(), 4);
    EXPECT_EQ(h.cols(), 6);
  }
  EXPECT_EQ(reps.graph.rows(), 1);
  EXPECT_EQ(reps.graph.cols(), 6);
}

TEST(Gcn, IsolatedNodeIdentity) {
  const auto b = single_graph(1, {});
  const auto topo = make_topology(b, MessageDirection::undirected);
  Tape tape;
  Var h = tape.constant(mat(1, 3, {0.5, -2.0, 4.0}));
  Var w = tape.constant(Tensor::Identity(3, 3));
  EXPECT_TRUE(gcn_layer(h, topo, w, nullptr, Activation::identity).value() == h.value());
}

TEST(Gcn, SymmetricPairAgrees) {
  const auto b = single_graph(2, {{0, 1}});
  const auto topo = make_topology(b, MessageDirection::undirected);
  Tape tape;
  Var h = tape.constant(mat(2, 2, {1.0, 2.0, 1.0, 2.0}));
  Var w = tape.constant(mat(2, 2, {0.3, -0.1, 0.7, 0.2}));
  const Tensor out = gcn_layer(h, topo, w, nullptr).value();
  EXPECT_TRUE(out.row(0) == out.row(1));
}

TEST(Gcn, PathGraphMatchesDenseNormalisedAdjacency) {
  const auto b = single_graph(3, {{0, 1}, {2, 1}});
  const auto topo = make_topology(b, MessageDirection::undirected);
  const Tensor h = mat(3, 2, {1.0, 0.0, 0.0, 2.0, 3.0, 1.0});

  Tensor a = Tensor::Identity(3, 3);
  a(0, 1) = a(1, 0) = a(1, 2) = a(2, 1) = 1.0;
  const Eigen::VectorXd d = a.rowwise().sum().cwiseSqrt().cwiseInverse();
  const Tensor expected = d.asDiagonal() * a * d.asDiagonal() * h;

  Tape tape;
  Var out = gcn_layer(tape.constant(h), topo, tape.constant(Tensor::Identity(2, 2)), nullptr, Activation::identity);
  EXPECT_TRUE(out.value().isApprox(expected, 1e-14));
  EXPECT_NEAR(out.value()(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(out.value()(0, 1), 2.0 / std::sqrt(6.0), 1e-15);
}

TEST(Gcn, DirectedUsesReferencedRowsOnly) {
  const auto b = single_graph(2, {{0, 1}});
  const auto topo = make_topology(b, MessageDirection::directed);
  EXPECT_EQ((*topo.neighbors)[0], std::vector<int>{1});
  EXPECT_TRUE((*topo.neighbors)[1].empty());
}

TEST(Pna, PopulationAggregates) {
  const auto b = single_graph(3, {{0, 1}, {0, 2}});
  const auto topo = make_topology(b, MessageDirection::undirected);
  Tape tape;
  const Tensor agg = pna_aggregate(tape.constant(mat(3, 1, {5.0, 1.0, 3.0})), topo).value();
  EXPECT_EQ(agg(0, 0), 5.0);
  EXPECT_NEAR(agg(0, 1), 2.0, 1e-12);
  EXPECT_EQ(agg(0, 2), 1.0);
  EXPECT_EQ(agg(0, 3), 3.0);
  EXPECT_NEAR(agg(0, 4), 1.0, 1e-9);
}

TEST(Pna, IsolatedNodeZeroAggregates) {
  const auto b = single_graph(1, {});
  const auto topo = make_topology(b, MessageDirection::undirected);
  Tape tape;
  Var h = tape.constant(mat(1, 2, {1.5, -0.5}));
  const Tensor agg = pna_aggregate(h, topo).value();
  EXPECT_TRUE(agg.rightCols(8).isZero(0.0));
  Tensor w = Tensor::Zero(2, 10);
  w(0, 0) = 1.0;
  w(1, 1) = 1.0;
  const Tensor out = pna_layer(h, topo, tape.constant(w), nullptr, Activation::identity).value();
  EXPECT_TRUE(out == h.value());
}

TEST(Pna, StarGraphCentre) {
  // Centre 0 with leaves 1..3; two feature dims.
  const auto b = single_graph(4, {{1, 0}, {2, 0}, {3, 0}});
  const auto topo = make_topology(b, MessageDirection::undirected);
  const Tensor h = mat(4, 2, {0.0, 1.0, 1.0, 4.0, 2.0, -2.0, 6.0, 1.0});
  Tape tape;
  const Tensor agg = pna_aggregate(tape.constant(h), topo).value();

  for (Index c = 0; c < 2; ++c) {
    const std::vector<double> msg{h(1, c), h(2, c), h(3, c)};
    const double mean = (msg[0] + msg[1] + msg[2]) / 3.0;
    double var = 0.0;
    for (double m : msg) var += (m - mean) * (m - mean);
    var /= 3.0;
    EXPECT_NEAR(agg(0, 2 + c), mean, 1e-12);
    EXPECT_EQ(agg(0, 4 + c), *std::min_element(msg.begin(), msg.end()));
    EXPECT_EQ(agg(0, 6 + c), *std::max_element(msg.begin(), msg.end()));
    EXPECT_NEAR(agg(0, 8 + c), std::sqrt(var), 1e-9);
  }
  // Leaves see only the centre.
  EXPECT_EQ(agg(1, 2), 0.0);
  EXPECT_NEAR(agg(1, 8), 0.0, 1e-5);
}

TEST(Readout, SingleNodeIsValueTransform) {
  const auto b = single_graph(1, {});
  const auto topo = make_topology(b, MessageDirection::undirected);
  Tape tape;
  Var h = tape.constant(mat(1, 2, {0.4, -1.2}));
  const Tensor u = mat(2, 2, {1.0, 2.0, -1.0, 0.5});
  ReadoutWeights w{tape.constant(mat(2, 2, {0.3, 0.1, 0.2, -0.4})), tape.constant(mat(1, 2, {1.0, -1.0})),
                   tape.constant(u)};
  const Tensor hg = attention_readout(h, topo, w).value();
  EXPECT_TRUE(hg.isApprox(h.value() * u.transpose(), 1e-15));
}

TEST(Readout, HandSetScoresGiveQuarterAndThreeQuarters) {
  // score_i = v . tanh(W h_i) with W = 1, v = 2: choose h so the scores are 0 and ln 3.
  const auto b = single_graph(2, {});
  const auto topo = make_topology(b, MessageDirection::undirected);
  Tape tape;
  Var h = tape.constant(mat(2, 1, {0.0, std::atanh(std::log(3.0) / 2.0)}));
  ReadoutWeights w{tape.constant(mat(1, 1, {1.0})), tape.constant(mat(1, 1, {2.0})), tape.constant(mat(1, 1, {1.0}))};
  const Tensor s = attention_scores(h, w).value();
  EXPECT_NEAR(s(1, 0), std::log(3.0), 1e-12);
  const Tensor weights = ad::segment_softmax(attention_scores(h, w), topo.segment, 1).value();
  EXPECT_NEAR(weights(0, 0), 0.25, 1e-12);
  EXPECT_NEAR(weights(1, 0), 0.75, 1e-12);
  EXPECT_NEAR(attention_readout(h, topo, w).value()(0, 0), 0.75 * h.value()(1, 0), 1e-12);
}

TEST(Readout, IdenticalNodesGiveThatNode) {
  const auto b = single_graph(3, {});
  const auto topo = make_topology(b, MessageDirection::undirected);
  Tape tape;
  Var h = tape.constant(mat(3, 2, {1.0, 2.0, 1.0, 2.0, 1.0, 2.0}));
  const Tensor u = mat(2, 2, {0.5, 0.1, -0.3, 2.0});
  ReadoutWeights w{tape.constant(mat(2, 2, {0.3, 0.1, 0.2, -0.4})), tape.constant(mat(1, 2, {1.0, -1.0})),
                   tape.constant(u)};
  EXPECT_TRUE(attention_readout(h, topo, w).value().isApprox(h.value().topRows(1) * u.transpose(), 1e-14));
}

TEST(Head, ZeroWeightsGiveZeroLogit) {
  Tape tape;
  HeadWeights w{tape.constant(Tensor::Zero(3, 3)), tape.constant(Tensor::Zero(1, 3)),
                tape.constant(Tensor::Zero(1, 3)), tape.constant(Tensor::Zero(1, 1))};
  EXPECT_EQ(predict_head(tape.constant(mat(1, 3, {1.0, 2.0, 3.0})), w).scalar(), 0.0);
}

TEST(Head, OneHiddenUnitByHand) {
  // z = relu(2*1 + 0.5*(-1) + 0.25) = 1.75; logit = -3 * 1.75 + 1 = -4.25
  Tape tape;
  HeadWeights w{tape.constant(mat(1, 2, {2.0, 0.5})), tape.constant(mat(1, 1, {0.25})),
                tape.constant(mat(1, 1, {-3.0})), tape.constant(mat(1, 1, {1.0}))};
  EXPECT_DOUBLE_EQ(predict_head(tape.constant(mat(1, 2, {1.0, -1.0})), w).scalar(), -4.25);
}

TEST(Head, TargetNodeDepthZeroUsesOnlyTarget) {
  auto toy = load_toy(Backbone::pna, 2, 4);
  toy.model.config.prediction_source = PredictionSource::target_node;
  ParamStore ps;
  init_encoder_params(ps, toy.model, 9);
  auto sg = rdb::sample_subgraph(toy.graph, 1, {0, 32, true}, 0);
  ASSERT_EQ(sg.node_count(), 1u);
  auto logit_of = [&](const rdb::Subgraph& s) {
    const auto batch = collate(std::span(&s, 1));
    const auto topo = make_topology(batch, toy.model.config.direction);
    Tape tape;
    const auto reps = encode(tape, ps, toy.model, batch, topo);
    return predict_logits(tape, ps, toy.model, reps, topo).scalar();
  };
  const double base = logit_of(sg);
  auto changed = sg;
  changed.attributes[0].numbers[0] += 1000.0;
  EXPECT_NE(logit_of(changed), base);
}

TEST(Encode, IsolatedGraphIndependentOfBatchmates) {
  auto model = tiny_model(Backbone::gcn, 1, 4);
  ParamStore ps;
  init_encoder_params(ps, model, 2);
  std::vector<rdb::Subgraph> sgs(2);
  sgs[0].node_type = {0};
  sgs[0].attributes = {{{0.3}, {1}}};
  sgs[1].node_type = {0, 0};
  sgs[1].attributes = {{{-1.0}, {2}}, {{4.0}, {0}}};
  sgs[1].edges = {{0, 1, 0}};
  auto run = [&](std::span<const rdb::Subgraph> s) {
    const auto batch = collate(s);
    const auto topo = make_topology(batch, MessageDirection::undirected);
    Tape tape;
    return Tensor(encode(tape, ps, model, batch, topo).final().value().topRows(1));
  };
  EXPECT_TRUE(run(std::span(sgs).first(1)) == run(sgs));
}

TEST(Encode, DeterministicForSeed) {
  for (Backbone bb : {Backbone::gcn, Backbone::pna}) {
    auto toy = load_toy(bb, 2, 5);
    const auto sgs = rdb::sample_all(toy.graph, {2, 32, true}, 4);
    const auto batch = collate(sgs);
    const auto topo = make_topology(batch, MessageDirection::undirected);
    Tensor first;
    for (int rep = 0; rep < 2; ++rep) {
      ParamStore ps;
      init_encoder_params(ps, toy.model, 11);
      Tape tape;
      const auto reps = encode(tape, ps, toy.model, batch, topo);
      const Tensor logits = predict_logits(tape, ps, toy.model, reps, topo).value();
      if (rep == 0) first = logits;
      else EXPECT_TRUE(first == logits);
    }
  }
}

TEST(Encode, ParamStreamsIndependentOfOtherShapes) {
  auto a = tiny_model(Backbone::gcn, 1, 4);
  auto b = tiny_model(Backbone::gcn, 3, 4);
  ParamStore pa, pb;
  init_encoder_params(pa, a, 7);
  init_encoder_params(pb, b, 7);
  EXPECT_TRUE(pa.value("gnn.1.weight") == pb.value("gnn.1.weight"));
  EXPECT_FALSE(pa.value("gnn.1.weight") == pb.value("readout.score_weight"));
}

TEST(Encode, PermutationEquivariance) {
  std::mt19937_64 rng(21);
  for (Backbone bb : {Backbone::gcn, Backbone::pna}) {
    auto toy = load_toy(bb, 2, 6);
    ParamStore ps;
    init_encoder_params(ps, toy.model, 5);
    for (int r = 0; r < 4; ++r) {
      const auto sg = rdb::sample_subgraph(toy.graph, r, {3, 32, true}, 1);
      const auto n = static_cast<int>(sg.node_count());
      std::vector<int> perm(static_cast<std::size_t>(n));  // new position of old node i
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);

      GraphBatch a = collate(std::span(&sg, 1));
      GraphBatch b = a;
      for (int i = 0; i < n; ++i) {
        b.node_type[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = a.node_type[static_cast<std::size_t>(i)];
        b.attributes[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = a.attributes[static_cast<std::size_t>(i)];
      }
      for (auto& e : b.edges) {
        e.src = perm[static_cast<std::size_t>(e.src)];
        e.dst = perm[static_cast<std::size_t>(e.dst)];
      }
      const auto ta = make_topology(a, MessageDirection::undirected);
      auto tb = make_topology(b, MessageDirection::undirected);
      tb.targets = {perm[0]};

      Tape tape;
      const auto ra = encode(tape, ps, toy.model, a, ta);
      const auto rb = encode(tape, ps, toy.model, b, tb);
      for (std::size_t t = 0; t < ra.layers.size(); ++t) {
        const Tensor& ha = ra.layers[t].value();
        const Tensor& hb = rb.layers[t].value();
        for (int i = 0; i < n; ++i) {
          EXPECT_TRUE(hb.row(perm[static_cast<std::size_t>(i)]).isApprox(ha.row(i), 1e-9) ||
                      (ha.row(i).isZero(1e-12) && hb.row(perm[static_cast<std::size_t>(i)]).isZero(1e-12)));
        }
      }
      EXPECT_TRUE(rb.graph.value().isApprox(ra.graph.value(), 1e-9));
      const double la = predict_logits(tape, ps, toy.model, ra, ta).scalar();
      const double lb = predict_logits(tape, ps, toy.model, rb, tb).scalar();
      EXPECT_NEAR(la, lb, 1e-9 * std::max(1.0, std::abs(la)));
    }
  }
}

TEST(Encode, Locality) {
  for (Backbone bb : {Backbone::gcn, Backbone::pna}) {
    auto model = tiny_model(bb, 2, 4);
    ParamStore ps;
    init_encoder_params(ps, model, 8);
    auto b = single_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
    const auto topo = make_topology(b, MessageDirection::undirected);
    Tape tape;
    const Tensor before = encode(tape, ps, model, b, topo).final().value();
    b.attributes[3].numbers[0] = 42.0;
    const Tensor after = encode(tape, ps, model, b, topo).final().value();
    EXPECT_TRUE(before.row(0) == after.row(0));
    EXPECT_FALSE(before.row(2) == after.row(2));
  }
}

TEST(Encode, SupervisedGradientsMatchFiniteDifferences) {
  for (Backbone bb : {Backbone::gcn, Backbone::pna}) {
    auto toy = load_toy(bb, 2, 4);
    ParamStore ps;
    init_encoder_params(ps, toy.model, 13);
    const auto sgs = rdb::sample_all(toy.graph, {2, 32, true}, 2);
    const auto batch = collate(sgs);
    const auto topo = make_topology(batch, MessageDirection::undirected);
    std::vector<double> y;
    for (const auto& s : sgs) y.push_back(s.label.value_or(0));
    ad::LossFn loss = [&](Tape& tape, ParamStore& p) {
      const auto reps = encode(tape, p, toy.model, batch, topo);
      return ad::mean(ad::binary_cross_entropy_with_logits(predict_logits(tape, p, toy.model, reps, topo), y));
    };
    ad::GradCheckOptions opt;
    opt.probe_count = 64;
    EXPECT_LT(ad::finite_diff_check(loss, ps, opt).max_relative_error, 1e-4) << to_string(bb);
  }
}

TEST(Diagnostics, MeanPairwiseCosine) {
  EXPECT_DOUBLE_EQ(mean_pairwise_cosine(mat(2, 2, {1.0, 0.0, 2.0, 0.0})), 1.0);
  EXPECT_NEAR(mean_pairwise_cosine(mat(3, 2, {1.0, 0.0, 0.0, 1.0, 0.0, 0.0})), 0.0, 1e-15);
  EXPECT_NEAR(mean_pairwise_cosine(mat(2, 2, {1.0, 0.0, -1.0, 0.0})), -1.0, 1e-15);
}
