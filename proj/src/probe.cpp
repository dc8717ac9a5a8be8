#include "rdbssl/probe.hpp"

#include "rdbssl/pretrain.hpp"
#include "rdbssl/util.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace rdbssl::eval {

namespace {

using ad::Tape;

Tensor encode_rows(ParamStore& params, const gnn::EncoderModel& model, std::span<const rdb::Subgraph> subgraphs,
                   std::span<const std::size_t> pick, int batch_size, bool logits) {
  const Index width = logits ? 1 : model.config.hidden;
  Tensor out(static_cast<Index>(pick.size()), width);
  const auto step = static_cast<std::size_t>(std::max(batch_size, 1));
  for (std::size_t start = 0; start < pick.size(); start += step) {
    const auto chunk = pick.subspan(start, std::min(step, pick.size() - start));
    const auto batch = gnn::collate(subgraphs, chunk);
    const auto topo = gnn::make_topology(batch, model.config.direction);
    Tape tape;
    const auto reps = gnn::encode(tape, params, model, batch, topo);
    const ad::Var rows = logits ? gnn::predict_logits(tape, params, model, reps, topo)
                                : gnn::prediction_input(model, reps, topo);
    out.middleRows(static_cast<Index>(start), static_cast<Index>(chunk.size())) = rows.value();
  }
  return out;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

std::string format_optional(const std::optional<double>& v) { return v ? fmt::format("{:.10g}", *v) : ""; }

}  // namespace

Tensor extract_representations(ParamStore& params, const gnn::EncoderModel& model,
                               std::span<const rdb::Subgraph> subgraphs, int batch_size) {
  const auto pick = all_indices(subgraphs.size());
  return encode_rows(params, model, subgraphs, pick, batch_size, false);
}

Eigen::VectorXd LinearProbe::scores(const Tensor& features) const {
  if (features.cols() != mean.size()) {
    throw ShapeError("LinearProbe: expected " + std::to_string(mean.size()) + " features, got " +
                     std::to_string(features.cols()));
  }
  const Tensor z = (features.rowwise() - mean).array().rowwise() / scale.array();
  return (z * weight).array() + bias;
}

LinearProbe fit_linear_probe(const Tensor& features, std::span<const int> labels, const ProbeOptions& options) {
  const Index n = features.rows();
  if (static_cast<std::size_t>(n) != labels.size()) throw std::invalid_argument("fit_linear_probe: row/label count mismatch");
  Eigen::VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label != 0 && label != 1) throw std::invalid_argument("fit_linear_probe: labels must be 0 or 1");
    y(i) = label;
  }
  const double positives = y.sum();
  if (positives == 0.0 || positives == static_cast<double>(n)) {
    throw DataError("fit_linear_probe: training set has a single class");
  }

  LinearProbe probe;
  probe.mean = features.colwise().mean();
  const Tensor centred = features.rowwise() - probe.mean;
  probe.scale = (centred.array().square().colwise().sum() / static_cast<double>(n)).sqrt();
  for (Index c = 0; c < probe.scale.size(); ++c) {
    if (!(probe.scale(c) > 0.0)) probe.scale(c) = 1.0;
  }
  const Tensor z = centred.array().rowwise() / probe.scale.array();
  probe.weight = Eigen::VectorXd::Zero(features.cols());
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    Eigen::VectorXd residual = ((z * probe.weight).array() + probe.bias).unaryExpr(&sigmoid).matrix() - y;
    probe.weight -= options.learning_rate * (z.transpose() * residual) / static_cast<double>(n);
    probe.bias -= options.learning_rate * residual.mean();
  }
  return probe;
}

Split holdout_split(std::span<const int> labels, double test_percent, std::uint64_t seed) {
  Split s;
  s.test = rdb::stratified_split(labels, test_percent, seed);
  std::vector<char> in_test(labels.size(), 0);
  for (std::size_t i : s.test) in_test[i] = 1;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!in_test[i]) s.train.push_back(i);
  }
  return s;
}

double fine_tune(ParamStore& params, const gnn::EncoderModel& model, std::span<const rdb::Subgraph> subgraphs,
                 std::span<const std::size_t> train, std::span<const std::size_t> test, const FineTuneOptions& options,
                 std::uint64_t seed) {
  auto label_of = [&](std::size_t i) {
    if (!subgraphs[i].label) throw DataError("fine_tune: subgraph without a label");
    return *subgraphs[i].label;
  };
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const auto batches =
        train::epoch_batches(train.size(), options.batch_size, derive_seed(seed, {5, static_cast<std::uint64_t>(epoch)}));
    for (const auto& local : batches) {
      std::vector<std::size_t> pick;
      std::vector<double> targets;
      for (std::size_t k : local) {
        pick.push_back(train[k]);
        targets.push_back(label_of(train[k]));
      }
      const auto batch = gnn::collate(subgraphs, pick);
      const auto topo = gnn::make_topology(batch, model.config.direction);
      Tape tape;
      const auto reps = gnn::encode(tape, params, model, batch, topo);
      const auto loss =
          ad::mean(ad::binary_cross_entropy_with_logits(gnn::predict_logits(tape, params, model, reps, topo), targets));
      tape.backward(loss);
      optimizer_step(params, options.adam);
    }
  }
  const Tensor logits = encode_rows(params, model, subgraphs, test, 256, true);
  std::vector<int> y;
  for (std::size_t i : test) y.push_back(label_of(i));
  return roc_auc(logits.col(0), y);
}

std::vector<TransferSummary> negative_transfer_report(std::vector<MetricsRow>& rows) {
  using Key = std::tuple<std::string, std::string, double>;
  std::map<Key, std::vector<std::string>> strategies;  // appearance order
  std::map<std::tuple<std::string, std::string, double, std::string>, std::vector<double>> aucs;
  for (const auto& r : rows) {
    const Key key{r.dataset, r.backbone, r.s_percent};
    auto& order = strategies[key];
    if (std::find(order.begin(), order.end(), r.strategy) == order.end()) order.push_back(r.strategy);
    aucs[{r.dataset, r.backbone, r.s_percent, r.strategy}].push_back(r.probe_auc);
  }
  auto mean_std = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    return std::make_pair(m, std::sqrt(var / static_cast<double>(v.size())));
  };

  std::vector<TransferSummary> out;
  std::map<Key, double> untrained_mean;
  for (const auto& [key, order] : strategies) {
    const auto& [dataset, backbone, s] = key;
    const auto it = aucs.find({dataset, backbone, s, "untrained"});
    if (it == aucs.end()) {
      throw DataError(fmt::format("negative_transfer_report: no untrained rows for dataset '{}', backbone '{}', S={}",
                                  dataset, backbone, s));
    }
    const double base = mean_std(it->second).first;
    untrained_mean[key] = base;
    for (const auto& strategy : order) {
      const auto& v = aucs[{dataset, backbone, s, strategy}];
      const auto [m, sd] = mean_std(v);
      TransferSummary t{dataset, backbone, strategy, s, v.size(), m, sd, base, m - base, false};
      t.negative_transfer = strategy != "untrained" && t.delta < 0.0;
      out.push_back(t);
    }
  }
  for (auto& r : rows) {
    if (r.strategy == "untrained") continue;
    r.delta_vs_untrained = r.probe_auc - untrained_mean.at({r.dataset, r.backbone, r.s_percent});
  }
  return out;
}

std::string metrics_csv(std::span<const MetricsRow> rows) {
  std::string out = "dataset,backbone,strategy,S,seed,probe_auc,finetune_auc,delta_vs_untrained\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{:g},{},{:.10g},{},{}\n", r.dataset, r.backbone, r.strategy, r.s_percent, r.seed,
                       r.probe_auc, format_optional(r.finetune_auc), format_optional(r.delta_vs_untrained));
  }
  return out;
}

std::string metrics_jsonl(std::span<const MetricsRow> rows) {
  std::string out;
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["dataset"] = r.dataset;
    j["backbone"] = r.backbone;
    j["strategy"] = r.strategy;
    j["S"] = r.s_percent;
    j["seed"] = r.seed;
    j["probe_auc"] = r.probe_auc;
    j["finetune_auc"] = r.finetune_auc ? nlohmann::ordered_json(*r.finetune_auc) : nlohmann::ordered_json(nullptr);
    j["delta_vs_untrained"] =
        r.delta_vs_untrained ? nlohmann::ordered_json(*r.delta_vs_untrained) : nlohmann::ordered_json(nullptr);
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<MetricsRow> parse_metrics_jsonl(std::string_view text) {
  std::vector<MetricsRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      MetricsRow r;
      r.dataset = j.at("dataset").get<std::string>();
      r.backbone = j.at("backbone").get<std::string>();
      r.strategy = j.at("strategy").get<std::string>();
      r.s_percent = j.at("S").get<double>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.probe_auc = j.at("probe_auc").get<double>();
      if (!j.at("finetune_auc").is_null()) r.finetune_auc = j.at("finetune_auc").get<double>();
      if (!j.at("delta_vs_untrained").is_null()) r.delta_vs_untrained = j.at("delta_vs_untrained").get<double>();
      rows.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("metrics record: ") + e.what());
    }
  }
  return rows;
}

}  // namespace rdbssl::eval
