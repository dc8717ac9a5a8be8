#pragma once

#include "rdbssl/encoder.hpp"
#include "rdbssl/errors.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rdbssl::eval {

// P(score_pos > score_neg) + 1/2 P(tie), from midranks.
template <typename Scalar>
double roc_auc(std::span<const Scalar> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start + 1;
    while (end < n && !(scores[order[start]] < scores[order[end]])) ++end;
    // Ranks start+1 .. end share their mean.
    const double midrank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) {
      const int y = labels[order[k]];
      if (y != 0 && y != 1) throw std::invalid_argument("roc_auc: labels must be 0 or 1");
      if (y == 1) {
        positive_rank_sum += midrank;
        ++positives;
      }
    }
    start = end;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw DataError("roc_auc: both classes must be present");
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

template <typename Derived>
double roc_auc(const Eigen::MatrixBase<Derived>& scores, std::span<const int> labels) {
  const Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> flat = scores.reshaped();
  return roc_auc(std::span<const typename Derived::Scalar>(flat.data(), static_cast<std::size_t>(flat.size())), labels);
}

// Rows of the prediction source (h_g or the target node's h^T), one per subgraph.
Tensor extract_representations(ParamStore& params, const gnn::EncoderModel& model,
                               std::span<const rdb::Subgraph> subgraphs, int batch_size = 256);

struct ProbeOptions {
  double learning_rate = 0.1;
  int epochs = 500;
};

// Logistic regression on standardised features.
struct LinearProbe {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;
  Eigen::VectorXd weight;
  double bias = 0.0;

  Eigen::VectorXd scores(const Tensor& features) const;
};

// Full-batch gradient descent on the mean logistic loss from zero weights.
LinearProbe fit_linear_probe(const Tensor& features, std::span<const int> labels, const ProbeOptions& options = {});

// Fixed 20% stratified test holdout plus the remaining training rows.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
Split holdout_split(std::span<const int> labels, double test_percent, std::uint64_t seed);

struct FineTuneOptions {
  int epochs = 50;
  int batch_size = 32;
  AdamOptions adam{1e-3, 0.9, 0.999, 1e-8};
};

// Trains encoder and head jointly on `train` rows; returns test AUC of the logits.
double fine_tune(ParamStore& params, const gnn::EncoderModel& model, std::span<const rdb::Subgraph> subgraphs,
                 std::span<const std::size_t> train, std::span<const std::size_t> test, const FineTuneOptions& options,
                 std::uint64_t seed);

struct MetricsRow {
  std::string dataset;
  std::string backbone;
  std::string strategy;
  double s_percent = 100.0;
  std::uint64_t seed = 0;
  double probe_auc = 0.0;
  std::optional<double> finetune_auc;
  std::optional<double> delta_vs_untrained;

  bool operator==(const MetricsRow&) const = default;
};

struct TransferSummary {
  std::string dataset;
  std::string backbone;
  std::string strategy;
  double s_percent = 100.0;
  std::size_t seeds = 0;
  double mean_auc = 0.0;
  double std_auc = 0.0;  // population std over seeds
  double untrained_mean_auc = 0.0;
  double delta = 0.0;
  bool negative_transfer = false;
};

// delta = mean strategy AUC - mean untrained AUC per (dataset, backbone, S);
// flagged when delta < 0. Fills each row's delta_vs_untrained with
// probe_auc - untrained mean. Throws DataError when a strategy cell has no
// untrained counterpart.
std::vector<TransferSummary> negative_transfer_report(std::vector<MetricsRow>& rows);

// CSV with columns dataset, backbone, strategy, S, seed, probe_auc, finetune_auc, delta_vs_untrained.
std::string metrics_csv(std::span<const MetricsRow> rows);
std::string metrics_jsonl(std::span<const MetricsRow> rows);
std::vector<MetricsRow> parse_metrics_jsonl(std::string_view text);

}  // namespace rdbssl::eval
