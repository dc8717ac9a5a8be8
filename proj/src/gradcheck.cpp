#include "rdbssl/gradcheck.hpp"

#include "rdbssl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace rdbssl::ad {

namespace {

double evaluate(const LossFn& loss_fn, ParamStore& params) {
  Tape tape;
  return loss_fn(tape, params).scalar();
}

}  // namespace

GradCheckResult finite_diff_check(const LossFn& loss_fn, ParamStore& params,
                                  const GradCheckOptions& options) {
  if (options.probe_count < 1) throw std::invalid_argument("finite_diff_check: probe_count < 1");
  if (!(options.step_size > 0.0)) throw std::invalid_argument("finite_diff_check: step_size <= 0");

  const double first = evaluate(loss_fn, params);
  const double second = evaluate(loss_fn, params);
  if (first != second) {
    throw NumericError("finite_diff_check: loss is not deterministic (" + std::to_string(first) +
                       " vs " + std::to_string(second) + ")");
  }

  params.zero_grad();
  {
    Tape tape;
    Var loss = loss_fn(tape, params);
    tape.backward(loss);
  }
  params.ensure_grad_slots();
  if (options.corrupt_gradients) options.corrupt_gradients(params);

  struct Coordinate {
    std::string name;
    Index index;
  };
  std::vector<Coordinate> all;
  for (const auto& [name, p] : params.entries()) {
    for (Index k = 0; k < p.value.size(); ++k) all.push_back({name, k});
  }
  std::mt19937_64 rng(options.seed);
  std::shuffle(all.begin(), all.end(), rng);
  const auto count = std::min<std::size_t>(all.size(), static_cast<std::size_t>(options.probe_count));

  GradCheckResult result;
  const double h = options.step_size;
  for (std::size_t k = 0; k < count; ++k) {
    const auto& [name, index] = all[k];
    const double analytic = params.grad(name)(index);
    double& w = params.value(name)(index);
    const double saved = w;
    w = saved + h;
    const double up = evaluate(loss_fn, params);
    w = saved - h;
    const double down = evaluate(loss_fn, params);
    w = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), options.absolute_floor});
    const double err = std::abs(analytic - numeric) / denom;
    ++result.probes;
    if (err > result.max_relative_error || result.worst_index < 0) {
      result.max_relative_error = std::max(result.max_relative_error, err);
      if (err >= result.max_relative_error) {
        result.worst_parameter = name;
        result.worst_index = index;
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  params.zero_grad();
  return result;
}

}  // namespace rdbssl::ad
