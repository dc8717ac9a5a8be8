#include "rdbssl/info.hpp"

#include <numeric>

namespace rdbssl::info {

std::vector<int> quantile_bins(std::span<const double> values, int bins) {
  if (bins < 1) throw std::invalid_argument("quantile_bins: bins must be >= 1");
  if (values.empty()) throw DataError("quantile_bins: empty input");
  for (double v : values) {
    if (std::isnan(v)) throw DataError("quantile_bins: NaN value");
  }
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<int> out(n);
  int bin = 0;
  for (std::size_t rank = 0; rank < n; ++rank) {
    const bool tied = rank > 0 && values[order[rank]] == values[order[rank - 1]];
    if (!tied) bin = static_cast<int>(rank * static_cast<std::size_t>(bins) / n);
    out[order[rank]] = bin;
  }
  return out;
}

}  // namespace rdbssl::info
