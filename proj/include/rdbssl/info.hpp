#pragma once

#include "rdbssl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ranges>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace rdbssl::info {

// Plug-in information quantities in bits over discrete symbols. Optional
// per-sample weights turn an enumerated joint into exact probabilities
// (e.g. four XOR rows with weight 1/4 each).

namespace detail {

inline std::vector<double> checked_weights(std::size_t n, std::span<const double> weights, const char* op) {
  if (n == 0) throw DataError(std::string(op) + ": empty input");
  if (weights.empty()) return std::vector<double>(n, 1.0);
  if (weights.size() != n) throw std::invalid_argument(std::string(op) + ": weights differ in length from samples");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument(std::string(op) + ": weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw DataError(std::string(op) + ": total weight is zero");
  return {weights.begin(), weights.end()};
}

template <typename Key>
double entropy(const std::map<Key, double>& mass, double total) {
  double h = 0.0;
  for (const auto& [key, w] : mass) {
    if (w > 0.0) h -= (w / total) * std::log2(w / total);
  }
  return h;
}

// Entropy of the joint of the selected variables.
template <typename... Ranges>
double joint_entropy(const std::vector<double>& w, const Ranges&... vars) {
  using Key = std::tuple<std::ranges::range_value_t<Ranges>...>;
  std::map<Key, double> mass;
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    mass[Key{std::ranges::begin(vars)[static_cast<std::ptrdiff_t>(i)]...}] += w[i];
    total += w[i];
  }
  return entropy(mass, total);
}

template <typename... Ranges>
std::size_t common_length(const char* op, const Ranges&... vars) {
  const std::size_t sizes[] = {static_cast<std::size_t>(std::ranges::size(vars))...};
  for (std::size_t s : sizes) {
    if (s != sizes[0]) throw std::invalid_argument(std::string(op) + ": samples differ in length");
  }
  return sizes[0];
}

}  // namespace detail

// I(x;y) = H(x) + H(y) - H(x,y), clamped at 0 against rounding.
template <std::ranges::random_access_range RX, std::ranges::random_access_range RY>
double mi_discrete(const RX& x, const RY& y, std::span<const double> weights = {}) {
  const auto w = detail::checked_weights(detail::common_length("mi_discrete", x, y), weights, "mi_discrete");
  const double mi = detail::joint_entropy(w, x) + detail::joint_entropy(w, y) - detail::joint_entropy(w, x, y);
  return std::max(mi, 0.0);
}

// I(x;y|z) = H(x,z) + H(y,z) - H(x,y,z) - H(z).
template <std::ranges::random_access_range RX, std::ranges::random_access_range RY,
          std::ranges::random_access_range RZ>
double conditional_mi(const RX& x, const RY& y, const RZ& z, std::span<const double> weights = {}) {
  const auto w = detail::checked_weights(detail::common_length("conditional_mi", x, y, z), weights, "conditional_mi");
  const double mi = detail::joint_entropy(w, x, z) + detail::joint_entropy(w, y, z) -
                    detail::joint_entropy(w, x, y, z) - detail::joint_entropy(w, z);
  return std::max(mi, 0.0);
}

// I(x;y;z) = I(x;y) - I(x;y|z); may be negative.
template <std::ranges::random_access_range RX, std::ranges::random_access_range RY,
          std::ranges::random_access_range RZ>
double co_information(const RX& x, const RY& y, const RZ& z, std::span<const double> weights = {}) {
  return mi_discrete(x, y, weights) - conditional_mi(x, y, z, weights);
}

// Rank-based equal-frequency bins 0..bins-1; tied values share a bin.
std::vector<int> quantile_bins(std::span<const double> values, int bins = 8);

}  // namespace rdbssl::info
