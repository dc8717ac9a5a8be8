#include "rdbssl/info.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace rdbssl;
using namespace rdbssl::info;

namespace {

// Direct sum over cells of p log2(p / (px py)), independent of the entropy route.
double analytic_mi(const std::vector<std::vector<double>>& p) {
  std::vector<double> px(p.size(), 0.0), py(p[0].size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p[i].size(); ++j) {
      px[i] += p[i][j];
      py[j] += p[i][j];
    }
  }
  double mi = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p[i].size(); ++j) {
      if (p[i][j] > 0) mi += p[i][j] * std::log2(p[i][j] / (px[i] * py[j]));
    }
  }
  return mi;
}

struct Enumerated {
  std::vector<int> x, y;
  std::vector<double> w;
};

Enumerated enumerate(const std::vector<std::vector<double>>& p) {
  Enumerated e;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p[i].size(); ++j) {
      e.x.push_back(static_cast<int>(i));
      e.y.push_back(static_cast<int>(j));
      e.w.push_back(p[i][j]);
    }
  }
  return e;
}

const std::vector<int> kXorA{0, 0, 1, 1};
const std::vector<int> kXorB{0, 1, 0, 1};
const std::vector<int> kXorY{0, 1, 1, 0};

}  // namespace

TEST(MutualInformation, IndependentCoinsAreZero) {
  const auto e = enumerate({{0.25, 0.25}, {0.25, 0.25}});
  EXPECT_LT(mi_discrete(e.x, e.y, e.w), 1e-12);
}

TEST(MutualInformation, IdenticalCoinIsOneBit) {
  const std::vector<int> x{0, 1};
  EXPECT_NEAR(mi_discrete(x, x), 1.0, 1e-12);
}

TEST(MutualInformation, NoisyChannelHandValue) {
  const auto e = enumerate({{0.4, 0.1}, {0.1, 0.4}});
  const double expected = 1.0 + 0.8 * std::log2(0.8) + 0.2 * std::log2(0.2);
  EXPECT_NEAR(expected, 0.278, 5e-4);
  EXPECT_NEAR(mi_discrete(e.x, e.y, e.w), expected, 1e-12);
  EXPECT_NEAR(mi_discrete(e.y, e.x, e.w), expected, 1e-12);
}

TEST(MutualInformation, WeightsEqualRepetition) {
  const std::vector<int> x{0, 0, 1, 2};
  const std::vector<int> y{1, 1, 0, 0};
  const std::vector<int> xr{0, 0, 0, 0, 1, 2, 2};
  const std::vector<int> yr{1, 1, 1, 1, 0, 0, 0};
  const std::vector<double> w{1, 3, 1, 2};
  EXPECT_NEAR(mi_discrete(x, y, w), mi_discrete(xr, yr), 1e-12);
}

TEST(MutualInformation, AcceptsNonIntegerSymbols) {
  const std::vector<std::string> x{"a", "b", "a", "b"};
  const std::vector<char> y{'p', 'q', 'p', 'q'};
  EXPECT_NEAR(mi_discrete(x, y), 1.0, 1e-12);
}

TEST(MutualInformation, RejectsBadInput) {
  const std::vector<int> empty;
  EXPECT_THROW(mi_discrete(empty, empty), DataError);
  const std::vector<int> a{0, 1}, b{0};
  EXPECT_THROW(mi_discrete(a, b), std::invalid_argument);
  const std::vector<double> negative{1.0, -1.0};
  EXPECT_THROW(mi_discrete(a, a, negative), std::invalid_argument);
  EXPECT_THROW(co_information(empty, empty, empty), DataError);
}

TEST(CoInformation, XorTripleIsMinusOneBit) {
  EXPECT_LT(mi_discrete(kXorA, kXorB), 1e-12);
  EXPECT_LT(mi_discrete(kXorA, kXorY), 1e-12);
  EXPECT_LT(mi_discrete(kXorB, kXorY), 1e-12);
  EXPECT_NEAR(co_information(kXorA, kXorB, kXorY), -1.0, 1e-12);
  EXPECT_NEAR(conditional_mi(kXorA, kXorB, kXorY), 1.0, 1e-12);
}

TEST(CoInformation, RedundantTripleIsOneBit) {
  const std::vector<int> x{0, 1};
  EXPECT_NEAR(co_information(x, x, x), 1.0, 1e-12);
}

TEST(CoInformation, IndependentConditionerLeavesPairwiseMi) {
  // (x, y) from the 0.4/0.1 joint, z an independent fair coin: 8 enumerated cells.
  std::vector<int> x, y, z;
  std::vector<double> w;
  const double p[2][2] = {{0.4, 0.1}, {0.1, 0.4}};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      for (int k = 0; k < 2; ++k) {
        x.push_back(i);
        y.push_back(j);
        z.push_back(k);
        w.push_back(p[i][j] / 2.0);
      }
    }
  }
  EXPECT_NEAR(conditional_mi(x, y, z, w), mi_discrete(x, y, w), 1e-12);
  EXPECT_NEAR(co_information(x, y, z, w), 0.0, 1e-12);
}

TEST(PluginEstimate, WithinToleranceOnSampledJoints) {
  const std::vector<std::vector<std::vector<double>>> joints{
      {{0.4, 0.1}, {0.1, 0.4}},
      {{0.3, 0.05, 0.0}, {0.05, 0.2, 0.05}, {0.0, 0.05, 0.3}},
      {{0.1, 0.15}, {0.2, 0.3}, {0.1, 0.15}},  // product form: 0 bits
  };
  for (const auto& joint : joints) {
    const double truth = analytic_mi(joint);
    const auto cells = enumerate(joint);
    EXPECT_NEAR(mi_discrete(cells.x, cells.y, cells.w), truth, 1e-12);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      std::mt19937_64 rng(seed);
      std::discrete_distribution<std::size_t> cell(cells.w.begin(), cells.w.end());
      std::vector<int> x(10000), y(10000);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const std::size_t c = cell(rng);
        x[i] = cells.x[c];
        y[i] = cells.y[c];
      }
      EXPECT_NEAR(mi_discrete(x, y), truth, 0.05) << "seed " << seed;
    }
  }
}

TEST(QuantileBins, EqualFrequencyAndTies) {
  std::vector<double> v(16);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(15 - i);
  const auto b = quantile_bins(v, 8);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(b[i], static_cast<int>((15 - i) / 2));
  const std::vector<double> tied{1, 1, 1, 1, 2, 3};
  const auto t = quantile_bins(tied, 3);
  EXPECT_EQ(t, (std::vector<int>{0, 0, 0, 0, 2, 2}));
  EXPECT_THROW(quantile_bins(std::vector<double>{std::nan("")}), DataError);
}
