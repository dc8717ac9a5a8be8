#pragma once

#include "rdbssl/rdb.hpp"

#include <string>
#include <vector>

namespace rdbssl::selftest {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

// The client/loan/payment database: 3 clients, 4 loans (target table,
// column status), 6 payments.
rdb::Rdb canonical_fixture();

// Fast built-in checks: gradient oracle, loss baselines, AUC oracle, graph
// construction counts, XOR co-information, pretraining determinism.
std::vector<Check> run_selftest();

}  // namespace rdbssl::selftest
