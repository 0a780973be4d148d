#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "neighcnn/gradcheck.hpp"

namespace neighcnn {

struct SuiteOptions {
  double tolerance = 1e-4;
  // The full miniature network is checked against this looser bound.
  double network_tolerance = 1e-3;
  std::uint64_t seed = 0;
  // Negative-control hook forwarded to every check.
  double corrupt_analytic = 1.0;
};

struct SuiteResult {
  std::string name;
  double tolerance = 0.0;
  GradCheckReport report;
};

// Names of every registered check, in run order.
std::vector<std::string> gradcheck_suite_names();

// Runs every check whose name contains `filter` (all when empty). Each case
// draws its inputs from a generator seeded by (seed, case index).
std::vector<SuiteResult> run_gradcheck_suite(const SuiteOptions& options,
                                             const std::string& filter = "");

}  // namespace neighcnn
