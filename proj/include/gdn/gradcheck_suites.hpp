// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference verification of every hand-written backward pass on
// random small instances (double precision only).

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gdn {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t instances = 20;
  double eps = 1e-6;
  double tolerance = 1e-5;
  // Multiplies every analytic gradient; != 1 checks that the harness notices.
  double fault_scale = 1.0;
  std::vector<std::string> only;  // suite names; empty = all
};

struct SuiteResult {
  std::string name;  // e.g. "global_deconv.grad_kh"
  std::size_t instances = 0;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

std::vector<std::string> gradcheck_suite_names();
std::vector<SuiteResult> run_gradcheck_suites(const GradcheckOptions& opt);

}  // namespace gdn
