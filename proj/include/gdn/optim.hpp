// SPDX-License-Identifier: Apache-2.0
//
// SGD with momentum and weight decay, the plateau learning-rate schedule,
// per-group training plans for staged fine-tuning, and the finite-difference
// gradient checker.

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gdn/param.hpp"

namespace gdn {

struct SgdConfig {
  double lr = 1e-2;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

// Which parameter groups are trained, each with its own lr multiplier.
// Groups not listed are frozen.
struct GroupPlan {
  std::map<std::string, double> lr_multiplier;

  static GroupPlan all(const std::vector<std::string>& groups, double multiplier = 1.0);
  [[nodiscard]] bool trains(const std::string& group) const { return lr_multiplier.contains(group); }
};

// Effective learning rate per group for one step (for logging).
struct GroupRate {
  std::string group;
  double lr = 0.0;
};

template <typename T>
class Sgd {
 public:
  explicit Sgd(SgdConfig cfg = {});

  // v <- mu v - lr (g + wd theta); theta <- theta + v, for every parameter in
  // a trained group. Throws on unknown group names in the plan or on a
  // parameter whose shape changed since its velocity was created.
  std::vector<GroupRate> step(const ParamList<T>& params, const GroupPlan& plan);

  [[nodiscard]] double lr() const { return cfg_.lr; }
  void set_lr(double lr);
  [[nodiscard]] const SgdConfig& config() const { return cfg_; }
  [[nodiscard]] std::span<const T> velocity(const std::string& name) const;

 private:
  SgdConfig cfg_;
  std::map<std::string, std::vector<T>> velocity_;
};

// Divides the learning rate by 1/factor after `patience` consecutive
// evaluations without an improvement larger than `threshold`.
class PlateauSchedule {
 public:
  explicit PlateauSchedule(std::size_t patience = 3, double factor = 0.1, double threshold = 1e-4);

  // Returns true when lr was reduced by this reading.
  bool update(double metric, double& lr);

  [[nodiscard]] std::size_t patience() const { return patience_; }
  [[nodiscard]] double factor() const { return factor_; }
  [[nodiscard]] std::size_t stale() const { return stale_; }

 private:
  std::size_t patience_;
  double factor_;
  double threshold_;
  bool have_best_ = false;
  double best_ = 0.0;
  std::size_t stale_ = 0;
};

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;  // at worst_index
  double numeric = 0.0;
  std::size_t checked = 0;
};

// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

// Central differences of f with respect to every coordinate of x (perturbed
// in place and restored), compared against `analytic`. Double precision only.
GradcheckResult gradcheck(const std::function<double()>& f, std::span<double> x, std::span<const double> analytic,
                          double eps = 1e-6);

}  // namespace gdn
