// SPDX-License-Identifier: Apache-2.0
#include "gdn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "gdn/tensor.hpp"

namespace gdn {

GroupPlan GroupPlan::all(const std::vector<std::string>& groups, double multiplier) {
  GroupPlan p;
  for (const auto& g : groups) p.lr_multiplier[g] = multiplier;
  return p;
}

template <typename T>
Sgd<T>::Sgd(SgdConfig cfg) : cfg_(cfg) {
  set_lr(cfg.lr);
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) throw std::invalid_argument("momentum must be in [0, 1)");
  if (cfg.weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
}

template <typename T>
void Sgd<T>::set_lr(double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be > 0");
  cfg_.lr = lr;
}

template <typename T>
std::span<const T> Sgd<T>::velocity(const std::string& name) const {
  auto it = velocity_.find(name);
  if (it == velocity_.end()) return {};
  return it->second;
}

template <typename T>
std::vector<GroupRate> Sgd<T>::step(const ParamList<T>& params, const GroupPlan& plan) {
  std::set<std::string> known;
  for (const auto& p : params) known.insert(p.group);
  for (const auto& [g, m] : plan.lr_multiplier) {
    if (!known.contains(g)) throw std::invalid_argument("training plan names unknown parameter group '" + g + "'");
    if (!(m >= 0.0)) throw std::invalid_argument("lr multiplier for group '" + g + "' must be >= 0");
  }

  const T mu = static_cast<T>(cfg_.momentum);
  const T wd = static_cast<T>(cfg_.weight_decay);
  for (const auto& p : params) {
    if (p.value.size() != p.grad.size()) throw ShapeError("parameter '" + p.name + "' value/grad length mismatch");
    auto it = plan.lr_multiplier.find(p.group);
    if (it == plan.lr_multiplier.end()) continue;
    const T lr = static_cast<T>(cfg_.lr * it->second);
    auto [vit, inserted] = velocity_.try_emplace(p.name, p.value.size(), T(0));
    auto& v = vit->second;
    if (v.size() != p.value.size()) throw ShapeError("parameter '" + p.name + "' changed shape between steps");
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = mu * v[i] - lr * (p.grad[i] + wd * p.value[i]);
      p.value[i] += v[i];
    }
  }

  std::vector<GroupRate> rates;
  for (const auto& [g, m] : plan.lr_multiplier) rates.push_back({g, cfg_.lr * m});
  return rates;
}

PlateauSchedule::PlateauSchedule(std::size_t patience, double factor, double threshold)
    : patience_(patience), factor_(factor), threshold_(threshold) {
  if (patience == 0) throw std::invalid_argument("plateau patience must be >= 1");
  if (!(factor > 0.0 && factor < 1.0)) throw std::invalid_argument("plateau factor must be in (0, 1)");
}

bool PlateauSchedule::update(double metric, double& lr) {
  if (!std::isfinite(metric)) throw std::invalid_argument("plateau schedule given a non-finite metric");
  if (!have_best_ || metric > best_ + threshold_) {
    have_best_ = true;
    best_ = metric;
    stale_ = 0;
    return false;
  }
  if (++stale_ < patience_) return false;
  lr *= factor_;
  have_best_ = false;
  stale_ = 0;
  return true;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradcheckResult gradcheck(const std::function<double()>& f, std::span<double> x, std::span<const double> analytic,
                          double eps) {
  if (x.size() != analytic.size()) {
    throw ShapeError("gradcheck: " + std::to_string(x.size()) + " inputs vs " + std::to_string(analytic.size()) +
                     " analytic gradients");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("gradcheck: eps must be > 0");
  GradcheckResult r;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double fp = f();
    x[i] = orig - eps;
    const double fm = f();
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::runtime_error("gradcheck: non-finite function value at coordinate " + std::to_string(i));
    }
    const double numeric = (fp - fm) / (2.0 * eps);
    const double err = relative_error(analytic[i], numeric);
    if (err > r.max_rel_error || r.checked == 0) {
      r.max_rel_error = err;
      r.worst_index = i;
      r.analytic = analytic[i];
      r.numeric = numeric;
    }
    ++r.checked;
  }
  return r;
}

template class Sgd<float>;
template class Sgd<double>;

}  // namespace gdn
