#include "dvsa/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace dvsa {

void ParamStore::add(const std::string& name, Tensor value) {
  if (params_.count(name)) throw std::runtime_error("ParamStore: duplicate name " + name);
  grads_.emplace(name, Tensor::zeros(value.n_rows, value.n_cols));
  params_.emplace(name, std::move(value));
}

Tensor& ParamStore::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::runtime_error("ParamStore: unknown parameter " + name);
  return it->second;
}

const Tensor& ParamStore::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::runtime_error("ParamStore: unknown parameter " + name);
  return it->second;
}

Tensor& ParamStore::grad(const std::string& name) {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw std::runtime_error("ParamStore: no gradient slot for " + name);
  return it->second;
}

const Tensor& ParamStore::grad(const std::string& name) const {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw std::runtime_error("ParamStore: no gradient slot for " + name);
  return it->second;
}

void ParamStore::zero_grads() {
  for (auto& [name, g] : grads_)
    std::fill(g.data.begin(), g.data.end(), 0.0);
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

std::size_t ParamStore::total_entries() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.size();
  return n;
}

void sgd_step(ParamStore& params, OptimState& optim) {
  for (const std::string& name : params.names()) {
    Tensor& p = params.param(name);
    const Tensor& g = params.grad(name);
    if (!g.same_shape(p))
      throw std::runtime_error("sgd_step: gradient shape mismatch for " + name);
    if (optim.momentum != 0.0) {
      auto [it, inserted] = optim.velocity.try_emplace(name, Tensor::zeros(p.n_rows, p.n_cols));
      Tensor& v = it->second;
      for (std::size_t i = 0; i < p.size(); ++i) {
        v.data[i] = optim.momentum * v.data[i] + g.data[i];
        p.data[i] -= optim.learning_rate * v.data[i];
      }
    } else {
      for (std::size_t i = 0; i < p.size(); ++i)
        p.data[i] -= optim.learning_rate * g.data[i];
    }
  }
  params.zero_grads();
  optim.step_count += 1;
}

GradCheckReport grad_check(const std::function<double(ParamStore&)>& loss, ParamStore& params,
                           double eps, double tol) {
  GradCheckReport report;
  for (const std::string& name : params.names()) {
    Tensor& p = params.param(name);
    const Tensor& analytic = params.grad(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      double keep = p.data[i];
      p.data[i] = keep + eps;
      double hi = loss(params);
      p.data[i] = keep - eps;
      double lo = loss(params);
      p.data[i] = keep;
      double numeric = (hi - lo) / (2.0 * eps);
      double rel = std::abs(analytic.data[i] - numeric) / std::max(1.0, std::abs(numeric));
      report.checked += 1;
      report.max_rel_err = std::max(report.max_rel_err, rel);
      if (!(rel <= tol)) {
        report.passed = false;
        report.offenders.push_back({name, i, analytic.data[i], numeric, rel});
      }
    }
  }
  return report;
}

}  // namespace dvsa
