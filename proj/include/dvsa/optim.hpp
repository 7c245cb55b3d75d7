#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dvsa/tensor.hpp"

namespace dvsa {

// Named parameter tensors with parallel gradient slots. Ordered by name so
// iteration order (and thus every downstream artifact) is deterministic.
class ParamStore {
 public:
  void add(const std::string& name, Tensor value);
  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;
  Tensor& grad(const std::string& name);
  const Tensor& grad(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) != 0; }

  void zero_grads();
  std::vector<std::string> names() const;
  std::size_t total_entries() const;

 private:
  std::map<std::string, Tensor> params_;
  std::map<std::string, Tensor> grads_;
};

struct OptimState {
  double learning_rate = 1e-2;
  double momentum = 0.0;
  long step_count = 0;
  std::map<std::string, Tensor> velocity;  // populated lazily, keyed like the store
};

// One SGD(+momentum) step over every parameter; gradients are zeroed after.
void sgd_step(ParamStore& params, OptimState& optim);

struct GradCheckEntry {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  bool passed = true;
  std::size_t checked = 0;
  double max_rel_err = 0.0;
  std::vector<GradCheckEntry> offenders;
};

// Central-difference check of the gradients currently stored in `params`
// against `loss` evaluated at perturbed parameters. `loss` must be
// deterministic and must not mutate the store's gradients.
GradCheckReport grad_check(const std::function<double(ParamStore&)>& loss, ParamStore& params,
                           double eps, double tol);

}  // namespace dvsa
