#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "dvsa/tensor.hpp"

namespace dvsa {

class Tape;

// Handle to a node on the tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
};

// Reverse-mode autodiff over dense matrices. Nodes are appended in forward
// order; backward walks them in reverse, so parents always precede children.
class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&)> backward;  // empty for leaves
  };

  Var leaf(Tensor value);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  Tensor& grad(Var v) { return nodes_[v.id].grad; }
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }

  // Seeds d(root)/d(root) = 1 (root must be scalar) and accumulates gradients
  // into every node reachable from it.
  void backward(Var root);

  // Times the exp_clamp cap was hit during forward evaluation.
  int exp_clamp_hits = 0;

  std::size_t size() const { return nodes_.size(); }

  Var add_node(Tensor value);
  void set_backward(Var v, std::function<void(Tape&)> backward);

 private:
  std::vector<Node> nodes_;
};

// --- operations -----------------------------------------------------------

Var matmul(Var a, Var b);            // A * B
Var matmul_nt(Var a, Var b);         // A * B^T
Var add(Var a, Var b);               // elementwise, same shape
Var sub(Var a, Var b);
Var add_row_broadcast(Var a, Var bias);  // bias is 1 x n, added to each row
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);
Var mul_const(Var a, const Tensor& w);   // elementwise by a constant (no grad into w)
Var mul(Var a, Var b);               // elementwise, same shape
Var relu(Var a);
Var log_elem(Var a);                 // natural log, elementwise
Var softplus(Var a);                 // ln(1 + e^x), overflow-safe
Var exp_clamp(Var a, double cap);    // exp(min(x, cap)); zero gradient past the cap
Var softmax_rows(Var a);
Var sum_all(Var a);                  // 1 x 1
Var mean_all(Var a);                 // 1 x 1
Var mean_rows(Var a);                // 1 x cols (GAP over regions)
Var cosine_matrix(Var a, Var b);     // (m x d, n x d) -> m x n of cos(a_i, b_j)
Var concat_cols(Var a, Var b);       // (m x p, m x q) -> m x (p+q)
// Stacks the named rows of earlier nodes into a fresh P x d matrix.
Var gather_rows(Tape& tape, const std::vector<std::pair<Var, std::size_t>>& rows);

}  // namespace dvsa
