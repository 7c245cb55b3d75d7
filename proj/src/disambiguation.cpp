#include "dvsa/disambiguation.hpp"

#include <algorithm>
#include <cmath>

namespace dvsa {

namespace {

void renormalize(SoftLabelState& state, const Tensor& candidates) {
  std::size_t n = state.U.n_rows, q = state.U.n_cols;
  for (std::size_t i = 0; i < n; ++i) {
    double denom = 0.0;
    for (std::size_t j = 0; j < q; ++j)
      if (candidates.at(i, j) != 0.0) denom += state.U.at(i, j);
    if (denom <= 0.0)
      throw DegenerateInputError("update_soft_labels: zero candidate mass for instance " +
                                 std::to_string(i));
    for (std::size_t j = 0; j < q; ++j)
      state.l_tilde.at(i, j) = candidates.at(i, j) != 0.0 ? state.U.at(i, j) / denom : 0.0;
  }
}

}  // namespace

SoftLabelState init_soft_labels(const Tensor& candidates, double alpha) {
  SoftLabelState state;
  state.alpha = alpha;
  state.epoch = 0;
  std::size_t n = candidates.n_rows, q = candidates.n_cols;
  state.U = Tensor::zeros(n, q);
  state.l_tilde = Tensor::zeros(n, q);
  for (std::size_t i = 0; i < n; ++i) {
    double count = 0.0;
    for (std::size_t j = 0; j < q; ++j) count += candidates.at(i, j) != 0.0 ? 1.0 : 0.0;
    if (count == 0.0)
      throw DegenerateInputError("init_soft_labels: empty candidate set for instance " +
                                 std::to_string(i));
    for (std::size_t j = 0; j < q; ++j)
      if (candidates.at(i, j) != 0.0) state.U.at(i, j) = 1.0 / count;
  }
  renormalize(state, candidates);
  return state;
}

void update_soft_labels(SoftLabelState& state, const Tensor& m, const Tensor& candidates) {
  if (!m.same_shape(state.U))
    throw ShapeError("update_soft_labels: M " + m.shape_str() + " vs U " + state.U.shape_str());
  for (std::size_t i = 0; i < state.U.size(); ++i)
    state.U.data[i] = (1.0 - state.alpha) * state.U.data[i] + state.alpha * m.data[i];
  renormalize(state, candidates);
  state.epoch += 1;
}

Tensor visual_predictions(const Tensor& v, const Tensor& prototypes, double tau) {
  Tensor logits = cosine_matrix_plain(v, prototypes);
  for (double& x : logits.data) x *= tau;
  return softmax_rows_plain(logits);
}

Tensor correction_factor(const Tensor& v_hat_pooled, const Tensor& prototypes) {
  return softmax_rows_plain(cosine_matrix_plain(v_hat_pooled, prototypes));
}

double visual_loss(const Tensor& m, const Tensor& l_tilde, const Tensor& omega) {
  if (!m.same_shape(l_tilde) || !m.same_shape(omega))
    throw ShapeError("visual_loss: shape mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (l_tilde.data[i] == 0.0) continue;
    loss -= (1.0 + omega.data[i]) * l_tilde.data[i] * std::log(m.data[i]);
  }
  return loss;
}

Tensor semantic_confidence(const Tensor& a_hat_pooled, const Tensor& sem_embed, double tau) {
  return visual_predictions(a_hat_pooled, sem_embed, tau);
}

double semantic_loss(const Tensor& m_sem, const Tensor& l_tilde) {
  if (!m_sem.same_shape(l_tilde)) throw ShapeError("semantic_loss: shape mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < m_sem.size(); ++i) {
    if (l_tilde.data[i] == 0.0) continue;
    loss -= l_tilde.data[i] * std::log(m_sem.data[i]);
  }
  return loss;
}

double disambiguation_accuracy(const SoftLabelState& state,
                               const std::vector<std::size_t>& true_labels) {
  std::size_t n = state.l_tilde.n_rows;
  if (true_labels.size() != n) throw ShapeError("disambiguation_accuracy: label count mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = state.l_tilde.row(i);
    std::size_t best = std::max_element(row, row + state.l_tilde.n_cols) - row;
    if (best == true_labels[i]) ++correct;
  }
  return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace dvsa
