#pragma once

#include "dvsa/tensor.hpp"

namespace dvsa {

// EMA accumulator U and candidate-normalized soft labels, advanced once per
// epoch by a single writer.
struct SoftLabelState {
  Tensor U;        // N x Q
  Tensor l_tilde;  // N x Q, rows sum to 1 over the candidate set
  int epoch = 0;
  double alpha = 0.5;
};

// U^0 uniform over each candidate set; l_tilde starts equal to U^0.
SoftLabelState init_soft_labels(const Tensor& candidates, double alpha = 0.5);

// U <- (1-alpha) U + alpha M, then renormalize over candidates. M row-stochastic.
void update_soft_labels(SoftLabelState& state, const Tensor& m, const Tensor& candidates);

// Row-stochastic softmax over tau * cos(v_i, p_j).  v: N x d_v, prototypes: Q x d_v.
Tensor visual_predictions(const Tensor& v, const Tensor& prototypes, double tau);

// Per-instance softmax over plain cosine similarities (no temperature).
Tensor correction_factor(const Tensor& v_hat_pooled, const Tensor& prototypes);

// -sum_ij (1 + omega_ij) l_ij log m_ij.  omega is a pure reweighting signal.
double visual_loss(const Tensor& m, const Tensor& l_tilde, const Tensor& omega);

// Row-stochastic softmax over tau * cos(pooled a_hat_i, sem_embed_j).
Tensor semantic_confidence(const Tensor& a_hat_pooled, const Tensor& sem_embed, double tau);

// -sum_ij l_ij log m'_ij
double semantic_loss(const Tensor& m_sem, const Tensor& l_tilde);

// Fraction of instances whose argmax soft label matches the hidden true label.
double disambiguation_accuracy(const SoftLabelState& state,
                               const std::vector<std::size_t>& true_labels);

}  // namespace dvsa
