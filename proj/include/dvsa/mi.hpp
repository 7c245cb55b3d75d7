#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "dvsa/optim.hpp"
#include "dvsa/semantic_space.hpp"
#include "dvsa/tape.hpp"

namespace dvsa {

struct CriticConfig {
  std::size_t input_dim = 0;  // dim(x) + dim(y)
  std::size_t hidden = 64;
  double exp_clamp_cap = 20.0;
};

// Two-layer MLP critic V(x, y) on the concatenated pair, "critic." prefix.
void init_critic_params(ParamStore& store, const CriticConfig& cfg, std::uint64_t seed);

struct CriticVars {
  Var w1, b1, w2, b2;
};

CriticVars attach_critic(Tape& tape, ParamStore& store);
void harvest_critic_grads(ParamStore& store, const CriticVars& vars);

// pairs: P x input_dim, one concatenated (x, y) per row.  Returns P x 1.
Var critic_forward(Var pairs, const CriticVars& vars);

// Value-level pairs (materialized vectors), used by tests and the Gaussian
// sanity path.
struct PairBatch {
  std::vector<std::pair<Tensor, Tensor>> positives;
  std::vector<std::pair<Tensor, Tensor>> negatives;
};

// Index-level pairs into a batch of per-instance attribute matrices; the
// trainer gathers the rows on the tape so gradients reach the encoder.
struct PairIndexBatch {
  struct Ref {
    std::size_t instance;
    std::size_t attribute;
  };
  std::vector<std::pair<Ref, Ref>> positives;
  std::vector<std::pair<Ref, Ref>> negatives;
};

// For each selected attribute and each instance: one cross-instance positive
// and neg_per_pos different-attribute negatives (attribute sampled over all K
// except the anchor's, instance uniform over the batch).
PairIndexBatch build_pair_indices(std::size_t batch_size, std::size_t num_attributes,
                                  const AttributeSelection& selection, std::mt19937_64& rng,
                                  int neg_per_pos);

PairBatch build_pairs(const std::vector<Tensor>& batch_a_hat, const AttributeSelection& selection,
                      std::mt19937_64& rng, int neg_per_pos);

double critic_value(const Tensor& x, const Tensor& y, const ParamStore& critic);

// E_pos[softplus(-V)] + E_neg[softplus(V)]; the negated JS lower bound.
double js_critic_loss(const PairBatch& pairs, const ParamStore& critic);

// NWJ estimate E_P[V] - E_Q[exp(V)] + 1 with the exp argument clamped.
double nwj_mi_value(const PairBatch& pairs, const ParamStore& critic, double exp_clamp_cap = 20.0,
                    int* clamp_hits = nullptr);

}  // namespace dvsa
