#pragma once

#include <cstdint>
#include <utility>

#include "dvsa/optim.hpp"
#include "dvsa/tape.hpp"

namespace dvsa {

struct AlignmentConfig {
  std::size_t d_w2v = 0;
  std::size_t d_v = 0;
  std::size_t d = 0;  // shared attention width
  std::size_t num_attributes = 0;
  bool share_output_projection = true;
};

// Registers the VTA/ATV projection matrices and the prototype embedding in a
// ParamStore under the "align." prefix.
void init_alignment_params(ParamStore& store, const AlignmentConfig& cfg, std::uint64_t seed);

// Tape handles to the alignment parameters for one forward pass.
struct AlignmentVars {
  Var w_q1, w_k1, w_v1;  // VTA projections
  Var w_q2, w_k2, w_v2;  // ATV projections
  Var w_o;               // output projection (VTA side, shared by default)
  Var w_o_atv;           // equals w_o unless share_output_projection=false
  Var w_p;               // prototype embedding, K x d_v
  std::size_t d = 0;
};

AlignmentVars attach_alignment(Tape& tape, ParamStore& store, const AlignmentConfig& cfg);

// After backward, accumulates tape gradients of the attached vars into the store.
void harvest_alignment_grads(ParamStore& store, const AlignmentVars& vars,
                             const AlignmentConfig& cfg);

// Visual-to-attribute attention: refines attribute embeddings a (K x d_w2v)
// against regional features f (D x d_v). Returns (a_hat K x d_v, attn K x D).
std::pair<Var, Var> vta_forward(Var a, Var f, const AlignmentVars& params);

// Attribute-to-visual attention: refines f against the VTA output a_hat.
// Returns (v_hat D x d_v, attn D x K).
std::pair<Var, Var> atv_forward(Var f, Var a_hat, const AlignmentVars& params);

// Class prototypes p = S * W_p, one row per class, in visual space.
Var class_prototypes(Var s, const AlignmentVars& params);

}  // namespace dvsa
