#include "dvsa/alignment.hpp"

#include <cmath>

#include "dvsa/rng.hpp"

namespace dvsa {

void init_alignment_params(ParamStore& store, const AlignmentConfig& cfg, std::uint64_t seed) {
  auto rng = make_rng(seed, /*stream=*/1);
  store.add("align.w_q1", fan_in_init(cfg.d_w2v, cfg.d, rng));
  store.add("align.w_k1", fan_in_init(cfg.d_v, cfg.d, rng));
  store.add("align.w_v1", fan_in_init(cfg.d_v, cfg.d, rng));
  store.add("align.w_q2", fan_in_init(cfg.d_v, cfg.d, rng));
  store.add("align.w_k2", fan_in_init(cfg.d_v, cfg.d, rng));
  store.add("align.w_v2", fan_in_init(cfg.d_v, cfg.d, rng));
  store.add("align.w_o", fan_in_init(cfg.d, cfg.d_v, rng));
  if (!cfg.share_output_projection)
    store.add("align.w_o_atv", fan_in_init(cfg.d, cfg.d_v, rng));
  store.add("align.w_p", fan_in_init(cfg.num_attributes, cfg.d_v, rng));
}

AlignmentVars attach_alignment(Tape& tape, ParamStore& store, const AlignmentConfig& cfg) {
  AlignmentVars v;
  v.w_q1 = tape.leaf(store.param("align.w_q1"));
  v.w_k1 = tape.leaf(store.param("align.w_k1"));
  v.w_v1 = tape.leaf(store.param("align.w_v1"));
  v.w_q2 = tape.leaf(store.param("align.w_q2"));
  v.w_k2 = tape.leaf(store.param("align.w_k2"));
  v.w_v2 = tape.leaf(store.param("align.w_v2"));
  v.w_o = tape.leaf(store.param("align.w_o"));
  v.w_o_atv = cfg.share_output_projection ? v.w_o : tape.leaf(store.param("align.w_o_atv"));
  v.w_p = tape.leaf(store.param("align.w_p"));
  v.d = cfg.d;
  return v;
}

void harvest_alignment_grads(ParamStore& store, const AlignmentVars& vars,
                             const AlignmentConfig& cfg) {
  auto accumulate = [&](const char* name, Var v) {
    Tensor& g = store.grad(name);
    const Tensor& src = v.grad();
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += src.data[i];
  };
  accumulate("align.w_q1", vars.w_q1);
  accumulate("align.w_k1", vars.w_k1);
  accumulate("align.w_v1", vars.w_v1);
  accumulate("align.w_q2", vars.w_q2);
  accumulate("align.w_k2", vars.w_k2);
  accumulate("align.w_v2", vars.w_v2);
  accumulate("align.w_o", vars.w_o);
  if (!cfg.share_output_projection) accumulate("align.w_o_atv", vars.w_o_atv);
  accumulate("align.w_p", vars.w_p);
}

std::pair<Var, Var> vta_forward(Var a, Var f, const AlignmentVars& params) {
  Var q1 = matmul(a, params.w_q1);  // K x d
  Var k1 = matmul(f, params.w_k1);  // D x d
  Var v1 = matmul(f, params.w_v1);  // D x d
  Var logits = scale(matmul_nt(q1, k1), 1.0 / std::sqrt(static_cast<double>(params.d)));
  Var attn = softmax_rows(logits);                      // K x D
  Var a_mid = add(matmul(attn, v1), q1);                // residual in d-space
  Var a_hat = matmul(a_mid, params.w_o);                // K x d_v
  return {a_hat, attn};
}

std::pair<Var, Var> atv_forward(Var f, Var a_hat, const AlignmentVars& params) {
  Var q2 = matmul(f, params.w_q2);      // D x d
  Var k2 = matmul(a_hat, params.w_k2);  // K x d
  Var v2 = matmul(a_hat, params.w_v2);  // K x d
  Var logits = scale(matmul_nt(q2, k2), 1.0 / std::sqrt(static_cast<double>(params.d)));
  Var attn = softmax_rows(logits);                      // D x K
  Var v_mid = add(matmul(attn, v2), q2);
  Var v_hat = matmul(v_mid, params.w_o_atv);            // D x d_v
  return {v_hat, attn};
}

Var class_prototypes(Var s, const AlignmentVars& params) { return matmul(s, params.w_p); }

}  // namespace dvsa
