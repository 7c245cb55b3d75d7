#include "dvsa/mi.hpp"

#include <cmath>

#include "dvsa/rng.hpp"

namespace dvsa {

void init_critic_params(ParamStore& store, const CriticConfig& cfg, std::uint64_t seed) {
  auto rng = make_rng(seed, /*stream=*/2);
  store.add("critic.w1", fan_in_init(cfg.input_dim, cfg.hidden, rng));
  store.add("critic.b1", Tensor::zeros(1, cfg.hidden));
  store.add("critic.w2", fan_in_init(cfg.hidden, 1, rng));
  store.add("critic.b2", Tensor::zeros(1, 1));
}

CriticVars attach_critic(Tape& tape, ParamStore& store) {
  CriticVars v;
  v.w1 = tape.leaf(store.param("critic.w1"));
  v.b1 = tape.leaf(store.param("critic.b1"));
  v.w2 = tape.leaf(store.param("critic.w2"));
  v.b2 = tape.leaf(store.param("critic.b2"));
  return v;
}

void harvest_critic_grads(ParamStore& store, const CriticVars& vars) {
  auto accumulate = [&](const char* name, Var v) {
    Tensor& g = store.grad(name);
    const Tensor& src = v.grad();
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += src.data[i];
  };
  accumulate("critic.w1", vars.w1);
  accumulate("critic.b1", vars.b1);
  accumulate("critic.w2", vars.w2);
  accumulate("critic.b2", vars.b2);
}

Var critic_forward(Var pairs, const CriticVars& vars) {
  Var h = relu(add_row_broadcast(matmul(pairs, vars.w1), vars.b1));
  return add_row_broadcast(matmul(h, vars.w2), vars.b2);  // P x 1
}

PairIndexBatch build_pair_indices(std::size_t batch_size, std::size_t num_attributes,
                                  const AttributeSelection& selection, std::mt19937_64& rng,
                                  int neg_per_pos) {
  if (batch_size < 2)
    throw DegenerateInputError("build_pairs: need at least 2 instances for cross-instance positives");
  if (selection.selected.empty())
    throw DegenerateInputError("build_pairs: empty attribute selection");
  PairIndexBatch out;
  std::uniform_int_distribution<std::size_t> inst_dist(0, batch_size - 1);
  std::uniform_int_distribution<std::size_t> other_inst_dist(0, batch_size - 2);
  std::uniform_int_distribution<std::size_t> other_attr_dist(0, num_attributes - 2);
  for (std::size_t k : selection.selected) {
    for (std::size_t i = 0; i < batch_size; ++i) {
      std::size_t j = other_inst_dist(rng);
      if (j >= i) ++j;  // uniform over instances != i
      out.positives.push_back({{i, k}, {j, k}});
      for (int n = 0; n < neg_per_pos; ++n) {
        std::size_t kp = other_attr_dist(rng);
        if (kp >= k) ++kp;  // uniform over attributes != k
        out.negatives.push_back({{i, k}, {inst_dist(rng), kp}});
      }
    }
  }
  return out;
}

namespace {

Tensor row_of(const Tensor& m, std::size_t r) {
  Tensor out(1, m.n_cols);
  std::copy(m.row(r), m.row(r) + m.n_cols, out.data.begin());
  return out;
}

}  // namespace

PairBatch build_pairs(const std::vector<Tensor>& batch_a_hat, const AttributeSelection& selection,
                      std::mt19937_64& rng, int neg_per_pos) {
  if (batch_a_hat.empty()) throw DegenerateInputError("build_pairs: empty batch");
  std::size_t num_attributes = batch_a_hat.front().n_rows;
  PairIndexBatch idx =
      build_pair_indices(batch_a_hat.size(), num_attributes, selection, rng, neg_per_pos);
  PairBatch out;
  for (const auto& [a, p] : idx.positives)
    out.positives.push_back(
        {row_of(batch_a_hat[a.instance], a.attribute), row_of(batch_a_hat[p.instance], p.attribute)});
  for (const auto& [a, n] : idx.negatives)
    out.negatives.push_back(
        {row_of(batch_a_hat[a.instance], a.attribute), row_of(batch_a_hat[n.instance], n.attribute)});
  return out;
}

double critic_value(const Tensor& x, const Tensor& y, const ParamStore& critic) {
  const Tensor& w1 = critic.param("critic.w1");
  const Tensor& b1 = critic.param("critic.b1");
  const Tensor& w2 = critic.param("critic.w2");
  const Tensor& b2 = critic.param("critic.b2");
  if (x.size() + y.size() != w1.n_rows)
    throw ShapeError("critic_value: pair dimension " + std::to_string(x.size() + y.size()) +
                     " vs critic input " + std::to_string(w1.n_rows));
  double v = b2.data[0];
  for (std::size_t h = 0; h < w1.n_cols; ++h) {
    double z = b1.data[h];
    for (std::size_t i = 0; i < x.size(); ++i) z += x.data[i] * w1.at(i, h);
    for (std::size_t i = 0; i < y.size(); ++i) z += y.data[i] * w1.at(x.size() + i, h);
    if (z > 0.0) v += z * w2.at(h, 0);
  }
  return v;
}

namespace {

double softplus_stable(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

}  // namespace

double js_critic_loss(const PairBatch& pairs, const ParamStore& critic) {
  if (pairs.positives.empty() || pairs.negatives.empty())
    throw DegenerateInputError("js_critic_loss: empty pair batch");
  double pos = 0.0, neg = 0.0;
  for (const auto& [x, y] : pairs.positives) pos += softplus_stable(-critic_value(x, y, critic));
  for (const auto& [x, y] : pairs.negatives) neg += softplus_stable(critic_value(x, y, critic));
  return pos / pairs.positives.size() + neg / pairs.negatives.size();
}

double nwj_mi_value(const PairBatch& pairs, const ParamStore& critic, double exp_clamp_cap,
                    int* clamp_hits) {
  if (pairs.positives.empty() || pairs.negatives.empty())
    throw DegenerateInputError("nwj_mi_value: empty pair batch");
  double pos = 0.0, neg = 0.0;
  for (const auto& [x, y] : pairs.positives) pos += critic_value(x, y, critic);
  for (const auto& [x, y] : pairs.negatives) {
    double v = critic_value(x, y, critic);
    if (v > exp_clamp_cap) {
      v = exp_clamp_cap;
      if (clamp_hits) ++*clamp_hits;
    }
    neg += std::exp(v);
  }
  return pos / pairs.positives.size() - neg / pairs.negatives.size() + 1.0;
}

}  // namespace dvsa
