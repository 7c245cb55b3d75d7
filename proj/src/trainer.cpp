#include "dvsa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dvsa/rng.hpp"

namespace dvsa {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::runtime_error("config: epochs must be >= 1");
  if (batch_size < 1) throw std::runtime_error("config: batch_size must be >= 1");
  if (learning_rate <= 0.0) throw std::runtime_error("config: learning_rate must be > 0");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::runtime_error("config: alpha must be in (0, 1]");
  if (tau <= 0.0) throw std::runtime_error("config: tau must be > 0");
  if (mi_neg_per_pos < 1) throw std::runtime_error("config: mi_neg_per_pos must be >= 1");
  if (mi_critic_lr < 0.0) throw std::runtime_error("config: mi.critic_lr must be >= 0");
  if (loss_reduction != "sum" && loss_reduction != "mean")
    throw std::runtime_error("config: loss_reduction must be sum or mean");
  if (inference_score != "cosine" && inference_score != "dot")
    throw std::runtime_error("config: inference_score must be cosine or dot");
  if (!use_vta && (use_sem_loss || use_mi || use_omega))
    throw std::runtime_error(
        "config: use_sem_loss, use_mi and use_omega require use_vta (no refined attributes "
        "without the VTA block)");
}

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::runtime_error("config: boolean expected for " + key + ", got '" + v + "'");
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void apply_config_line(TrainConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "epochs") cfg.epochs = std::stoi(value);
  else if (key == "batch_size") cfg.batch_size = std::stoi(value);
  else if (key == "learning_rate") cfg.learning_rate = std::stod(value);
  else if (key == "momentum") cfg.momentum = std::stod(value);
  else if (key == "seed") cfg.seed = std::stoull(value);
  else if (key == "tau") cfg.tau = std::stod(value);
  else if (key == "alpha") cfg.alpha = std::stod(value);
  else if (key == "d") cfg.d = std::stoull(value);
  else if (key == "mi.hidden_width") cfg.mi_hidden = std::stoull(value);
  else if (key == "mi.neg_per_pos") cfg.mi_neg_per_pos = std::stoi(value);
  else if (key == "mi.critic_lr") cfg.mi_critic_lr = std::stod(value);
  else if (key == "mi.exp_clamp") cfg.mi_exp_clamp = std::stod(value);
  else if (key == "mi_detach_encoder_on_js") cfg.mi_detach_encoder_on_js = parse_bool(value, key);
  else if (key == "use_vta") cfg.use_vta = parse_bool(value, key);
  else if (key == "use_omega") cfg.use_omega = parse_bool(value, key);
  else if (key == "use_sem_loss") cfg.use_sem_loss = parse_bool(value, key);
  else if (key == "use_mi") cfg.use_mi = parse_bool(value, key);
  else if (key == "use_label_updates") cfg.use_label_updates = parse_bool(value, key);
  else if (key == "omega_grad") cfg.omega_grad = parse_bool(value, key);
  else if (key == "share_output_projection") cfg.share_output_projection = parse_bool(value, key);
  else if (key == "loss_reduction") cfg.loss_reduction = value;
  else if (key == "inference_score") cfg.inference_score = value;
  else if (key == "gamma") cfg.gamma = std::stod(value);
  else throw std::runtime_error("config: unknown key '" + key + "'");
}

TrainConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  TrainConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      apply_config_line(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

std::string config_to_string(const TrainConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "epochs = " << cfg.epochs << "\n";
  out << "batch_size = " << cfg.batch_size << "\n";
  out << "learning_rate = " << cfg.learning_rate << "\n";
  out << "momentum = " << cfg.momentum << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "tau = " << cfg.tau << "\n";
  out << "alpha = " << cfg.alpha << "\n";
  out << "d = " << cfg.d << "\n";
  out << "mi.hidden_width = " << cfg.mi_hidden << "\n";
  out << "mi.neg_per_pos = " << cfg.mi_neg_per_pos << "\n";
  out << "mi.critic_lr = " << cfg.mi_critic_lr << "\n";
  out << "mi.exp_clamp = " << cfg.mi_exp_clamp << "\n";
  out << "mi_detach_encoder_on_js = " << (cfg.mi_detach_encoder_on_js ? "true" : "false") << "\n";
  out << "use_vta = " << (cfg.use_vta ? "true" : "false") << "\n";
  out << "use_omega = " << (cfg.use_omega ? "true" : "false") << "\n";
  out << "use_sem_loss = " << (cfg.use_sem_loss ? "true" : "false") << "\n";
  out << "use_mi = " << (cfg.use_mi ? "true" : "false") << "\n";
  out << "use_label_updates = " << (cfg.use_label_updates ? "true" : "false") << "\n";
  out << "omega_grad = " << (cfg.omega_grad ? "true" : "false") << "\n";
  out << "share_output_projection = " << (cfg.share_output_projection ? "true" : "false") << "\n";
  out << "loss_reduction = " << cfg.loss_reduction << "\n";
  out << "inference_score = " << cfg.inference_score << "\n";
  out << "gamma = " << cfg.gamma << "\n";
  return out.str();
}

// --- trainer ----------------------------------------------------------------

namespace {

Tensor slice_cols(const Tensor& m, std::size_t cols) {
  Tensor out(m.n_rows, cols);
  for (std::size_t r = 0; r < m.n_rows; ++r)
    std::copy(m.row(r), m.row(r) + cols, out.row(r));
  return out;
}

Tensor slice_rows(const Tensor& m, std::size_t rows) {
  Tensor out(rows, m.n_cols, std::vector<double>(m.data.begin(), m.data.begin() + rows * m.n_cols));
  return out;
}

Tensor pooled_features(const PartialDataset& data) {
  Tensor out(data.size(), data.features.front().n_cols);
  for (std::size_t i = 0; i < data.size(); ++i) {
    Tensor g = gap(data.features[i]);
    std::copy(g.data.begin(), g.data.end(), out.row(i));
  }
  return out;
}

}  // namespace

TrainerState init_trainer(const PartialDataset& data, const SemanticSpace& semantic,
                          std::size_t num_seen, const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw DegenerateInputError("init_trainer: empty dataset");
  data.validate();
  semantic.validate();
  TrainerState state;
  std::size_t d_v = data.features.front().n_cols;
  state.align_cfg.d_w2v = semantic.attr_embed.n_cols;
  state.align_cfg.d_v = d_v;
  state.align_cfg.d = cfg.d == 0 ? std::min<std::size_t>(d_v, 64) : cfg.d;
  state.align_cfg.num_attributes = semantic.num_attributes();
  state.align_cfg.share_output_projection = cfg.share_output_projection;
  init_alignment_params(state.align_params, state.align_cfg, cfg.seed);
  state.critic_cfg.input_dim = 2 * d_v;
  state.critic_cfg.hidden = cfg.mi_hidden;
  state.critic_cfg.exp_clamp_cap = cfg.mi_exp_clamp;
  init_critic_params(state.critic_params, state.critic_cfg, cfg.seed);
  state.align_opt.learning_rate = cfg.learning_rate;
  state.align_opt.momentum = cfg.momentum;
  state.critic_opt.learning_rate = cfg.mi_critic_lr > 0.0 ? cfg.mi_critic_lr : cfg.learning_rate;
  state.critic_opt.momentum = cfg.momentum;
  state.selection = select_attributes(attribute_entropy(semantic));
  Tensor seen_candidates = slice_cols(data.candidates, num_seen);
  state.soft = init_soft_labels(seen_candidates, cfg.alpha);
  state.epoch = 0;
  return state;
}

JointLossParts build_joint_loss(Tape& tape, const BatchContext& ctx, const AlignmentVars& avars,
                                const CriticVars& cvars, const TrainConfig& cfg) {
  std::size_t batch = ctx.features.size();
  double reduction = cfg.loss_reduction == "mean" ? 1.0 / static_cast<double>(batch) : 1.0;

  Var s_seen = tape.leaf(ctx.s_seen);
  Var protos = class_prototypes(s_seen, avars);  // Q_seen x d_v

  // visual loss: M from pooled raw features (constant), prototypes learnable
  Var v_pooled = tape.leaf(ctx.v_pooled);
  Var m_vis = softmax_rows(scale(cosine_matrix(v_pooled, protos), cfg.tau));
  Var log_m = log_elem(m_vis);

  std::vector<Var> a_hats;
  std::vector<Var> v_hat_pooled_rows;
  if (cfg.use_vta) {
    Var attr = tape.leaf(ctx.attr_embed);
    for (std::size_t i = 0; i < batch; ++i) {
      Var f = tape.leaf(ctx.features[i]);
      auto [a_hat, vta_attn] = vta_forward(attr, f, avars);
      a_hats.push_back(a_hat);
      if (cfg.use_omega && cfg.omega_grad) {
        auto [v_hat, atv_attn] = atv_forward(f, a_hat, avars);
        v_hat_pooled_rows.push_back(mean_rows(v_hat));
      }
    }
  }

  JointLossParts parts;
  Var l_vis;
  if (cfg.use_omega && cfg.omega_grad) {
    std::vector<std::pair<Var, std::size_t>> rows;
    for (Var r : v_hat_pooled_rows) rows.push_back({r, 0});
    Var v_hat_mat = gather_rows(tape, rows);
    Var omega = softmax_rows(cosine_matrix(v_hat_mat, protos));
    Var weights = mul_const(add_scalar(omega, 1.0), ctx.l_tilde);
    l_vis = scale(neg(sum_all(mul(weights, log_m))), reduction);
  } else {
    Tensor weights = ctx.l_tilde;
    for (std::size_t i = 0; i < weights.size(); ++i)
      weights.data[i] *= 1.0 + ctx.omega.data[i];
    l_vis = scale(neg(sum_all(mul_const(log_m, weights))), reduction);
  }
  parts.l_vis = l_vis.value().data[0];
  Var total = l_vis;

  if (cfg.use_sem_loss) {
    std::vector<std::pair<Var, std::size_t>> rows;
    for (Var a_hat : a_hats) rows.push_back({mean_rows(a_hat), 0});
    Var a_pooled = gather_rows(tape, rows);  // N_b x d_v
    Var m_sem = softmax_rows(scale(cosine_matrix(a_pooled, protos), cfg.tau));
    Var l_sem = scale(neg(sum_all(mul_const(log_elem(m_sem), ctx.l_tilde))), reduction);
    parts.l_sem = l_sem.value().data[0];
    total = add(total, l_sem);
  }

  if (cfg.use_mi && !ctx.pairs.positives.empty()) {
    auto gather_refs = [&](const std::vector<std::pair<PairIndexBatch::Ref, PairIndexBatch::Ref>>&
                               refs) {
      std::vector<std::pair<Var, std::size_t>> left, right;
      for (const auto& [a, b] : refs) {
        left.push_back({a_hats[a.instance], a.attribute});
        right.push_back({a_hats[b.instance], b.attribute});
      }
      return concat_cols(gather_rows(tape, left), gather_rows(tape, right));
    };
    Var v_pos = critic_forward(gather_refs(ctx.pairs.positives), cvars);
    Var v_neg = critic_forward(gather_refs(ctx.pairs.negatives), cvars);
    Var mi = add_scalar(sub(mean_all(v_pos), mean_all(exp_clamp(v_neg, cfg.mi_exp_clamp))), 1.0);
    parts.l_ami = mi.value().data[0];
    total = sub(total, mi);
  }

  parts.total = total;
  return parts;
}

double joint_loss_value(const BatchContext& ctx, ParamStore& align, ParamStore& critic,
                        const AlignmentConfig& acfg, const TrainConfig& cfg) {
  Tape tape;
  AlignmentVars avars = attach_alignment(tape, align, acfg);
  CriticVars cvars = attach_critic(tape, critic);
  return build_joint_loss(tape, ctx, avars, cvars, cfg).total.value().data[0];
}

namespace {

// JS critic objective on the tape: E_pos[softplus(-V)] + E_neg[softplus(V)].
Var build_js_loss(Tape& tape, const BatchContext& ctx, const std::vector<Var>& a_hats,
                  const CriticVars& cvars) {
  auto gather_refs = [&](const std::vector<std::pair<PairIndexBatch::Ref, PairIndexBatch::Ref>>&
                             refs) {
    std::vector<std::pair<Var, std::size_t>> left, right;
    for (const auto& [a, b] : refs) {
      left.push_back({a_hats[a.instance], a.attribute});
      right.push_back({a_hats[b.instance], b.attribute});
    }
    return concat_cols(gather_rows(tape, left), gather_rows(tape, right));
  };
  Var v_pos = critic_forward(gather_refs(ctx.pairs.positives), cvars);
  Var v_neg = critic_forward(gather_refs(ctx.pairs.negatives), cvars);
  return add(mean_all(softplus(neg(v_pos))), mean_all(softplus(v_neg)));
}

void require_finite(double v, const char* component) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string("non-finite loss component: ") + component);
}

}  // namespace

EpochMetrics train_epoch(const PartialDataset& data, const SemanticSpace& semantic,
                         std::size_t num_seen, TrainerState& state, const TrainConfig& cfg) {
  std::size_t n = data.size();
  Tensor s_seen = slice_rows(semantic.S, num_seen);
  Tensor seen_candidates = slice_cols(data.candidates, num_seen);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto shuffle_rng = make_rng(cfg.seed, /*stream=*/10, static_cast<std::uint64_t>(state.epoch));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  EpochMetrics metrics;
  metrics.epoch = state.epoch;
  int mi_batches = 0;

  std::size_t batch_count = (n + cfg.batch_size - 1) / cfg.batch_size;
  for (std::size_t b = 0; b < batch_count; ++b) {
    std::size_t begin = b * cfg.batch_size;
    std::size_t end = std::min(n, begin + cfg.batch_size);
    std::size_t batch = end - begin;

    BatchContext ctx;
    ctx.s_seen = s_seen;
    ctx.attr_embed = semantic.attr_embed;
    ctx.v_pooled = Tensor(batch, state.align_cfg.d_v);
    ctx.l_tilde = Tensor(batch, num_seen);
    for (std::size_t i = 0; i < batch; ++i) {
      std::size_t idx = order[begin + i];
      ctx.features.push_back(data.features[idx]);
      Tensor g = gap(data.features[idx]);
      std::copy(g.data.begin(), g.data.end(), ctx.v_pooled.row(i));
      std::copy(state.soft.l_tilde.row(idx), state.soft.l_tilde.row(idx) + num_seen,
                ctx.l_tilde.row(i));
    }

    bool mi_active = cfg.use_mi && batch >= 2;
    if (mi_active) {
      auto pair_rng = make_rng(cfg.seed, /*stream=*/20 + static_cast<std::uint64_t>(state.epoch),
                               static_cast<std::uint64_t>(b));
      ctx.pairs = build_pair_indices(batch, semantic.num_attributes(), state.selection, pair_rng,
                                     cfg.mi_neg_per_pos);
    }

    // (a) JS critic step, with gradients into the encoder unless detached
    if (mi_active) {
      Tape tape;
      AlignmentVars avars = attach_alignment(tape, state.align_params, state.align_cfg);
      CriticVars cvars = attach_critic(tape, state.critic_params);
      Var attr = tape.leaf(ctx.attr_embed);
      std::vector<Var> a_hats;
      for (std::size_t i = 0; i < batch; ++i) {
        Var f = tape.leaf(ctx.features[i]);
        a_hats.push_back(vta_forward(attr, f, avars).first);
      }
      Var js = build_js_loss(tape, ctx, a_hats, cvars);
      double js_value = js.value().data[0];
      require_finite(js_value, "js_critic");
      metrics.l_js += js_value;
      tape.backward(js);
      harvest_critic_grads(state.critic_params, cvars);
      sgd_step(state.critic_params, state.critic_opt);
      if (!cfg.mi_detach_encoder_on_js) {
        harvest_alignment_grads(state.align_params, avars, state.align_cfg);
        sgd_step(state.align_params, state.align_opt);
      }
    }

    // correction factor from the (possibly just updated) parameters; stop-gradient
    ctx.omega = Tensor::zeros(batch, num_seen);
    if (cfg.use_omega && !cfg.omega_grad) {
      Tape tape;
      AlignmentVars avars = attach_alignment(tape, state.align_params, state.align_cfg);
      Var attr = tape.leaf(ctx.attr_embed);
      Tensor v_hat_pooled(batch, state.align_cfg.d_v);
      for (std::size_t i = 0; i < batch; ++i) {
        Var f = tape.leaf(ctx.features[i]);
        auto [a_hat, vta_attn] = vta_forward(attr, f, avars);
        auto [v_hat, atv_attn] = atv_forward(f, a_hat, avars);
        Tensor pooled = gap(v_hat.value());
        std::copy(pooled.data.begin(), pooled.data.end(), v_hat_pooled.row(i));
      }
      Tensor protos = matmul_plain(s_seen, state.align_params.param("align.w_p"));
      ctx.omega = correction_factor(v_hat_pooled, protos);
    }

    // (b) joint objective step
    {
      Tape tape;
      AlignmentVars avars = attach_alignment(tape, state.align_params, state.align_cfg);
      CriticVars cvars = attach_critic(tape, state.critic_params);
      JointLossParts parts = build_joint_loss(tape, ctx, avars, cvars, cfg);
      require_finite(parts.l_vis, "visual");
      require_finite(parts.l_sem, "semantic");
      require_finite(parts.l_ami, "attribute_mi");
      metrics.l_vis += parts.l_vis;
      metrics.l_sem += parts.l_sem;
      metrics.l_ami += parts.l_ami;
      metrics.total += parts.total.value().data[0];
      metrics.clamp_hits += tape.exp_clamp_hits;
      tape.backward(parts.total);
      harvest_alignment_grads(state.align_params, avars, state.align_cfg);
      sgd_step(state.align_params, state.align_opt);
      if (cfg.use_mi && !ctx.pairs.positives.empty()) {
        harvest_critic_grads(state.critic_params, cvars);
        sgd_step(state.critic_params, state.critic_opt);
      }
    }
    if (mi_active) ++mi_batches;
  }

  if (mi_batches > 0) {
    metrics.l_ami /= mi_batches;
    metrics.l_js /= mi_batches;
  }

  // epoch-level disambiguation from a full-dataset forward
  {
    Tensor protos = matmul_plain(s_seen, state.align_params.param("align.w_p"));
    Tensor v_all = pooled_features(data);
    Tensor m_full = visual_predictions(v_all, protos, cfg.tau);
    if (cfg.use_label_updates) update_soft_labels(state.soft, m_full, seen_candidates);
  }
  metrics.disamb_accuracy = disambiguation_accuracy(state.soft, data.true_labels);

  state.epoch += 1;
  return metrics;
}

std::vector<EpochMetrics> run_training(const PartialDataset& data, const SemanticSpace& semantic,
                                       std::size_t num_seen, TrainerState& state,
                                       const TrainConfig& cfg, const EpochObserver& observer) {
  cfg.validate();
  std::vector<EpochMetrics> history;
  while (state.epoch < cfg.epochs) {
    EpochMetrics m = train_epoch(data, semantic, num_seen, state, cfg);
    history.push_back(m);
    if (observer) observer(m, state);
  }
  return history;
}

// --- checkpoint ---------------------------------------------------------------

namespace {

constexpr char kCkptMagic[8] = {'D', 'V', 'S', 'A', 'C', 'K', 'P', '1'};

void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::ifstream& in, const std::string& path) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw std::runtime_error("checkpoint truncated: " + path);
  return v;
}

void write_string(std::ofstream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in, const std::string& path) {
  std::uint64_t len = read_u64(in, path);
  std::string s(len, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(len)))
    throw std::runtime_error("checkpoint truncated: " + path);
  return s;
}

void write_tensor(std::ofstream& out, const Tensor& t) {
  write_u64(out, t.n_rows);
  write_u64(out, t.n_cols);
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
}

Tensor read_tensor(std::ifstream& in, const std::string& path) {
  std::uint64_t rows = read_u64(in, path);
  std::uint64_t cols = read_u64(in, path);
  Tensor t(rows, cols);
  if (!in.read(reinterpret_cast<char*>(t.data.data()),
               static_cast<std::streamsize>(t.size() * sizeof(double))))
    throw std::runtime_error("checkpoint truncated: " + path);
  return t;
}

void write_store(std::ofstream& out, const ParamStore& store) {
  auto names = store.names();
  write_u64(out, names.size());
  for (const std::string& name : names) {
    write_string(out, name);
    write_tensor(out, store.param(name));
  }
}

void read_store(std::ifstream& in, ParamStore& store, const std::string& path) {
  std::uint64_t count = read_u64(in, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = read_string(in, path);
    store.add(name, read_tensor(in, path));
  }
}

void write_optim(std::ofstream& out, const OptimState& opt) {
  write_tensor(out, Tensor(1, 3, {opt.learning_rate, opt.momentum, static_cast<double>(opt.step_count)}));
  write_u64(out, opt.velocity.size());
  for (const auto& [name, v] : opt.velocity) {
    write_string(out, name);
    write_tensor(out, v);
  }
}

void read_optim(std::ifstream& in, OptimState& opt, const std::string& path) {
  Tensor scalars = read_tensor(in, path);
  opt.learning_rate = scalars.data[0];
  opt.momentum = scalars.data[1];
  opt.step_count = static_cast<long>(scalars.data[2]);
  std::uint64_t count = read_u64(in, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = read_string(in, path);
    opt.velocity.emplace(name, read_tensor(in, path));
  }
}

}  // namespace

void save_checkpoint(const TrainerState& state, const TrainConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kCkptMagic, 8);
  write_string(out, config_to_string(cfg));
  write_u64(out, static_cast<std::uint64_t>(state.epoch));
  write_u64(out, state.align_cfg.d_w2v);
  write_u64(out, state.align_cfg.d_v);
  write_u64(out, state.align_cfg.d);
  write_u64(out, state.align_cfg.num_attributes);
  write_u64(out, state.align_cfg.share_output_projection ? 1 : 0);
  write_u64(out, state.critic_cfg.input_dim);
  write_u64(out, state.critic_cfg.hidden);
  write_store(out, state.align_params);
  write_store(out, state.critic_params);
  write_optim(out, state.align_opt);
  write_optim(out, state.critic_opt);
  write_tensor(out, state.soft.U);
  write_tensor(out, state.soft.l_tilde);
  write_u64(out, static_cast<std::uint64_t>(state.soft.epoch));
  write_tensor(out, Tensor(1, 1, {state.soft.alpha}));
  write_tensor(out, state.selection.entropies);
  write_tensor(out, Tensor(1, 1, {state.selection.threshold}));
  write_u64(out, state.selection.selected.size());
  for (std::size_t k : state.selection.selected) write_u64(out, k);
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

TrainerState load_checkpoint(const std::string& path, TrainConfig& cfg_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw std::runtime_error("not a DVSA checkpoint (bad magic): " + path);
  std::string cfg_text = read_string(in, path);
  {
    std::istringstream cs(cfg_text);
    std::string line;
    while (std::getline(cs, line)) {
      std::size_t eq = line.find('=');
      if (eq == std::string::npos) continue;
      apply_config_line(cfg_out, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }
  TrainerState state;
  state.epoch = static_cast<int>(read_u64(in, path));
  state.align_cfg.d_w2v = read_u64(in, path);
  state.align_cfg.d_v = read_u64(in, path);
  state.align_cfg.d = read_u64(in, path);
  state.align_cfg.num_attributes = read_u64(in, path);
  state.align_cfg.share_output_projection = read_u64(in, path) != 0;
  state.critic_cfg.input_dim = read_u64(in, path);
  state.critic_cfg.hidden = read_u64(in, path);
  read_store(in, state.align_params, path);
  read_store(in, state.critic_params, path);
  read_optim(in, state.align_opt, path);
  read_optim(in, state.critic_opt, path);
  state.soft.U = read_tensor(in, path);
  state.soft.l_tilde = read_tensor(in, path);
  state.soft.epoch = static_cast<int>(read_u64(in, path));
  state.soft.alpha = read_tensor(in, path).data[0];
  state.selection.entropies = read_tensor(in, path);
  state.selection.threshold = read_tensor(in, path).data[0];
  std::uint64_t sel_count = read_u64(in, path);
  for (std::uint64_t i = 0; i < sel_count; ++i)
    state.selection.selected.push_back(read_u64(in, path));
  return state;
}

}  // namespace dvsa
