#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dvsa/alignment.hpp"
#include "dvsa/data.hpp"
#include "dvsa/disambiguation.hpp"
#include "dvsa/mi.hpp"
#include "dvsa/optim.hpp"
#include "dvsa/semantic_space.hpp"

namespace dvsa {

struct TrainConfig {
  int epochs = 60;
  int batch_size = 32;
  double learning_rate = 1e-2;
  double momentum = 0.0;
  std::uint64_t seed = 7;
  double tau = 20.0;
  double alpha = 0.5;          // soft-label EMA
  std::size_t d = 0;           // attention width; 0 resolves to min(d_v, 64)
  std::size_t mi_hidden = 64;
  int mi_neg_per_pos = 5;
  double mi_critic_lr = 0.0;  // 0 inherits learning_rate
  double mi_exp_clamp = 20.0;
  bool mi_detach_encoder_on_js = false;
  bool use_vta = true;
  bool use_omega = true;       // correction factor on the visual loss
  bool use_sem_loss = true;
  bool use_mi = true;
  bool use_label_updates = true;
  bool omega_grad = false;
  bool share_output_projection = true;
  std::string loss_reduction = "sum";  // sum | mean
  std::string inference_score = "cosine";  // cosine | dot
  double gamma = 0.7;

  void validate() const;
};

// Flat key = value lines, '#' comments; unknown keys are rejected.
TrainConfig parse_config_file(const std::string& path);
void apply_config_line(TrainConfig& cfg, const std::string& key, const std::string& value);
std::string config_to_string(const TrainConfig& cfg);

struct EpochMetrics {
  int epoch = 0;
  double l_vis = 0.0;
  double l_sem = 0.0;
  double l_ami = 0.0;
  double l_js = 0.0;
  double total = 0.0;
  double disamb_accuracy = 0.0;
  int clamp_hits = 0;
};

struct TrainerState {
  ParamStore align_params;
  ParamStore critic_params;
  OptimState align_opt;
  OptimState critic_opt;
  SoftLabelState soft;
  AttributeSelection selection;
  AlignmentConfig align_cfg;
  CriticConfig critic_cfg;
  int epoch = 0;
};

// Fresh parameters, uniform soft labels, frozen attribute selection.
TrainerState init_trainer(const PartialDataset& data, const SemanticSpace& semantic,
                          std::size_t num_seen, const TrainConfig& cfg);

EpochMetrics train_epoch(const PartialDataset& data, const SemanticSpace& semantic,
                         std::size_t num_seen, TrainerState& state, const TrainConfig& cfg);

using EpochObserver = std::function<void(const EpochMetrics&, const TrainerState&)>;

// Runs cfg.epochs epochs from state.epoch (supports checkpoint resume).
std::vector<EpochMetrics> run_training(const PartialDataset& data, const SemanticSpace& semantic,
                                       std::size_t num_seen, TrainerState& state,
                                       const TrainConfig& cfg,
                                       const EpochObserver& observer = nullptr);

// Versioned little-endian checkpoint; reload + continue reproduces the
// uninterrupted run bitwise.
void save_checkpoint(const TrainerState& state, const TrainConfig& cfg, const std::string& path);
TrainerState load_checkpoint(const std::string& path, TrainConfig& cfg_out);

// --- joint loss, exposed for gradient checking ------------------------------

// Everything the joint loss of one batch depends on besides the parameters.
// l_tilde and omega are held fixed (stop-gradient), as are the MI pairs.
struct BatchContext {
  std::vector<Tensor> features;  // D x d_v per instance
  Tensor v_pooled;               // N_b x d_v, GAP of features
  Tensor l_tilde;                // N_b x Q_seen
  Tensor omega;                  // N_b x Q_seen; zeros when the factor is off
  Tensor s_seen;                 // Q_seen x K
  Tensor attr_embed;             // K x d_w2v
  PairIndexBatch pairs;          // empty when MI is off
};

struct JointLossParts {
  Var total;
  double l_vis = 0.0;
  double l_sem = 0.0;
  double l_ami = 0.0;
};

JointLossParts build_joint_loss(Tape& tape, const BatchContext& ctx, const AlignmentVars& avars,
                                const CriticVars& cvars, const TrainConfig& cfg);

// Scalar value of the joint loss at the given parameters (for finite differences).
double joint_loss_value(const BatchContext& ctx, ParamStore& align, ParamStore& critic,
                        const AlignmentConfig& acfg, const TrainConfig& cfg);

}  // namespace dvsa
