#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dvsa/data.hpp"
#include "dvsa/inference.hpp"
#include "dvsa/rng.hpp"
#include "dvsa/semantic_space.hpp"
#include "dvsa/trainer.hpp"

namespace fs = std::filesystem;
using namespace dvsa;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumeric = 2;

// Numeric aborts are the only exit-2 path; everything else is a config error.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool is_numeric_abort(const std::exception& e) {
  return std::string(e.what()).find("non-finite") != std::string::npos;
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const std::vector<std::string>& extra, const TrainConfig& cfg) {
  std::ofstream out(out_dir / "manifest.txt");
  if (!out) throw std::runtime_error("cannot write manifest under " + out_dir.string());
  out << "command = " << command << "\n";
  for (const auto& line : extra) out << line << "\n";
  out << "# resolved training config\n" << config_to_string(cfg);
}

struct DatasetBundle {
  PartialDataset train;
  PartialDataset test_seen;
  PartialDataset test_unseen;
  SemanticSpace semantic;
  std::size_t num_seen = 0;
};

DatasetBundle load_bundle(const fs::path& dir) {
  DatasetBundle b;
  b.train = load_features((dir / "train.bin").string());
  b.test_seen = load_features((dir / "test_seen.bin").string());
  b.test_unseen = load_features((dir / "test_unseen.bin").string());
  b.semantic = load_semantic_space((dir / "semantic.txt").string());
  b.num_seen = b.semantic.num_classes() - default_unseen_count(b.semantic.num_classes());
  b.train.validate();
  b.test_seen.validate();
  b.test_unseen.validate();
  b.semantic.validate();
  return b;
}

std::vector<char> seen_mask(std::size_t q, std::size_t num_seen) {
  std::vector<char> mask(q, 0);
  for (std::size_t c = 0; c < num_seen; ++c) mask[c] = 1;
  return mask;
}

Tensor all_prototypes(const TrainerState& state, const SemanticSpace& semantic) {
  return matmul_plain(semantic.S, state.align_params.param("align.w_p"));
}

GzslReport evaluate_state(const TrainerState& state, const DatasetBundle& data,
                          const TrainConfig& cfg, double gamma) {
  ScoreKind score = cfg.inference_score == "dot" ? ScoreKind::Dot : ScoreKind::Cosine;
  Tensor protos = all_prototypes(state, data.semantic);
  auto mask = seen_mask(data.semantic.num_classes(), data.num_seen);
  return evaluate(data.test_seen, data.test_unseen, protos, mask, gamma, score);
}

void write_history(const fs::path& out_dir, const std::vector<EpochMetrics>& history) {
  std::ofstream out(out_dir / "history.csv");
  out.precision(17);
  out << "epoch,l_vis,l_sem,l_ami,l_js,total,disamb_accuracy,clamp_hits\n";
  for (const auto& m : history)
    out << m.epoch << ',' << m.l_vis << ',' << m.l_sem << ',' << m.l_ami << ',' << m.l_js << ','
        << m.total << ',' << m.disamb_accuracy << ',' << m.clamp_hits << "\n";
}

void append_soft_labels(std::ofstream& out, const TrainerState& state) {
  const Tensor& l = state.soft.l_tilde;
  for (std::size_t i = 0; i < l.n_rows; ++i)
    for (std::size_t c = 0; c < l.n_cols; ++c)
      if (l.at(i, c) != 0.0)
        out << state.soft.epoch << ',' << i << ',' << c << ',' << l.at(i, c) << "\n";
}

void write_matrix(const fs::path& path, const Tensor& m) {
  std::ofstream out(path);
  out.precision(17);
  for (std::size_t r = 0; r < m.n_rows; ++r) {
    for (std::size_t c = 0; c < m.n_cols; ++c) out << (c ? " " : "") << m.at(r, c);
    out << "\n";
  }
}

void dump_attention(const fs::path& dir, const TrainerState& state, const DatasetBundle& data,
                    std::size_t limit) {
  fs::create_directories(dir);
  // const_cast-free copy: attach wants a mutable store
  TrainerState& s = const_cast<TrainerState&>(state);
  std::size_t n = std::min(limit, data.train.size());
  for (std::size_t i = 0; i < n; ++i) {
    Tape tape;
    AlignmentVars avars = attach_alignment(tape, s.align_params, s.align_cfg);
    Var attr = tape.leaf(data.semantic.attr_embed);
    Var f = tape.leaf(data.train.features[i]);
    auto [a_hat, vta_attn] = vta_forward(attr, f, avars);
    auto [v_hat, atv_attn] = atv_forward(f, a_hat, avars);
    write_matrix(dir / ("instance_" + std::to_string(i) + "_vta.txt"), vta_attn.value());
    write_matrix(dir / ("instance_" + std::to_string(i) + "_atv.txt"), atv_attn.value());
  }
}

void write_metrics_header(std::ofstream& out) {
  out << "gamma,seen_top1,unseen_top1,harmonic,czsl_top1,seen_prediction_count\n";
}

std::size_t count_seen_predictions(const TrainerState& state, const DatasetBundle& data,
                                   const TrainConfig& cfg, double gamma) {
  ScoreKind score = cfg.inference_score == "dot" ? ScoreKind::Dot : ScoreKind::Cosine;
  Tensor protos = all_prototypes(const_cast<TrainerState&>(state), data.semantic);
  auto mask = seen_mask(data.semantic.num_classes(), data.num_seen);
  std::size_t count = 0;
  for (const PartialDataset* set : {&data.test_seen, &data.test_unseen}) {
    std::vector<Tensor> pooled;
    for (const auto& f : set->features) pooled.push_back(gap(f));
    for (std::size_t p : predict_all(pooled, protos, mask, gamma, EvalMode::GZSL, score))
      if (mask[p]) ++count;
  }
  return count;
}

void write_metrics_row(std::ofstream& out, const GzslReport& r, std::size_t seen_count) {
  out << r.gamma << ',' << r.seen_top1 << ',' << r.unseen_top1 << ',' << r.harmonic << ','
      << r.czsl_top1 << ',' << seen_count << "\n";
}

// --- commands ----------------------------------------------------------------

int cmd_gen_data(const fs::path& out_dir, SyntheticSpec spec, const NoiseSpec& noise,
                 bool use_r_protocol) {
  fs::create_directories(out_dir);
  SyntheticData data = generate_synthetic(spec);
  NoiseSpec resolved = noise;
  resolved.protocol = use_r_protocol ? NoiseProtocol::RCount : NoiseProtocol::QBernoulli;
  data.train.candidates =
      synthesize_candidates(data.train.true_labels, spec.q_total, resolved, data.num_seen);
  save_dataset(data.train, (out_dir / "train.bin").string());
  save_dataset(data.test_seen, (out_dir / "test_seen.bin").string());
  save_dataset(data.test_unseen, (out_dir / "test_unseen.bin").string());
  save_semantic_space(data.semantic, (out_dir / "semantic.txt").string());
  std::ofstream manifest(out_dir / "manifest.txt");
  manifest << "command = gen-data\n"
           << "classes = " << spec.q_total << "\nattributes = " << spec.k
           << "\nd_v = " << spec.d_v << "\nregions = " << spec.d_regions
           << "\nper_class = " << spec.n_per_class << "\ntest_per_class = " << spec.n_test_per_class
           << "\nd_w2v = " << spec.d_w2v << "\nmargin = " << spec.margin
           << "\nfeature_noise = " << spec.noise << "\nattr_peak = " << spec.attr_peak << "\nseed = " << spec.seed << "\nnum_seen = "
           << data.num_seen << "\nnoise_protocol = " << (use_r_protocol ? "r" : "q")
           << "\nnoise_q = " << resolved.q << "\nnoise_r = " << resolved.r
           << "\nnoise_seed = " << resolved.seed << "\n";
  std::cout << "wrote " << data.train.size() << " train / " << data.test_seen.size()
            << " seen-test / " << data.test_unseen.size() << " unseen-test instances to "
            << out_dir.string() << "\n";
  return kExitOk;
}

int cmd_train(const std::string& config_path, const fs::path& data_dir, const fs::path& out_dir,
              const std::string& dump_soft, const std::string& dump_attn, std::uint64_t seed_override,
              bool has_seed) {
  TrainConfig cfg = parse_config_file(config_path);
  if (has_seed) cfg.seed = seed_override;
  DatasetBundle data = load_bundle(data_dir);
  fs::create_directories(out_dir);
  write_manifest(out_dir, "train",
                 {"config_path = " + config_path, "data = " + data_dir.string(),
                  "num_seen = " + std::to_string(data.num_seen)},
                 cfg);

  TrainerState state = init_trainer(data.train, data.semantic, data.num_seen, cfg);
  std::ofstream soft_out;
  if (!dump_soft.empty()) {
    soft_out.open(dump_soft);
    if (!soft_out) throw std::runtime_error("cannot write soft-label dump: " + dump_soft);
    soft_out.precision(17);
    soft_out << "epoch,instance,class,weight\n";
  }
  EpochObserver observer = [&](const EpochMetrics& m, const TrainerState& s) {
    std::cout << "epoch " << m.epoch << " total " << m.total << " disamb " << m.disamb_accuracy
              << "\n";
    if (soft_out.is_open()) append_soft_labels(soft_out, s);
  };
  auto history = run_training(data.train, data.semantic, data.num_seen, state, cfg, observer);
  write_history(out_dir, history);
  save_checkpoint(state, cfg, (out_dir / "checkpoint.bin").string());
  if (!dump_attn.empty()) dump_attention(dump_attn, state, data, 16);

  GzslReport report = evaluate_state(state, data, cfg, cfg.gamma);
  std::ofstream metrics(out_dir / "metrics.csv");
  metrics.precision(17);
  write_metrics_header(metrics);
  write_metrics_row(metrics, report, count_seen_predictions(state, data, cfg, cfg.gamma));
  std::cout << "final: T1 " << report.czsl_top1 << " U " << report.unseen_top1 << " S "
            << report.seen_top1 << " H " << report.harmonic << "\n";
  return kExitOk;
}

std::vector<double> default_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(0.1 * i);
  return grid;
}

int cmd_eval(const std::string& ckpt_path, const fs::path& data_dir, const fs::path& out_dir,
             bool calibrate, const std::vector<double>& grid) {
  TrainConfig cfg;
  TrainerState state = load_checkpoint(ckpt_path, cfg);
  DatasetBundle data = load_bundle(data_dir);
  fs::create_directories(out_dir);
  write_manifest(out_dir, calibrate ? "eval --calibrate" : "eval",
                 {"checkpoint = " + ckpt_path, "data = " + data_dir.string()}, cfg);
  std::ofstream metrics(out_dir / "metrics.csv");
  metrics.precision(17);
  write_metrics_header(metrics);
  std::vector<double> gammas = calibrate ? grid : std::vector<double>{cfg.gamma};
  double best_h = -1.0, best_gamma = 0.0;
  for (double gamma : gammas) {
    GzslReport r = evaluate_state(state, data, cfg, gamma);
    write_metrics_row(metrics, r, count_seen_predictions(state, data, cfg, gamma));
    std::cout << "gamma " << gamma << ": T1 " << r.czsl_top1 << " U " << r.unseen_top1 << " S "
              << r.seen_top1 << " H " << r.harmonic << "\n";
    if (r.harmonic > best_h) {
      best_h = r.harmonic;
      best_gamma = gamma;
    }
  }
  if (calibrate) std::cout << "best gamma " << best_gamma << " with H " << best_h << "\n";
  return kExitOk;
}

int cmd_sweep_gamma(const std::string& ckpt_path, const fs::path& data_dir, const fs::path& out_dir,
                    const std::vector<double>& grid) {
  return cmd_eval(ckpt_path, data_dir, out_dir, /*calibrate=*/true, grid);
}

int cmd_ablate(const std::string& config_path, const fs::path& data_dir, const fs::path& out_dir) {
  TrainConfig base = parse_config_file(config_path);
  DatasetBundle data = load_bundle(data_dir);
  fs::create_directories(out_dir);
  write_manifest(out_dir, "ablate",
                 {"config_path = " + config_path, "data = " + data_dir.string()}, base);

  // toggle rows ordered as in the component study: (vta, label updates, sem, omega, mi)
  struct Row {
    bool vta, labels, sem, omega, mi;
  };
  const Row rows[] = {
      {false, false, false, false, false}, {true, false, false, false, false},
      {true, true, false, false, false},   {true, true, true, false, false},
      {true, true, true, false, true},     {true, true, true, true, false},
      {true, true, true, true, true},
  };
  std::ofstream metrics(out_dir / "metrics.csv");
  metrics.precision(17);
  metrics << "row,vta,label_updates,sem,omega,mi,czsl_top1,unseen_top1,seen_top1,harmonic\n";
  int row_index = 1;
  for (const Row& row : rows) {
    TrainConfig cfg = base;
    cfg.use_vta = row.vta;
    cfg.use_label_updates = row.labels;
    cfg.use_sem_loss = row.sem;
    cfg.use_omega = row.omega;
    cfg.use_mi = row.mi;
    TrainerState state = init_trainer(data.train, data.semantic, data.num_seen, cfg);
    run_training(data.train, data.semantic, data.num_seen, state, cfg);
    GzslReport r = evaluate_state(state, data, cfg, cfg.gamma);
    metrics << row_index << ',' << row.vta << ',' << row.labels << ',' << row.sem << ','
            << row.omega << ',' << row.mi << ',' << r.czsl_top1 << ',' << r.unseen_top1 << ','
            << r.seen_top1 << ',' << r.harmonic << "\n";
    std::cout << "row " << row_index << ": T1 " << r.czsl_top1 << " U " << r.unseen_top1 << " S "
              << r.seen_top1 << " H " << r.harmonic << "\n";
    ++row_index;
  }
  return kExitOk;
}

int cmd_grad_check(std::uint64_t seed) {
  // micro joint-loss problem mirroring the gradient-fidelity acceptance setup
  std::size_t q_seen = 5, k = 8, d_w2v = 6, d_v = 16, d_regions = 4, batch = 4;
  AlignmentConfig acfg;
  acfg.d_w2v = d_w2v;
  acfg.d_v = d_v;
  acfg.d = 8;
  acfg.num_attributes = k;
  CriticConfig ccfg;
  ccfg.input_dim = 2 * d_v;
  ccfg.hidden = 8;
  ParamStore align, critic;
  init_alignment_params(align, acfg, seed);
  init_critic_params(critic, ccfg, seed + 1);

  BatchContext ctx;
  auto rng = make_rng(seed, 99);
  for (std::size_t i = 0; i < batch; ++i)
    ctx.features.push_back(uniform_tensor(d_regions, d_v, -1, 1, rng));
  ctx.v_pooled = Tensor(batch, d_v);
  for (std::size_t i = 0; i < batch; ++i) {
    Tensor g = gap(ctx.features[i]);
    std::copy(g.data.begin(), g.data.end(), ctx.v_pooled.row(i));
  }
  ctx.l_tilde = Tensor(batch, q_seen, 1.0 / double(q_seen));
  ctx.omega = uniform_tensor(batch, q_seen, 0.05, 0.5, rng);
  ctx.s_seen = Tensor(q_seen, k, 0.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (std::size_t r = 0; r < q_seen; ++r)
    for (std::size_t c = 0; c < k; ++c) ctx.s_seen.at(r, c) = coin(rng) < 0.5 ? 0.0 : 1.0;
  for (std::size_t c = 0; c < k; ++c) ctx.s_seen.at(c % q_seen, c) = 1.0;
  ctx.attr_embed = uniform_tensor(k, d_w2v, -1, 1, rng);
  AttributeSelection sel;
  sel.entropies = Tensor(1, k, 0.0);
  sel.selected = {0, 2, 5};
  ctx.pairs = build_pair_indices(batch, k, sel, rng, 3);

  TrainConfig cfg;
  cfg.tau = 5.0;
  {
    Tape tape;
    auto avars = attach_alignment(tape, align, acfg);
    auto cvars = attach_critic(tape, critic);
    auto parts = build_joint_loss(tape, ctx, avars, cvars, cfg);
    tape.backward(parts.total);
    align.zero_grads();
    critic.zero_grads();
    harvest_alignment_grads(align, avars, acfg);
    harvest_critic_grads(critic, cvars);
  }
  auto align_loss = [&](ParamStore& st) { return joint_loss_value(ctx, st, critic, acfg, cfg); };
  auto critic_loss = [&](ParamStore& st) { return joint_loss_value(ctx, align, st, acfg, cfg); };
  auto ra = grad_check(align_loss, align, 1e-6, 1e-4);
  auto rc = grad_check(critic_loss, critic, 1e-6, 1e-4);
  std::cout << "alignment entries checked: " << ra.checked << ", worst rel err " << ra.max_rel_err
            << (ra.passed ? " (pass)" : " (FAIL)") << "\n";
  std::cout << "critic entries checked: " << rc.checked << ", worst rel err " << rc.max_rel_err
            << (rc.passed ? " (pass)" : " (FAIL)") << "\n";
  if (!ra.passed || !rc.passed) {
    std::cerr << "grad-check failed: non-finite or mismatched gradients\n";
    return kExitNumeric;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynamic visual-semantic alignment trainer"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic separable dataset");
  SyntheticSpec spec;
  NoiseSpec noise;
  noise.q = 0.1;
  std::string gen_out;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", spec.seed, "generator seed");
  gen->add_option("--classes", spec.q_total, "total classes Q");
  gen->add_option("--attributes", spec.k, "attributes K");
  gen->add_option("--dv", spec.d_v, "visual feature width");
  gen->add_option("--regions", spec.d_regions, "regions per instance");
  gen->add_option("--per-class", spec.n_per_class, "train instances per seen class");
  gen->add_option("--test-per-class", spec.n_test_per_class, "test instances per class");
  gen->add_option("--dw2v", spec.d_w2v, "attribute embedding width");
  gen->add_option("--margin", spec.margin, "min pairwise Hamming separation fraction");
  gen->add_option("--feature-noise", spec.noise, "regional noise relative to center RMS");
  gen->add_option("--attr-peak", spec.attr_peak, "per-region attribute peaking in [0, 1]");
  auto* qopt = gen->add_option("--noise-q", noise.q, "per-label candidate inclusion probability");
  auto* ropt = gen->add_option("--noise-r", noise.r, "false-positive count per instance");
  gen->add_option("--noise-seed", noise.seed, "candidate noise seed");
  qopt->excludes(ropt);

  // train
  auto* train = app.add_subcommand("train", "train on a generated dataset");
  std::string train_cfg, train_data, train_out, dump_soft, dump_attn;
  std::uint64_t seed_override = 0;
  train->add_option("--config", train_cfg, "training config file")->required();
  train->add_option("--data", train_data, "dataset directory from gen-data")->required();
  train->add_option("--out", train_out, "output directory")->required();
  auto* seed_opt = train->add_option("--seed", seed_override, "override the config seed");
  train->add_option("--dump-soft-labels", dump_soft, "per-epoch soft-label CSV path");
  train->add_option("--dump-attention", dump_attn, "directory for attention map text matrices");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_out;
  bool calibrate = false;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
  eval_cmd->add_option("--out", eval_out, "output directory")->required();
  eval_cmd->add_flag("--calibrate", calibrate, "sweep gamma and report the H-maximizing value");

  // sweep-gamma
  auto* sweep = app.add_subcommand("sweep-gamma", "evaluate across a gamma grid");
  std::string sweep_ckpt, sweep_data, sweep_out, sweep_grid;
  sweep->add_option("--checkpoint", sweep_ckpt, "checkpoint file")->required();
  sweep->add_option("--data", sweep_data, "dataset directory")->required();
  sweep->add_option("--out", sweep_out, "output directory")->required();
  sweep->add_option("--grid", sweep_grid, "comma-separated gamma values (default 0,0.1,...,1)");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "run the component toggle table");
  std::string abl_cfg, abl_data, abl_out;
  ablate->add_option("--config", abl_cfg, "training config file")->required();
  ablate->add_option("--data", abl_data, "dataset directory")->required();
  ablate->add_option("--out", abl_out, "output directory")->required();

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "finite-difference check of the joint loss");
  std::uint64_t gc_seed = 7;
  gc->add_option("--seed", gc_seed, "parameter and batch seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(gen_out, spec, noise, ropt->count() > 0);
    if (*train)
      return cmd_train(train_cfg, train_data, train_out, dump_soft, dump_attn, seed_override,
                       seed_opt->count() > 0);
    if (*eval_cmd) return cmd_eval(eval_ckpt, eval_data, eval_out, calibrate, default_grid());
    if (*sweep) {
      std::vector<double> grid;
      if (sweep_grid.empty()) {
        grid = default_grid();
      } else {
        std::stringstream ss(sweep_grid);
        std::string tok;
        while (std::getline(ss, tok, ',')) grid.push_back(std::stod(tok));
        if (grid.empty()) throw std::runtime_error("--grid parsed to an empty gamma list");
      }
      return cmd_sweep_gamma(sweep_ckpt, sweep_data, sweep_out, grid);
    }
    if (*ablate) return cmd_ablate(abl_cfg, abl_data, abl_out);
    if (*gc) return cmd_grad_check(gc_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_numeric_abort(e) ? kExitNumeric : kExitConfig;
  }
  return kExitConfig;
}
