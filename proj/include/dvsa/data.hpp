#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dvsa/semantic_space.hpp"
#include "dvsa/tensor.hpp"

namespace dvsa {

struct PartialDataset {
  std::vector<Tensor> features;        // per instance, D x d_v regional grid
  Tensor candidates;                   // N x Q binary indicator rows
  std::vector<std::size_t> true_labels;  // evaluation-only

  std::size_t size() const { return features.size(); }
  std::size_t num_classes() const { return candidates.n_cols; }

  void validate() const;
};

enum class NoiseProtocol { QBernoulli, RCount };

struct NoiseSpec {
  NoiseProtocol protocol = NoiseProtocol::QBernoulli;
  double q = 0.0;  // per-label inclusion probability (Q_BERNOULLI)
  int r = 0;       // false-positive count (R_COUNT)
  std::uint64_t seed = 0;
};

// Candidate indicator rows over Q classes. Noise labels are drawn only from
// the first num_seen classes; the true label is always included.
Tensor synthesize_candidates(const std::vector<std::size_t>& true_labels, std::size_t q_total,
                             const NoiseSpec& spec, std::size_t num_seen = 0);

// Last ceil(Q/5) classes are held out as unseen.
std::size_t default_unseen_count(std::size_t q_total);

struct SyntheticSpec {
  std::size_t q_total = 20;
  std::size_t k = 32;
  std::size_t d_v = 64;
  std::size_t d_regions = 9;
  std::size_t n_per_class = 30;      // training instances per seen class
  std::size_t n_test_per_class = 10;  // held-out instances per class, seen and unseen
  std::size_t d_w2v = 32;
  double margin = 0.25;  // minimum pairwise Hamming separation, fraction of K
  double noise = 0.35;   // regional feature noise, relative to center RMS
  double attr_peak = 0.5;  // how strongly each region leans toward one class attribute
  std::uint64_t seed = 7;
};

struct SyntheticData {
  PartialDataset train;        // seen classes; candidates start as true-label singletons
  PartialDataset test_seen;    // singleton candidates, evaluation only
  PartialDataset test_unseen;
  SemanticSpace semantic;
  std::size_t num_seen = 0;
};

// Separable-by-construction features: class attribute patterns with a margin,
// instances as noisy linear images of their class pattern.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Binary feature file: magic "DVSA", u32 version/N/D/d_v/Q, f64 LE features,
// packed candidate bits (byte-aligned rows), u32 true labels.
void save_dataset(const PartialDataset& data, const std::string& path);
PartialDataset load_features(const std::string& path);

}  // namespace dvsa
