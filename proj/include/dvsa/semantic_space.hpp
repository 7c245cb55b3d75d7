#pragma once

#include <string>
#include <vector>

#include "dvsa/tensor.hpp"

namespace dvsa {

// Class-attribute strengths plus per-attribute embedding vectors. Immutable
// after construction; validate() enforces the structural invariants.
struct SemanticSpace {
  Tensor S;           // Q x K, non-negative strengths
  Tensor attr_embed;  // K x d_w2v
  std::vector<std::string> class_names;

  std::size_t num_classes() const { return S.n_rows; }
  std::size_t num_attributes() const { return S.n_cols; }

  void validate() const;
};

struct AttributeSelection {
  Tensor entropies;                  // 1 x K, in nats
  double threshold = 0.0;            // median of the entropies
  std::vector<std::size_t> selected;  // sorted indices with H_k below threshold
};

// Shannon entropy of each column of S under column normalization. Returns 1 x K.
Tensor attribute_entropy(const SemanticSpace& space);

// Median-threshold selection; falls back to the lower-index half when every
// entropy ties the median (nothing is strictly below it).
AttributeSelection select_attributes(const Tensor& entropies);

// Text format: header "Q K d_w2v", Q rows of K floats, K rows of d_w2v floats.
SemanticSpace load_semantic_space(const std::string& path);
void save_semantic_space(const SemanticSpace& space, const std::string& path);

}  // namespace dvsa
