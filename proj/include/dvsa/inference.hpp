#pragma once

#include <vector>

#include "dvsa/data.hpp"
#include "dvsa/tensor.hpp"

namespace dvsa {

enum class EvalMode { CZSL, GZSL };
enum class ScoreKind { Cosine, Dot };

struct GzslReport {
  double seen_top1 = 0.0;    // S, percent
  double unseen_top1 = 0.0;  // U, percent
  double harmonic = 0.0;     // H
  double czsl_top1 = 0.0;    // T1, unseen-only protocol
  double gamma = 0.0;
};

// Calibrated-stacking nearest-prototype prediction for one pooled feature row.
// CZSL restricts the argmax to unseen classes and forces gamma = 0; ties break
// toward the smallest class index.
std::size_t predict(const Tensor& v, const Tensor& prototypes, const std::vector<char>& seen_mask,
                    double gamma, EvalMode mode, ScoreKind score = ScoreKind::Cosine);

// Class-wise mean of per-class accuracy, in percent; classes with no test
// instances are excluded.
double per_class_top1(const std::vector<std::size_t>& predictions,
                      const std::vector<std::size_t>& truths,
                      const std::vector<std::size_t>& class_set);

double harmonic_mean(double s, double u);

// v_pooled: one GAP'd feature row per test instance.
std::vector<std::size_t> predict_all(const std::vector<Tensor>& features, const Tensor& prototypes,
                                     const std::vector<char>& seen_mask, double gamma,
                                     EvalMode mode, ScoreKind score = ScoreKind::Cosine);

GzslReport evaluate(const PartialDataset& test_seen, const PartialDataset& test_unseen,
                    const Tensor& prototypes, const std::vector<char>& seen_mask, double gamma,
                    ScoreKind score = ScoreKind::Cosine);

}  // namespace dvsa
