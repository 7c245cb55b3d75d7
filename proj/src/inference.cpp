#include "dvsa/inference.hpp"

#include <algorithm>
#include <map>

namespace dvsa {

std::size_t predict(const Tensor& v, const Tensor& prototypes, const std::vector<char>& seen_mask,
                    double gamma, EvalMode mode, ScoreKind score) {
  if (seen_mask.size() != prototypes.n_rows)
    throw ShapeError("predict: seen mask length does not match prototype count");
  if (mode == EvalMode::CZSL) gamma = 0.0;
  bool found = false;
  std::size_t best = 0;
  double best_score = 0.0;
  for (std::size_t c = 0; c < prototypes.n_rows; ++c) {
    if (mode == EvalMode::CZSL && seen_mask[c]) continue;
    Tensor p(1, prototypes.n_cols);
    std::copy(prototypes.row(c), prototypes.row(c) + prototypes.n_cols, p.data.begin());
    double s = score == ScoreKind::Cosine ? cosine(v, p)
                                          : dot(v.data.data(), p.data.data(), v.size());
    if (seen_mask[c]) s -= gamma;
    if (!found || s > best_score) {
      found = true;
      best = c;
      best_score = s;
    }
  }
  if (!found) throw DegenerateInputError("predict: empty candidate class set");
  return best;
}

double per_class_top1(const std::vector<std::size_t>& predictions,
                      const std::vector<std::size_t>& truths,
                      const std::vector<std::size_t>& class_set) {
  if (predictions.size() != truths.size())
    throw ShapeError("per_class_top1: prediction/truth count mismatch");
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> tally;  // class -> (correct, total)
  for (std::size_t c : class_set) tally[c] = {0, 0};
  for (std::size_t i = 0; i < truths.size(); ++i) {
    auto it = tally.find(truths[i]);
    if (it == tally.end())
      throw DegenerateInputError("per_class_top1: truth label " + std::to_string(truths[i]) +
                                 " outside the class set");
    it->second.second += 1;
    if (predictions[i] == truths[i]) it->second.first += 1;
  }
  double sum = 0.0;
  std::size_t populated = 0;
  for (const auto& [cls, counts] : tally) {
    if (counts.second == 0) continue;
    sum += static_cast<double>(counts.first) / static_cast<double>(counts.second);
    ++populated;
  }
  if (populated == 0)
    throw DegenerateInputError("per_class_top1: no class in the set has test instances");
  return 100.0 * sum / static_cast<double>(populated);
}

double harmonic_mean(double s, double u) {
  if (s < 0.0 || u < 0.0) throw DegenerateInputError("harmonic_mean: negative input");
  if (s + u == 0.0) return 0.0;
  return 2.0 * s * u / (s + u);
}

std::vector<std::size_t> predict_all(const std::vector<Tensor>& features, const Tensor& prototypes,
                                     const std::vector<char>& seen_mask, double gamma,
                                     EvalMode mode, ScoreKind score) {
  std::vector<std::size_t> out;
  out.reserve(features.size());
  for (const Tensor& f : features)
    out.push_back(predict(gap(f), prototypes, seen_mask, gamma, mode, score));
  return out;
}

GzslReport evaluate(const PartialDataset& test_seen, const PartialDataset& test_unseen,
                    const Tensor& prototypes, const std::vector<char>& seen_mask, double gamma,
                    ScoreKind score) {
  std::vector<std::size_t> seen_classes, unseen_classes;
  for (std::size_t c = 0; c < seen_mask.size(); ++c)
    (seen_mask[c] ? seen_classes : unseen_classes).push_back(c);

  GzslReport report;
  report.gamma = gamma;
  auto seen_pred = predict_all(test_seen.features, prototypes, seen_mask, gamma, EvalMode::GZSL, score);
  auto unseen_pred =
      predict_all(test_unseen.features, prototypes, seen_mask, gamma, EvalMode::GZSL, score);
  report.seen_top1 = per_class_top1(seen_pred, test_seen.true_labels, seen_classes);
  report.unseen_top1 = per_class_top1(unseen_pred, test_unseen.true_labels, unseen_classes);
  report.harmonic = harmonic_mean(report.seen_top1, report.unseen_top1);
  auto czsl_pred =
      predict_all(test_unseen.features, prototypes, seen_mask, 0.0, EvalMode::CZSL, score);
  report.czsl_top1 = per_class_top1(czsl_pred, test_unseen.true_labels, unseen_classes);
  return report;
}

}  // namespace dvsa
