#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dvsa/inference.hpp"
#include "dvsa/rng.hpp"

using namespace dvsa;

namespace {

Tensor orthonormal_prototypes(std::size_t q) {
  Tensor p = Tensor::zeros(q, q);
  for (std::size_t i = 0; i < q; ++i) p.at(i, i) = 1.0;
  return p;
}

std::vector<char> seen_mask_first(std::size_t q, std::size_t num_seen) {
  std::vector<char> mask(q, 0);
  for (std::size_t i = 0; i < num_seen; ++i) mask[i] = 1;
  return mask;
}

}  // namespace

TEST_CASE("uncalibrated GZSL self-match on orthonormal prototypes") {
  Tensor protos = orthonormal_prototypes(4);
  auto mask = seen_mask_first(4, 2);
  for (std::size_t c = 0; c < 4; ++c) {
    Tensor v(1, 4, 0.0);
    v.at(0, c) = 3.0;  // scale must not matter under cosine
    CHECK(predict(v, protos, mask, 0.0, EvalMode::GZSL) == c);
  }
}

TEST_CASE("gamma flips seen winners to unseen exactly past the score gap") {
  // cos(v, p0) = 0.8 (seen), cos(v, p1) = 0.6 (unseen): flip when gamma > 0.2
  double c0 = 0.8, c1 = 0.6;
  Tensor v(1, 2, {c0, std::sqrt(1.0 - c0 * c0)});
  Tensor protos(2, 2, {1.0, 0.0, c0 * c1 + std::sqrt((1 - c0 * c0) * (1 - c1 * c1)), 0.0});
  // build p1 with cos(v, p1) = 0.6 directly instead: p1 = rotate v by acos(0.6)
  double theta = std::acos(c1);
  double phi = std::atan2(v.at(0, 1), v.at(0, 0));
  protos.at(1, 0) = std::cos(phi + theta);
  protos.at(1, 1) = std::sin(phi + theta);
  auto mask = seen_mask_first(2, 1);
  CHECK(predict(v, protos, mask, 0.0, EvalMode::GZSL) == 0);
  CHECK(predict(v, protos, mask, 0.19, EvalMode::GZSL) == 0);
  CHECK(predict(v, protos, mask, 0.21, EvalMode::GZSL) == 1);
}

TEST_CASE("CZSL ignores gamma and masks out seen classes") {
  Tensor protos = orthonormal_prototypes(3);
  auto mask = seen_mask_first(3, 2);
  Tensor v(1, 3, {10.0, 5.0, 0.1});  // best match is seen class 0
  CHECK(predict(v, protos, mask, 0.0, EvalMode::GZSL) == 0);
  // CZSL must pick among unseen only (class 2), regardless of gamma
  CHECK(predict(v, protos, mask, 0.0, EvalMode::CZSL) == 2);
  CHECK(predict(v, protos, mask, 5.0, EvalMode::CZSL) == 2);
}

TEST_CASE("ties break toward the smallest class index") {
  Tensor protos(3, 2, {1.0, 0.0, 1.0, 0.0, 0.5, 0.0});  // classes 0 and 1 tie exactly
  auto mask = seen_mask_first(3, 0);
  Tensor v(1, 2, {2.0, 0.0});
  CHECK(predict(v, protos, mask, 0.0, EvalMode::GZSL) == 0);
}

TEST_CASE("dot scoring ranks by magnitude where cosine does not") {
  Tensor protos(2, 2, {5.0, 0.0, 0.0, 1.0});
  auto mask = seen_mask_first(2, 0);
  Tensor v(1, 2, {1.0, 1.1});  // cosine prefers class 1; dot prefers class 0
  CHECK(predict(v, protos, mask, 0.0, EvalMode::GZSL, ScoreKind::Cosine) == 1);
  CHECK(predict(v, protos, mask, 0.0, EvalMode::GZSL, ScoreKind::Dot) == 0);
}

TEST_CASE("per-class top-1 averages class accuracies, not instance accuracy") {
  // class 0: 3 of 3 right, class 1: 0 of 1 -> per-class 50.0, instance-level 75.0
  std::vector<std::size_t> preds{0, 0, 0, 0};
  std::vector<std::size_t> truth{0, 0, 0, 1};
  CHECK(per_class_top1(preds, truth, {0, 1}) == doctest::Approx(50.0));
  // classes absent from the test set are excluded from the mean
  CHECK(per_class_top1(preds, truth, {0, 1, 7}) == doctest::Approx(50.0));
  CHECK_THROWS(per_class_top1(preds, truth, {0}));  // truth 1 outside the class set
}

TEST_CASE("harmonic mean: degenerate and published values") {
  CHECK(harmonic_mean(60.0, 0.0) == 0.0);
  CHECK(harmonic_mean(0.0, 0.0) == 0.0);
  CHECK(harmonic_mean(75.0, 73.0) == doctest::Approx(73.9865).epsilon(1e-5));
  CHECK(std::round(harmonic_mean(75.0, 73.0) * 10.0) / 10.0 == 74.0);  // reported at 1 decimal
  CHECK(harmonic_mean(50.0, 50.0) == doctest::Approx(50.0));
  CHECK(harmonic_mean(30.0, 70.0) <= 50.0);  // H <= arithmetic mean
  CHECK_THROWS(harmonic_mean(-1.0, 10.0));
}

TEST_CASE("gamma sweep: seen accuracy non-increasing, unseen non-decreasing") {
  auto rng = make_rng(31);
  std::size_t q = 10, num_seen = 7, d_v = 12;
  Tensor protos = uniform_tensor(q, d_v, -1, 1, rng);
  auto mask = seen_mask_first(q, num_seen);
  std::normal_distribution<double> jitter(0.0, 0.4);
  PartialDataset seen_set, unseen_set;
  auto fill = [&](PartialDataset& set, std::size_t lo, std::size_t hi) {
    for (std::size_t c = lo; c < hi; ++c)
      for (int i = 0; i < 8; ++i) {
        Tensor f(1, d_v);
        for (std::size_t j = 0; j < d_v; ++j) f.at(0, j) = protos.at(c, j) + jitter(rng);
        set.features.push_back(f);
        set.true_labels.push_back(c);
      }
    set.candidates = Tensor::zeros(set.true_labels.size(), q);
    for (std::size_t i = 0; i < set.true_labels.size(); ++i)
      set.candidates.at(i, set.true_labels[i]) = 1.0;
  };
  fill(seen_set, 0, num_seen);
  fill(unseen_set, num_seen, q);
  double prev_s = 1e300, prev_u = -1e300;
  for (double gamma : {0.0, 0.1, 0.2, 0.4, 0.8, 1.6}) {
    GzslReport r = evaluate(seen_set, unseen_set, protos, mask, gamma);
    CHECK(r.seen_top1 <= prev_s + 1e-9);
    CHECK(r.unseen_top1 >= prev_u - 1e-9);
    CHECK(r.harmonic <= std::max(r.seen_top1, r.unseen_top1) + 1e-9);
    prev_s = r.seen_top1;
    prev_u = r.unseen_top1;
  }
  // CZSL T1 must not depend on gamma
  GzslReport a = evaluate(seen_set, unseen_set, protos, mask, 0.0);
  GzslReport b = evaluate(seen_set, unseen_set, protos, mask, 1.0);
  CHECK(a.czsl_top1 == b.czsl_top1);
}

TEST_CASE("CZSL accuracy is invariant to the seen prototype rows") {
  auto rng = make_rng(32);
  std::size_t q = 6, num_seen = 4, d_v = 8;
  Tensor protos = uniform_tensor(q, d_v, -1, 1, rng);
  auto mask = seen_mask_first(q, num_seen);
  PartialDataset unseen_set;
  for (std::size_t c = num_seen; c < q; ++c)
    for (int i = 0; i < 5; ++i) {
      Tensor f(1, d_v);
      for (std::size_t j = 0; j < d_v; ++j) f.at(0, j) = protos.at(c, j) + 0.1 * double(i);
      unseen_set.features.push_back(f);
      unseen_set.true_labels.push_back(c);
    }
  unseen_set.candidates = Tensor::zeros(unseen_set.true_labels.size(), q);
  for (std::size_t i = 0; i < unseen_set.true_labels.size(); ++i)
    unseen_set.candidates.at(i, unseen_set.true_labels[i]) = 1.0;
  auto preds_a = predict_all(unseen_set.features, protos, mask, 0.0, EvalMode::CZSL);
  Tensor scrambled = protos;
  auto scramble_rng = make_rng(33);
  for (std::size_t c = 0; c < num_seen; ++c) {
    Tensor noise = uniform_tensor(1, d_v, -5, 5, scramble_rng);
    for (std::size_t j = 0; j < d_v; ++j) scrambled.at(c, j) = noise.at(0, j);
  }
  auto preds_b = predict_all(unseen_set.features, scrambled, mask, 0.0, EvalMode::CZSL);
  CHECK(preds_a == preds_b);
}

TEST_CASE("random prototypes score near chance on balanced labels") {
  auto rng = make_rng(34);
  std::size_t q = 5, d_v = 16;
  Tensor protos = uniform_tensor(q, d_v, -1, 1, rng);
  auto mask = seen_mask_first(q, 0);
  std::vector<std::size_t> preds, truth;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t c = 0; c < q; ++c)
    for (int i = 0; i < 400; ++i) {
      Tensor f(1, d_v);
      for (std::size_t j = 0; j < d_v; ++j) f.at(0, j) = normal(rng);  // label-independent
      preds.push_back(predict(f, protos, mask, 0.0, EvalMode::GZSL));
      truth.push_back(c);
    }
  std::vector<std::size_t> class_set;
  for (std::size_t c = 0; c < q; ++c) class_set.push_back(c);
  double acc = per_class_top1(preds, truth, class_set);
  CHECK(acc > 18.0);
  CHECK(acc < 22.0);
}

TEST_CASE("prediction is invariant to feature scale under cosine scoring") {
  auto rng = make_rng(35);
  Tensor protos = uniform_tensor(6, 9, -1, 1, rng);
  auto mask = seen_mask_first(6, 4);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor v = uniform_tensor(1, 9, -1, 1, rng);
    std::size_t base = predict(v, protos, mask, 0.3, EvalMode::GZSL);
    for (double s : {1e-3, 7.0, 1e4}) {
      Tensor scaled = v;
      for (double& x : scaled.data) x *= s;
      CHECK(predict(scaled, protos, mask, 0.3, EvalMode::GZSL) == base);
    }
  }
}
