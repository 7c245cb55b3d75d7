#include "dvsa/data.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "dvsa/rng.hpp"

namespace dvsa {

void PartialDataset::validate() const {
  if (features.size() != candidates.n_rows || features.size() != true_labels.size())
    throw ShapeError("PartialDataset: inconsistent instance counts");
  std::size_t q = candidates.n_cols;
  for (std::size_t i = 0; i < size(); ++i) {
    if (true_labels[i] >= q)
      throw DegenerateInputError("PartialDataset: true label out of range at instance " +
                                 std::to_string(i));
    bool any = false;
    for (std::size_t j = 0; j < q; ++j) {
      double v = candidates.at(i, j);
      if (v != 0.0 && v != 1.0)
        throw DegenerateInputError("PartialDataset: non-binary candidate entry at instance " +
                                   std::to_string(i));
      any = any || v != 0.0;
    }
    if (!any)
      throw DegenerateInputError("PartialDataset: empty candidate set at instance " +
                                 std::to_string(i));
    if (candidates.at(i, true_labels[i]) == 0.0)
      throw DegenerateInputError("PartialDataset: candidate row missing the true label at instance " +
                                 std::to_string(i));
    if (!features[i].all_finite())
      throw DegenerateInputError("PartialDataset: non-finite feature at instance " +
                                 std::to_string(i));
  }
}

std::size_t default_unseen_count(std::size_t q_total) { return (q_total + 4) / 5; }

Tensor synthesize_candidates(const std::vector<std::size_t>& true_labels, std::size_t q_total,
                             const NoiseSpec& spec, std::size_t num_seen) {
  if (q_total < 2) throw DegenerateInputError("synthesize_candidates: need Q >= 2");
  if (num_seen == 0) num_seen = q_total;
  if (spec.protocol == NoiseProtocol::RCount &&
      static_cast<std::size_t>(spec.r) > num_seen - 1)
    throw std::invalid_argument("synthesize_candidates: r = " + std::to_string(spec.r) +
                             " exceeds the " + std::to_string(num_seen - 1) +
                             " available false labels");
  auto rng = make_rng(spec.seed, /*stream=*/3);
  Tensor out = Tensor::zeros(true_labels.size(), q_total);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    std::size_t truth = true_labels[i];
    if (truth >= num_seen)
      throw DegenerateInputError("synthesize_candidates: true label " + std::to_string(truth) +
                                 " is not a seen class");
    out.at(i, truth) = 1.0;
    if (spec.protocol == NoiseProtocol::QBernoulli) {
      for (std::size_t c = 0; c < num_seen; ++c)
        if (c != truth && coin(rng) < spec.q) out.at(i, c) = 1.0;
    } else {
      // exactly r distinct false labels, uniform without replacement
      std::vector<std::size_t> pool;
      pool.reserve(num_seen - 1);
      for (std::size_t c = 0; c < num_seen; ++c)
        if (c != truth) pool.push_back(c);
      for (int n = 0; n < spec.r; ++n) {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        std::size_t at = pick(rng);
        out.at(i, pool[at]) = 1.0;
        pool.erase(pool.begin() + at);
      }
    }
  }
  return out;
}

namespace {

std::size_t hamming(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t h = 0;
  for (std::size_t i = 0; i < a.size(); ++i) h += a[i] != b[i];
  return h;
}

Tensor singleton_candidates(const std::vector<std::size_t>& labels, std::size_t q) {
  Tensor out = Tensor::zeros(labels.size(), q);
  for (std::size_t i = 0; i < labels.size(); ++i) out.at(i, labels[i]) = 1.0;
  return out;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.q_total < 4)
    throw DegenerateInputError("generate_synthetic: need Q >= 4 for a seen/unseen split");
  if (spec.margin <= 0.0) throw DegenerateInputError("generate_synthetic: margin must be > 0");
  auto rng = make_rng(spec.seed, /*stream=*/4);
  std::uniform_int_distribution<int> bit(0, 1);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::size_t min_sep = static_cast<std::size_t>(std::ceil(spec.margin * spec.k));
  std::vector<std::vector<int>> patterns;
  const int max_retries = 2000;
  for (std::size_t c = 0; c < spec.q_total; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < max_retries && !placed; ++attempt) {
      std::vector<int> candidate(spec.k);
      for (int& v : candidate) v = bit(rng);
      placed = true;
      for (const auto& prev : patterns)
        if (hamming(candidate, prev) < min_sep) {
          placed = false;
          break;
        }
      if (placed) patterns.push_back(std::move(candidate));
    }
    if (!placed)
      throw std::runtime_error(
          "generate_synthetic: could not place class " + std::to_string(c) +
          " with the requested separation; reduce Q or increase K");
  }
  // every attribute must occur in at least one class
  for (std::size_t k = 0; k < spec.k; ++k) {
    bool any = false;
    for (const auto& p : patterns) any = any || p[k] == 1;
    if (!any) {
      std::uniform_int_distribution<std::size_t> pick(0, spec.q_total - 1);
      patterns[pick(rng)][k] = 1;
    }
  }

  SyntheticData out;
  out.num_seen = spec.q_total - default_unseen_count(spec.q_total);
  out.semantic.S = Tensor(spec.q_total, spec.k);
  for (std::size_t c = 0; c < spec.q_total; ++c)
    for (std::size_t k = 0; k < spec.k; ++k) out.semantic.S.at(c, k) = patterns[c][k];
  out.semantic.attr_embed = Tensor(spec.k, spec.d_w2v);
  for (std::size_t k = 0; k < spec.k; ++k) {
    double* row = out.semantic.attr_embed.row(k);
    double norm = 0.0;
    for (std::size_t j = 0; j < spec.d_w2v; ++j) {
      row[j] = gauss(rng);
      norm += row[j] * row[j];
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < spec.d_w2v; ++j) row[j] /= norm;
  }
  for (std::size_t c = 0; c < spec.q_total; ++c)
    out.semantic.class_names.push_back("class_" + std::to_string(c));
  out.semantic.validate();

  // linear semantics -> features map; guarantees a consistent embedding exists
  Tensor attr_to_visual(spec.k, spec.d_v);
  double map_scale = 1.0 / std::sqrt(static_cast<double>(spec.k));
  for (double& v : attr_to_visual.data) v = map_scale * gauss(rng);
  Tensor centers = matmul_plain(out.semantic.S, attr_to_visual);  // Q x d_v
  double rms = 0.0;
  for (double v : centers.data) rms += v * v;
  rms = std::sqrt(rms / centers.size());
  double sigma = spec.noise * rms;

  // per-class attribute lists for the attribute-peaked regions
  std::vector<std::vector<std::size_t>> class_attrs(spec.q_total);
  for (std::size_t c = 0; c < spec.q_total; ++c)
    for (std::size_t k = 0; k < spec.k; ++k)
      if (patterns[c][k] == 1) class_attrs[c].push_back(k);

  // Each region leans toward one of the class's attributes; averaged over
  // regions the expectation is exactly the linear center, so GAP features stay
  // noisy linear images of the class pattern.
  auto make_instance = [&](std::size_t cls) {
    Tensor f(spec.d_regions, spec.d_v);
    const auto& attrs = class_attrs[cls];
    std::uniform_int_distribution<std::size_t> pick(0, attrs.size() - 1);
    for (std::size_t r = 0; r < spec.d_regions; ++r) {
      std::size_t k = attrs[pick(rng)];
      double scale = static_cast<double>(attrs.size());
      for (std::size_t j = 0; j < spec.d_v; ++j) {
        double peaked = (1.0 - spec.attr_peak) * centers.at(cls, j) +
                        spec.attr_peak * scale * attr_to_visual.at(k, j);
        f.at(r, j) = peaked + sigma * gauss(rng);
      }
    }
    return f;
  };

  for (std::size_t c = 0; c < out.num_seen; ++c)
    for (std::size_t n = 0; n < spec.n_per_class; ++n) {
      out.train.features.push_back(make_instance(c));
      out.train.true_labels.push_back(c);
    }
  for (std::size_t c = 0; c < spec.q_total; ++c) {
    PartialDataset& dst = c < out.num_seen ? out.test_seen : out.test_unseen;
    for (std::size_t n = 0; n < spec.n_test_per_class; ++n) {
      dst.features.push_back(make_instance(c));
      dst.true_labels.push_back(c);
    }
  }
  out.train.candidates = singleton_candidates(out.train.true_labels, spec.q_total);
  out.test_seen.candidates = singleton_candidates(out.test_seen.true_labels, spec.q_total);
  out.test_unseen.candidates = singleton_candidates(out.test_unseen.true_labels, spec.q_total);
  out.train.validate();
  out.test_seen.validate();
  out.test_unseen.validate();
  return out;
}

// --- binary feature file ----------------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'V', 'S', 'A'};
constexpr std::uint32_t kVersion = 1;

[[noreturn]] void io_fail(const std::string& path, std::size_t offset, const std::string& what) {
  throw std::runtime_error(path + " @ byte " + std::to_string(offset) + ": " + what);
}

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
  std::uint32_t v = 0;
  std::size_t offset = static_cast<std::size_t>(in.tellg());
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) io_fail(path, offset, "truncated u32");
  return v;
}

}  // namespace

void save_dataset(const PartialDataset& data, const std::string& path) {
  data.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  out.write(kMagic, 4);
  std::size_t d_regions = data.features.empty() ? 0 : data.features.front().n_rows;
  std::size_t d_v = data.features.empty() ? 0 : data.features.front().n_cols;
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(data.size()));
  write_u32(out, static_cast<std::uint32_t>(d_regions));
  write_u32(out, static_cast<std::uint32_t>(d_v));
  write_u32(out, static_cast<std::uint32_t>(data.num_classes()));
  for (const Tensor& f : data.features) {
    if (f.n_rows != d_regions || f.n_cols != d_v)
      throw ShapeError("save_dataset: ragged feature grids");
    out.write(reinterpret_cast<const char*>(f.data.data()),
              static_cast<std::streamsize>(f.size() * sizeof(double)));
  }
  std::size_t row_bytes = (data.num_classes() + 7) / 8;
  std::vector<unsigned char> row(row_bytes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::fill(row.begin(), row.end(), 0);
    for (std::size_t j = 0; j < data.num_classes(); ++j)
      if (data.candidates.at(i, j) != 0.0) row[j / 8] |= static_cast<unsigned char>(1u << (j % 8));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row_bytes));
  }
  for (std::size_t label : data.true_labels) write_u32(out, static_cast<std::uint32_t>(label));
  if (!out) throw std::runtime_error("write failed: " + path);
}

PartialDataset load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  char magic[4];
  if (!in.read(magic, 4)) io_fail(path, 0, "truncated magic");
  if (std::memcmp(magic, kMagic, 4) != 0) io_fail(path, 0, "bad magic, not a DVSA feature file");
  std::uint32_t version = read_u32(in, path);
  if (version != kVersion)
    io_fail(path, 4, "unsupported version " + std::to_string(version));
  std::uint32_t n = read_u32(in, path);
  std::uint32_t d_regions = read_u32(in, path);
  std::uint32_t d_v = read_u32(in, path);
  std::uint32_t q = read_u32(in, path);
  PartialDataset data;
  data.features.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    Tensor f(d_regions, d_v);
    std::size_t offset = static_cast<std::size_t>(in.tellg());
    if (!in.read(reinterpret_cast<char*>(f.data.data()),
                 static_cast<std::streamsize>(f.size() * sizeof(double))))
      io_fail(path, offset, "truncated features for instance " + std::to_string(i));
    data.features.push_back(std::move(f));
  }
  std::size_t row_bytes = (q + 7) / 8;
  data.candidates = Tensor::zeros(n, q);
  std::vector<unsigned char> row(row_bytes);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::size_t offset = static_cast<std::size_t>(in.tellg());
    if (!in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row_bytes)))
      io_fail(path, offset, "truncated candidate bits for instance " + std::to_string(i));
    for (std::uint32_t j = 0; j < q; ++j)
      data.candidates.at(i, j) = (row[j / 8] >> (j % 8)) & 1u ? 1.0 : 0.0;
  }
  for (std::uint32_t i = 0; i < n; ++i)
    data.true_labels.push_back(read_u32(in, path));
  data.validate();
  return data;
}

}  // namespace dvsa
