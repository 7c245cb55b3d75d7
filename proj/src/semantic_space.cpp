#include "dvsa/semantic_space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace dvsa {

void SemanticSpace::validate() const {
  if (num_classes() < 2) throw DegenerateInputError("SemanticSpace: need Q >= 2 classes");
  if (num_attributes() < 2) throw DegenerateInputError("SemanticSpace: need K >= 2 attributes");
  for (std::size_t k = 0; k < num_attributes(); ++k) {
    bool positive = false;
    for (std::size_t c = 0; c < num_classes(); ++c) {
      double v = S.at(c, k);
      if (v < 0.0)
        throw DegenerateInputError("SemanticSpace: negative strength at class " +
                                   std::to_string(c) + ", attribute " + std::to_string(k));
      if (v > 0.0) positive = true;
    }
    if (!positive)
      throw DegenerateInputError("SemanticSpace: attribute column " + std::to_string(k) +
                                 " is all zero");
  }
  for (std::size_t k = 0; k < attr_embed.n_rows; ++k) {
    if (norm2(attr_embed.row(k), attr_embed.n_cols) == 0.0)
      throw DegenerateInputError("SemanticSpace: attribute embedding row " + std::to_string(k) +
                                 " is all zero");
  }
  if (!class_names.empty() && class_names.size() != num_classes())
    throw ShapeError("SemanticSpace: class name count does not match Q");
}

Tensor attribute_entropy(const SemanticSpace& space) {
  std::size_t q = space.num_classes();
  std::size_t kk = space.num_attributes();
  Tensor h(1, kk, 0.0);
  for (std::size_t k = 0; k < kk; ++k) {
    double total = 0.0;
    for (std::size_t c = 0; c < q; ++c) total += space.S.at(c, k);
    if (total == 0.0)
      throw DegenerateInputError("attribute_entropy: all-zero column " + std::to_string(k));
    double hk = 0.0;
    for (std::size_t c = 0; c < q; ++c) {
      double p = space.S.at(c, k) / total;
      if (p > 0.0) hk -= p * std::log(p);
    }
    h.data[k] = hk;
  }
  return h;
}

AttributeSelection select_attributes(const Tensor& entropies) {
  std::size_t kk = entropies.size();
  if (kk < 2) throw DegenerateInputError("select_attributes: need K >= 2");
  std::vector<double> sorted(entropies.data);
  std::sort(sorted.begin(), sorted.end());
  double median = (kk % 2 == 1) ? sorted[kk / 2]
                                : 0.5 * (sorted[kk / 2 - 1] + sorted[kk / 2]);
  AttributeSelection sel;
  sel.entropies = entropies;
  sel.threshold = median;
  for (std::size_t k = 0; k < kk; ++k)
    if (entropies.data[k] < median) sel.selected.push_back(k);
  if (sel.selected.empty()) {
    // All entropies tie the median; take the lower-index half.
    for (std::size_t k = 0; k < kk / 2; ++k) sel.selected.push_back(k);
  }
  return sel;
}

namespace {

[[noreturn]] void parse_fail(const std::string& path, std::size_t line, const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

std::vector<double> read_floats(std::istream& in, std::size_t count, const std::string& path,
                                std::size_t& line) {
  std::string text;
  if (!std::getline(in, text)) parse_fail(path, line, "unexpected end of file");
  ++line;
  std::istringstream row(text);
  std::vector<double> values;
  double v;
  while (row >> v) values.push_back(v);
  if (values.size() != count)
    parse_fail(path, line - 1,
               "expected " + std::to_string(count) + " values, got " +
                   std::to_string(values.size()));
  return values;
}

}  // namespace

SemanticSpace load_semantic_space(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open semantic matrix file: " + path);
  std::size_t line = 1;
  std::size_t q = 0, k = 0, dw = 0;
  {
    std::string header;
    if (!std::getline(in, header)) parse_fail(path, line, "missing header");
    std::istringstream hs(header);
    if (!(hs >> q >> k >> dw)) parse_fail(path, line, "header must be 'Q K d_w2v'");
    ++line;
  }
  SemanticSpace space;
  space.S = Tensor(q, k);
  for (std::size_t c = 0; c < q; ++c) {
    auto row = read_floats(in, k, path, line);
    std::copy(row.begin(), row.end(), space.S.row(c));
  }
  space.attr_embed = Tensor(k, dw);
  for (std::size_t a = 0; a < k; ++a) {
    auto row = read_floats(in, dw, path, line);
    std::copy(row.begin(), row.end(), space.attr_embed.row(a));
  }
  space.validate();
  return space;
}

void save_semantic_space(const SemanticSpace& space, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write semantic matrix file: " + path);
  out.precision(17);
  out << space.num_classes() << " " << space.num_attributes() << " " << space.attr_embed.n_cols
      << "\n";
  for (std::size_t c = 0; c < space.num_classes(); ++c) {
    for (std::size_t k = 0; k < space.num_attributes(); ++k)
      out << space.S.at(c, k) << (k + 1 == space.num_attributes() ? "" : " ");
    out << "\n";
  }
  for (std::size_t k = 0; k < space.attr_embed.n_rows; ++k) {
    for (std::size_t j = 0; j < space.attr_embed.n_cols; ++j)
      out << space.attr_embed.at(k, j) << (j + 1 == space.attr_embed.n_cols ? "" : " ");
    out << "\n";
  }
}

}  // namespace dvsa
