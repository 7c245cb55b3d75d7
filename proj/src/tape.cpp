#include "dvsa/tape.hpp"

#include <algorithm>
#include <cmath>

namespace dvsa {

const Tensor& Var::value() const { return tape->value(*this); }
const Tensor& Var::grad() const { return tape->grad(*this); }

Var Tape::leaf(Tensor value) { return add_node(std::move(value)); }

Var Tape::add_node(Tensor value) {
  Node node;
  node.grad = Tensor::zeros(value.n_rows, value.n_cols);
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

void Tape::set_backward(Var v, std::function<void(Tape&)> backward) {
  nodes_[v.id].backward = std::move(backward);
}

void Tape::backward(Var root) {
  Node& r = nodes_[root.id];
  if (r.value.size() != 1)
    throw ShapeError("backward: root must be scalar, got " + r.value.shape_str());
  for (Node& n : nodes_) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
  r.grad.data[0] = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    if (nodes_[i].backward) nodes_[i].backward(*this);
  }
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw ShapeError("operands live on different tapes");
  return *a.tape;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  Var out = t.add_node(matmul_plain(a.value(), b.value()));
  t.set_backward(out, [a, b, out](Tape& tp) {
    const Tensor& g = tp.grad(out);
    const Tensor& av = tp.value(a);
    const Tensor& bv = tp.value(b);
    Tensor& ga = tp.grad(a);
    Tensor& gb = tp.grad(b);
    // dA += G * B^T
    for (std::size_t i = 0; i < av.n_rows; ++i)
      for (std::size_t k = 0; k < av.n_cols; ++k)
        ga.at(i, k) += dot(g.row(i), bv.row(k), g.n_cols);
    // dB += A^T * G
    for (std::size_t i = 0; i < av.n_rows; ++i) {
      const double* arow = av.row(i);
      const double* grow = g.row(i);
      for (std::size_t k = 0; k < av.n_cols; ++k) {
        double aik = arow[k];
        if (aik == 0.0) continue;
        double* gbrow = gb.row(k);
        for (std::size_t j = 0; j < g.n_cols; ++j) gbrow[j] += aik * grow[j];
      }
    }
  });
  return out;
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.n_cols != bv.n_cols)
    throw ShapeError("matmul_nt: inner dimensions differ, " + av.shape_str() + " * " +
                     bv.shape_str() + "^T");
  Tensor out(av.n_rows, bv.n_rows);
  for (std::size_t i = 0; i < av.n_rows; ++i)
    for (std::size_t j = 0; j < bv.n_rows; ++j) out.at(i, j) = dot(av.row(i), bv.row(j), av.n_cols);
  Var o = t.add_node(std::move(out));
  t.set_backward(o, [a, b, o](Tape& tp) {
    const Tensor& g = tp.grad(o);         // m x n
    const Tensor& av = tp.value(a);       // m x d
    const Tensor& bv = tp.value(b);       // n x d
    Tensor& ga = tp.grad(a);
    Tensor& gb = tp.grad(b);
    for (std::size_t i = 0; i < av.n_rows; ++i) {
      const double* grow = g.row(i);
      double* garow = ga.row(i);
      for (std::size_t j = 0; j < bv.n_rows; ++j) {
        double gij = grow[j];
        if (gij == 0.0) continue;
        const double* brow = bv.row(j);
        double* gbrow = gb.row(j);
        const double* arow = av.row(i);
        for (std::size_t k = 0; k < av.n_cols; ++k) {
          garow[k] += gij * brow[k];
          gbrow[k] += gij * arow[k];
        }
      }
    }
  });
  return o;
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.value().data[i];
  Var o = t.add_node(std::move(out));
  t.set_backward(o, [a, b, o](Tape& tp) {
    const Tensor& g = tp.grad(o);
    Tensor& ga = tp.grad(a);
    Tensor& gb = tp.grad(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga.data[i] += g.data[i];
      gb.data[i] += g.data[i];
    }
  });
  return o;
}

Var sub(Var a, Var b) { return add(a, neg(b)); }

Var add_row_broadcast(Var a, Var bias) {
  Tape& t = same_tape(a, bias);
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  if (bv.n_rows != 1 || bv.n_cols != av.n_cols)
    throw ShapeError("add_row_broadcast: bias " + bv.shape_str() + " vs " + av.shape_str());
  Tensor out = av;
  for (std::size_t r = 0; r < out.n_rows; ++r)
    for (std::size_t c = 0; c < out.n_cols; ++c) out.at(r, c) += bv.data[c];
  Var o = t.add_node(std::move(out));
  t.set_backward(o, [a, bias, o](Tape& tp) {
    const Tensor& g = tp.grad(o);
    Tensor& ga = tp.grad(a);
    Tensor& gb = tp.grad(bias);
    for (std::size_t r = 0; r < g.n_rows; ++r)
      for (std::size_t c = 0; c < g.n_cols; ++c) {
        ga.at(r, c) += g.at(r, c);
        gb.data[c] += g.at(r, c);
      }
  });
  return o;
}

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  for (double& v : out.data) v *= s;
  Var o = t.add_node(std::move(out));
  t.set_backward(o, [a, o, s](Tape& tp) {
    const Tensor& g = tp.grad(o);
    Tensor& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += s * g.data[i];
  });
  return o;
}

Var add_scalar(Var a, double s) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  for (double& v : out.data) v += s;
  Var o = t.add_node(std::move(out));
  t.set_backward(o, [a, o](Tape& tp) {
    const Tensor& g = tp.grad(o);
    Tensor& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
  });
  return o;
}

Var neg(Var a) { return scale(a, -1.0); }

Var mul_const(Var a, const Tensor& w) {
  Tape& t = *a.tape;
  require_same_shape(a.value(), w, "mul_const");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= w.data[i];
  Var o = t.add_node(std::move(out));
  t.set_backward(o, [a, o, w](Tape& tp) {
    const Tensor& g = tp.grad(o);
    Tensor& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += w.data[i] * g.data[i];
  });
  return o;
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.value().data[i];
  Var o = t.add_node(std::move(out));
  t.set_backward(o, [a, b, o](Tape& tp) {
    const Tensor& g = tp.grad(o);
    const Tensor& av = tp.value(a);
    const Tensor& bv = tp.value(b);
    Tensor& ga = tp.grad(a);
    Tensor& gb = tp.grad(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga.data[i] += bv.data[i] * g.data[i];
      gb.data[i] += av.data[i] * g.data[i];
    }
  });
  return o;
}

Var relu(Var a) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  for (double& v : out.data) v = std::max(v, 0.0);
  Var o = t.add_node(std::move(out));
  t.set_backward(o, [a, o](Tape& tp) {
    const Tensor& g = tp.grad(o);
    const Tensor& av = tp.value(a);
    Tensor& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av.data[i] > 0.0) ga.data[i] += g.data[i];
  });
  return o;
}

Var log_elem(Var a) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  for (double& v : out.data) v = std::log(v);
  Var o = t.add_node(std::move(out));
  t.set_backward(o, [a, o](Tape& tp) {
    const Tensor& g = tp.grad(o);
    const Tensor& av = tp.value(a);
    Tensor& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] / av.data[i];
  });
  return o;
}

Var softplus(Var a) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  for (double& v : out.data) v = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
  Var o = t.add_node(std::move(out));
  t.set_backward(o, [a, o](Tape& tp) {
    const Tensor& g = tp.grad(o);
    const Tensor& av = tp.value(a);
    Tensor& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      double s = 1.0 / (1.0 + std::exp(-av.data[i]));  // sigmoid
      ga.data[i] += s * g.data[i];
    }
  });
  return o;
}

Var exp_clamp(Var a, double cap) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  for (double& v : out.data) {
    if (v > cap) {
      v = cap;
      ++t.exp_clamp_hits;
    }
    v = std::exp(v);
  }
  Var o = t.add_node(std::move(out));
  t.set_backward(o, [a, o, cap](Tape& tp) {
    const Tensor& g = tp.grad(o);
    const Tensor& av = tp.value(a);
    const Tensor& ov = tp.value(o);
    Tensor& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av.data[i] <= cap) ga.data[i] += ov.data[i] * g.data[i];
  });
  return o;
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  Var o = t.add_node(softmax_rows_plain(a.value()));
  t.set_backward(o, [a, o](Tape& tp) {
    const Tensor& g = tp.grad(o);
    const Tensor& y = tp.value(o);
    Tensor& ga = tp.grad(a);
    for (std::size_t r = 0; r < y.n_rows; ++r) {
      double inner = dot(g.row(r), y.row(r), y.n_cols);
      for (std::size_t c = 0; c < y.n_cols; ++c)
        ga.at(r, c) += y.at(r, c) * (g.at(r, c) - inner);
    }
  });
  return o;
}

Var sum_all(Var a) {
  Tape& t = *a.tape;
  double s = 0.0;
  for (double v : a.value().data) s += v;
  Var o = t.add_node(Tensor(1, 1, {s}));
  t.set_backward(o, [a, o](Tape& tp) {
    double g = tp.grad(o).data[0];
    Tensor& ga = tp.grad(a);
    for (double& v : ga.data) v += g;
  });
  return o;
}

Var mean_all(Var a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size())); }

Var mean_rows(Var a) {
  Tape& t = *a.tape;
  Var o = t.add_node(gap(a.value()));
  double inv = 1.0 / static_cast<double>(a.value().n_rows);
  t.set_backward(o, [a, o, inv](Tape& tp) {
    const Tensor& g = tp.grad(o);
    Tensor& ga = tp.grad(a);
    for (std::size_t r = 0; r < ga.n_rows; ++r)
      for (std::size_t c = 0; c < ga.n_cols; ++c) ga.at(r, c) += inv * g.data[c];
  });
  return o;
}

Var cosine_matrix(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.n_cols != bv.n_cols)
    throw ShapeError("cosine_matrix: dimension mismatch " + av.shape_str() + " vs " +
                     bv.shape_str());
  std::vector<double> na(av.n_rows), nb(bv.n_rows);
  for (std::size_t i = 0; i < av.n_rows; ++i) {
    na[i] = norm2(av.row(i), av.n_cols);
    if (na[i] == 0.0) throw DegenerateInputError("cosine_matrix: zero-norm left row " + std::to_string(i));
  }
  for (std::size_t j = 0; j < bv.n_rows; ++j) {
    nb[j] = norm2(bv.row(j), bv.n_cols);
    if (nb[j] == 0.0) throw DegenerateInputError("cosine_matrix: zero-norm right row " + std::to_string(j));
  }
  Tensor out(av.n_rows, bv.n_rows);
  for (std::size_t i = 0; i < av.n_rows; ++i)
    for (std::size_t j = 0; j < bv.n_rows; ++j)
      out.at(i, j) = std::clamp(dot(av.row(i), bv.row(j), av.n_cols) / (na[i] * nb[j]), -1.0, 1.0);
  Var o = t.add_node(std::move(out));
  t.set_backward(o, [a, b, o, na, nb](Tape& tp) {
    const Tensor& g = tp.grad(o);
    const Tensor& av = tp.value(a);
    const Tensor& bv = tp.value(b);
    const Tensor& c = tp.value(o);
    Tensor& ga = tp.grad(a);
    Tensor& gb = tp.grad(b);
    std::size_t d = av.n_cols;
    for (std::size_t i = 0; i < av.n_rows; ++i) {
      const double* ai = av.row(i);
      double* gai = ga.row(i);
      for (std::size_t j = 0; j < bv.n_rows; ++j) {
        double gij = g.at(i, j);
        if (gij == 0.0) continue;
        const double* bj = bv.row(j);
        double* gbj = gb.row(j);
        double cij = c.at(i, j);
        double s = gij / (na[i] * nb[j]);
        double sa = gij * cij / (na[i] * na[i]);
        double sb = gij * cij / (nb[j] * nb[j]);
        for (std::size_t k = 0; k < d; ++k) {
          gai[k] += s * bj[k] - sa * ai[k];
          gbj[k] += s * ai[k] - sb * bj[k];
        }
      }
    }
  });
  return o;
}

Var concat_cols(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.n_rows != bv.n_rows)
    throw ShapeError("concat_cols: row count mismatch " + av.shape_str() + " vs " + bv.shape_str());
  Tensor out(av.n_rows, av.n_cols + bv.n_cols);
  for (std::size_t r = 0; r < av.n_rows; ++r) {
    std::copy(av.row(r), av.row(r) + av.n_cols, out.row(r));
    std::copy(bv.row(r), bv.row(r) + bv.n_cols, out.row(r) + av.n_cols);
  }
  Var o = t.add_node(std::move(out));
  t.set_backward(o, [a, b, o](Tape& tp) {
    const Tensor& g = tp.grad(o);
    Tensor& ga = tp.grad(a);
    Tensor& gb = tp.grad(b);
    for (std::size_t r = 0; r < g.n_rows; ++r) {
      for (std::size_t c = 0; c < ga.n_cols; ++c) ga.at(r, c) += g.at(r, c);
      for (std::size_t c = 0; c < gb.n_cols; ++c) gb.at(r, c) += g.at(r, ga.n_cols + c);
    }
  });
  return o;
}

Var gather_rows(Tape& tape, const std::vector<std::pair<Var, std::size_t>>& rows) {
  if (rows.empty()) throw DegenerateInputError("gather_rows: empty row list");
  std::size_t d = rows.front().first.value().n_cols;
  Tensor out(rows.size(), d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Tensor& src = rows[r].first.value();
    if (src.n_cols != d) throw ShapeError("gather_rows: column mismatch");
    if (rows[r].second >= src.n_rows) throw ShapeError("gather_rows: row index out of range");
    std::copy(src.row(rows[r].second), src.row(rows[r].second) + d, out.row(r));
  }
  Var o = tape.add_node(std::move(out));
  tape.set_backward(o, [rows, o](Tape& tp) {
    const Tensor& g = tp.grad(o);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      Tensor& gs = tp.grad(rows[r].first);
      double* dst = gs.row(rows[r].second);
      const double* src = g.row(r);
      for (std::size_t c = 0; c < g.n_cols; ++c) dst[c] += src[c];
    }
  });
  return o;
}

}  // namespace dvsa
