#include "symspot/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "symspot/errors.hpp"

namespace symspot::ad {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeMismatch(what);
}

void require_same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw ShapeMismatch("operands live on different tapes");
}

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  return h ^ (v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2));
}

void require_edges(Var x, const Adjacency& adj, const char* op) {
  require(static_cast<std::size_t>(x.rows()) == adj.num_edges(),
          std::string(op) + ": edge array length does not match the edge list");
}

void require_vertices(Var x, const Adjacency& adj, const char* op) {
  require(static_cast<std::size_t>(x.rows()) == adj.num_vertices(),
          std::string(op) + ": vertex array length does not match the graph");
}

constexpr double kProbFloor = 1e-300;
constexpr double kBceClamp = 1e-12;

}  // namespace

const Matrix& Var::value() const { return tape_->value(*this); }

double Var::scalar() const {
  const auto& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ShapeMismatch("scalar() on non-scalar tensor");
  return v(0, 0);
}

void Tape::check_finite(const Matrix& m) const {
  if (checked_ && !m.allFinite()) throw NonFiniteValue("tensor contains NaN or Inf");
}

Var Tape::constant(Matrix value) {
  check_finite(value);
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Matrix value) {
  check_finite(value);
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::span<const Var> parents, Backprop backprop) {
  check_finite(value);
  bool needs = false;
  for (Var p : parents) {
    if (p.tape() != this) throw ShapeMismatch("operand belongs to another tape");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backprop) : Backprop{}});
  return Var(this, nodes_.size() - 1);
}

Matrix& Tape::grad_buffer(Var target) {
  auto& node = nodes_[target.id()];
  if (node.grad.size() == 0) node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

Matrix Tape::grad(Var v) const {
  const auto& node = nodes_[v.id()];
  if (node.grad.size() == 0) return Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw NonScalarLoss("loss belongs to another tape");
  const auto& lv = nodes_[loss.id()].value;
  if (lv.rows() != 1 || lv.cols() != 1)
    throw NonScalarLoss("loss must be 1x1, got " + std::to_string(lv.rows()) + "x" +
                        std::to_string(lv.cols()));
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Matrix::Ones(1, 1);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    auto& node = nodes_[id];
    if (node.backprop && node.grad.size() != 0) node.backprop(*this, id);
  }
}

void Tape::note_branch(std::uint64_t bits) { signature_ = mix(signature_, bits); }

// ---------------------------------------------------------------- dense ops

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix out = a.value() * b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& tape, std::size_t self) {
    const Matrix& g = tape.upstream(self);
    if (tape.requires_grad(a)) tape.accumulate(a, g * tape.value(b).transpose());
    if (tape.requires_grad(b)) tape.accumulate(b, tape.value(a).transpose() * g);
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shapes differ");
  return a.tape()->record(a.value() + b.value(), {a, b}, [a, b](Tape& tape, std::size_t self) {
    const Matrix& g = tape.upstream(self);
    tape.accumulate(a, g);
    tape.accumulate(b, g);
  });
}

Var add_row(Var x, Var row) {
  require_same_tape(x, row);
  require(row.rows() == 1 && row.cols() == x.cols(), "add_row: row width differs");
  Matrix out = x.value().rowwise() + row.value().row(0);
  return x.tape()->record(std::move(out), {x, row}, [x, row](Tape& tape, std::size_t self) {
    const Matrix& g = tape.upstream(self);
    tape.accumulate(x, g);
    if (tape.requires_grad(row)) tape.accumulate(row, g.colwise().sum());
  });
}

Var scale(Var x, double s) {
  return x.tape()->record(s * x.value(), {x}, [x, s](Tape& tape, std::size_t self) {
    tape.accumulate(x, s * tape.upstream(self));
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  Tape& t = *parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    require(p.tape() == &t, "concat_cols: operands on different tapes");
    require(p.rows() == rows, "concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [saved](Tape& tape, std::size_t self) {
    const Matrix& g = tape.upstream(self);
    Eigen::Index off = 0;
    for (Var p : saved) {
      tape.accumulate(p, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

Var slice_rows(Var x, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= x.rows(), "slice_rows: out of range");
  Matrix out = x.value().middleRows(start, count);
  return x.tape()->record(std::move(out), {x}, [x, start, count](Tape& tape, std::size_t self) {
    tape.grad_buffer(x).middleRows(start, count) += tape.upstream(self);
  });
}

Var relu(Var x) {
  Tape& t = *x.tape();
  const Matrix& v = x.value();
  std::uint64_t h = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) h = h * 31 + (v.data()[i] > 0 ? 2 : 1);
  t.note_branch(h);
  Matrix out = v.cwiseMax(0.0);
  return t.record(std::move(out), {x}, [x](Tape& tape, std::size_t self) {
    const Matrix& g = tape.upstream(self);
    tape.accumulate(x, g.cwiseProduct((tape.value(x).array() > 0.0).cast<double>().matrix()));
  });
}

Var sigmoid(Var x) {
  Matrix out = x.value().unaryExpr([](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  return x.tape()->record(std::move(out), {x}, [x](Tape& tape, std::size_t self) {
    const auto y = tape.output(self).array();
    tape.accumulate(x, (tape.upstream(self).array() * y * (1.0 - y)).matrix());
  });
}

Var softmax_rows(Var x) {
  const Matrix& v = x.value();
  Matrix out(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double m = v.row(i).maxCoeff();
    out.row(i) = (v.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return x.tape()->record(std::move(out), {x}, [x](Tape& tape, std::size_t self) {
    const Matrix& y = tape.output(self);
    const Matrix& g = tape.upstream(self);
    Matrix dx(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double inner = y.row(i).dot(g.row(i));
      dx.row(i) = (y.row(i).array() * (g.row(i).array() - inner)).matrix();
    }
    tape.accumulate(x, dx);
  });
}

Var gather_rows(Var x, std::span<const int> index) {
  const Matrix& v = x.value();
  Matrix out(static_cast<Eigen::Index>(index.size()), v.cols());
  for (std::size_t e = 0; e < index.size(); ++e) {
    require(index[e] >= 0 && index[e] < v.rows(), "gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(e)) = v.row(index[e]);
  }
  std::vector<int> idx(index.begin(), index.end());
  return x.tape()->record(std::move(out), {x}, [x, idx](Tape& tape, std::size_t self) {
    const Matrix& g = tape.upstream(self);
    Matrix& dx = tape.grad_buffer(x);
    for (std::size_t e = 0; e < idx.size(); ++e) dx.row(idx[e]) += g.row(static_cast<Eigen::Index>(e));
  });
}

Var sum(Var x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape()->record(std::move(out), {x}, [x](Tape& tape, std::size_t self) {
    const double g = tape.upstream(self)(0, 0);
    const Matrix& v = tape.value(x);
    tape.accumulate(x, Matrix::Constant(v.rows(), v.cols(), g));
  });
}

Var mean(Var x) {
  const auto n = static_cast<double>(x.value().size());
  require(n > 0, "mean: empty tensor");
  return scale(sum(x), 1.0 / n);
}

Var nll_rows(Var probs, std::span<const int> labels) {
  const Matrix& p = probs.value();
  require(static_cast<std::size_t>(p.rows()) == labels.size(), "nll_rows: label count differs");
  require(p.rows() > 0, "nll_rows: no rows");
  double total = 0.0;
  std::uint64_t clamped = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    if (l < 0 || l >= p.cols())
      throw LabelOutOfRange("label " + std::to_string(l) + " outside [0, " +
                            std::to_string(p.cols()) + ")");
    const double v = p(i, l);
    if (v < kProbFloor) clamped = clamped * 31 + static_cast<std::uint64_t>(i) + 1;
    total -= std::log(std::max(v, kProbFloor));
  }
  probs.tape()->note_branch(clamped);
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(p.rows());
  std::vector<int> lab(labels.begin(), labels.end());
  return probs.tape()->record(std::move(out), {probs}, [probs, lab](Tape& tape, std::size_t self) {
    const double g = tape.upstream(self)(0, 0) / static_cast<double>(lab.size());
    const Matrix& pv = tape.value(probs);
    Matrix& dp = tape.grad_buffer(probs);
    for (std::size_t i = 0; i < lab.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const double v = pv(r, lab[i]);
      if (v >= kProbFloor) dp(r, lab[i]) -= g / v;
    }
  });
}

Var weighted_bce(Var probs, std::span<const double> targets, std::span<const double> weights) {
  const Matrix& z = probs.value();
  require(z.cols() == 1, "weighted_bce: expects a column of probabilities");
  require(static_cast<std::size_t>(z.rows()) == targets.size() &&
              targets.size() == weights.size(),
          "weighted_bce: targets and weights must align with the predictions");
  double wsum = 0.0, total = 0.0;
  std::uint64_t clamped = 0;
  for (Eigen::Index e = 0; e < z.rows(); ++e) {
    const double w = weights[static_cast<std::size_t>(e)];
    if (w == 0.0) continue;
    const double t = targets[static_cast<std::size_t>(e)];
    const double zc = std::clamp(z(e, 0), kBceClamp, 1.0 - kBceClamp);
    if (zc != z(e, 0)) clamped = clamped * 31 + static_cast<std::uint64_t>(e) + 1;
    wsum += w;
    total -= w * (t * std::log(zc) + (1.0 - t) * std::log(1.0 - zc));
  }
  probs.tape()->note_branch(clamped);
  Matrix out(1, 1);
  out(0, 0) = wsum > 0 ? total / wsum : 0.0;
  std::vector<double> tgt(targets.begin(), targets.end());
  std::vector<double> wts(weights.begin(), weights.end());
  return probs.tape()->record(
      std::move(out), {probs}, [probs, tgt, wts, wsum](Tape& tape, std::size_t self) {
        if (wsum <= 0) return;
        const double g = tape.upstream(self)(0, 0) / wsum;
        const Matrix& zv = tape.value(probs);
        Matrix& dz = tape.grad_buffer(probs);
        for (std::size_t e = 0; e < wts.size(); ++e) {
          if (wts[e] == 0.0) continue;
          const auto r = static_cast<Eigen::Index>(e);
          const double v = zv(r, 0);
          if (v < kBceClamp || v > 1.0 - kBceClamp) continue;
          dz(r, 0) += g * wts[e] * (-tgt[e] / v + (1.0 - tgt[e]) / (1.0 - v));
        }
      });
}

// --------------------------------------------------------------- sparse ops

Var segment_max_pool(Var edge_values, const Adjacency& adj) {
  require_edges(edge_values, adj, "segment_max_pool");
  const Matrix& v = edge_values.value();
  const auto n = static_cast<Eigen::Index>(adj.num_vertices());
  const Eigen::Index f = v.cols();
  Matrix out = Matrix::Zero(n, f);
  std::vector<std::size_t> winner(static_cast<std::size_t>(n * f), adj.num_edges());
  std::uint64_t h = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t lo = adj.offsets[i], hi = adj.offsets[i + 1];
    if (lo == hi) continue;
    for (Eigen::Index c = 0; c < f; ++c) {
      std::size_t best = lo;
      for (std::size_t e = lo + 1; e < hi; ++e)
        if (v(static_cast<Eigen::Index>(e), c) > v(static_cast<Eigen::Index>(best), c)) best = e;
      out(i, c) = v(static_cast<Eigen::Index>(best), c);
      winner[static_cast<std::size_t>(i * f + c)] = best;
      h = h * 1099511628211ULL + best;
    }
  }
  edge_values.tape()->note_branch(h);
  const Adjacency* a = &adj;
  return edge_values.tape()->record(
      std::move(out), {edge_values}, [edge_values, winner, a, f](Tape& tape, std::size_t self) {
        const Matrix& g = tape.upstream(self);
        Matrix& dv = tape.grad_buffer(edge_values);
        for (std::size_t k = 0; k < winner.size(); ++k) {
          if (winner[k] == a->num_edges()) continue;
          const auto i = static_cast<Eigen::Index>(k) / f;
          const auto c = static_cast<Eigen::Index>(k) % f;
          dv(static_cast<Eigen::Index>(winner[k]), c) += g(i, c);
        }
      });
}

Var edge_head_dot(Var q, Var k, const Adjacency& adj, int heads) {
  require_same_tape(q, k);
  require_vertices(q, adj, "edge_head_dot");
  require_vertices(k, adj, "edge_head_dot");
  require(heads > 0 && q.cols() == k.cols() && q.cols() % heads == 0,
          "edge_head_dot: width must split evenly into heads");
  const Eigen::Index d = q.cols() / heads;
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const auto e_count = static_cast<Eigen::Index>(adj.num_edges());
  Matrix out(e_count, heads);
  for (Eigen::Index e = 0; e < e_count; ++e) {
    const int i = adj.source[e], j = adj.target[e];
    for (int h = 0; h < heads; ++h)
      out(e, h) = qv.row(i).segment(h * d, d).dot(kv.row(j).segment(h * d, d));
  }
  const Adjacency* a = &adj;
  return q.tape()->record(std::move(out), {q, k}, [q, k, a, heads, d](Tape& tape, std::size_t self) {
    const Matrix& g = tape.upstream(self);
    const Matrix& qv = tape.value(q);
    const Matrix& kv = tape.value(k);
    const bool gq = tape.requires_grad(q), gk = tape.requires_grad(k);
    Matrix* dq = gq ? &tape.grad_buffer(q) : nullptr;
    Matrix* dk = gk ? &tape.grad_buffer(k) : nullptr;
    for (Eigen::Index e = 0; e < g.rows(); ++e) {
      const int i = a->source[e], j = a->target[e];
      for (int h = 0; h < heads; ++h) {
        const double ge = g(e, h);
        if (gq) dq->row(i).segment(h * d, d) += ge * kv.row(j).segment(h * d, d);
        if (gk) dk->row(j).segment(h * d, d) += ge * qv.row(i).segment(h * d, d);
      }
    }
  });
}

Var row_softmax_over_neighbors(Var scores, const Adjacency& adj) {
  require_edges(scores, adj, "row_softmax_over_neighbors");
  const Matrix& s = scores.value();
  Matrix out(s.rows(), s.cols());
  const std::size_t n = adj.num_vertices();
  for (std::size_t i = 0; i < n; ++i) {
    const auto lo = static_cast<Eigen::Index>(adj.offsets[i]);
    const auto cnt = static_cast<Eigen::Index>(adj.degree(i));
    if (cnt == 0) continue;
    for (Eigen::Index h = 0; h < s.cols(); ++h) {
      auto col = s.col(h).segment(lo, cnt);
      const double m = col.maxCoeff();
      auto o = out.col(h).segment(lo, cnt);
      o = (col.array() - m).exp().matrix();
      o /= o.sum();
    }
  }
  const Adjacency* a = &adj;
  return scores.tape()->record(std::move(out), {scores}, [scores, a](Tape& tape, std::size_t self) {
    const Matrix& y = tape.output(self);
    const Matrix& g = tape.upstream(self);
    Matrix dx(y.rows(), y.cols());
    for (std::size_t i = 0; i < a->num_vertices(); ++i) {
      const auto lo = static_cast<Eigen::Index>(a->offsets[i]);
      const auto cnt = static_cast<Eigen::Index>(a->degree(i));
      if (cnt == 0) continue;
      for (Eigen::Index h = 0; h < y.cols(); ++h) {
        const auto yc = y.col(h).segment(lo, cnt);
        const auto gc = g.col(h).segment(lo, cnt);
        const double inner = yc.dot(gc);
        dx.col(h).segment(lo, cnt) = (yc.array() * (gc.array() - inner)).matrix();
      }
    }
    tape.accumulate(scores, dx);
  });
}

Var neighbor_aggregate(Var weights, Var values, const Adjacency& adj, int heads) {
  require_same_tape(weights, values);
  require_edges(weights, adj, "neighbor_aggregate");
  require_vertices(values, adj, "neighbor_aggregate");
  require(weights.cols() == heads && heads > 0 && values.cols() % heads == 0,
          "neighbor_aggregate: head layout mismatch");
  const Eigen::Index d = values.cols() / heads;
  const Matrix& w = weights.value();
  const Matrix& v = values.value();
  Matrix out = Matrix::Zero(v.rows(), v.cols());
  for (std::size_t e = 0; e < adj.num_edges(); ++e) {
    const int i = adj.source[e], j = adj.target[e];
    for (int h = 0; h < heads; ++h)
      out.row(i).segment(h * d, d) += w(static_cast<Eigen::Index>(e), h) * v.row(j).segment(h * d, d);
  }
  const Adjacency* a = &adj;
  return weights.tape()->record(
      std::move(out), {weights, values}, [weights, values, a, heads, d](Tape& tape, std::size_t self) {
        const Matrix& g = tape.upstream(self);
        const Matrix& w = tape.value(weights);
        const Matrix& v = tape.value(values);
        const bool gw = tape.requires_grad(weights), gv = tape.requires_grad(values);
        Matrix* dw = gw ? &tape.grad_buffer(weights) : nullptr;
        Matrix* dv = gv ? &tape.grad_buffer(values) : nullptr;
        for (std::size_t e = 0; e < a->num_edges(); ++e) {
          const int i = a->source[e], j = a->target[e];
          const auto r = static_cast<Eigen::Index>(e);
          for (int h = 0; h < heads; ++h) {
            if (gw) (*dw)(r, h) += g.row(i).segment(h * d, d).dot(v.row(j).segment(h * d, d));
            if (gv) dv->row(j).segment(h * d, d) += w(r, h) * g.row(i).segment(h * d, d);
          }
        }
      });
}

// ------------------------------------------------------------------ layers

Var mlp_forward(Var x, const MlpT<Var>& mlp) {
  if (mlp.layers.empty()) throw ShapeMismatch("mlp has no layers");
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const auto& layer = mlp.layers[l];
    if (x.cols() != layer.weight.rows())
      throw ShapeMismatch("mlp layer " + std::to_string(l) + " expects width " +
                          std::to_string(layer.weight.rows()) + ", got " +
                          std::to_string(x.cols()));
    x = add_row(matmul(x, layer.weight), layer.bias);
    if (l + 1 < mlp.layers.size()) x = relu(x);
  }
  return x;
}

}  // namespace symspot::ad
