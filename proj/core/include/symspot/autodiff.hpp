#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices and
// edge-indexed score arrays (E x H matrices aligned with an Adjacency).
//
// A Tape records every operation in insertion order; backward() walks it
// once in reverse. Var is a cheap handle into a tape. Graphs passed to the
// sparse ops must outlive the tape.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "symspot/adjacency.hpp"

namespace symspot::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }
  /// Value of a 1x1 tensor.
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::size_t self)>;

  /// In checked mode every recorded value is tested for NaN/Inf.
  explicit Tape(bool checked = true) : checked_(checked) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var parameter(Matrix value);

  const Matrix& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  /// Gradient of the last backward() target w.r.t. v; zeros if v did not
  /// contribute.
  Matrix grad(Var v) const;

  /// Throws NonScalarLoss unless loss is 1x1.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  /// Non-differentiable branch decisions (relu masks, max-pool winners,
  /// clamps) are folded into a running hash so finite-difference checks
  /// can skip probes that cross a kink.
  void note_branch(std::uint64_t bits);
  std::uint64_t branch_signature() const { return signature_; }

  // Op-author interface.
  Var record(Matrix value, std::span<const Var> parents, Backprop backprop);
  Var record(Matrix value, std::initializer_list<Var> parents, Backprop backprop) {
    return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                  std::move(backprop));
  }
  const Matrix& upstream(std::size_t id) const { return nodes_[id].grad; }
  const Matrix& output(std::size_t id) const { return nodes_[id].value; }
  template <class Expr>
  void accumulate(Var target, const Expr& g) {
    auto& node = nodes_[target.id()];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0)
      node.grad = g;
    else
      node.grad += g;
  }
  Matrix& grad_buffer(Var target);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backprop backprop;
  };

  void check_finite(const Matrix& m) const;

  std::vector<Node> nodes_;
  bool checked_;
  std::uint64_t signature_ = 0xcbf29ce484222325ULL;
};

// ---------------------------------------------------------------- dense ops

Var matmul(Var a, Var b);
Var add(Var a, Var b);
/// x (N x F) plus a 1 x F row broadcast to every row.
Var add_row(Var x, Var row);
Var scale(Var x, double s);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var x, Eigen::Index start, Eigen::Index count);
Var relu(Var x);
Var sigmoid(Var x);
Var softmax_rows(Var x);
/// out[e] = x[index[e]].
Var gather_rows(Var x, std::span<const int> index);
Var sum(Var x);
Var mean(Var x);

/// Mean over rows of -log(probs[i, labels[i]]).
Var nll_rows(Var probs, std::span<const int> labels);

/// sum_e w_e * BCE(z_e, t_e) / sum_e w_e for a column of probabilities.
/// Zero when every weight is zero.
Var weighted_bce(Var probs, std::span<const double> targets, std::span<const double> weights);

// --------------------------------------------------------------- sparse ops

/// Max over each vertex's outgoing edge rows. Empty rows give 0; ties go to
/// the lowest edge index.
Var segment_max_pool(Var edge_values, const Adjacency& adj);

/// Per-head dot product q_i . k_j on each directed edge (i, j). q and k are
/// N x (heads * d) with head h in columns [h*d, (h+1)*d). Result is E x heads.
Var edge_head_dot(Var q, Var k, const Adjacency& adj, int heads);

/// Softmax of E x H scores over each vertex's outgoing edges, per head.
Var row_softmax_over_neighbors(Var scores, const Adjacency& adj);

/// out[i, head h] = sum over outgoing edges e=(i,j) of w[e,h] * v[j, head h].
Var neighbor_aggregate(Var weights, Var values, const Adjacency& adj, int heads);

// ------------------------------------------------------------------ layers

template <class T>
struct DenseT {
  T weight;  // in x out
  T bias;    // 1 x out
};

template <class T>
struct MlpT {
  std::vector<DenseT<T>> layers;
};

/// Affine layers with relu between them; the last layer has no activation.
Var mlp_forward(Var x, const MlpT<Var>& mlp);

}  // namespace symspot::ad
