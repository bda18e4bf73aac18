#pragma once

// Scalar re-implementation of the panoptic loss in long double, shared with
// nothing on the tape. Finite differences taken through it resolve
// gradients far below the rounding floor of a double-precision loss value.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "symspot/training.hpp"

namespace symspot {

class ExtendedLoss {
 public:
  ExtendedLoss(const TrainingExample& example, const ModelConfig& model, const Ablation& ablation,
               double lambda);

  /// Full evaluation. The intermediate state is cached as the base for
  /// evaluate_changed.
  long double evaluate(const ModelParams& params, std::uint64_t* signature = nullptr);

  /// Evaluates parameters that differ from the last evaluate() call only
  /// inside parameter block `block` (see block_of), recomputing just the
  /// computation downstream of that block. The cache is left untouched.
  long double evaluate_changed(const ModelParams& params, int block, std::uint64_t* signature = nullptr) const;

  /// Block index of a flat parameter position: vertex embedding, edge
  /// embedding, RSE, one block per stage, semantic head, instance head.
  int block_of(std::size_t flat_index) const;

 private:
  using Real = long double;
  using RMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  struct State {
    RMat embed;  // V^0
    RMat rse;
    std::vector<RMat> features;  // V^s, s = 1..S
    std::vector<RMat> scores;    // raw per-stage scores
    Real semantic = 0;
    Real instance = 0;
    std::vector<std::uint64_t> signatures;  // one per block
  };

  void run(const ModelParams& params, int from_block, State& state) const;
  std::uint64_t combined(const State& state) const;

  const TrainingExample& example_;
  ModelConfig model_;
  Ablation ablation_;
  double lambda_;
  RMat vertex_in_;
  RMat edge_in_;
  std::vector<std::size_t> block_end_;  // exclusive flat end of each block
  std::optional<State> base_;
};

/// One-shot evaluation.
long double extended_precision_loss(const ModelParams& params, const TrainingExample& example,
                                    const ModelConfig& model, const Ablation& ablation, double lambda,
                                    std::uint64_t* signature = nullptr);

}  // namespace symspot
