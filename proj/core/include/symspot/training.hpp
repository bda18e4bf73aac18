#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "symspot/classes.hpp"
#include "symspot/gradcheck.hpp"
#include "symspot/metrics.hpp"
#include "symspot/model.hpp"

namespace symspot {

/// BCE weights indexed by (ground-truth class equality, Z^gt).
struct InstanceWeightTable {
  double same_class_diff_instance = 20.0;  // Y_i == Y_j, Z = 0
  double same_class_same_instance = 2.0;   // Y_i == Y_j, Z = 1
  double diff_class_not_adjacent = 1.0;    // Y_i != Y_j, Z = 0
  double diff_class_adjacent = 0.0;        // Y_i != Y_j, Z = 1

  double lookup(bool same_class, bool same_instance) const;
  friend bool operator==(const InstanceWeightTable&, const InstanceWeightTable&) = default;
};

struct TrainConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adam_epsilon = 1e-8;
  double decay = 0.7;
  int decay_every = 20;
  int epochs = 100;
  double lambda = 2.0;
  std::uint64_t seed = 0;
  InstanceWeightTable weights{};
  /// Stop once an epoch's validation PQ and accuracy reach these values.
  std::optional<double> stop_at_pq;
  std::optional<double> stop_at_accuracy;

  void validate() const;
};

/// lr * decay^floor(epoch / decay_every).
double learning_rate(const TrainConfig& cfg, int epoch);

struct AdamState {
  ModelParams first_moment;
  ModelParams second_moment;
  std::int64_t step = 0;
};

AdamState make_adam_state(const ModelParams& params);

/// One bias-corrected Adam update with the epoch's scheduled learning rate.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const TrainConfig& cfg, int epoch);

/// 1 on edges whose endpoints are thing vertices of one ground-truth
/// instance, 0 elsewhere.
std::vector<double> build_gt_adjacency(const DrawingGraph& graph, const ClassTable& classes);

/// Per-edge BCE weight from the ground-truth labels and Z^gt.
std::vector<double> instance_edge_weights(const DrawingGraph& graph, std::span<const double> z_target,
                                          const InstanceWeightTable& table);

/// Cross entropy of row-stochastic predictions against labels, averaged
/// over vertices. Throws LabelOutOfRange for labels outside [0, C).
ad::Var semantic_loss(ad::Var probs, std::span<const int> labels);

/// Weighted BCE normalized by the sum of weights.
ad::Var instance_loss(ad::Var adjacency, std::span<const double> z_target,
                      std::span<const double> weights);

ad::Var panoptic_loss(ad::Var semantic, ad::Var instance, double lambda);

/// A graph with its precomputed training targets.
struct TrainingExample {
  std::string id;
  DrawingGraph graph;
  std::vector<int> labels;
  std::vector<double> z_target;
  std::vector<double> weights;
};

TrainingExample make_example(std::string id, DrawingGraph graph, const ClassTable& classes,
                             const InstanceWeightTable& table = {});

struct LossValues {
  double semantic = 0.0;
  double instance = 0.0;
  double total = 0.0;
};

struct LossAndGradient {
  LossValues loss;
  ModelParams gradient;
  std::uint64_t branch_signature = 0;
};

/// Forward and backward of the panoptic loss on one drawing.
LossAndGradient loss_and_gradient(const ModelParams& params, const TrainingExample& example,
                                  const ModelConfig& model, const Ablation& ablation, double lambda,
                                  bool want_gradient = true);

/// Central-difference check of the tape gradient of the panoptic loss with
/// respect to every model parameter. The difference quotients are taken on
/// an extended-precision scalar evaluation of the loss, so gradients far below the double rounding
/// floor of the loss value are still resolved.
ad::GradCheckReport check_model_gradients(const ModelParams& params, const TrainingExample& example,
                                          const ModelConfig& model, const Ablation& ablation, double lambda,
                                          double h = 1e-5, double rel_tol = 1e-4);

struct EvalSummary {
  PanopticResult panoptic;
  F1Result f1;
  ApResult ap;
  double accuracy = 0.0;
  std::size_t vertices = 0;
};

/// Inference and extraction on every example. `jobs` > 1 fans out across
/// drawings; the output follows example order.
std::vector<PanopticPrediction> predict_all(const ModelParams& params, std::span<const TrainingExample> examples,
                                            const ModelConfig& model, const Ablation& ablation,
                                            const ClassTable& classes,
                                            double prune_threshold = kDefaultPruneThreshold, int jobs = 1);

/// Scores one prediction per example against the ground truth. Throws
/// ShapeMismatch when counts disagree.
EvalSummary score_predictions(std::span<const PanopticPrediction> predictions,
                              std::span<const TrainingExample> examples, const ClassTable& classes);

/// Runs inference and extraction on every example and scores it against
/// the ground truth. `jobs` > 1 fans out across drawings; aggregation is in
/// example order so the result does not depend on `jobs`.
EvalSummary evaluate(const ModelParams& params, std::span<const TrainingExample> examples,
                     const ModelConfig& model, const Ablation& ablation, const ClassTable& classes,
                     double prune_threshold = kDefaultPruneThreshold, int jobs = 1);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss_semantic = 0.0;
  double loss_instance = 0.0;
  double val_pq = 0.0;
  double val_sq = 0.0;
  double val_rq = 0.0;
  double val_accuracy = 0.0;
};

struct TrainState {
  ModelParams params;
  AdamState optimizer;
  int epochs_completed = 0;
  double best_pq = -1.0;
  int best_epoch = -1;
  ModelParams best_params;
};

TrainState init_train_state(const ModelConfig& model, std::uint64_t seed);

using EpochCallback = std::function<void(const EpochLog&, const TrainState&)>;

/// Batch size one, drawings visited in a per-epoch seeded order. After each
/// epoch the validation split is scored and the best-PQ parameters kept.
/// Continues from state.epochs_completed, so a restored state resumes
/// exactly where it stopped.
std::vector<EpochLog> train(TrainState& state, std::span<const TrainingExample> train_set,
                            std::span<const TrainingExample> val_set, const ModelConfig& model,
                            const Ablation& ablation, const TrainConfig& cfg,
                            const ClassTable& classes, const EpochCallback& on_epoch = {});

}  // namespace symspot
