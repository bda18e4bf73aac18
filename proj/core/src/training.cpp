#include "symspot/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "symspot/errors.hpp"
#include "symspot/extended_loss.hpp"
#include "symspot/rng.hpp"

namespace symspot {

double InstanceWeightTable::lookup(bool same_class, bool same_instance) const {
  if (same_class) return same_instance ? same_class_same_instance : same_class_diff_instance;
  return same_instance ? diff_class_adjacent : diff_class_not_adjacent;
}

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("learning rate must be positive");
  if (!(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1))
    throw ConfigError("Adam betas must lie in (0, 1)");
  if (!(lambda >= 0)) throw ConfigError("lambda must be non-negative");
  if (decay_every < 1) throw ConfigError("decay interval must be at least one epoch");
  if (!(decay > 0)) throw ConfigError("decay rate must be positive");
  if (epochs < 0) throw ConfigError("epoch count must be non-negative");
  const auto& w = weights;
  if (w.same_class_diff_instance < 0 || w.same_class_same_instance < 0 ||
      w.diff_class_not_adjacent < 0 || w.diff_class_adjacent < 0)
    throw ConfigError("instance loss weights must be non-negative");
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  return cfg.lr * std::pow(cfg.decay, epoch / cfg.decay_every);
}

AdamState make_adam_state(const ModelParams& params) {
  return AdamState{zeros_like(params), zeros_like(params), 0};
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const TrainConfig& cfg, int epoch) {
  ++state.step;
  const double lr = learning_rate(cfg, epoch);
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const double b1 = cfg.beta1, b2 = cfg.beta2, eps = cfg.adam_epsilon;
  for_each_param(
      [&](const std::string& name, Matrix& p, const Matrix& g, Matrix& m, Matrix& v) {
        if (p.rows() != g.rows() || p.cols() != g.cols())
          throw ShapeMismatch("gradient shape differs for " + name);
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
        p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
      },
      params, grads, state.first_moment, state.second_moment);
}

std::vector<double> build_gt_adjacency(const DrawingGraph& graph, const ClassTable& classes) {
  const auto& adj = graph.adjacency;
  std::vector<double> z(adj.num_edges(), 0.0);
  for (std::size_t e = 0; e < adj.num_edges(); ++e) {
    const auto& a = graph.vertices[adj.source[e]];
    const auto& b = graph.vertices[adj.target[e]];
    if (classes.is_thing(a.label) && a.label == b.label && a.instance >= 0 && a.instance == b.instance)
      z[e] = 1.0;
  }
  return z;
}

std::vector<double> instance_edge_weights(const DrawingGraph& graph, std::span<const double> z_target,
                                          const InstanceWeightTable& table) {
  const auto& adj = graph.adjacency;
  if (z_target.size() != adj.num_edges())
    throw MismatchedEdgeLists("Z^gt is not aligned with the edge list");
  std::vector<double> w(adj.num_edges());
  for (std::size_t e = 0; e < adj.num_edges(); ++e) {
    const bool same_class = graph.vertices[adj.source[e]].label == graph.vertices[adj.target[e]].label;
    w[e] = table.lookup(same_class, z_target[e] > 0.5);
  }
  return w;
}

ad::Var semantic_loss(ad::Var probs, std::span<const int> labels) { return ad::nll_rows(probs, labels); }

ad::Var instance_loss(ad::Var adjacency, std::span<const double> z_target,
                      std::span<const double> weights) {
  return ad::weighted_bce(adjacency, z_target, weights);
}

ad::Var panoptic_loss(ad::Var semantic, ad::Var instance, double lambda) {
  return ad::add(semantic, ad::scale(instance, lambda));
}

TrainingExample make_example(std::string id, DrawingGraph graph, const ClassTable& classes,
                             const InstanceWeightTable& table) {
  TrainingExample ex;
  ex.id = std::move(id);
  ex.labels = graph.labels();
  for (int l : ex.labels)
    if (!classes.contains(l)) throw LabelOutOfRange("label " + std::to_string(l) + " not in class table");
  ex.z_target = build_gt_adjacency(graph, classes);
  ex.weights = instance_edge_weights(graph, ex.z_target, table);
  ex.graph = std::move(graph);
  return ex;
}

LossAndGradient loss_and_gradient(const ModelParams& params, const TrainingExample& example,
                                  const ModelConfig& model, const Ablation& ablation, double lambda,
                                  bool want_gradient) {
  ad::Tape tape;
  const BoundParams bound = bind(tape, params);
  const ForwardVars fw = forward(tape, bound, example.graph, model, ablation);
  const ad::Var sem = semantic_loss(fw.semantic.probs, example.labels);
  const ad::Var ins = instance_loss(fw.adjacency, example.z_target, example.weights);
  const ad::Var total = panoptic_loss(sem, ins, lambda);
  LossAndGradient out;
  out.loss = {sem.scalar(), ins.scalar(), total.scalar()};
  out.branch_signature = tape.branch_signature();
  if (want_gradient) {
    tape.backward(total);
    out.gradient = gradients(tape, bound);
  }
  return out;
}

ad::GradCheckReport check_model_gradients(const ModelParams& params, const TrainingExample& example,
                                          const ModelConfig& model, const Ablation& ablation, double lambda,
                                          double h, double rel_tol) {
  ModelParams work = params;
  ExtendedLoss reference(example, model, ablation, lambda);
  const std::vector<double> start = flatten(params);
  const ad::ProbeFunction probe = [&](std::span<const double> flat, bool want_gradient) {
    unflatten(flat, work);
    ad::Probe out;
    if (want_gradient) {
      out.value = reference.evaluate(work, &out.signature);
      out.gradient = flatten(loss_and_gradient(work, example, model, ablation, lambda).gradient);
      return out;
    }
    // Probes move one coordinate away from the start point.
    const auto changed = std::mismatch(flat.begin(), flat.end(), start.begin()).first - flat.begin();
    const auto index = static_cast<std::size_t>(changed) == flat.size() ? 0 : static_cast<std::size_t>(changed);
    out.value = reference.evaluate_changed(work, reference.block_of(index), &out.signature);
    return out;
  };
  return ad::finite_difference_check(probe, start, h, rel_tol);
}

std::vector<PanopticPrediction> predict_all(const ModelParams& params, std::span<const TrainingExample> examples,
                                            const ModelConfig& model, const Ablation& ablation,
                                            const ClassTable& classes, double prune_threshold, int jobs) {
  std::vector<PanopticPrediction> out(examples.size());
  const auto run = [&](std::size_t i) {
    const ForwardOutput f = predict(params, examples[i].graph, model, ablation);
    out[i] = extract(f.semantic_probs, f.adjacency, examples[i].graph, classes, prune_threshold);
  };
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), examples.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < examples.size(); ++i) run(i);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < examples.size(); i += workers) run(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

EvalSummary score_predictions(std::span<const PanopticPrediction> predictions,
                              std::span<const TrainingExample> examples, const ClassTable& classes) {
  if (predictions.size() != examples.size())
    throw ShapeMismatch("score_predictions: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(examples.size()) + " drawings");
  EvalSummary summary;
  F1Accumulator f1;
  std::vector<DetectionInput> detections;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    const auto& pred = predictions[i];
    if (pred.vertex_class.size() != ex.labels.size())
      throw ShapeMismatch("score_predictions: prediction for " + ex.id + " has " +
                          std::to_string(pred.vertex_class.size()) + " vertices, expected " +
                          std::to_string(ex.labels.size()));
    const auto lengths = ex.graph.lengths_mm();
    const PanopticPrediction gt = ground_truth_panoptic(ex.graph, classes);
    summary.panoptic += panoptic_quality(pred, gt, lengths);
    f1.add(pred.vertex_class, ex.labels, lengths, classes.background());
    for (std::size_t v = 0; v < ex.labels.size(); ++v) correct += pred.vertex_class[v] == ex.labels[v];
    summary.vertices += ex.labels.size();
    detections.push_back({pred.instances, gt.instances});
  }
  summary.f1 = f1.result();
  summary.ap = detection_ap(detections);
  summary.accuracy = summary.vertices ? static_cast<double>(correct) / summary.vertices : 0.0;
  return summary;
}

EvalSummary evaluate(const ModelParams& params, std::span<const TrainingExample> examples,
                     const ModelConfig& model, const Ablation& ablation, const ClassTable& classes,
                     double prune_threshold, int jobs) {
  const auto preds = predict_all(params, examples, model, ablation, classes, prune_threshold, jobs);
  return score_predictions(preds, examples, classes);
}

TrainState init_train_state(const ModelConfig& model, std::uint64_t seed) {
  TrainState s;
  s.params = init_params(model, seed);
  s.optimizer = make_adam_state(s.params);
  s.best_params = s.params;
  return s;
}

std::vector<EpochLog> train(TrainState& state, std::span<const TrainingExample> train_set,
                            std::span<const TrainingExample> val_set, const ModelConfig& model,
                            const Ablation& ablation, const TrainConfig& cfg,
                            const ClassTable& classes, const EpochCallback& on_epoch) {
  cfg.validate();
  model.validate();
  if (train_set.empty()) throw ConfigError("training split is empty");
  std::vector<EpochLog> logs;
  std::vector<std::size_t> order(train_set.size());
  for (int epoch = state.epochs_completed; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    auto rng = SplitMix64::keyed(cfg.seed, static_cast<std::uint64_t>(epoch));
    rng.shuffle(std::span<std::size_t>(order));
    EpochLog log;
    log.epoch = epoch;
    log.lr = learning_rate(cfg, epoch);
    for (std::size_t idx : order) {
      const auto step = loss_and_gradient(state.params, train_set[idx], model, ablation, cfg.lambda);
      adam_step(state.params, step.gradient, state.optimizer, cfg, epoch);
      log.loss_semantic += step.loss.semantic;
      log.loss_instance += step.loss.instance;
    }
    log.loss_semantic /= static_cast<double>(train_set.size());
    log.loss_instance /= static_cast<double>(train_set.size());
    state.epochs_completed = epoch + 1;

    bool stop = false;
    if (!val_set.empty()) {
      const EvalSummary val = evaluate(state.params, val_set, model, ablation, classes);
      log.val_pq = val.panoptic.overall.pq();
      log.val_sq = val.panoptic.overall.sq();
      log.val_rq = val.panoptic.overall.rq();
      log.val_accuracy = val.accuracy;
      if (log.val_pq > state.best_pq) {
        state.best_pq = log.val_pq;
        state.best_epoch = epoch;
        state.best_params = state.params;
      }
      stop = cfg.stop_at_pq && log.val_pq >= *cfg.stop_at_pq &&
             (!cfg.stop_at_accuracy || log.val_accuracy >= *cfg.stop_at_accuracy);
    } else {
      state.best_params = state.params;
      state.best_epoch = epoch;
    }
    logs.push_back(log);
    if (on_epoch) on_epoch(log, state);
    if (stop) break;
  }
  return logs;
}

}  // namespace symspot
