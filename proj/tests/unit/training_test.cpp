#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "support.hpp"
#include "symspot/checkpoint.hpp"
#include "symspot/errors.hpp"
#include "symspot/synthetic.hpp"
#include "symspot/training.hpp"

using namespace symspot;

namespace {

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.stages = 2;
  cfg.heads = 2;
  cfg.width = 16;
  cfg.num_classes = 4;
  cfg.instance_hidden = {8};
  return cfg;
}

std::vector<TrainingExample> synthetic_examples(int count, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.rooms_x_max = 1;
  spec.rooms_y_max = 1;
  const auto classes = ClassTable::synthetic(spec.num_classes);
  std::vector<TrainingExample> out;
  for (int i = 0; i < count; ++i) {
    const auto rec = generate_drawing(seed, i, spec);
    out.push_back(make_example(rec.id, build_graph(rec.primitives, GraphConfig{}), classes));
  }
  return out;
}

// Three vertices: door (instance 0), door (instance 0), window (instance 1),
// plus a wall and a second door instance.
DrawingGraph labeled_graph() {
  std::vector<Primitive> prims{
      {SegmentShape{{0, 0}, {500, 0}}, 2, 0},     {SegmentShape{{0, 100}, {500, 100}}, 2, 0},
      {SegmentShape{{0, 200}, {500, 200}}, 3, 1}, {SegmentShape{{0, 300}, {500, 300}}, 1, -1},
      {SegmentShape{{0, 400}, {500, 400}}, 1, -1}, {SegmentShape{{0, 500}, {500, 500}}, 2, 7},
  };
  return build_graph(prims, GraphConfig{});
}

}  // namespace

TEST_CASE("instance weight table") {
  const InstanceWeightTable t;
  CHECK(t.lookup(true, false) == 20);
  CHECK(t.lookup(true, true) == 2);
  CHECK(t.lookup(false, false) == 1);
  CHECK(t.lookup(false, true) == 0);
}

TEST_CASE("ground-truth adjacency and weights") {
  const auto classes = ClassTable::synthetic(4);
  const auto g = labeled_graph();
  const auto z = build_gt_adjacency(g, classes);
  const auto w = instance_edge_weights(g, z, InstanceWeightTable{});
  const auto at = [&](int i, int j) { return *g.adjacency.find(i, j); };
  CHECK(z[at(0, 1)] == 1);  // same door
  CHECK(z[at(3, 4)] == 0);  // wall pieces are stuff
  CHECK(z[at(1, 2)] == 0);  // door vs window
  CHECK(z[at(4, 5)] == 0);
  CHECK(w[at(0, 1)] == 2);
  CHECK(w[at(1, 2)] == 1);
  CHECK(w[at(3, 4)] == 20);
  CHECK_THROWS_AS(instance_edge_weights(g, std::vector<double>(2), InstanceWeightTable{}), MismatchedEdgeLists);
}

TEST_CASE("semantic loss") {
  ad::Tape tape;
  Matrix onehot = Matrix::Zero(2, 3);
  onehot(0, 1) = 1;
  onehot(1, 2) = 1;
  const std::vector<int> labels{1, 2};
  CHECK(semantic_loss(tape.constant(onehot), labels).scalar() == 0.0);

  const Matrix uniform = Matrix::Constant(4, 36, 1.0 / 36);
  const std::vector<int> any{0, 5, 35, 17};
  CHECK(semantic_loss(tape.constant(uniform), any).scalar() == doctest::Approx(std::log(36.0)).epsilon(1e-12));

  Matrix hand(2, 2);
  hand << 0.8, 0.2, 0.25, 0.75;
  const std::vector<int> hl{0, 1};
  CHECK(semantic_loss(tape.constant(hand), hl).scalar() ==
        doctest::Approx(-(std::log(0.8) + std::log(0.75)) / 2).epsilon(1e-14));

  const std::vector<int> bad{0, 2};
  CHECK_THROWS_AS(semantic_loss(tape.constant(hand), bad), LabelOutOfRange);
}

TEST_CASE("instance loss") {
  ad::Tape tape;
  const std::vector<double> t{1}, w{2};
  CHECK(instance_loss(tape.constant(Matrix::Constant(1, 1, 0.5)), t, w).scalar() == std::log(2.0));

  // Zero-weight edges get exactly zero gradient.
  const std::vector<double> targets{1, 0, 1, 0}, weights{2, 20, 0, 1};
  Matrix zv(4, 1);
  zv << 0.3, 0.6, 0.9, 0.2;
  const ad::Var z = tape.parameter(zv);
  const ad::Var loss = instance_loss(z, targets, weights);
  tape.backward(loss);
  const Matrix g = tape.grad(z);
  CHECK(g(2, 0) == 0.0);
  CHECK(g(0, 0) != 0.0);
  CHECK(g(1, 0) != 0.0);

  const std::vector<double> none{0, 0, 0, 0};
  CHECK(instance_loss(tape.constant(zv), targets, none).scalar() == 0.0);
}

TEST_CASE("panoptic loss") {
  ad::Tape tape;
  const auto one = tape.constant(Matrix::Constant(1, 1, 1.0));
  const auto half = tape.constant(Matrix::Constant(1, 1, 0.5));
  CHECK(panoptic_loss(one, half, 2.0).scalar() == 2.0);
  CHECK(panoptic_loss(one, half, 0.0).scalar() == 1.0);
  CHECK(TrainConfig{}.lambda == 2.0);
}

TEST_CASE("learning rate schedule") {
  const TrainConfig cfg;
  CHECK(learning_rate(cfg, 0) == 0.001);
  CHECK(learning_rate(cfg, 19) == 0.001);
  CHECK(learning_rate(cfg, 20) == 0.0007);
  CHECK(learning_rate(cfg, 40) == 0.00049);
  CHECK(learning_rate(cfg, 39) == learning_rate(cfg, 20));
}

TEST_CASE("Adam first step and zero gradient") {
  const ModelConfig cfg = tiny_model();
  ModelParams p = init_params(cfg, 1);
  const ModelParams before = p;
  ModelParams g = zeros_like(p);
  SplitMix64 rng(3);
  for_each_param(
      [&](const std::string&, Matrix& m) {
        // Away from zero so eps/|g| stays below the tolerance.
        for (Eigen::Index k = 0; k < m.size(); ++k)
          m.data()[k] = rng.uniform(0.05, 2) * (rng.chance(0.5) ? 1.0 : -1.0);
      },
      g);
  AdamState state = make_adam_state(p);
  const TrainConfig tc;
  adam_step(p, g, state, tc, 0);
  const auto a = flatten(before), b = flatten(p), gf = flatten(g);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(std::abs((b[k] - a[k]) + 0.001 * std::copysign(1.0, gf[k])) < 1e-9);
    const double exact = -0.001 * gf[k] / (std::abs(gf[k]) + tc.adam_epsilon);
    CHECK(std::abs((b[k] - a[k]) - exact) < 1e-15);
  }

  ModelParams q = init_params(cfg, 1);
  AdamState s2 = make_adam_state(q);
  adam_step(q, zeros_like(q), s2, tc, 0);
  CHECK(flatten(q) == a);
  CHECK(s2.step == 1);
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  tc.lr = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = {};
  tc.beta2 = 1.0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = {};
  tc.lambda = -1;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = {};
  tc.weights.diff_class_adjacent = -1;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
}

TEST_CASE("model gradients pass the finite-difference check on a small model") {
  const auto classes = ClassTable::synthetic(4);
  const auto rec = tiny_drawing(4);
  const auto ex = make_example(rec.id, build_graph(rec.primitives, GraphConfig{}), classes);
  const ModelConfig cfg = tiny_model();
  for (const Ablation& ab : {Ablation::full(), Ablation::baseline(), Ablation::single_stage(1)}) {
    const auto report = check_model_gradients(init_params(cfg, 2), ex, cfg, ab, 2.0);
    CHECK(report.passed);
    CHECK(report.checked > 0);
  }
}

TEST_CASE("all gradients are finite") {
  const auto exs = synthetic_examples(2, 5);
  const ModelConfig cfg = tiny_model();
  for (const auto& ex : exs) {
    const auto lg = loss_and_gradient(init_params(cfg, 3), ex, cfg, Ablation::full(), 2.0);
    CHECK(std::isfinite(lg.loss.total));
    for (double v : flatten(lg.gradient)) CHECK(std::isfinite(v));
  }
}

TEST_CASE("loss decreases over the first epochs") {
  const auto exs = synthetic_examples(3, 11);
  const auto classes = ClassTable::synthetic(4);
  const ModelConfig cfg = tiny_model();
  TrainConfig tc;
  tc.epochs = 11;
  tc.seed = 4;
  TrainState state = init_train_state(cfg, 4);
  const auto logs = train(state, exs, exs, cfg, Ablation::full(), tc, classes);
  REQUIRE(logs.size() == 11);
  int decreasing = 0;
  for (std::size_t k = 1; k < logs.size(); ++k) {
    const double prev = logs[k - 1].loss_semantic + 2 * logs[k - 1].loss_instance;
    const double cur = logs[k].loss_semantic + 2 * logs[k].loss_instance;
    decreasing += cur < prev;
    CHECK(std::isfinite(cur));
  }
  CHECK(decreasing >= 8);
  CHECK(state.epochs_completed == 11);
  CHECK(state.best_epoch >= 0);
}

TEST_CASE("resuming from a checkpoint reproduces training bit for bit") {
  const auto exs = synthetic_examples(2, 21);
  const auto classes = ClassTable::synthetic(4);
  const ModelConfig cfg = tiny_model();
  TrainConfig tc;
  tc.seed = 9;

  TrainState straight = init_train_state(cfg, 1);
  tc.epochs = 3;
  const auto full_logs = train(straight, exs, exs, cfg, Ablation::full(), tc, classes);

  TrainState first = init_train_state(cfg, 1);
  tc.epochs = 2;
  train(first, exs, exs, cfg, Ablation::full(), tc, classes);
  const auto path = std::filesystem::temp_directory_path() / "symspot_resume_test.ckpt.json";
  save_checkpoint({cfg, Ablation::full(), first}, path);
  Checkpoint resumed = load_checkpoint(path, cfg, Ablation::full());
  std::filesystem::remove(path);
  tc.epochs = 3;
  const auto tail = train(resumed.state, exs, exs, cfg, Ablation::full(), tc, classes);
  REQUIRE(tail.size() == 1);
  CHECK(tail[0].loss_semantic == full_logs[2].loss_semantic);
  CHECK(tail[0].loss_instance == full_logs[2].loss_instance);
  CHECK(flatten(resumed.state.params) == flatten(straight.params));
  CHECK(flatten(resumed.state.optimizer.second_moment) == flatten(straight.optimizer.second_moment));
}

TEST_CASE("evaluation does not depend on the worker count") {
  const auto exs = synthetic_examples(4, 2);
  const auto classes = ClassTable::synthetic(4);
  const ModelConfig cfg = tiny_model();
  const auto p = init_params(cfg, 6);
  const auto a = evaluate(p, exs, cfg, Ablation::full(), classes, 0.7, 1);
  const auto b = evaluate(p, exs, cfg, Ablation::full(), classes, 0.7, 3);
  CHECK(a.panoptic.overall.pq() == b.panoptic.overall.pq());
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.ap.map == b.ap.map);
  CHECK(a.f1.f1 == b.f1.f1);
}
