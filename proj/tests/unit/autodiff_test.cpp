#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "symspot/autodiff.hpp"
#include "symspot/errors.hpp"
#include "symspot/gradcheck.hpp"

using namespace symspot;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

Matrix random_matrix(SplitMix64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.uniform(-scale, scale);
  return m;
}

// A ring plus random chords. Every vertex has at least two neighbors, so no
// softmax row is a constant 1 with an identically zero gradient.
Adjacency random_adjacency(SplitMix64& rng, int n, double p) {
  std::vector<std::vector<int>> lists(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (j == i + 1 || (i == 0 && j == n - 1) || rng.chance(p)) {
        lists[static_cast<std::size_t>(i)].push_back(j);
        lists[static_cast<std::size_t>(j)].push_back(i);
      }
  return Adjacency::from_neighbor_lists(std::move(lists));
}

/// Finite-difference check of an op. `build` maps the parameter Vars to an
/// output of any shape; a fixed random elementwise readout reduces it to a scalar.
template <class Build>
ad::GradCheckReport check_op(std::vector<Matrix> inputs, Build build, std::uint64_t seed = 1) {
  std::size_t total = 0;
  for (const auto& m : inputs) total += static_cast<std::size_t>(m.size());
  std::vector<double> flat;
  for (const auto& m : inputs) flat.insert(flat.end(), m.data(), m.data() + m.size());
  Matrix readout;
  const ad::ProbeFunction probe = [&](std::span<const double> x, bool want_gradient) {
    Tape tape;
    std::vector<Var> vars;
    std::size_t at = 0;
    for (const auto& m : inputs) {
      Matrix v(m.rows(), m.cols());
      std::copy(x.begin() + static_cast<std::ptrdiff_t>(at), x.begin() + static_cast<std::ptrdiff_t>(at + v.size()),
                v.data());
      at += static_cast<std::size_t>(v.size());
      vars.push_back(tape.parameter(std::move(v)));
    }
    const Var out = build(tape, vars);
    if (readout.size() == 0) {
      SplitMix64 rng(seed);
      readout = random_matrix(rng, out.rows(), out.cols());
    }
    // sum(out .* readout); the weights differ per entry so row-normalized
    // outputs still give a non-constant scalar.
    const Matrix& w = readout;
    const Var loss = tape.record(Matrix::Constant(1, 1, tape.value(out).cwiseProduct(w).sum()), {out},
                                 [out, &w](Tape& t, std::size_t self) { t.accumulate(out, w * t.upstream(self)(0, 0)); });
    ad::Probe p;
    p.value = loss.scalar();
    p.signature = tape.branch_signature();
    if (want_gradient) {
      tape.backward(loss);
      for (const Var& v : vars) {
        const Matrix g = tape.grad(v);
        p.gradient.insert(p.gradient.end(), g.data(), g.data() + g.size());
      }
    }
    return p;
  };
  auto report = ad::finite_difference_check(probe, flat, 1e-6, 1e-6);
  CHECK(report.rel_errors.size() == total);
  if (!report.passed)
    MESSAGE("worst ", report.worst_index, " rel ", report.max_rel_error, " ad ", report.worst_analytic, " fd ",
            report.worst_numeric);
  return report;
}

}  // namespace

TEST_CASE("finite difference checker on a quadratic") {
  const ad::ProbeFunction f = [](std::span<const double> x, bool want) {
    ad::Probe p;
    p.value = x[0] * x[0];
    if (want) p.gradient = {2 * x[0]};
    return p;
  };
  const double start[] = {3.0};
  const auto r = ad::finite_difference_check(f, start, 1e-5, 1e-9);
  CHECK(r.passed);
  CHECK(r.worst_analytic == 6.0);
  CHECK(r.worst_numeric == doctest::Approx(6.0).epsilon(1e-9));
}

TEST_CASE("finite difference checker skips a relu kink") {
  const ad::ProbeFunction f = [](std::span<const double> x, bool want) {
    Tape tape;
    const Var w = tape.parameter(Matrix::Constant(1, 1, x[0]));
    const Var y = ad::sum(ad::relu(w));
    ad::Probe p;
    p.value = y.scalar();
    p.signature = tape.branch_signature();
    if (want) {
      tape.backward(y);
      p.gradient = {tape.grad(w)(0, 0)};
    }
    return p;
  };
  const double at_kink[] = {0.0};
  const auto r = ad::finite_difference_check(f, at_kink, 1e-5, 1e-6);
  CHECK(r.skipped_kinks == 1);
  CHECK(r.checked == 0);
  CHECK(std::isnan(r.rel_errors[0]));
}

TEST_CASE("dense op gradients match finite differences") {
  SplitMix64 rng(17);
  const Matrix a = random_matrix(rng, 4, 3), b = random_matrix(rng, 3, 5), c = random_matrix(rng, 4, 3);
  const Matrix row = random_matrix(rng, 1, 3);

  SUBCASE("matmul") { CHECK(check_op({a, b}, [](Tape&, auto& v) { return ad::matmul(v[0], v[1]); }).passed); }
  SUBCASE("add and scale") {
    CHECK(check_op({a, c}, [](Tape&, auto& v) { return ad::scale(ad::add(v[0], v[1]), -1.7); }).passed);
  }
  SUBCASE("add_row") { CHECK(check_op({a, row}, [](Tape&, auto& v) { return ad::add_row(v[0], v[1]); }).passed); }
  SUBCASE("concat and slice") {
    CHECK(check_op({a, c}, [](Tape&, auto& v) {
            const Var parts[] = {v[0], v[1]};
            return ad::slice_rows(ad::concat_cols(parts), 1, 2);
          }).passed);
  }
  SUBCASE("relu") {
    const auto r = check_op({a}, [](Tape&, auto& v) { return ad::relu(v[0]); });
    CHECK(r.passed);
    CHECK(r.checked == 12);
  }
  SUBCASE("sigmoid and softmax") {
    CHECK(check_op({a}, [](Tape&, auto& v) { return ad::softmax_rows(ad::sigmoid(v[0])); }).passed);
  }
  SUBCASE("gather") {
    const std::vector<int> idx{3, 0, 0, 2, 1, 3};
    CHECK(check_op({a}, [&](Tape&, auto& v) { return ad::gather_rows(v[0], idx); }).passed);
  }
  SUBCASE("mean") { CHECK(check_op({a}, [](Tape&, auto& v) { return ad::mean(v[0]); }).passed); }
  SUBCASE("nll") {
    const std::vector<int> labels{0, 2, 1, 2};
    CHECK(check_op({a}, [&](Tape&, auto& v) { return ad::nll_rows(ad::softmax_rows(v[0]), labels); }).passed);
  }
  SUBCASE("weighted bce") {
    const std::vector<double> t{1, 0, 1, 0}, w{2, 20, 0, 1};
    CHECK(check_op({random_matrix(rng, 4, 1)},
                   [&](Tape&, auto& v) { return ad::weighted_bce(ad::sigmoid(v[0]), t, w); })
              .passed);
  }
}

TEST_CASE("sparse op gradients match finite differences on random patterns") {
  SplitMix64 rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 3 + static_cast<int>(rng.below(8));
    const Adjacency adj = random_adjacency(rng, n, 0.4);
    const auto e = static_cast<Eigen::Index>(adj.num_edges());
    if (e == 0) continue;
    const int heads = 2;
    const Matrix scores = random_matrix(rng, e, heads, 2.0);
    const Matrix values = random_matrix(rng, n, 4);
    const Matrix q = random_matrix(rng, n, 4), k = random_matrix(rng, n, 4);
    CHECK(check_op({scores}, [&](Tape&, auto& v) { return ad::row_softmax_over_neighbors(v[0], adj); }).passed);
    CHECK(check_op({scores, values},
                   [&](Tape&, auto& v) {
                     return ad::neighbor_aggregate(ad::row_softmax_over_neighbors(v[0], adj), v[1], adj, heads);
                   })
              .passed);
    CHECK(check_op({q, k}, [&](Tape&, auto& v) { return ad::edge_head_dot(v[0], v[1], adj, heads); }).passed);
    CHECK(check_op({random_matrix(rng, e, 3)}, [&](Tape&, auto& v) { return ad::segment_max_pool(v[0], adj); })
              .passed);
  }
}

TEST_CASE("neighbor softmax semantics") {
  // 0 - 1, 0 - 2, 0 - 3; vertex 4 isolated.
  const Adjacency adj = Adjacency::from_neighbor_lists({{1, 2, 3}, {0}, {0}, {0}, {}});
  Tape tape;
  const Var w = ad::row_softmax_over_neighbors(tape.constant(Matrix::Zero(6, 2)), adj);
  for (int e = 0; e < 3; ++e) CHECK(w.value()(e, 0) == doctest::Approx(1.0 / 3));
  for (int e = 3; e < 6; ++e) CHECK(w.value()(e, 1) == 1.0);

  SplitMix64 rng(2);
  const Adjacency big = random_adjacency(rng, 30, 0.2);
  const auto e = static_cast<Eigen::Index>(big.num_edges());
  const Var s = ad::row_softmax_over_neighbors(tape.constant(random_matrix(rng, e, 3, 20.0)), big);
  for (std::size_t v = 0; v < big.num_vertices(); ++v) {
    if (big.degree(v) == 0) continue;
    for (int h = 0; h < 3; ++h) {
      double total = 0;
      for (std::size_t k = big.offsets[v]; k < big.offsets[v + 1]; ++k) total += s.value()(static_cast<Eigen::Index>(k), h);
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
  }

  const Var agg = ad::neighbor_aggregate(w, tape.constant(Matrix::Ones(5, 2)), adj, 2);
  CHECK(agg.value().row(4).isZero());
}

TEST_CASE("segment max pool routes gradient to one edge") {
  const Adjacency adj = Adjacency::from_neighbor_lists({{1, 2, 3}, {0}, {0}, {0}, {}});
  Tape tape;
  Matrix vals(6, 1);
  vals << -1, 4, 2, 7, 7, 7;
  const Var x = tape.parameter(vals);
  const Var pooled = ad::segment_max_pool(x, adj);
  CHECK(pooled.value()(0, 0) == 4);
  CHECK(pooled.value()(4, 0) == 0);
  tape.backward(ad::sum(pooled));
  const Matrix g = tape.grad(x);
  CHECK(g(0, 0) == 0);
  CHECK(g(1, 0) == 1);
  CHECK(g(2, 0) == 0);

  // Ties go to the lowest edge index.
  Tape t2;
  Matrix tie(6, 1);
  tie << 5, 5, 5, 1, 1, 1;
  const Var y = t2.parameter(tie);
  t2.backward(ad::sum(ad::segment_max_pool(y, adj)));
  const Matrix gy = t2.grad(y);
  CHECK(gy(0, 0) == 1);
  CHECK(gy(1, 0) == 0);
  CHECK(gy(2, 0) == 0);
}

TEST_CASE("mlp forward") {
  Tape tape;
  SplitMix64 rng(4);
  const Matrix x = random_matrix(rng, 5, 3);
  ad::MlpT<Var> identity;
  identity.layers.push_back({tape.constant(Matrix::Identity(3, 3)), tape.constant(Matrix::Zero(1, 3))});
  CHECK(ad::mlp_forward(tape.constant(x), identity).value() == x);

  ad::MlpT<Var> constant;
  Matrix b(1, 2);
  b << 0.5, -2;
  constant.layers.push_back({tape.constant(Matrix::Zero(3, 2)), tape.constant(b)});
  const Matrix out = ad::mlp_forward(tape.constant(x), constant).value();
  for (Eigen::Index r = 0; r < 5; ++r) CHECK(out.row(r) == b);

  const Matrix w1 = random_matrix(rng, 3, 4), b1 = random_matrix(rng, 1, 4);
  const Matrix w2 = random_matrix(rng, 4, 2), b2 = random_matrix(rng, 1, 2);
  ad::MlpT<Var> two;
  two.layers.push_back({tape.constant(w1), tape.constant(b1)});
  two.layers.push_back({tape.constant(w2), tape.constant(b2)});
  const Matrix y = ad::mlp_forward(tape.constant(x), two).value();
  for (Eigen::Index r = 0; r < 5; ++r)
    for (Eigen::Index c = 0; c < 2; ++c) {
      double acc = b2(0, c);
      for (Eigen::Index h = 0; h < 4; ++h) {
        double hidden = b1(0, h);
        for (Eigen::Index k = 0; k < 3; ++k) hidden += x(r, k) * w1(k, h);
        acc += std::max(hidden, 0.0) * w2(h, c);
      }
      CHECK(y(r, c) == doctest::Approx(acc).epsilon(1e-14));
    }
}

TEST_CASE("backward basics") {
  Tape tape;
  Matrix xv(3, 1);
  xv << 1, -2, 5;
  const Var w = tape.parameter(Matrix::Constant(2, 3, 0.3));
  const Var loss = ad::sum(ad::matmul(w, tape.constant(xv)));
  tape.backward(loss);
  const Matrix g = tape.grad(w);
  for (Eigen::Index r = 0; r < 2; ++r) CHECK(g.row(r) == xv.transpose());

  Tape t2;
  const Var z = t2.parameter(Matrix::Zero(1, 1));
  const Var s = ad::sigmoid(z);
  t2.backward(s);
  CHECK(t2.grad(z)(0, 0) == 0.25);

  Tape t3;
  const Var m = t3.parameter(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(t3.backward(m), NonScalarLoss);
  CHECK_THROWS_AS(t3.constant(Matrix::Constant(1, 1, NAN)), NonFiniteValue);
  CHECK_THROWS_AS(ad::matmul(m, t3.constant(Matrix::Ones(3, 1))), ShapeMismatch);
  CHECK_THROWS_AS(ad::add(m, t3.constant(Matrix::Ones(3, 1))), ShapeMismatch);
}

TEST_CASE("gradients are bit-identical across replays") {
  SplitMix64 rng(9);
  const Adjacency adj = random_adjacency(rng, 12, 0.3);
  const Matrix feats = random_matrix(rng, 12, 4);
  const Matrix scores = random_matrix(rng, static_cast<Eigen::Index>(adj.num_edges()), 2);
  const auto run = [&] {
    Tape tape;
    const Var f = tape.parameter(feats);
    const Var s = tape.parameter(scores);
    const Var agg = ad::neighbor_aggregate(ad::row_softmax_over_neighbors(s, adj), f, adj, 2);
    tape.backward(ad::sum(ad::sigmoid(agg)));
    return std::pair{tape.grad(f), tape.grad(s)};
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}
