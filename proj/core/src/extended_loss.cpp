#include "symspot/extended_loss.hpp"

#include <algorithm>
#include <cmath>

#include "symspot/errors.hpp"

namespace symspot {
namespace {

using Real = long double;
using RMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

struct Hash {
  std::uint64_t value = kFnvOffset;
  void note(std::uint64_t bits) { value = (value ^ bits) * kFnvPrime; }
};

RMat affine(const RMat& x, const ad::DenseT<Matrix>& layer) {
  RMat y = x * layer.weight.cast<Real>();
  y.rowwise() += layer.bias.cast<Real>().row(0);
  return y;
}

void relu_in_place(RMat& y, Hash& hash) {
  std::uint64_t h = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const bool on = y.data()[i] > 0;
    h = h * 31 + (on ? 2 : 1);
    if (!on) y.data()[i] = 0;
  }
  hash.note(h);
}

RMat mlp(RMat x, const ad::MlpT<Matrix>& m, Hash& hash) {
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    x = affine(x, m.layers[l]);
    if (l + 1 < m.layers.size()) relu_in_place(x, hash);
  }
  return x;
}

Real stable_sigmoid(Real v) {
  if (v >= 0) return 1 / (1 + std::exp(-v));
  const Real e = std::exp(v);
  return e / (1 + e);
}

}  // namespace

ExtendedLoss::ExtendedLoss(const TrainingExample& example, const ModelConfig& model, const Ablation& ablation,
                           double lambda)
    : example_(example),
      model_(model),
      ablation_(ablation),
      lambda_(lambda),
      vertex_in_(vertex_feature_matrix(example.graph).cast<Real>()),
      edge_in_(edge_feature_matrix(example.graph).cast<Real>()) {
  model.validate();
  ablation.validate(model);
  const ModelParams shape = zeros_like(init_params(model, 0));
  std::size_t at = 0;
  std::string current;
  for_each_param(
      [&](const std::string& name, const Matrix& m) {
        std::string block = name.substr(0, name.find('.'));
        if (block == "stage") block = name.substr(0, name.find('.', 6));
        if (block != current && !current.empty()) block_end_.push_back(at);
        current = block;
        at += static_cast<std::size_t>(m.size());
      },
      shape);
  block_end_.push_back(at);
  if (block_end_.size() != static_cast<std::size_t>(model.stages) + 5)
    throw ShapeMismatch("unexpected parameter block layout");
}

int ExtendedLoss::block_of(std::size_t flat_index) const {
  const auto it = std::upper_bound(block_end_.begin(), block_end_.end(), flat_index);
  if (it == block_end_.end()) throw ShapeMismatch("parameter index out of range");
  return static_cast<int>(it - block_end_.begin());
}

void ExtendedLoss::run(const ModelParams& params, int from_block, State& st) const {
  const DrawingGraph& g = example_.graph;
  const Adjacency& adj = g.adjacency;
  const auto n = static_cast<Eigen::Index>(g.num_vertices());
  const auto m = static_cast<Eigen::Index>(g.num_edges());
  const int heads = model_.heads;
  const Eigen::Index d = model_.head_dim();
  const int stages = model_.stages;
  const int semantic_block = 3 + stages, instance_block = 4 + stages;
  st.signatures.resize(static_cast<std::size_t>(instance_block) + 1, kFnvOffset);

  if (from_block <= 1) {
    Hash hv, he;
    const RMat v_hat = mlp(vertex_in_, params.vertex_embed, hv);
    const RMat e_hat = mlp(edge_in_, params.edge_embed, he);
    RMat pooled = RMat::Zero(n, e_hat.cols());
    std::uint64_t winners = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto lo = static_cast<Eigen::Index>(adj.offsets[i]), hi = static_cast<Eigen::Index>(adj.offsets[i + 1]);
      if (lo == hi) continue;
      for (Eigen::Index c = 0; c < e_hat.cols(); ++c) {
        Eigen::Index best = lo;
        for (Eigen::Index e = lo + 1; e < hi; ++e)
          if (e_hat(e, c) > e_hat(best, c)) best = e;
        pooled(i, c) = e_hat(best, c);
        winners = winners * kFnvPrime + static_cast<std::uint64_t>(best);
      }
    }
    he.note(winners);
    st.embed.resize(n, v_hat.cols() + pooled.cols());
    st.embed << v_hat, pooled;
    st.signatures[0] = hv.value;
    st.signatures[1] = he.value;
  }
  if (from_block <= 2) {
    Hash hr;
    st.rse = ablation_.rse ? mlp(edge_in_, params.rse, hr) : RMat::Zero(m, heads);
    st.signatures[2] = hr.value;
  }
  st.features.resize(static_cast<std::size_t>(stages));
  st.scores.resize(static_cast<std::size_t>(stages));
  for (int s = std::max(0, from_block - 3); s < stages && from_block < semantic_block; ++s) {
    Hash hs;
    const auto& stage = params.stages[static_cast<std::size_t>(s)];
    const RMat& h = s == 0 ? st.embed : st.features[static_cast<std::size_t>(s) - 1];
    const RMat q = h * stage.query.cast<Real>();
    const RMat k = h * stage.key.cast<Real>();
    const RMat v = h * stage.value.cast<Real>();
    RMat scores(m, heads);
    for (Eigen::Index e = 0; e < m; ++e)
      for (int hd = 0; hd < heads; ++hd)
        scores(e, hd) = q.row(adj.source[e]).segment(hd * d, d).dot(k.row(adj.target[e]).segment(hd * d, d));
    if (model_.scaled_attention) scores /= std::sqrt(static_cast<Real>(d));
    const RMat biased = scores + st.rse;
    RMat agg = RMat::Zero(n, h.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto lo = static_cast<Eigen::Index>(adj.offsets[i]), hi = static_cast<Eigen::Index>(adj.offsets[i + 1]);
      if (lo == hi) continue;
      for (int hd = 0; hd < heads; ++hd) {
        Real top = biased(lo, hd);
        for (Eigen::Index e = lo + 1; e < hi; ++e) top = std::max(top, biased(e, hd));
        Real total = 0;
        for (Eigen::Index e = lo; e < hi; ++e) total += std::exp(biased(e, hd) - top);
        for (Eigen::Index e = lo; e < hi; ++e)
          agg.row(i).segment(hd * d, d) +=
              (std::exp(biased(e, hd) - top) / total) * v.row(adj.target[e]).segment(hd * d, d);
      }
    }
    st.features[static_cast<std::size_t>(s)] = h + mlp(agg, stage.post, hs);
    st.scores[static_cast<std::size_t>(s)] = std::move(scores);
    st.signatures[static_cast<std::size_t>(3 + s)] = hs.value;
  }
  const RMat& final_features = st.features.back();

  if (from_block != instance_block) {
    Hash hs;
    const RMat logits = mlp(final_features, params.semantic_head, hs);
    Real sem = 0;
    std::uint64_t clamped = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Real top = logits.row(i).maxCoeff();
      const Real norm = (logits.row(i).array() - top).exp().sum();
      const int label = example_.labels[static_cast<std::size_t>(i)];
      if (label < 0 || label >= logits.cols()) throw LabelOutOfRange("label outside the class range");
      const Real p = std::exp(logits(i, label) - top) / norm;
      if (p < 1e-300L) clamped = clamped * 31 + static_cast<std::uint64_t>(i) + 1;
      sem -= std::log(std::max(p, static_cast<Real>(1e-300L)));
    }
    hs.note(clamped);
    st.semantic = sem / static_cast<Real>(n);
    st.signatures[static_cast<std::size_t>(semantic_block)] = hs.value;
  }

  if (from_block != semantic_block) {
    Hash hi;
    RMat cee = RMat::Zero(m, heads);
    if (ablation_.cee == CeeMode::Sum)
      for (const auto& s : st.scores) cee += s;
    else if (ablation_.cee == CeeMode::SingleStage)
      cee = st.scores[static_cast<std::size_t>(ablation_.cee_stage - 1)];
    // First layer split into edge, source and target blocks of the weight.
    const auto& layers = params.instance_head.layers;
    const RMat w1 = layers.front().weight.cast<Real>();
    const Eigen::Index width = final_features.cols();
    const RMat from_source = final_features * w1.middleRows(heads, width);
    const RMat from_target = final_features * w1.middleRows(heads + width, width);
    RMat x = cee * w1.topRows(heads);
    for (Eigen::Index e = 0; e < m; ++e) x.row(e) += from_source.row(adj.source[e]) + from_target.row(adj.target[e]);
    x.rowwise() += layers.front().bias.cast<Real>().row(0);
    for (std::size_t l = 1; l < layers.size(); ++l) {
      relu_in_place(x, hi);
      x = affine(x, layers[l]);
    }
    Real wsum = 0, ins = 0;
    std::uint64_t clamped = 0;
    const Real floor = 1e-12L;
    for (Eigen::Index e = 0; e < m; ++e) {
      const Real w = example_.weights[static_cast<std::size_t>(e)];
      if (w == 0) continue;
      const Real z = stable_sigmoid(x(e, 0));
      const Real zc = std::clamp(z, floor, 1 - floor);
      if (zc != z) clamped = clamped * 31 + static_cast<std::uint64_t>(e) + 1;
      const Real t = example_.z_target[static_cast<std::size_t>(e)];
      wsum += w;
      ins -= w * (t * std::log(zc) + (1 - t) * std::log(1 - zc));
    }
    hi.note(clamped);
    st.instance = wsum > 0 ? ins / wsum : 0;
    st.signatures[static_cast<std::size_t>(instance_block)] = hi.value;
  }
}

std::uint64_t ExtendedLoss::combined(const State& st) const {
  Hash h;
  for (std::uint64_t s : st.signatures) h.note(s);
  return h.value;
}

long double ExtendedLoss::evaluate(const ModelParams& params, std::uint64_t* signature) {
  State st;
  run(params, 0, st);
  const Real loss = st.semantic + static_cast<Real>(lambda_) * st.instance;
  if (signature) *signature = combined(st);
  base_ = std::move(st);
  return loss;
}

long double ExtendedLoss::evaluate_changed(const ModelParams& params, int block, std::uint64_t* signature) const {
  if (!base_) throw std::logic_error("evaluate_changed needs a prior evaluate");
  State st = *base_;
  run(params, block, st);
  if (signature) *signature = combined(st);
  return st.semantic + static_cast<Real>(lambda_) * st.instance;
}

long double extended_precision_loss(const ModelParams& params, const TrainingExample& example,
                                    const ModelConfig& model, const Ablation& ablation, double lambda,
                                    std::uint64_t* signature) {
  ExtendedLoss loss(example, model, ablation, lambda);
  return loss.evaluate(params, signature);
}

}  // namespace symspot
