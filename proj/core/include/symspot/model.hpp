#pragma once

// Graph attention network for panoptic symbol spotting: input embedding,
// relative spatial encoding (RSE), cascaded attention stages, semantic head,
// cascaded edge encoding (CEE) and the adjacency (instance) head.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "symspot/autodiff.hpp"
#include "symspot/graph.hpp"

namespace symspot {

using ad::Matrix;

struct ModelConfig {
  int stages = 8;
  int heads = 8;
  int width = 128;
  int num_classes = 36;
  std::vector<int> instance_hidden{128, 32};
  /// Divide attention scores by sqrt(head_dim). Off by default: scores are
  /// the raw q.k products.
  bool scaled_attention = false;

  int head_dim() const { return width / heads; }
  int embed_width() const { return width / 2; }
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class CeeMode { Off, Sum, SingleStage };

/// Switches for the ablation configurations. With `rse` off the attention
/// bias is zero; with CEE off the instance head sees zeros in place of the
/// cascaded scores.
struct Ablation {
  bool rse = true;
  CeeMode cee = CeeMode::Sum;
  int cee_stage = 0;  // 1-based stage index for SingleStage

  static Ablation full() { return {}; }
  static Ablation baseline() { return {false, CeeMode::Off, 0}; }
  static Ablation rse_only() { return {true, CeeMode::Off, 0}; }
  static Ablation cee_only() { return {false, CeeMode::Sum, 0}; }
  static Ablation single_stage(int stage) { return {true, CeeMode::SingleStage, stage}; }

  std::string name() const;
  void validate(const ModelConfig& cfg) const;
  friend bool operator==(const Ablation&, const Ablation&) = default;
};

template <class T>
struct StageT {
  T query;  // width x width, heads side by side in columns
  T key;
  T value;
  ad::MlpT<T> post;
};

template <class T>
struct ParamSet {
  ad::MlpT<T> vertex_embed;
  ad::MlpT<T> edge_embed;
  ad::MlpT<T> rse;
  std::vector<StageT<T>> stages;
  ad::MlpT<T> semantic_head;
  ad::MlpT<T> instance_head;
};

using ModelParams = ParamSet<Matrix>;
using BoundParams = ParamSet<ad::Var>;

namespace detail {

template <class U, class T, class F>
ad::MlpT<U> transform_mlp(const std::string& prefix, const ad::MlpT<T>& in, F& f) {
  ad::MlpT<U> out;
  out.layers.reserve(in.layers.size());
  for (std::size_t l = 0; l < in.layers.size(); ++l) {
    const std::string base = prefix + "." + std::to_string(l);
    out.layers.push_back({f(base + ".weight", in.layers[l].weight), f(base + ".bias", in.layers[l].bias)});
  }
  return out;
}

template <class First, class... Rest>
First& first_of(First& first, Rest&...) {
  return first;
}

template <class F, class... M>
void visit_mlp(const std::string& prefix, F& f, M&... mlps) {
  const std::size_t n = first_of(mlps...).layers.size();
  for (std::size_t l = 0; l < n; ++l) {
    const std::string base = prefix + "." + std::to_string(l);
    f(base + ".weight", mlps.layers[l].weight...);
    f(base + ".bias", mlps.layers[l].bias...);
  }
}

}  // namespace detail

/// Builds a parameter set of another element type with the same layout.
/// `f(name, const T&)` returns the new element.
template <class U, class T, class F>
ParamSet<U> transform_params(const ParamSet<T>& in, F&& f) {
  ParamSet<U> out;
  out.vertex_embed = detail::transform_mlp<U>("vertex_embed", in.vertex_embed, f);
  out.edge_embed = detail::transform_mlp<U>("edge_embed", in.edge_embed, f);
  out.rse = detail::transform_mlp<U>("rse", in.rse, f);
  for (std::size_t s = 0; s < in.stages.size(); ++s) {
    const std::string base = "stage." + std::to_string(s);
    StageT<U> st{f(base + ".query", in.stages[s].query), f(base + ".key", in.stages[s].key),
                 f(base + ".value", in.stages[s].value),
                 detail::transform_mlp<U>(base + ".post", in.stages[s].post, f)};
    out.stages.push_back(std::move(st));
  }
  out.semantic_head = detail::transform_mlp<U>("semantic_head", in.semantic_head, f);
  out.instance_head = detail::transform_mlp<U>("instance_head", in.instance_head, f);
  return out;
}

/// Visits parameters of one or more identically shaped sets in canonical
/// order: f(name, a_elem, b_elem, ...).
template <class F, class... Sets>
void for_each_param(F&& f, Sets&... sets) {
  detail::visit_mlp("vertex_embed", f, sets.vertex_embed...);
  detail::visit_mlp("edge_embed", f, sets.edge_embed...);
  detail::visit_mlp("rse", f, sets.rse...);
  const std::size_t n = detail::first_of(sets...).stages.size();
  for (std::size_t s = 0; s < n; ++s) {
    const std::string base = "stage." + std::to_string(s);
    f(base + ".query", sets.stages[s].query...);
    f(base + ".key", sets.stages[s].key...);
    f(base + ".value", sets.stages[s].value...);
    detail::visit_mlp(base + ".post", f, sets.stages[s].post...);
  }
  detail::visit_mlp("semantic_head", f, sets.semantic_head...);
  detail::visit_mlp("instance_head", f, sets.instance_head...);
}

/// Glorot-uniform weights, zero biases.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);
ModelParams zeros_like(const ModelParams& params);
std::size_t parameter_count(const ModelParams& params);
std::vector<double> flatten(const ModelParams& params);
void unflatten(std::span<const double> flat, ModelParams& params);

BoundParams bind(ad::Tape& tape, const ModelParams& params);
ModelParams gradients(const ad::Tape& tape, const BoundParams& bound);

/// N x 7 and E x 7 input feature matrices.
Matrix vertex_feature_matrix(const DrawingGraph& graph);
Matrix edge_feature_matrix(const DrawingGraph& graph);

ad::Var embed_inputs(ad::Tape& tape, const DrawingGraph& graph, const BoundParams& params);
ad::Var rse_encode(ad::Tape& tape, const DrawingGraph& graph, const BoundParams& params);

struct StageOutput {
  ad::Var features;  // N x width
  ad::Var scores;    // E x H raw attention scores, before RSE is added
};

/// `rse` may be an invalid Var, meaning no attention bias.
StageOutput gat_stage(ad::Var previous, const DrawingGraph& graph, ad::Var rse,
                      const StageT<ad::Var>& stage, const ModelConfig& cfg);

struct SemanticOutput {
  ad::Var logits;
  ad::Var probs;
};
SemanticOutput semantic_head(ad::Var final_features, const BoundParams& params);

/// Element-wise sum of the selected stage score arrays. Throws
/// MismatchedEdgeLists if the arrays differ in shape.
ad::Var cee_aggregate(std::span<const ad::Var> stage_scores);

/// Per-directed-edge probability that both endpoints belong to one
/// instance; E x 1.
ad::Var instance_head(ad::Var cee, ad::Var final_features, const DrawingGraph& graph,
                      const BoundParams& params);

struct ForwardVars {
  SemanticOutput semantic;
  std::vector<ad::Var> stage_scores;
  ad::Var rse;  // invalid when RSE is switched off
  ad::Var cee;
  ad::Var adjacency;
  ad::Var final_features;
};

ForwardVars forward(ad::Tape& tape, const BoundParams& params, const DrawingGraph& graph,
                    const ModelConfig& cfg, const Ablation& ablation);

struct ForwardOutput {
  Matrix semantic_logits;
  Matrix semantic_probs;            // N x C, rows sum to 1
  std::vector<Matrix> stage_scores;  // S arrays of E x H
  Matrix rse;                       // E x H (zeros when off)
  Matrix cee;                       // E x H
  std::vector<double> adjacency;    // E entries in (0, 1)
  Matrix final_features;            // N x width
};

/// Inference without gradients.
ForwardOutput predict(const ModelParams& params, const DrawingGraph& graph, const ModelConfig& cfg,
                      const Ablation& ablation);

}  // namespace symspot
