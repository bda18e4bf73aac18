#include "symspot/model.hpp"

#include <cmath>

#include "symspot/errors.hpp"
#include "symspot/rng.hpp"

namespace symspot {
namespace {

ad::MlpT<Matrix> make_mlp(std::initializer_list<int> widths) {
  ad::MlpT<Matrix> mlp;
  const std::vector<int> w(widths);
  for (std::size_t l = 0; l + 1 < w.size(); ++l)
    mlp.layers.push_back({Matrix::Zero(w[l], w[l + 1]), Matrix::Zero(1, w[l + 1])});
  return mlp;
}

ad::MlpT<Matrix> make_mlp(const std::vector<int>& w) {
  ad::MlpT<Matrix> mlp;
  for (std::size_t l = 0; l + 1 < w.size(); ++l)
    mlp.layers.push_back({Matrix::Zero(w[l], w[l + 1]), Matrix::Zero(1, w[l + 1])});
  return mlp;
}

ModelParams shaped_params(const ModelConfig& cfg) {
  const int ew = cfg.embed_width();
  ModelParams p;
  p.vertex_embed = make_mlp({kVertexFeatureWidth, ew, ew});
  p.edge_embed = make_mlp({kEdgeFeatureWidth, ew, ew});
  p.rse = make_mlp({kEdgeFeatureWidth, ew, cfg.heads});
  for (int s = 0; s < cfg.stages; ++s) {
    StageT<Matrix> st;
    st.query = Matrix::Zero(cfg.width, cfg.width);
    st.key = Matrix::Zero(cfg.width, cfg.width);
    st.value = Matrix::Zero(cfg.width, cfg.width);
    st.post = make_mlp({cfg.width, cfg.width, cfg.width});
    p.stages.push_back(std::move(st));
  }
  p.semantic_head = make_mlp({cfg.width, cfg.width, cfg.num_classes});
  std::vector<int> inst{cfg.heads + 2 * cfg.width};
  inst.insert(inst.end(), cfg.instance_hidden.begin(), cfg.instance_hidden.end());
  inst.push_back(1);
  p.instance_head = make_mlp(inst);
  return p;
}

}  // namespace

void ModelConfig::validate() const {
  if (stages < 1) throw ConfigError("model needs at least one stage");
  if (heads < 1 || width < 2 || width % heads != 0)
    throw ConfigError("model width must be a positive multiple of the head count");
  if (width % 2 != 0) throw ConfigError("model width must be even");
  if (num_classes < 2) throw ConfigError("model needs at least two classes");
  for (int h : instance_hidden)
    if (h < 1) throw ConfigError("instance head hidden widths must be positive");
}

std::string Ablation::name() const {
  if (!rse && cee == CeeMode::Off) return "baseline";
  if (rse && cee == CeeMode::Off) return "+rse";
  if (!rse && cee == CeeMode::Sum) return "+cee";
  if (rse && cee == CeeMode::Sum) return "full";
  if (cee == CeeMode::SingleStage)
    return std::string(rse ? "+rse" : "") + "+cee@" + std::to_string(cee_stage);
  return "custom";
}

void Ablation::validate(const ModelConfig& cfg) const {
  if (cee == CeeMode::SingleStage && (cee_stage < 1 || cee_stage > cfg.stages))
    throw ConfigError("single-stage CEE index " + std::to_string(cee_stage) +
                      " outside 1.." + std::to_string(cfg.stages));
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams p = shaped_params(cfg);
  SplitMix64 rng(seed);
  for_each_param(
      [&](const std::string& name, Matrix& m) {
        if (name.ends_with(".bias")) return;
        const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
      },
      p);
  return p;
}

ModelParams zeros_like(const ModelParams& params) {
  return transform_params<Matrix>(params, [](const std::string&, const Matrix& m) -> Matrix {
    return Matrix::Zero(m.rows(), m.cols());
  });
}

std::size_t parameter_count(const ModelParams& params) {
  std::size_t n = 0;
  for_each_param([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); },
                 params);
  return n;
}

std::vector<double> flatten(const ModelParams& params) {
  std::vector<double> out;
  out.reserve(parameter_count(params));
  for_each_param(
      [&](const std::string&, const Matrix& m) { out.insert(out.end(), m.data(), m.data() + m.size()); },
      params);
  return out;
}

void unflatten(std::span<const double> flat, ModelParams& params) {
  if (flat.size() != parameter_count(params))
    throw ShapeMismatch("flat parameter vector has wrong length");
  std::size_t at = 0;
  for_each_param(
      [&](const std::string&, Matrix& m) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(at), m.size(), m.data());
        at += static_cast<std::size_t>(m.size());
      },
      params);
}

BoundParams bind(ad::Tape& tape, const ModelParams& params) {
  return transform_params<ad::Var>(
      params, [&](const std::string&, const Matrix& m) { return tape.parameter(m); });
}

ModelParams gradients(const ad::Tape& tape, const BoundParams& bound) {
  return transform_params<Matrix>(
      bound, [&](const std::string&, const ad::Var& v) { return tape.grad(v); });
}

Matrix vertex_feature_matrix(const DrawingGraph& graph) {
  Matrix m(static_cast<Eigen::Index>(graph.num_vertices()), kVertexFeatureWidth);
  for (std::size_t i = 0; i < graph.num_vertices(); ++i) {
    const auto f = graph.vertices[i].feature.to_array();
    for (int c = 0; c < kVertexFeatureWidth; ++c) m(static_cast<Eigen::Index>(i), c) = f[c];
  }
  return m;
}

Matrix edge_feature_matrix(const DrawingGraph& graph) {
  Matrix m(static_cast<Eigen::Index>(graph.num_edges()), kEdgeFeatureWidth);
  for (std::size_t e = 0; e < graph.num_edges(); ++e) {
    const auto f = graph.edge_features[e].to_array();
    for (int c = 0; c < kEdgeFeatureWidth; ++c) m(static_cast<Eigen::Index>(e), c) = f[c];
  }
  return m;
}

ad::Var embed_inputs(ad::Tape& tape, const DrawingGraph& graph, const BoundParams& params) {
  const ad::Var vertices = tape.constant(vertex_feature_matrix(graph));
  const ad::Var edges = tape.constant(edge_feature_matrix(graph));
  const ad::Var v_hat = ad::mlp_forward(vertices, params.vertex_embed);
  const ad::Var e_hat = ad::mlp_forward(edges, params.edge_embed);
  const ad::Var pooled = ad::segment_max_pool(e_hat, graph.adjacency);
  const ad::Var parts[] = {v_hat, pooled};
  return ad::concat_cols(parts);
}

ad::Var rse_encode(ad::Tape& tape, const DrawingGraph& graph, const BoundParams& params) {
  return ad::mlp_forward(tape.constant(edge_feature_matrix(graph)), params.rse);
}

StageOutput gat_stage(ad::Var previous, const DrawingGraph& graph, ad::Var rse,
                      const StageT<ad::Var>& stage, const ModelConfig& cfg) {
  const auto& adj = graph.adjacency;
  const ad::Var q = ad::matmul(previous, stage.query);
  const ad::Var k = ad::matmul(previous, stage.key);
  const ad::Var v = ad::matmul(previous, stage.value);
  ad::Var scores = ad::edge_head_dot(q, k, adj, cfg.heads);
  if (cfg.scaled_attention) scores = ad::scale(scores, 1.0 / std::sqrt(double(cfg.head_dim())));
  const ad::Var biased = rse.valid() ? ad::add(scores, rse) : scores;
  const ad::Var weights = ad::row_softmax_over_neighbors(biased, adj);
  const ad::Var aggregated = ad::neighbor_aggregate(weights, v, adj, cfg.heads);
  const ad::Var next = ad::add(previous, ad::mlp_forward(aggregated, stage.post));
  return {next, scores};
}

SemanticOutput semantic_head(ad::Var final_features, const BoundParams& params) {
  const ad::Var logits = ad::mlp_forward(final_features, params.semantic_head);
  return {logits, ad::softmax_rows(logits)};
}

ad::Var cee_aggregate(std::span<const ad::Var> stage_scores) {
  if (stage_scores.empty()) throw MismatchedEdgeLists("no stage scores to aggregate");
  ad::Var total = stage_scores.front();
  for (std::size_t s = 1; s < stage_scores.size(); ++s) {
    const ad::Var next = stage_scores[s];
    if (next.rows() != total.rows() || next.cols() != total.cols())
      throw MismatchedEdgeLists("stage score arrays are not aligned with one edge list");
    total = ad::add(total, next);
  }
  return total;
}

ad::Var instance_head(ad::Var cee, ad::Var final_features, const DrawingGraph& graph,
                      const BoundParams& params) {
  const auto& layers = params.instance_head.layers;
  const Eigen::Index heads = cee.cols();
  const Eigen::Index width = final_features.cols();
  const auto& first = layers.front();
  if (first.weight.rows() != heads + 2 * width)
    throw ShapeMismatch("instance head expects " + std::to_string(first.weight.rows()) +
                        " inputs, got " + std::to_string(heads + 2 * width));
  // The first affine layer on concat(c_ij, v_i, v_j) splits into three
  // blocks; the vertex blocks are applied once per vertex and gathered.
  const ad::Var w_edge = ad::slice_rows(first.weight, 0, heads);
  const ad::Var w_source = ad::slice_rows(first.weight, heads, width);
  const ad::Var w_target = ad::slice_rows(first.weight, heads + width, width);
  const auto& adj = graph.adjacency;
  const ad::Var from_source = ad::gather_rows(ad::matmul(final_features, w_source), adj.source);
  const ad::Var from_target = ad::gather_rows(ad::matmul(final_features, w_target), adj.target);
  ad::Var x = ad::add(ad::add(ad::matmul(cee, w_edge), from_source), from_target);
  x = ad::add_row(x, first.bias);
  for (std::size_t l = 1; l < layers.size(); ++l) {
    x = ad::relu(x);
    x = ad::add_row(ad::matmul(x, layers[l].weight), layers[l].bias);
  }
  return ad::sigmoid(x);
}

ForwardVars forward(ad::Tape& tape, const BoundParams& params, const DrawingGraph& graph,
                    const ModelConfig& cfg, const Ablation& ablation) {
  ablation.validate(cfg);
  if (graph.num_vertices() > kMaxVertices) throw TooManyVertices(graph.num_vertices(), kMaxVertices);
  if (params.stages.size() != static_cast<std::size_t>(cfg.stages))
    throw ShapeMismatch("parameter set has " + std::to_string(params.stages.size()) +
                        " stages, config expects " + std::to_string(cfg.stages));
  ForwardVars out;
  ad::Var features = embed_inputs(tape, graph, params);
  if (ablation.rse) out.rse = rse_encode(tape, graph, params);
  for (const auto& stage : params.stages) {
    auto st = gat_stage(features, graph, out.rse, stage, cfg);
    features = st.features;
    out.stage_scores.push_back(st.scores);
  }
  out.final_features = features;
  out.semantic = semantic_head(features, params);
  switch (ablation.cee) {
    case CeeMode::Sum:
      out.cee = cee_aggregate(out.stage_scores);
      break;
    case CeeMode::SingleStage:
      out.cee = cee_aggregate(std::span<const ad::Var>(&out.stage_scores[ablation.cee_stage - 1], 1));
      break;
    case CeeMode::Off:
      out.cee = tape.constant(Matrix::Zero(static_cast<Eigen::Index>(graph.num_edges()), cfg.heads));
      break;
  }
  out.adjacency = instance_head(out.cee, features, graph, params);
  return out;
}

ForwardOutput predict(const ModelParams& params, const DrawingGraph& graph, const ModelConfig& cfg,
                      const Ablation& ablation) {
  ad::Tape tape;
  const BoundParams bound = transform_params<ad::Var>(
      params, [&](const std::string&, const Matrix& m) { return tape.constant(m); });
  const ForwardVars vars = forward(tape, bound, graph, cfg, ablation);
  ForwardOutput out;
  out.semantic_logits = vars.semantic.logits.value();
  out.semantic_probs = vars.semantic.probs.value();
  for (const auto& s : vars.stage_scores) out.stage_scores.push_back(s.value());
  out.rse = vars.rse.valid() ? vars.rse.value()
                             : Matrix::Zero(static_cast<Eigen::Index>(graph.num_edges()), cfg.heads);
  out.cee = vars.cee.value();
  const Matrix& z = vars.adjacency.value();
  out.adjacency.assign(z.data(), z.data() + z.size());
  out.final_features = vars.final_features.value();
  return out;
}

}  // namespace symspot
