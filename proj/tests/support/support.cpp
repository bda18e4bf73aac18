#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>

namespace symspot::testing {
namespace {

Matrix dense_mlp(Matrix x, const ad::MlpT<Matrix>& mlp) {
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    Matrix y(x.rows(), mlp.layers[l].weight.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      for (Eigen::Index c = 0; c < y.cols(); ++c) {
        double acc = mlp.layers[l].bias(0, c);
        for (Eigen::Index k = 0; k < x.cols(); ++k) acc += x(r, k) * mlp.layers[l].weight(k, c);
        y(r, c) = (l + 1 < mlp.layers.size()) ? std::max(acc, 0.0) : acc;
      }
    x = std::move(y);
  }
  return x;
}

Matrix row_of(const auto& arr) {
  Matrix m(1, static_cast<Eigen::Index>(arr.size()));
  for (std::size_t k = 0; k < arr.size(); ++k) m(0, static_cast<Eigen::Index>(k)) = arr[k];
  return m;
}

Vec2 lerp(Vec2 a, Vec2 b, double t) { return a + t * (b - a); }

}  // namespace

DenseOutput dense_forward(const ModelParams& params, const DrawingGraph& graph, const ModelConfig& cfg,
                          const Ablation& ablation) {
  const auto n = static_cast<Eigen::Index>(graph.num_vertices());
  const int heads = cfg.heads;
  const Eigen::Index d = cfg.head_dim();
  DenseOutput out;
  out.mask.assign(static_cast<std::size_t>(n), std::vector<bool>(static_cast<std::size_t>(n), false));
  for (std::size_t e = 0; e < graph.num_edges(); ++e)
    out.mask[static_cast<std::size_t>(graph.adjacency.source[e])][static_cast<std::size_t>(graph.adjacency.target[e])] =
        true;
  const auto linked = [&](Eigen::Index i, Eigen::Index j) {
    return static_cast<bool>(out.mask[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
  };
  const auto seg = [&](Eigen::Index i) { return graph.vertices[static_cast<std::size_t>(i)].segment; };

  Matrix vin(n, kVertexFeatureWidth);
  for (Eigen::Index i = 0; i < n; ++i) vin.row(i) = row_of(vertex_feature(seg(i)).to_array());

  // Per ordered pair embeddings, computed only where an edge exists.
  std::vector<std::vector<Matrix>> edge_embed(static_cast<std::size_t>(n), std::vector<Matrix>(static_cast<std::size_t>(n)));
  std::vector<Matrix> rse(static_cast<std::size_t>(heads), Matrix::Zero(n, n));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!linked(i, j)) continue;
      const Matrix ef = row_of(edge_feature(seg(i), seg(j)).to_array());
      edge_embed[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = dense_mlp(ef, params.edge_embed);
      if (ablation.rse) {
        const Matrix r = dense_mlp(ef, params.rse);
        for (int h = 0; h < heads; ++h) rse[static_cast<std::size_t>(h)](i, j) = r(0, h);
      }
    }

  const Matrix v_hat = dense_mlp(vin, params.vertex_embed);
  const Eigen::Index ew = params.edge_embed.layers.back().weight.cols();
  Matrix features(n, v_hat.cols() + ew);
  for (Eigen::Index i = 0; i < n; ++i) {
    features.row(i).head(v_hat.cols()) = v_hat.row(i);
    for (Eigen::Index c = 0; c < ew; ++c) {
      double best = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j)
        if (linked(i, j)) best = std::max(best, edge_embed[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)](0, c));
      features(i, v_hat.cols() + c) = std::isinf(best) ? 0.0 : best;
    }
  }

  std::vector<std::vector<Matrix>> scores;  // [stage][head] N x N
  for (const auto& stage : params.stages) {
    const Matrix q = features * stage.query, k = features * stage.key, v = features * stage.value;
    Matrix attended = Matrix::Zero(n, features.cols());
    std::vector<Matrix> stage_scores;
    for (int h = 0; h < heads; ++h) {
      Matrix a = q.middleCols(h * d, d) * k.middleCols(h * d, d).transpose();
      if (cfg.scaled_attention) a /= std::sqrt(static_cast<double>(d));
      const Matrix b = a + rse[static_cast<std::size_t>(h)];
      Matrix w = Matrix::Zero(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        double top = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j)
          if (linked(i, j)) top = std::max(top, b(i, j));
        double total = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
          if (linked(i, j)) total += std::exp(b(i, j) - top);
        for (Eigen::Index j = 0; j < n; ++j)
          if (linked(i, j)) w(i, j) = std::exp(b(i, j) - top) / total;
      }
      attended.middleCols(h * d, d) = w * v.middleCols(h * d, d);
      stage_scores.push_back(std::move(a));
    }
    features = features + dense_mlp(attended, stage.post);
    scores.push_back(std::move(stage_scores));
  }

  const Matrix logits = dense_mlp(features, params.semantic_head);
  out.probs.resize(n, logits.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double top = logits.row(i).maxCoeff();
    const Eigen::ArrayXd ex = (logits.row(i).array() - top).exp().transpose();
    out.probs.row(i) = (ex / ex.sum()).transpose();
  }

  out.z = Matrix::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
  const Eigen::Index width = features.cols();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!linked(i, j)) continue;
      Matrix x(1, heads + 2 * width);
      for (int h = 0; h < heads; ++h) {
        double c = 0.0;
        if (ablation.cee == CeeMode::Sum)
          for (const auto& s : scores) c += s[static_cast<std::size_t>(h)](i, j);
        else if (ablation.cee == CeeMode::SingleStage)
          c = scores[static_cast<std::size_t>(ablation.cee_stage - 1)][static_cast<std::size_t>(h)](i, j);
        x(0, h) = c;
      }
      x.block(0, heads, 1, width) = features.row(i);
      x.block(0, heads + width, 1, width) = features.row(j);
      const double logit = dense_mlp(x, params.instance_head)(0, 0);
      out.z(i, j) = 1.0 / (1.0 + std::exp(-logit));
    }
  return out;
}

ModelParams random_params(const ModelConfig& cfg, std::uint64_t seed, double bias_scale) {
  ModelParams p = init_params(cfg, seed);
  SplitMix64 rng = SplitMix64::keyed(seed, 0xb1a5);
  for_each_param(
      [&](const std::string& name, Matrix& m) {
        if (name.ends_with(".bias"))
          for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.uniform(-bias_scale, bias_scale);
      },
      p);
  return p;
}

double sampled_segment_distance(const ApproxSegment& a, const ApproxSegment& b, int samples) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<Vec2> pb(static_cast<std::size_t>(samples));
  for (int k = 0; k < samples; ++k) pb[static_cast<std::size_t>(k)] = lerp(b.p, b.q, double(k) / (samples - 1));
  for (int i = 0; i < samples; ++i) {
    const Vec2 x = lerp(a.p, a.q, double(i) / (samples - 1));
    for (const Vec2& y : pb) {
      const double dx = x.x - y.x, dy = x.y - y.y;
      best = std::min(best, dx * dx + dy * dy);
    }
  }
  return std::sqrt(best);
}

std::vector<ApproxSegment> random_segment_cloud(SplitMix64& rng, std::size_t count, double extent,
                                                double max_length) {
  std::vector<ApproxSegment> out;
  out.reserve(count);
  while (out.size() < count) {
    if (!out.empty() && rng.chance(0.2)) {
      const ApproxSegment& base = out[rng.below(out.size())];
      const Vec2 dir = (1.0 / base.length()) * (base.q - base.p);
      const Vec2 normal{-dir.y, dir.x};
      const double gap = rng.uniform(0.0, 3000.0);
      const double len = rng.uniform(50.0, max_length);
      const Vec2 start = base.q + gap * dir + rng.uniform(-50.0, 50.0) * normal;
      const Vec2 tilt = rotate(dir, degrees_to_radians(rng.uniform(-2.0, 2.0)));
      out.push_back({start, start + len * tilt, PrimitiveKind::Segment});
      continue;
    }
    const Vec2 mid{rng.uniform(0.0, extent), rng.uniform(0.0, extent)};
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double len = rng.uniform(50.0, max_length);
    const Vec2 half = (0.5 * len) * Vec2{std::cos(angle), std::sin(angle)};
    const auto kind = static_cast<PrimitiveKind>(rng.below(kPrimitiveKindCount));
    out.push_back({mid - half, mid + half, kind});
  }
  return out;
}

std::vector<ApproxSegment> layout_segments() {
  return {
      {{0, 0}, {1000, 0}},            // v0
      {{1000, 0}, {1000, 800}},       // v1 touches v0
      {{-200, 100}, {-200, 900}},     // v2 ~224 mm from v0
      {{200, 250}, {800, 250}},       // v3 250 mm above v0
      {{-1500, -1500}, {-1000, -2000}},  // v4 far away
      {{500, 400}, {900, 800}},       // v5 400 mm above v0
      {{2500, 20}, {3500, 20}},       // v6 on v0's line
  };
}

std::vector<Primitive> as_primitives(std::span<const ApproxSegment> segments) {
  std::vector<Primitive> out;
  for (const auto& s : segments) out.push_back({SegmentShape{s.p, s.q}, 0, -1});
  return out;
}

PanopticResult exhaustive_panoptic(std::span<const SymbolInstance> preds, std::span<const SymbolInstance> gts,
                                   std::span<const double> lengths) {
  const auto iou = [&](const SymbolInstance& a, const SymbolInstance& b) {
    if (a.label != b.label) return 0.0;
    long long inter = 0, total_a = 0, total_b = 0;
    for (int m : a.members) {
      const auto len = static_cast<long long>(lengths[static_cast<std::size_t>(m)]);
      total_a += len;
      if (std::find(b.members.begin(), b.members.end(), m) != b.members.end()) inter += len;
    }
    for (int m : b.members) total_b += static_cast<long long>(lengths[static_cast<std::size_t>(m)]);
    const long long uni = total_a + total_b - inter;
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
  };

  // assignment[g] = matched pred index or -1.
  std::vector<int> current(gts.size(), -1), best;
  std::vector<bool> used(preds.size(), false);
  int best_tp = -1;
  double best_sum = -1.0;
  const auto search = [&](auto&& self, std::size_t g) -> void {
    if (g == gts.size()) {
      int tp = 0;
      double sum = 0.0;
      for (std::size_t k = 0; k < gts.size(); ++k)
        if (current[k] >= 0) {
          ++tp;
          sum += iou(preds[static_cast<std::size_t>(current[k])], gts[k]);
        }
      if (tp > best_tp || (tp == best_tp && sum > best_sum)) {
        best_tp = tp;
        best_sum = sum;
        best = current;
      }
      return;
    }
    self(self, g + 1);
    for (std::size_t p = 0; p < preds.size(); ++p) {
      if (used[p] || iou(preds[p], gts[g]) <= 0.5) continue;
      used[p] = true;
      current[g] = static_cast<int>(p);
      self(self, g + 1);
      current[g] = -1;
      used[p] = false;
    }
  };
  search(search, 0);

  PanopticResult r;
  std::vector<bool> pred_matched(preds.size(), false);
  for (std::size_t g = 0; g < gts.size(); ++g) {
    auto& c = r.per_class[gts[g].label];
    if (best[g] < 0) {
      c.fn += 1;
      r.overall.fn += 1;
      continue;
    }
    const double v = iou(preds[static_cast<std::size_t>(best[g])], gts[g]);
    pred_matched[static_cast<std::size_t>(best[g])] = true;
    c.tp += 1;
    c.iou_sum += v;
    r.overall.tp += 1;
    r.overall.iou_sum += v;
  }
  for (std::size_t p = 0; p < preds.size(); ++p)
    if (!pred_matched[p]) {
      r.per_class[preds[p].label].fp += 1;
      r.overall.fp += 1;
    }
  return r;
}

double reference_average_precision(std::span<const DetectionInput> drawings, int label, double iou_threshold) {
  struct Ranked {
    double confidence;
    std::size_t drawing, index;
  };
  std::vector<Ranked> ranked;
  long long positives = 0;
  for (std::size_t d = 0; d < drawings.size(); ++d) {
    for (std::size_t i = 0; i < drawings[d].preds.size(); ++i)
      if (drawings[d].preds[i].label == label) ranked.push_back({drawings[d].preds[i].confidence, d, i});
    positives += std::count_if(drawings[d].gts.begin(), drawings[d].gts.end(),
                               [&](const SymbolInstance& g) { return g.label == label; });
  }
  if (positives == 0) return -1.0;
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Ranked& a, const Ranked& b) { return a.confidence > b.confidence; });
  const auto overlap = [](const Box& a, const Box& b) {
    const double w = std::min(a.max_x, b.max_x) - std::max(a.min_x, b.min_x);
    const double h = std::min(a.max_y, b.max_y) - std::max(a.min_y, b.min_y);
    const double inter = (w > 0 && h > 0) ? w * h : 0.0;
    const double uni = a.area() + b.area() - inter;
    return uni > 0 ? inter / uni : (a == b ? 1.0 : 0.0);
  };
  std::map<std::pair<std::size_t, std::size_t>, bool> taken;
  std::vector<long long> tp_at;
  long long tp = 0;
  for (const auto& r : ranked) {
    const auto& gts = drawings[r.drawing].gts;
    const Box& box = drawings[r.drawing].preds[r.index].box;
    std::size_t pick = gts.size();
    double best = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].label != label || taken[{r.drawing, g}]) continue;
      const double o = overlap(box, gts[g].box);
      if (o >= iou_threshold && (pick == gts.size() || o > best)) {
        pick = g;
        best = o;
      }
    }
    if (pick < gts.size()) {
      taken[{r.drawing, pick}] = true;
      ++tp;
    }
    tp_at.push_back(tp);
  }
  // Precision envelope from the right, then sample at recall k/100.
  std::vector<double> envelope(tp_at.size());
  double running = 0.0;
  for (std::size_t i = tp_at.size(); i-- > 0;) {
    running = std::max(running, static_cast<double>(tp_at[i]) / static_cast<double>(i + 1));
    envelope[i] = running;
  }
  double total = 0.0;
  for (long long k = 0; k <= 100; ++k) {
    for (std::size_t i = 0; i < tp_at.size(); ++i)
      if (tp_at[i] * 100 >= k * positives) {
        total += envelope[i];
        break;
      }
  }
  return total / 101.0;
}

std::vector<int> random_permutation(SplitMix64& rng, std::size_t n) {
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(std::span<int>(perm));
  return perm;
}

}  // namespace symspot::testing
