#pragma once
// Independent reference implementations and fixtures shared by the unit
// tests and the acceptance runner.

#include <cstdint>
#include <span>
#include <vector>

#include "symspot/extract.hpp"
#include "symspot/graph.hpp"
#include "symspot/metrics.hpp"
#include "symspot/model.hpp"
#include "symspot/rng.hpp"

namespace symspot::testing {

using ad::Matrix;

// ------------------------------------------------------------ dense model

struct DenseOutput {
  Matrix probs;  // N x C
  Matrix z;      // N x N, meaningful only where the mask is set
  std::vector<std::vector<bool>> mask;
};

/// Forward pass with full N x N masked attention matrices, edge features
/// recomputed from the segment geometry and the instance head applied to
/// the literal concatenation [c_ij, v_i, v_j].
DenseOutput dense_forward(const ModelParams& params, const DrawingGraph& graph, const ModelConfig& cfg,
                          const Ablation& ablation);

/// Glorot weights plus random biases, so zero-bias shortcuts are not hit.
ModelParams random_params(const ModelConfig& cfg, std::uint64_t seed, double bias_scale = 0.3);

// ------------------------------------------------------------- geometry

/// Minimum distance over `samples` evenly spaced points on each segment.
double sampled_segment_distance(const ApproxSegment& a, const ApproxSegment& b, int samples = 1000);

/// Random segments in a square of side `extent` with lengths up to
/// `max_length`; roughly one in five continues the line of an earlier one.
std::vector<ApproxSegment> random_segment_cloud(SplitMix64& rng, std::size_t count, double extent,
                                                double max_length);

/// Seven segments for checking edge construction around v0:
/// v1..v3 lie within 300 mm of v0, v6 is collinear with v0 but far away,
/// v4 and v5 are neither.
std::vector<ApproxSegment> layout_segments();

/// Same segments as labeled background primitives.
std::vector<Primitive> as_primitives(std::span<const ApproxSegment> segments);

// -------------------------------------------------------------- metrics

/// Panoptic counts from an exhaustive search over all partial one-to-one
/// assignments, keeping the one with the most IoU > 0.5 pairs (ties by
/// IoU sum). Lengths must be integers so that IoU sums are exact.
PanopticResult exhaustive_panoptic(std::span<const SymbolInstance> preds, std::span<const SymbolInstance> gts,
                                   std::span<const double> lengths);

/// AP for one class by the textbook procedure: rank predictions, match
/// greedily to the best unused box, then 101-point interpolation.
double reference_average_precision(std::span<const DetectionInput> drawings, int label, double iou_threshold);

// ---------------------------------------------------------------- misc

/// Vertex permutation: perm[old] = new.
std::vector<int> random_permutation(SplitMix64& rng, std::size_t n);

}  // namespace symspot::testing
