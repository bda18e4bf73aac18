#pragma once

// Primitive-level evaluation: length-weighted symbol IoU, panoptic quality,
// semantic F1 and box AP.

#include <array>
#include <map>
#include <span>
#include <vector>

#include "symspot/extract.hpp"

namespace symspot {

/// 0 when classes differ; otherwise sum of member lengths in both sets over
/// the sum of member lengths in either set.
double symbol_iou(const SymbolInstance& a, const SymbolInstance& b, std::span<const double> lengths);

struct MatchedPair {
  std::size_t pred = 0;
  std::size_t gt = 0;
  double iou = 0.0;
};

struct MatchResult {
  std::vector<MatchedPair> true_positives;  // ordered by gt index
  std::vector<std::size_t> false_positives;
  std::vector<std::size_t> false_negatives;
};

/// Pairs each ground truth with the (unique) prediction of IoU > 0.5.
/// Throws OverlappingInstances if either side is not a partition.
MatchResult match_symbols(std::span<const SymbolInstance> preds, std::span<const SymbolInstance> gts,
                          std::span<const double> lengths);

struct PanopticCounts {
  double tp = 0;
  double fp = 0;
  double fn = 0;
  double iou_sum = 0;

  double rq() const;
  double sq() const;
  double pq() const { return rq() * sq(); }
  PanopticCounts& operator+=(const PanopticCounts& o);
};

struct PanopticResult {
  PanopticCounts overall;
  std::map<int, PanopticCounts> per_class;

  PanopticResult& operator+=(const PanopticResult& o);
};

/// Things and stuff regions are matched together; preds and gts are the
/// concatenation of instances and stuff regions of one drawing.
PanopticResult panoptic_quality(std::span<const SymbolInstance> preds,
                                std::span<const SymbolInstance> gts, std::span<const double> lengths);

PanopticResult panoptic_quality(const PanopticPrediction& pred, const PanopticPrediction& gt,
                                std::span<const double> lengths);

/// Instances followed by stuff regions.
std::vector<SymbolInstance> all_segments(const PanopticPrediction& p);

struct F1Result {
  double f1 = 0.0;
  double length_weighted_f1 = 0.0;
  bool degenerate = false;  // no positives on either side
};

/// Micro-averaged over non-background classes.
F1Result semantic_f1(std::span<const int> pred_classes, std::span<const int> gt_classes,
                     std::span<const double> lengths, int background);

/// Accumulates the counts behind semantic_f1 across drawings.
struct F1Accumulator {
  double tp = 0, fp = 0, fn = 0;
  double wtp = 0, wfp = 0, wfn = 0;
  void add(std::span<const int> pred_classes, std::span<const int> gt_classes,
           std::span<const double> lengths, int background);
  F1Result result() const;
};

double box_iou(const Box& a, const Box& b);

struct DetectionInput {
  std::vector<SymbolInstance> preds;  // boxes + confidence
  std::vector<SymbolInstance> gts;
};

struct ApResult {
  double ap50 = 0.0;
  double ap75 = 0.0;
  double map = 0.0;  // mean over IoU thresholds 0.50:0.05:0.95
};

/// AP for one class at one IoU threshold with 101-point interpolation,
/// greedy matching in descending confidence. Returns -1 when the class has
/// no ground truth.
double average_precision(std::span<const DetectionInput> drawings, int label, double iou_threshold);

/// Mean over classes that have ground truth.
ApResult detection_ap(std::span<const DetectionInput> drawings);

/// 101-point interpolated AP from precision/recall points ordered by
/// descending confidence.
double interpolated_ap(std::span<const double> precision, std::span<const double> recall);

}  // namespace symspot
