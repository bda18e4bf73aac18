#include "symspot/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "symspot/errors.hpp"

namespace symspot {
namespace {

void require_partition(std::span<const SymbolInstance> items, const char* side) {
  std::unordered_set<int> seen;
  for (const auto& s : items) {
    if (s.members.empty()) throw OverlappingInstances(std::string(side) + " symbol has no members");
    for (int m : s.members)
      if (!seen.insert(m).second)
        throw OverlappingInstances(std::string(side) + " symbols share vertex " + std::to_string(m));
  }
}

double member_length(const std::vector<int>& members, std::span<const double> lengths) {
  double total = 0.0;
  for (int m : members) total += lengths[static_cast<std::size_t>(m)];
  return total;
}

}  // namespace

double symbol_iou(const SymbolInstance& a, const SymbolInstance& b, std::span<const double> lengths) {
  if (a.label != b.label) return 0.0;
  std::vector<int> sa = a.members, sb = b.members;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  std::vector<int> common;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(common));
  const double inter = member_length(common, lengths);
  const double uni = member_length(sa, lengths) + member_length(sb, lengths) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

MatchResult match_symbols(std::span<const SymbolInstance> preds, std::span<const SymbolInstance> gts,
                          std::span<const double> lengths) {
  require_partition(preds, "predicted");
  require_partition(gts, "ground-truth");
  MatchResult r;
  std::vector<bool> pred_used(preds.size(), false);
  for (std::size_t g = 0; g < gts.size(); ++g) {
    bool matched = false;
    for (std::size_t p = 0; p < preds.size(); ++p) {
      const double iou = symbol_iou(preds[p], gts[g], lengths);
      if (iou <= 0.5) continue;
      // IoU > 0.5 on disjoint partitions admits at most one partner per side.
      if (matched || pred_used[p]) throw std::logic_error("IoU > 0.5 matched a symbol twice");
      matched = true;
      pred_used[p] = true;
      r.true_positives.push_back({p, g, iou});
    }
    if (!matched) r.false_negatives.push_back(g);
  }
  for (std::size_t p = 0; p < preds.size(); ++p)
    if (!pred_used[p]) r.false_positives.push_back(p);
  return r;
}

double PanopticCounts::rq() const {
  const double denom = tp + 0.5 * fp + 0.5 * fn;
  return denom > 0 ? tp / denom : 1.0;
}

double PanopticCounts::sq() const {
  if (tp > 0) return iou_sum / tp;
  return (fp + fn) > 0 ? 0.0 : 1.0;
}

PanopticCounts& PanopticCounts::operator+=(const PanopticCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  iou_sum += o.iou_sum;
  return *this;
}

PanopticResult& PanopticResult::operator+=(const PanopticResult& o) {
  overall += o.overall;
  for (const auto& [c, counts] : o.per_class) per_class[c] += counts;
  return *this;
}

PanopticResult panoptic_quality(std::span<const SymbolInstance> preds,
                                std::span<const SymbolInstance> gts, std::span<const double> lengths) {
  const MatchResult m = match_symbols(preds, gts, lengths);
  PanopticResult r;
  for (const auto& tp : m.true_positives) {
    auto& c = r.per_class[gts[tp.gt].label];
    c.tp += 1;
    c.iou_sum += tp.iou;
  }
  for (std::size_t p : m.false_positives) r.per_class[preds[p].label].fp += 1;
  for (std::size_t g : m.false_negatives) r.per_class[gts[g].label].fn += 1;
  for (const auto& tp : m.true_positives) {
    r.overall.tp += 1;
    r.overall.iou_sum += tp.iou;
  }
  r.overall.fp = static_cast<double>(m.false_positives.size());
  r.overall.fn = static_cast<double>(m.false_negatives.size());
  return r;
}

std::vector<SymbolInstance> all_segments(const PanopticPrediction& p) {
  std::vector<SymbolInstance> out = p.instances;
  out.insert(out.end(), p.stuff.begin(), p.stuff.end());
  return out;
}

PanopticResult panoptic_quality(const PanopticPrediction& pred, const PanopticPrediction& gt,
                                std::span<const double> lengths) {
  const auto ps = all_segments(pred);
  const auto gs = all_segments(gt);
  return panoptic_quality(ps, gs, lengths);
}

void F1Accumulator::add(std::span<const int> pred, std::span<const int> gt,
                        std::span<const double> lengths, int background) {
  if (pred.size() != gt.size() || gt.size() != lengths.size())
    throw ShapeMismatch("semantic_f1 inputs are not aligned");
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double w = lengths[i];
    const bool gt_pos = gt[i] != background;
    const bool pred_pos = pred[i] != background;
    if (gt_pos && pred[i] == gt[i]) {
      tp += 1;
      wtp += w;
      continue;
    }
    if (pred_pos) {
      fp += 1;
      wfp += w;
    }
    if (gt_pos) {
      fn += 1;
      wfn += w;
    }
  }
}

F1Result F1Accumulator::result() const {
  F1Result r;
  const auto f1 = [](double t, double p, double n) {
    const double denom = 2 * t + p + n;
    return denom > 0 ? 2 * t / denom : 0.0;
  };
  r.degenerate = (tp + fp + fn) == 0;
  r.f1 = f1(tp, fp, fn);
  r.length_weighted_f1 = f1(wtp, wfp, wfn);
  return r;
}

F1Result semantic_f1(std::span<const int> pred_classes, std::span<const int> gt_classes,
                     std::span<const double> lengths, int background) {
  F1Accumulator acc;
  acc.add(pred_classes, gt_classes, lengths, background);
  return acc.result();
}

double box_iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.max_x, b.max_x) - std::max(a.min_x, b.min_x));
  const double iy = std::max(0.0, std::min(a.max_y, b.max_y) - std::max(a.min_y, b.min_y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0) return a == b ? 1.0 : 0.0;
  return inter / uni;
}

double interpolated_ap(std::span<const double> precision, std::span<const double> recall) {
  double total = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    double best = 0.0;
    for (std::size_t i = 0; i < precision.size(); ++i)
      if (recall[i] >= r - 1e-12) best = std::max(best, precision[i]);
    total += best;
  }
  return total / 101.0;
}

double average_precision(std::span<const DetectionInput> drawings, int label, double iou_threshold) {
  struct Det {
    double confidence;
    std::size_t drawing;
    std::size_t index;
  };
  std::vector<Det> dets;
  std::size_t gt_count = 0;
  for (std::size_t d = 0; d < drawings.size(); ++d) {
    for (std::size_t i = 0; i < drawings[d].preds.size(); ++i)
      if (drawings[d].preds[i].label == label) dets.push_back({drawings[d].preds[i].confidence, d, i});
    for (const auto& g : drawings[d].gts) gt_count += g.label == label;
  }
  if (gt_count == 0) return -1.0;
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Det& a, const Det& b) { return a.confidence > b.confidence; });
  std::vector<std::vector<bool>> used(drawings.size());
  for (std::size_t d = 0; d < drawings.size(); ++d) used[d].assign(drawings[d].gts.size(), false);
  std::vector<double> precision, recall;
  double tp = 0, fp = 0;
  for (const auto& det : dets) {
    const auto& box = drawings[det.drawing].preds[det.index].box;
    const auto& gts = drawings[det.drawing].gts;
    double best = -1.0;
    std::size_t best_g = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].label != label || used[det.drawing][g]) continue;
      const double iou = box_iou(box, gts[g].box);
      if (iou >= iou_threshold && iou > best) {
        best = iou;
        best_g = g;
      }
    }
    if (best_g < gts.size()) {
      used[det.drawing][best_g] = true;
      tp += 1;
    } else {
      fp += 1;
    }
    precision.push_back(tp / (tp + fp));
    recall.push_back(tp / static_cast<double>(gt_count));
  }
  return interpolated_ap(precision, recall);
}

ApResult detection_ap(std::span<const DetectionInput> drawings) {
  std::vector<int> labels;
  for (const auto& d : drawings)
    for (const auto& g : d.gts) labels.push_back(g.label);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  const auto mean_ap = [&](double thr) {
    if (labels.empty()) return 0.0;
    double total = 0.0;
    for (int l : labels) total += average_precision(drawings, l, thr);
    return total / static_cast<double>(labels.size());
  };
  ApResult r;
  r.ap50 = mean_ap(0.5);
  r.ap75 = mean_ap(0.75);
  double total = 0.0;
  for (int k = 0; k < 10; ++k) total += mean_ap(0.5 + 0.05 * k);
  r.map = total / 10.0;
  return r;
}

}  // namespace symspot
