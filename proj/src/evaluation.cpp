#include "zsd/evaluation.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace zsd {

namespace {

// Confidence-descending order, ties by original index.
std::vector<std::size_t> confidence_order(std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return dets[a].confidence > dets[b].confidence;
                   });
  return order;
}

// Matches one image's detections against its ground truths; appends
// (confidence, tp) pairs per class and counts ground truths.
void match_image(std::span<const Detection> dets, std::span<const GtBox> gts,
                 double iou_th, MatchResult& result) {
  for (const auto& gt : gts) result[gt.class_index].n_gt += 1;

  std::vector<char> gt_used(gts.size(), 0);
  for (std::size_t i : confidence_order(dets)) {
    const Detection& det = dets[i];
    double best_iou = 0.0;
    int best_gt = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[g] || gts[g].class_index != det.class_index) continue;
      const double v = iou(det.box, gts[g].box);
      if (v >= iou_th && v > best_iou) {
        best_iou = v;
        best_gt = static_cast<int>(g);
      }
    }
    const bool tp = best_gt >= 0;
    if (tp) gt_used[best_gt] = 1;
    result[det.class_index].scored.emplace_back(det.confidence, tp);
  }
}

}  // namespace

MatchResult match_detections(
    const std::vector<std::vector<Detection>>& dets_per_image,
    const std::vector<std::vector<GtBox>>& gts_per_image, double iou_th) {
  if (dets_per_image.size() != gts_per_image.size()) {
    throw std::invalid_argument("match_detections: image count mismatch");
  }
  MatchResult result;
  for (std::size_t img = 0; img < dets_per_image.size(); ++img) {
    match_image(dets_per_image[img], gts_per_image[img], iou_th, result);
  }
  return result;
}

std::vector<double> interpolated_precision_curve(const MatchResult& matches,
                                                 int class_index) {
  auto it = matches.find(class_index);
  if (it == matches.end() || it->second.n_gt == 0) return {};
  const ClassMatches& cm = it->second;

  // Merge per-image flag streams into one global confidence ranking.
  std::vector<std::pair<double, bool>> scored = cm.scored;
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });

  std::vector<double> recall, precision;
  recall.reserve(scored.size());
  precision.reserve(scored.size());
  double tp = 0.0, fp = 0.0;
  for (const auto& [conf, is_tp] : scored) {
    (is_tp ? tp : fp) += 1.0;
    recall.push_back(tp / static_cast<double>(cm.n_gt));
    precision.push_back(tp / (tp + fp));
  }

  // Precision envelope: running maximum from the right.
  for (std::size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }

  // 101 equally spaced recall samples {0, 0.01, ..., 1}.
  std::vector<double> curve(101, 0.0);
  std::size_t j = 0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    while (j < recall.size() && recall[j] < r - 1e-12) ++j;
    if (j < precision.size()) curve[k] = precision[j];
  }
  return curve;
}

std::optional<double> average_precision(const MatchResult& matches,
                                        int class_index) {
  const std::vector<double> curve =
      interpolated_precision_curve(matches, class_index);
  if (curve.empty()) return std::nullopt;
  double sum = 0.0;
  for (double p : curve) sum += p;
  return sum / static_cast<double>(curve.size());
}

double mean_ap(const MatchResult& matches, std::span<const int> subset) {
  double sum = 0.0;
  int count = 0;
  for (int cls : subset) {
    if (auto ap = average_precision(matches, cls)) {
      sum += *ap;
      ++count;
    }
  }
  if (count == 0) {
    throw std::invalid_argument("mean_ap: no subset class has ground truths");
  }
  return sum / count;
}

double recall_at_k(const std::vector<std::vector<Detection>>& dets_per_image,
                   const std::vector<std::vector<GtBox>>& gts_per_image,
                   int k, double iou_th, std::span<const int> subset) {
  if (dets_per_image.size() != gts_per_image.size()) {
    throw std::invalid_argument("recall_at_k: image count mismatch");
  }
  MatchResult result;
  for (std::size_t img = 0; img < dets_per_image.size(); ++img) {
    const auto& dets = dets_per_image[img];
    std::vector<std::size_t> order = confidence_order(dets);
    if (order.size() > static_cast<std::size_t>(k)) order.resize(k);
    std::vector<Detection> top;
    top.reserve(order.size());
    for (std::size_t i : order) top.push_back(dets[i]);
    match_image(top, gts_per_image[img], iou_th, result);
  }

  double sum = 0.0;
  int count = 0;
  for (int cls : subset) {
    auto it = result.find(cls);
    if (it == result.end() || it->second.n_gt == 0) continue;
    double matched = 0.0;
    for (const auto& [conf, tp] : it->second.scored) matched += tp ? 1.0 : 0.0;
    sum += matched / static_cast<double>(it->second.n_gt);
    ++count;
  }
  if (count == 0) {
    throw std::invalid_argument("recall_at_k: no subset class has ground truths");
  }
  return sum / count;
}

EvalReport evaluate_detections(
    const std::vector<std::vector<Detection>>& dets_per_image,
    const std::vector<std::vector<GtBox>>& gts_per_image,
    std::span<const int> subset, const std::string& subset_name, double iou_th,
    int recall_k) {
  EvalReport report;
  report.class_subset = subset_name;
  const MatchResult matches =
      match_detections(dets_per_image, gts_per_image, iou_th);
  for (int cls : subset) {
    if (auto ap = average_precision(matches, cls)) {
      report.per_class_ap[cls] = *ap;
    }
  }
  report.map = mean_ap(matches, subset);
  report.ar_at_100 =
      recall_at_k(dets_per_image, gts_per_image, recall_k, iou_th, subset);
  return report;
}

}  // namespace zsd
