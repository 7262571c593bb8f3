#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zsd/boxes.hpp"
#include "zsd/inference.hpp"

namespace zsd {

struct GtBox {
  CornerBox box;
  int class_index = 0;
};

// Per-class TP/FP flags in confidence order plus the ground-truth count.
struct ClassMatches {
  std::vector<std::pair<double, bool>> scored;  // (confidence, is_tp)
  std::size_t n_gt = 0;
};

using MatchResult = std::map<int, ClassMatches>;

// Greedy per-class, per-image matching: detections in descending confidence;
// a detection is a TP iff it reaches IoU >= iou_th with an unmatched ground
// truth of its class, taking the highest-IoU one (ties toward the lower
// ground-truth index). Every ground truth matches at most once.
MatchResult match_detections(
    const std::vector<std::vector<Detection>>& dets_per_image,
    const std::vector<std::vector<GtBox>>& gts_per_image, double iou_th);

// Interpolated precision sampled at recalls {0, 0.01, ..., 1}: the running
// maximum of precision from the right. Empty when the class has no ground
// truths.
std::vector<double> interpolated_precision_curve(const MatchResult& matches,
                                                 int class_index);

// 101-point interpolated AP (COCO convention). nullopt when the class has no
// ground truths, so it can be excluded from means rather than scored zero.
std::optional<double> average_precision(const MatchResult& matches,
                                        int class_index);

// Unweighted mean AP over subset classes with ground truths. Throws when the
// subset contributes no class.
double mean_ap(const MatchResult& matches, std::span<const int> subset);

// AR@k: per image keep the top-k detections across classes, match at iou_th,
// then average per-class recall over subset classes with ground truths.
double recall_at_k(const std::vector<std::vector<Detection>>& dets_per_image,
                   const std::vector<std::vector<GtBox>>& gts_per_image,
                   int k, double iou_th, std::span<const int> subset);

struct EvalReport {
  std::map<int, double> per_class_ap;  // classes with ground truths only
  double map = 0.0;
  double ar_at_100 = 0.0;
  std::string class_subset;  // "seen", "unseen" or "all"
};

EvalReport evaluate_detections(
    const std::vector<std::vector<Detection>>& dets_per_image,
    const std::vector<std::vector<GtBox>>& gts_per_image,
    std::span<const int> subset, const std::string& subset_name,
    double iou_th = 0.5, int recall_k = 100);

}  // namespace zsd
