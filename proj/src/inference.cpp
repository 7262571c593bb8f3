#include "zsd/inference.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "zsd/alignment_loss.hpp"

namespace zsd {

double iou(const CornerBox& a, const CornerBox& b) {
  if (a.area() <= 0.0 || b.area() <= 0.0) {
    throw std::invalid_argument("iou: degenerate box");
  }
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

std::vector<std::size_t> nms(std::span<const Detection> dets, double iou_th) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].confidence != dets[b].confidence) {
      return dets[a].confidence > dets[b].confidence;
    }
    return a < b;
  });

  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool keep = true;
    for (std::size_t k : kept) {
      if (dets[k].class_index == dets[i].class_index &&
          iou(dets[k].box, dets[i].box) > iou_th) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(i);
  }
  return kept;
}

std::vector<Detection> predict(const ToyModel& model,
                               std::span<const double> features, int grid,
                               const ClassifierMatrix& classifier,
                               const TemperatureParam& temperature,
                               const InferenceConfig& cfg) {
  const std::vector<BoxPrediction> preds = forward(model, features, grid);

  std::vector<Detection> scored;
  for (const auto& p : preds) {
    if (p.objectness < cfg.objectness_threshold) continue;
    const SimilarityVector s =
        similarity_scores(p.embedding, classifier, temperature);
    std::size_t best = 0;
    for (std::size_t i = 1; i < s.probabilities.size(); ++i) {
      if (s.probabilities[i] > s.probabilities[best]) best = i;
    }
    const double confidence = s.probabilities[best];
    if (confidence < cfg.score_cutoff) continue;

    CornerBox box = to_corners(p.box);
    box.x1 = std::clamp(box.x1, 0.0, 1.0);
    box.y1 = std::clamp(box.y1, 0.0, 1.0);
    box.x2 = std::clamp(box.x2, 0.0, 1.0);
    box.y2 = std::clamp(box.y2, 0.0, 1.0);
    if (box.area() <= 0.0) continue;
    scored.push_back({box, static_cast<int>(best), confidence});
  }

  // nms keep order is already confidence descending (ties by lower index).
  std::vector<Detection> kept;
  for (std::size_t i : nms(scored, cfg.nms_iou)) kept.push_back(scored[i]);
  if (kept.size() > static_cast<std::size_t>(cfg.max_detections)) {
    kept.resize(cfg.max_detections);
  }
  return kept;
}

}  // namespace zsd
