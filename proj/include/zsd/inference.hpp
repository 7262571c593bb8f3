#pragma once

#include <span>
#include <vector>

#include "zsd/boxes.hpp"
#include "zsd/classifier.hpp"
#include "zsd/toy_model.hpp"

namespace zsd {

// Final scored detection. The confidence is the best classification score;
// objectness only gates, it is never multiplied in.
struct Detection {
  CornerBox box;
  int class_index = 0;  // column of the evaluation classifier
  double confidence = 0.0;
};

struct InferenceConfig {
  double objectness_threshold = 0.1;
  double score_cutoff = 0.01;
  double nms_iou = 0.5;
  int max_detections = 100;
};

// Per-class greedy suppression: confidence descending (ties toward the lower
// index), keep a box iff its IoU with every kept box of the same class is
// <= iou_th. Returns kept indices in keep order.
std::vector<std::size_t> nms(std::span<const Detection> dets, double iou_th);

// forward -> objectness gate -> argmax classification score as confidence ->
// score cutoff -> per-class NMS -> top max_detections.
std::vector<Detection> predict(const ToyModel& model,
                               std::span<const double> features, int grid,
                               const ClassifierMatrix& classifier,
                               const TemperatureParam& temperature,
                               const InferenceConfig& cfg);

}  // namespace zsd
