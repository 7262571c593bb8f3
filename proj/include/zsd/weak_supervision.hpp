#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "zsd/alignment_loss.hpp"
#include "zsd/boxes.hpp"
#include "zsd/classifier.hpp"
#include "zsd/embedding.hpp"

namespace zsd {

// One per-location model output: decoded box, objectness and the raw
// classification embedding.
struct BoxPrediction {
  CenterBox box;
  double objectness = 0.0;
  Embedding embedding;
};

// Pseudo ground-truth pick for an image-label-only sample. Absent when no
// prediction survives the objectness filter.
struct PseudoAssignment {
  std::optional<std::size_t> selected_index;
  double score = 0.0;  // s_t of the selected box
};

struct BatchComposition {
  int n_detection = 0;
  int n_classification = 0;

  int batch_size() const { return n_detection + n_classification; }
};

// Indices of predictions with objectness >= th_obj, original order.
std::vector<std::size_t> filter_by_objectness(
    std::span<const BoxPrediction> preds, double th_obj);

// Among objectness-filtered predictions, the one maximizing the similarity
// score for the labeled class. Ties break toward the lowest index.
PseudoAssignment select_pseudo_box(std::span<const BoxPrediction> preds,
                                   const ClassifierMatrix& classifier,
                                   const TemperatureParam& temperature,
                                   std::size_t target, double th_obj);

// Alignment loss of an image-label-only sample: the selected box's embedding
// only. Box and objectness outputs receive no gradient; absent selection
// contributes zero loss.
struct ClassificationImageLoss {
  LossValue loss;
  std::optional<std::size_t> selected_index;
  GradientBundle grad;  // with respect to the selected box's embedding
};

ClassificationImageLoss classification_image_loss(
    std::span<const BoxPrediction> preds, const ClassifierMatrix& classifier,
    const TemperatureParam& temperature, std::size_t target, double th_obj);

// Per-batch loss sums before normalization. Box/objectness sums run over
// detection samples; the classification sum runs over every sample that
// produced a classification loss (detection samples with objects plus
// classification samples with a selected box), counted by n_cls_contributing.
struct BatchLossTerms {
  double box_sum = 0.0;
  double obj_sum = 0.0;
  double cls_sum = 0.0;
  int n_cls_contributing = 0;
};

// box and objectness averaged over detection samples only (zero terms when
// the batch has none); classification averaged over contributing samples.
LossValue compose_batch_loss(const BatchLossTerms& terms,
                             const BatchComposition& comp);

struct SampleRef {
  enum class Kind { detection, classification };
  Kind kind = Kind::detection;
  std::size_t index = 0;

  bool operator==(const SampleRef&) const = default;
};

// Deterministic shuffled epoch stream: every classification sample exactly
// once, detection samples repeated as needed so classification samples appear
// about `ratio` times as often.
std::vector<SampleRef> oversample_interleave(std::size_t det_size,
                                             std::size_t cls_size,
                                             double ratio, std::uint64_t seed);

}  // namespace zsd
