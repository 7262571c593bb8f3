#include "zsd/weak_supervision.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace zsd {

std::vector<std::size_t> filter_by_objectness(
    std::span<const BoxPrediction> preds, double th_obj) {
  if (th_obj < 0.0 || th_obj > 1.0) {
    throw std::invalid_argument("filter_by_objectness: threshold outside [0,1]");
  }
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].objectness >= th_obj) kept.push_back(i);
  }
  return kept;
}

PseudoAssignment select_pseudo_box(std::span<const BoxPrediction> preds,
                                   const ClassifierMatrix& classifier,
                                   const TemperatureParam& temperature,
                                   std::size_t target, double th_obj) {
  if (target >= classifier.size()) {
    throw std::invalid_argument("select_pseudo_box: target class out of range");
  }
  PseudoAssignment best;
  for (std::size_t i : filter_by_objectness(preds, th_obj)) {
    const double score =
        similarity_scores(preds[i].embedding, classifier, temperature)
            .probabilities[target];
    if (!best.selected_index || score > best.score) {
      best.selected_index = i;
      best.score = score;
    }
  }
  return best;
}

ClassificationImageLoss classification_image_loss(
    std::span<const BoxPrediction> preds, const ClassifierMatrix& classifier,
    const TemperatureParam& temperature, std::size_t target, double th_obj) {
  ClassificationImageLoss out;
  const PseudoAssignment pick =
      select_pseudo_box(preds, classifier, temperature, target, th_obj);
  if (!pick.selected_index) {
    return out;  // no survivor: zero loss, zero gradients
  }
  const Embedding& e = preds[*pick.selected_index].embedding;
  out.selected_index = pick.selected_index;
  out.loss = alignment_loss(e, classifier, temperature, target);
  out.grad = alignment_loss_grad(e, classifier, temperature, target);
  return out;
}

LossValue compose_batch_loss(const BatchLossTerms& terms,
                             const BatchComposition& comp) {
  if (comp.batch_size() < 1) {
    throw std::invalid_argument("compose_batch_loss: empty batch");
  }
  double total = 0.0;
  if (comp.n_detection > 0) {
    total += terms.box_sum / comp.n_detection;
    total += terms.obj_sum / comp.n_detection;
  }
  if (terms.n_cls_contributing > 0) {
    total += terms.cls_sum / terms.n_cls_contributing;
  }
  return {total};
}

std::vector<SampleRef> oversample_interleave(std::size_t det_size,
                                             std::size_t cls_size,
                                             double ratio, std::uint64_t seed) {
  if (det_size < 1 || cls_size < 1) {
    throw std::invalid_argument("oversample_interleave: empty dataset");
  }
  if (!(ratio > 0.0)) {
    throw std::invalid_argument("oversample_interleave: ratio must be positive");
  }
  std::mt19937_64 rng(seed);

  const auto n_det_slots = static_cast<std::size_t>(
      std::llround(static_cast<double>(cls_size) / ratio));

  std::vector<SampleRef> stream;
  stream.reserve(cls_size + n_det_slots);
  for (std::size_t i = 0; i < cls_size; ++i) {
    stream.push_back({SampleRef::Kind::classification, i});
  }

  // Detection slots come from repeated shuffled passes so repeats stay as
  // even as possible.
  std::vector<std::size_t> pass(det_size);
  std::size_t pass_pos = det_size;
  for (std::size_t slot = 0; slot < n_det_slots; ++slot) {
    if (pass_pos == det_size) {
      for (std::size_t i = 0; i < det_size; ++i) pass[i] = i;
      std::shuffle(pass.begin(), pass.end(), rng);
      pass_pos = 0;
    }
    stream.push_back({SampleRef::Kind::detection, pass[pass_pos++]});
  }

  std::shuffle(stream.begin(), stream.end(), rng);
  return stream;
}

}  // namespace zsd
