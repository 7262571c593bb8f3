#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "zsd/classifier.hpp"
#include "zsd/inference.hpp"
#include "zsd/toy_model.hpp"
#include "zsd/toy_world.hpp"
#include "zsd/weak_supervision.hpp"

namespace zsd {

struct TrainConfig {
  double base_lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int warmup_epochs = 5;
  int total_epochs = 20;
  int grad_accumulation = 4;
  double min_lr_ratio = 0.05;
  int batch_size = 4;
  int eval_every = 1;  // epochs between metric evaluations; final epoch always
  std::uint64_t seed = 1;
};

struct WeakConfig {
  double th_obj = 0.001;
  double oversample_ratio = 4.0;
};

enum class TrainMode { detection_only, joint };

// Momentum buffers parallel to the flat parameter vector, plus the separate
// temperature buffer (the temperature receives no weight decay).
struct OptimizerState {
  std::vector<double> momentum;
  double tau_momentum = 0.0;
  std::int64_t step = 0;
};

// Linear warmup from 0 to base_lr over warmup_epochs, then cosine decay to
// min_lr_ratio * base_lr at the final step.
double lr_schedule(std::int64_t step, const TrainConfig& cfg,
                   std::int64_t steps_per_epoch);

// buffer <- momentum * buffer + grad + weight_decay * param;
// param <- param - lr * buffer. Throws NumericError on non-finite gradients.
void sgd_step(std::span<double> params, std::span<const double> grads,
              std::span<double> momentum_buf, double lr, double momentum,
              double weight_decay);

struct EpochRecord {
  int epoch = 0;
  double loss_box = 0.0;
  double loss_obj = 0.0;
  double loss_cls = 0.0;
  std::optional<double> map_seen;
  std::optional<double> map_unseen;
  std::optional<double> ar100_unseen;
  int n_det_samples = 0;
  int n_cls_samples = 0;
  int n_cls_skipped = 0;  // classification samples with no surviving box
};

struct TrainResult {
  std::vector<EpochRecord> log;
};

// One batch's samples, in stream order.
struct SampleBatch {
  std::vector<const DetectionSample*> detection;
  std::vector<const ImageLabelSample*> classification;
};

// Composed loss and analytic parameter gradients for one batch, normalized
// exactly as compose_batch_loss prescribes. Exposed so gradient checks can
// compare against central finite differences of `loss`.
struct BatchGradients {
  double loss = 0.0;
  BatchLossTerms terms;
  BatchComposition comp;
  std::vector<double> param_grads;  // parallels ToyModel::flat()
  double d_tau = 0.0;
  int n_cls_skipped = 0;
};

// det_cols / cls_cols map world class indices to classifier columns (-1 when
// a class is absent from the classifier).
BatchGradients batch_gradients(const ToyModel& model,
                               const TemperatureParam& tau,
                               const ClassifierMatrix& c_det,
                               const ClassifierMatrix& c_cls,
                               const WeakConfig& weak, const SampleBatch& batch,
                               std::span<const int> det_cols,
                               std::span<const int> cls_cols);

// Runs epochs [start_epoch, total_epochs). detection_only consumes only
// detection samples; joint consumes the oversampled interleaved stream with
// gradient accumulation. Deterministic given (world, seeds, start state).
TrainResult train(const World& world, ToyModel& model, TemperatureParam& tau,
                  const ClassifierMatrix& c_det, const ClassifierMatrix& c_cls,
                  const TrainConfig& cfg, const WeakConfig& weak,
                  TrainMode mode, OptimizerState& state, int start_epoch = 0,
                  const InferenceConfig& eval_cfg = {});

}  // namespace zsd
