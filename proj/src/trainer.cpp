#include "zsd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "zsd/error.hpp"
#include "zsd/evaluation.hpp"
#include "zsd/kernels.hpp"

namespace zsd {

double lr_schedule(std::int64_t step, const TrainConfig& cfg,
                   std::int64_t steps_per_epoch) {
  const std::int64_t warmup_steps = cfg.warmup_epochs * steps_per_epoch;
  const std::int64_t total_steps = cfg.total_epochs * steps_per_epoch;
  if (step < warmup_steps) {
    return cfg.base_lr * static_cast<double>(step + 1) /
           static_cast<double>(warmup_steps);
  }
  const double min_lr = cfg.min_lr_ratio * cfg.base_lr;
  const std::int64_t span = total_steps - 1 - warmup_steps;
  if (span <= 0) return min_lr;
  double t = static_cast<double>(step - warmup_steps) / static_cast<double>(span);
  t = std::clamp(t, 0.0, 1.0);
  return min_lr + (cfg.base_lr - min_lr) * 0.5 * (1.0 + std::cos(M_PI * t));
}

void sgd_step(std::span<double> params, std::span<const double> grads,
              std::span<double> momentum_buf, double lr, double momentum,
              double weight_decay) {
  if (params.size() != grads.size() || params.size() != momentum_buf.size()) {
    throw std::invalid_argument("sgd_step: shape mismatch");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericError("sgd_step: non-finite gradient");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    momentum_buf[i] =
        momentum * momentum_buf[i] + grads[i] + weight_decay * params[i];
    params[i] -= lr * momentum_buf[i];
  }
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Unnormalized per-sample pieces held until batch denominators are known.
struct SamplePieces {
  const std::vector<double>* features = nullptr;
  int grid = 0;
  bool is_detection = false;
  ForwardCache cache;
  double box_loss = 0.0;
  double obj_loss = 0.0;
  double cls_loss = 0.0;
  double d_tau = 0.0;
  std::vector<double> d_raw_box;
  std::vector<double> d_raw_obj;
  std::vector<std::pair<int, std::vector<double>>> emb_grads;  // cell -> d_emb
  bool cls_contributing = false;
};

// World class index -> classifier column, by name. -1 where absent.
std::vector<int> column_map(const World& world,
                            const ClassifierMatrix& classifier) {
  std::vector<int> map(world.class_names.size(), -1);
  for (std::size_t col = 0; col < classifier.names().size(); ++col) {
    for (std::size_t c = 0; c < world.class_names.size(); ++c) {
      if (world.class_names[c] == classifier.names()[col]) {
        map[c] = static_cast<int>(col);
      }
    }
  }
  return map;
}

struct EvalSet {
  ClassifierMatrix classifier;
  std::vector<int> world_to_col;
  std::vector<int> subset_cols;
  const std::vector<DetectionSample>* samples = nullptr;
};

EvalSet make_eval_set(const World& world, const std::vector<int>& class_ids,
                      const std::vector<DetectionSample>& samples) {
  std::vector<ClassEntry> entries;
  for (int c : class_ids) entries.push_back({world.class_names[c], {}, {}, {}});
  EvalSet set;
  set.classifier =
      build_classifier(ClassRegistry(std::move(entries)), world.class_embeddings);
  set.world_to_col = column_map(world, set.classifier);
  set.subset_cols.resize(class_ids.size());
  std::iota(set.subset_cols.begin(), set.subset_cols.end(), 0);
  set.samples = &samples;
  return set;
}

struct EvalOutcome {
  double map = 0.0;
  double ar100 = 0.0;
};

EvalOutcome run_eval(const ToyModel& model, const TemperatureParam& tau,
                     const EvalSet& set, const InferenceConfig& icfg) {
  constexpr double kEvalIou = 0.5;
  constexpr int kRecallK = 100;
  std::vector<std::vector<Detection>> dets;
  std::vector<std::vector<GtBox>> gts;
  for (const auto& sample : *set.samples) {
    dets.push_back(predict(model, sample.features, sample.grid, set.classifier,
                           tau, icfg));
    std::vector<GtBox> image_gts;
    for (const auto& obj : sample.objects) {
      const int col = set.world_to_col[obj.class_index];
      if (col >= 0) image_gts.push_back({to_corners(obj.box), col});
    }
    gts.push_back(std::move(image_gts));
  }
  const EvalReport report = evaluate_detections(
      dets, gts, set.subset_cols, "subset", kEvalIou, kRecallK);
  return {report.map, report.ar_at_100};
}

SamplePieces detection_pieces(const ToyModel& model,
                              const TemperatureParam& tau,
                              const ClassifierMatrix& c_det,
                              const DetectionSample& sample,
                              std::span<const int> det_cols) {
  SamplePieces p;
  p.features = &sample.features;
  p.grid = sample.grid;
  p.is_detection = true;
  p.cache = forward_cells(model, sample.features, sample.grid);
  DetectionLossGrads dlg =
      detection_loss_grads(p.cache, sample.objects, sample.grid);
  p.box_loss = dlg.losses.box_loss;
  p.obj_loss = dlg.losses.obj_loss;
  p.d_raw_box = std::move(dlg.d_raw_box);
  p.d_raw_obj = std::move(dlg.d_raw_obj);

  const auto assigned = assign_center_cells(sample.objects, sample.grid);
  if (!assigned.empty()) {
    const double inv_assigned = 1.0 / static_cast<double>(assigned.size());
    const int d = model.embed_dim();
    for (const auto& a : assigned) {
      const std::span<const double> emb{
          p.cache.emb.data() + static_cast<std::size_t>(a.cell) * d,
          static_cast<std::size_t>(d)};
      const int col = det_cols[sample.objects[a.gt_index].class_index];
      if (col < 0) {
        throw DataError("train: detection classifier misses a sample class");
      }
      GradientBundle g = alignment_loss_grad(emb, c_det, tau, col);
      p.cls_loss += alignment_loss(emb, c_det, tau, col).value * inv_assigned;
      kernels::scale(g.d_embedding.data(), inv_assigned, g.d_embedding.size());
      p.d_tau += g.d_log_scale * inv_assigned;
      p.emb_grads.emplace_back(a.cell, std::move(g.d_embedding));
    }
    p.cls_contributing = true;
  }
  return p;
}

SamplePieces classification_pieces(const ToyModel& model,
                                   const TemperatureParam& tau,
                                   const ClassifierMatrix& c_cls,
                                   const WeakConfig& weak,
                                   const ImageLabelSample& sample,
                                   std::span<const int> cls_cols) {
  SamplePieces p;
  p.features = &sample.features;
  p.grid = sample.grid;
  p.cache = forward_cells(model, sample.features, sample.grid);
  const int col = cls_cols[sample.label];
  if (col < 0) {
    throw DataError("train: classification classifier misses a sample label");
  }
  const std::vector<BoxPrediction> preds = decode_predictions(model, p.cache);
  const ClassificationImageLoss cil =
      classification_image_loss(preds, c_cls, tau, col, weak.th_obj);
  if (cil.selected_index) {
    p.cls_loss = cil.loss.value;
    p.d_tau = cil.grad.d_log_scale;
    p.emb_grads.emplace_back(static_cast<int>(*cil.selected_index),
                             cil.grad.d_embedding);
    p.cls_contributing = true;
  }
  return p;
}

}  // namespace

BatchGradients batch_gradients(const ToyModel& model,
                               const TemperatureParam& tau,
                               const ClassifierMatrix& c_det,
                               const ClassifierMatrix& c_cls,
                               const WeakConfig& weak, const SampleBatch& batch,
                               std::span<const int> det_cols,
                               std::span<const int> cls_cols) {
  BatchGradients out;
  out.param_grads.assign(model.flat().size(), 0.0);

  std::vector<SamplePieces> pieces;
  for (const DetectionSample* sample : batch.detection) {
    SamplePieces p = detection_pieces(model, tau, c_det, *sample, det_cols);
    out.comp.n_detection += 1;
    out.terms.box_sum += p.box_loss;
    out.terms.obj_sum += p.obj_loss;
    if (p.cls_contributing) {
      out.terms.cls_sum += p.cls_loss;
      out.terms.n_cls_contributing += 1;
    }
    pieces.push_back(std::move(p));
  }
  for (const ImageLabelSample* sample : batch.classification) {
    SamplePieces p =
        classification_pieces(model, tau, c_cls, weak, *sample, cls_cols);
    out.comp.n_classification += 1;
    if (p.cls_contributing) {
      out.terms.cls_sum += p.cls_loss;
      out.terms.n_cls_contributing += 1;
    } else {
      out.n_cls_skipped += 1;
    }
    pieces.push_back(std::move(p));
  }

  out.loss = compose_batch_loss(out.terms, out.comp).value;

  const double det_w =
      out.comp.n_detection > 0 ? 1.0 / out.comp.n_detection : 0.0;
  const double cls_w = out.terms.n_cls_contributing > 0
                           ? 1.0 / out.terms.n_cls_contributing
                           : 0.0;
  const int f = model.feature_dim();
  for (SamplePieces& p : pieces) {
    for (auto& [cell, demb] : p.emb_grads) {
      kernels::scale(demb.data(), cls_w, demb.size());
    }
    out.d_tau += p.d_tau * cls_w;

    if (p.is_detection) {
      kernels::scale(p.d_raw_box.data(), det_w, p.d_raw_box.size());
      kernels::scale(p.d_raw_obj.data(), det_w, p.d_raw_obj.size());
      const std::size_t cells = static_cast<std::size_t>(p.grid) * p.grid;
      std::vector<std::span<const double>> emb_by_cell(cells);
      for (const auto& [cell, demb] : p.emb_grads) emb_by_cell[cell] = demb;
      for (std::size_t c = 0; c < cells; ++c) {
        accumulate_cell_backward(
            model, {p.features->data() + c * f, static_cast<std::size_t>(f)},
            p.cache, static_cast<int>(c), {p.d_raw_box.data() + c * 4, 4},
            p.d_raw_obj[c], emb_by_cell[c], out.param_grads);
      }
    } else {
      for (const auto& [cell, demb] : p.emb_grads) {
        accumulate_cell_backward(
            model,
            {p.features->data() + static_cast<std::size_t>(cell) * f,
             static_cast<std::size_t>(f)},
            p.cache, cell, {}, 0.0, demb, out.param_grads);
      }
    }
  }
  return out;
}

TrainResult train(const World& world, ToyModel& model, TemperatureParam& tau,
                  const ClassifierMatrix& c_det, const ClassifierMatrix& c_cls,
                  const TrainConfig& cfg, const WeakConfig& weak,
                  TrainMode mode, OptimizerState& state, int start_epoch,
                  const InferenceConfig& eval_cfg) {
  TrainResult result;
  if (start_epoch >= cfg.total_epochs) return result;
  if (cfg.warmup_epochs >= cfg.total_epochs) {
    throw ConfigError("train: warmup_epochs must be < total_epochs");
  }
  if (cfg.batch_size < 1 || cfg.grad_accumulation < 1) {
    throw ConfigError("train: batch_size and grad_accumulation must be >= 1");
  }
  if (world.det_train.empty()) throw DataError("train: no detection samples");
  if (mode == TrainMode::joint && world.cls_train.empty()) {
    throw DataError("train: joint mode needs classification samples");
  }

  const std::vector<int> det_cols = column_map(world, c_det);
  for (int c : world.det_classes) {
    if (det_cols[c] < 0) {
      throw DataError("train: detection classifier misses class " +
                      world.class_names[c]);
    }
  }
  std::vector<int> cls_cols(world.class_names.size(), -1);
  if (mode == TrainMode::joint) {
    cls_cols = column_map(world, c_cls);
    for (int c : world.cls_pool_classes) {
      if (cls_cols[c] < 0) {
        throw DataError("train: classification classifier misses class " +
                        world.class_names[c]);
      }
    }
  }

  const std::size_t n_params = model.flat().size();
  if (state.momentum.empty()) state.momentum.assign(n_params, 0.0);
  if (state.momentum.size() != n_params) {
    throw DataError("train: optimizer state does not match model");
  }

  EvalSet eval_seen, eval_unseen;
  const bool have_eval_seen = !world.eval_seen.empty();
  const bool have_eval_unseen = !world.eval_unseen.empty();
  if (have_eval_seen) {
    eval_seen = make_eval_set(world, world.seen_classes, world.eval_seen);
  }
  if (have_eval_unseen) {
    eval_unseen = make_eval_set(world, world.unseen_classes, world.eval_unseen);
  }

  // One epoch stream has a fixed size, so the optimizer step count per epoch
  // is constant and the schedule horizon is known up front.
  std::size_t stream_size = world.det_train.size();
  if (mode == TrainMode::joint) {
    stream_size = world.cls_train.size() +
                  static_cast<std::size_t>(std::llround(
                      world.cls_train.size() / weak.oversample_ratio));
  }
  const auto n_batches = static_cast<std::int64_t>(
      (stream_size + cfg.batch_size - 1) / cfg.batch_size);
  const std::int64_t steps_per_epoch =
      (n_batches + cfg.grad_accumulation - 1) / cfg.grad_accumulation;

  std::vector<double> window_grads(n_params, 0.0);
  double window_dtau = 0.0;
  int window_batches = 0;

  auto apply_step = [&]() {
    const double inv = 1.0 / window_batches;
    kernels::scale(window_grads.data(), inv, n_params);
    window_dtau *= inv;
    const double lr = lr_schedule(state.step, cfg, steps_per_epoch);
    sgd_step(model.flat(), window_grads, state.momentum, lr, cfg.momentum,
             cfg.weight_decay);
    if (!std::isfinite(window_dtau)) {
      throw NumericError("train: non-finite temperature gradient");
    }
    // Temperature: momentum step without weight decay, then clip.
    state.tau_momentum = cfg.momentum * state.tau_momentum + window_dtau;
    tau.log_scale -= lr * state.tau_momentum;
    tau = clip_temperature(tau);
    state.step += 1;
    std::fill(window_grads.begin(), window_grads.end(), 0.0);
    window_dtau = 0.0;
    window_batches = 0;
  };

  for (int epoch = start_epoch; epoch < cfg.total_epochs; ++epoch) {
    std::vector<SampleRef> stream;
    if (mode == TrainMode::joint) {
      stream = oversample_interleave(world.det_train.size(),
                                     world.cls_train.size(),
                                     weak.oversample_ratio,
                                     mix_seed(cfg.seed, epoch));
    } else {
      stream.reserve(world.det_train.size());
      for (std::size_t i = 0; i < world.det_train.size(); ++i) {
        stream.push_back({SampleRef::Kind::detection, i});
      }
      std::mt19937_64 rng(mix_seed(cfg.seed, epoch));
      std::shuffle(stream.begin(), stream.end(), rng);
    }

    EpochRecord record;
    record.epoch = epoch;
    double epoch_box = 0.0, epoch_obj = 0.0, epoch_cls = 0.0;
    std::int64_t batches_done = 0;

    for (std::size_t batch_start = 0; batch_start < stream.size();
         batch_start += cfg.batch_size) {
      const std::size_t batch_end =
          std::min(stream.size(), batch_start + cfg.batch_size);
      SampleBatch batch;
      for (std::size_t s = batch_start; s < batch_end; ++s) {
        const SampleRef ref = stream[s];
        if (ref.kind == SampleRef::Kind::detection) {
          batch.detection.push_back(&world.det_train[ref.index]);
        } else {
          batch.classification.push_back(&world.cls_train[ref.index]);
        }
      }

      const BatchGradients bg = batch_gradients(model, tau, c_det, c_cls, weak,
                                                batch, det_cols, cls_cols);
      record.n_det_samples += bg.comp.n_detection;
      record.n_cls_samples += bg.comp.n_classification;
      record.n_cls_skipped += bg.n_cls_skipped;
      if (bg.comp.n_detection > 0) {
        epoch_box += bg.terms.box_sum / bg.comp.n_detection;
        epoch_obj += bg.terms.obj_sum / bg.comp.n_detection;
      }
      if (bg.terms.n_cls_contributing > 0) {
        epoch_cls += bg.terms.cls_sum / bg.terms.n_cls_contributing;
      }

      kernels::axpy(1.0, bg.param_grads.data(), window_grads.data(), n_params);
      window_dtau += bg.d_tau;
      window_batches += 1;
      batches_done += 1;
      if (window_batches == cfg.grad_accumulation || batches_done == n_batches) {
        apply_step();
      }
    }

    record.loss_box = epoch_box / static_cast<double>(n_batches);
    record.loss_obj = epoch_obj / static_cast<double>(n_batches);
    record.loss_cls = epoch_cls / static_cast<double>(n_batches);

    const bool eval_now = ((epoch + 1) % cfg.eval_every == 0) ||
                          (epoch == cfg.total_epochs - 1);
    if (eval_now) {
      if (have_eval_seen) {
        record.map_seen = run_eval(model, tau, eval_seen, eval_cfg).map;
      }
      if (have_eval_unseen) {
        const EvalOutcome out = run_eval(model, tau, eval_unseen, eval_cfg);
        record.map_unseen = out.map;
        record.ar100_unseen = out.ar100;
      }
    }
    result.log.push_back(record);
  }
  return result;
}

}  // namespace zsd
