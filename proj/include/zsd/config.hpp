#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "zsd/classifier.hpp"
#include "zsd/inference.hpp"
#include "zsd/toy_world.hpp"
#include "zsd/trainer.hpp"

namespace zsd {

// Full experiment document. Defaults reproduce the published training setup:
// lr 0.001, momentum 0.9, weight decay 5e-4, 5 warmup epochs, accumulation
// over 4 batches, 4:1 oversampling, objectness filters 0.001 (training) and
// 0.1 (inference), score cutoff 0.01, NMS IoU 0.5, temperature ln(1/0.07)
// clipped at 100.
struct ExperimentConfig {
  SyntheticWorldConfig world;
  TrainConfig train;
  WeakConfig weak;
  InferenceConfig infer;

  struct Temperature {
    double init_log_scale = TemperatureParam::default_log_scale();
  } temperature;

  struct Model {
    int hidden_dim = 32;
  } model;

  struct Paths {
    std::string world_dir;
    std::string classifier_det;
    std::string classifier_cls;
    std::string out_dir;
  } paths;
};

// Strict parse: unknown keys anywhere in the document are rejected; missing
// keys keep their defaults.
ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

std::string config_to_json_text(const ExperimentConfig& cfg);

// Applies one --set override of the form section.key=value. Values parse as
// JSON scalars, falling back to strings.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

// Replaces every seed with ZSD_ALIGN_SEED when the variable is set.
void apply_env_seed(ExperimentConfig& cfg);

// FNV-1a hash of the canonical JSON dump; ties checkpoints to their config.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace zsd
