#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "zsd/classifier.hpp"
#include "zsd/data_splits.hpp"
#include "zsd/evaluation.hpp"
#include "zsd/registry.hpp"
#include "zsd/toy_model.hpp"
#include "zsd/toy_world.hpp"
#include "zsd/trainer.hpp"

namespace zsd::io {

// ---- embedding files: {"dim": D, "classes": {name: [floats...]}} ----
// Vectors need not be pre-normalized; classifier files additionally carry an
// "order" array fixing the column order.

struct EmbeddingFile {
  std::size_t dim = 0;
  std::map<std::string, Embedding> classes;
  std::vector<std::string> order;  // empty unless the file carries one
};

EmbeddingFile load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, std::size_t dim,
                     const std::map<std::string, Embedding>& classes,
                     const std::vector<std::string>& order = {});

ClassifierMatrix load_classifier(const std::filesystem::path& path);
void save_classifier(const std::filesystem::path& path,
                     const ClassifierMatrix& classifier);

// ---- class registries and splits ----

ClassRegistry load_registry(const std::filesystem::path& path);
void save_registry(const std::filesystem::path& path,
                   const ClassRegistry& registry);

SplitSpec load_split(const std::filesystem::path& path);
void save_split(const std::filesystem::path& path, const SplitSpec& split);

// ---- datasets ----
// A dataset prefix P maps to P_annotations.json (or P_labels.json for
// classification data), P_features.bin (float32 little-endian) and
// P_features.meta.json describing the shape [images, grid, grid, channels].

void save_detection_dataset(const std::string& prefix,
                            std::span<const DetectionSample> samples,
                            const std::vector<std::string>& class_names,
                            int feature_dim);
std::vector<DetectionSample> load_detection_dataset(
    const std::string& prefix, const std::vector<std::string>& class_names);

void save_classification_dataset(const std::string& prefix,
                                 std::span<const ImageLabelSample> samples,
                                 const std::vector<std::string>& class_names,
                                 int feature_dim);
std::vector<ImageLabelSample> load_classification_dataset(
    const std::string& prefix, const std::vector<std::string>& class_names);

// Category names as stored in a dataset's annotation/label file.
std::vector<std::string> load_dataset_categories(const std::string& prefix);

// Writes every world artifact under dir: registries, split, class
// embeddings, train datasets and both evaluation datasets.
void save_world(const std::filesystem::path& dir, const World& world);

// Rebuilds a World from a directory written by save_world. Prototypes are
// not persisted; everything training and evaluation need is restored.
World load_world(const std::filesystem::path& dir);

// ---- checkpoints ----

struct Checkpoint {
  std::string config_hash;
  int epochs_completed = 0;
  std::int64_t step = 0;
  int feature_dim = 0, hidden_dim = 0, embed_dim = 0;
  double tau_log_scale = 0.0;
  double tau_momentum = 0.0;
  std::map<std::string, std::vector<double>> params;
  std::map<std::string, std::vector<double>> momentum;
};

Checkpoint make_checkpoint(const ToyModel& model, const TemperatureParam& tau,
                           const OptimizerState& state,
                           const std::string& config_hash,
                           int epochs_completed);
void restore_checkpoint(const Checkpoint& ckpt, ToyModel& model,
                        TemperatureParam& tau, OptimizerState& state);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---- metric logs and reports ----

// Line-delimited JSON, one record per epoch.
void save_metrics(const std::filesystem::path& path,
                  std::span<const EpochRecord> records);

std::string metrics_line(const EpochRecord& record);

// {"image_id": id, "box": [...], "class": name, "confidence": x} per line.
void save_detections_jsonl(
    const std::filesystem::path& path,
    const std::vector<std::vector<Detection>>& dets_per_image,
    const std::vector<std::string>& class_names);

void save_eval_report(const std::filesystem::path& path,
                      const EvalReport& report,
                      const std::vector<std::string>& class_names,
                      const std::string& mode);

// Per-class 101-point precision/recall samples as CSV (class,recall,precision).
void save_pr_csv(const std::filesystem::path& path, const MatchResult& matches,
                 const std::vector<std::string>& class_names);

}  // namespace zsd::io
