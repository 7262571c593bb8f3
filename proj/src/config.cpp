#include "zsd/config.hpp"

#include <cstdlib>
#include <fstream>

#include "json.hpp"
#include "zsd/error.hpp"

namespace zsd {

namespace {

using nlohmann::json;

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["world"] = {{"grid_size", cfg.world.grid_size},
                {"cls_grid_size", cfg.world.cls_grid_size},
                {"feature_dim", cfg.world.feature_dim},
                {"embed_dim", cfg.world.embed_dim},
                {"n_classes", cfg.world.n_classes},
                {"n_unseen", cfg.world.n_unseen},
                {"det_class_count", cfg.world.det_class_count},
                {"cls_pool", cfg.world.cls_pool},
                {"noise_sigma", cfg.world.noise_sigma},
                {"class_embed_noise", cfg.world.class_embed_noise},
                {"objects_min", cfg.world.objects_min},
                {"objects_max", cfg.world.objects_max},
                {"det_images", cfg.world.det_images},
                {"cls_images", cfg.world.cls_images},
                {"eval_images", cfg.world.eval_images},
                {"seed", cfg.world.seed}};
  j["train"] = {{"base_lr", cfg.train.base_lr},
                {"momentum", cfg.train.momentum},
                {"weight_decay", cfg.train.weight_decay},
                {"warmup_epochs", cfg.train.warmup_epochs},
                {"total_epochs", cfg.train.total_epochs},
                {"grad_accumulation", cfg.train.grad_accumulation},
                {"min_lr_ratio", cfg.train.min_lr_ratio},
                {"batch_size", cfg.train.batch_size},
                {"eval_every", cfg.train.eval_every},
                {"seed", cfg.train.seed}};
  j["weak"] = {{"th_obj", cfg.weak.th_obj},
               {"oversample_ratio", cfg.weak.oversample_ratio}};
  j["infer"] = {{"objectness_threshold", cfg.infer.objectness_threshold},
                {"score_cutoff", cfg.infer.score_cutoff},
                {"nms_iou", cfg.infer.nms_iou},
                {"max_detections", cfg.infer.max_detections}};
  j["temperature"] = {{"init_log_scale", cfg.temperature.init_log_scale}};
  j["model"] = {{"hidden_dim", cfg.model.hidden_dim}};
  j["paths"] = {{"world_dir", cfg.paths.world_dir},
                {"classifier_det", cfg.paths.classifier_det},
                {"classifier_cls", cfg.paths.classifier_cls},
                {"out_dir", cfg.paths.out_dir}};
  return j;
}

// Recursively overlays `input` onto `base`, rejecting keys absent from base.
void overlay(json& base, const json& input, const std::string& prefix) {
  if (!input.is_object()) {
    throw ConfigError("config: expected an object at '" +
                      (prefix.empty() ? "<root>" : prefix) + "'");
  }
  for (const auto& [key, value] : input.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) {
      throw ConfigError("config: unknown key '" + path + "'");
    }
    if (base[key].is_object()) {
      overlay(base[key], value, path);
    } else {
      if (value.is_object() || value.is_array()) {
        throw ConfigError("config: scalar expected at '" + path + "'");
      }
      base[key] = value;
    }
  }
}

ExperimentConfig from_json(const json& j) {
  json merged = to_json(ExperimentConfig{});
  overlay(merged, j, "");

  ExperimentConfig cfg;
  const json& w = merged["world"];
  cfg.world.grid_size = w["grid_size"].get<int>();
  cfg.world.cls_grid_size = w["cls_grid_size"].get<int>();
  cfg.world.feature_dim = w["feature_dim"].get<int>();
  cfg.world.embed_dim = w["embed_dim"].get<int>();
  cfg.world.n_classes = w["n_classes"].get<int>();
  cfg.world.n_unseen = w["n_unseen"].get<int>();
  cfg.world.det_class_count = w["det_class_count"].get<int>();
  cfg.world.cls_pool = w["cls_pool"].get<std::string>();
  cfg.world.noise_sigma = w["noise_sigma"].get<double>();
  cfg.world.class_embed_noise = w["class_embed_noise"].get<double>();
  cfg.world.objects_min = w["objects_min"].get<int>();
  cfg.world.objects_max = w["objects_max"].get<int>();
  cfg.world.det_images = w["det_images"].get<int>();
  cfg.world.cls_images = w["cls_images"].get<int>();
  cfg.world.eval_images = w["eval_images"].get<int>();
  cfg.world.seed = w["seed"].get<std::uint64_t>();

  const json& t = merged["train"];
  cfg.train.base_lr = t["base_lr"].get<double>();
  cfg.train.momentum = t["momentum"].get<double>();
  cfg.train.weight_decay = t["weight_decay"].get<double>();
  cfg.train.warmup_epochs = t["warmup_epochs"].get<int>();
  cfg.train.total_epochs = t["total_epochs"].get<int>();
  cfg.train.grad_accumulation = t["grad_accumulation"].get<int>();
  cfg.train.min_lr_ratio = t["min_lr_ratio"].get<double>();
  cfg.train.batch_size = t["batch_size"].get<int>();
  cfg.train.eval_every = t["eval_every"].get<int>();
  cfg.train.seed = t["seed"].get<std::uint64_t>();

  cfg.weak.th_obj = merged["weak"]["th_obj"].get<double>();
  cfg.weak.oversample_ratio = merged["weak"]["oversample_ratio"].get<double>();

  const json& inf = merged["infer"];
  cfg.infer.objectness_threshold = inf["objectness_threshold"].get<double>();
  cfg.infer.score_cutoff = inf["score_cutoff"].get<double>();
  cfg.infer.nms_iou = inf["nms_iou"].get<double>();
  cfg.infer.max_detections = inf["max_detections"].get<int>();

  cfg.temperature.init_log_scale =
      merged["temperature"]["init_log_scale"].get<double>();
  cfg.model.hidden_dim = merged["model"]["hidden_dim"].get<int>();

  const json& p = merged["paths"];
  cfg.paths.world_dir = p["world_dir"].get<std::string>();
  cfg.paths.classifier_det = p["classifier_det"].get<std::string>();
  cfg.paths.classifier_cls = p["classifier_cls"].get<std::string>();
  cfg.paths.out_dir = p["out_dir"].get<std::string>();
  return cfg;
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  try {
    return from_json(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value type: ") + e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return config_from_json_text(text);
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
  return to_json(cfg).dump(2) + "\n";
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  json patch = json::object();
  json* node = &patch;
  std::size_t start = 0;
  std::vector<std::string> parts;
  for (std::size_t pos = key.find('.'); pos != std::string::npos;
       pos = key.find('.', start)) {
    parts.push_back(key.substr(start, pos - start));
    start = pos + 1;
  }
  parts.push_back(key.substr(start));
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    (*node)[parts[i]] = json::object();
    node = &(*node)[parts[i]];
  }
  json parsed;
  try {
    parsed = json::parse(value);
    if (parsed.is_object() || parsed.is_array()) parsed = json(value);
  } catch (const json::exception&) {
    parsed = json(value);
  }
  (*node)[parts.back()] = parsed;

  json merged = json::parse(config_to_json_text(cfg));
  overlay(merged, patch, "");
  try {
    cfg = from_json(merged);
  } catch (const json::exception& e) {
    throw ConfigError("--set " + assignment + ": bad value type: " + e.what());
  }
}

void apply_env_seed(ExperimentConfig& cfg) {
  const char* env = std::getenv("ZSD_ALIGN_SEED");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const unsigned long long seed = std::strtoull(env, &end, 10);
  if (end == nullptr || *end != '\0') {
    throw ConfigError("ZSD_ALIGN_SEED must be an unsigned integer");
  }
  cfg.world.seed = seed;
  cfg.train.seed = seed;
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = config_to_json_text(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace zsd
