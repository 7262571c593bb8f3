#include "zsd/io.hpp"

#include <fstream>

#include "json.hpp"
#include "zsd/error.hpp"

namespace zsd::io {

namespace {

using nlohmann::json;

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("invalid JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

void write_json(const std::filesystem::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

void save_features(const std::string& prefix,
                   const std::vector<const std::vector<double>*>& tensors,
                   int grid, int feature_dim) {
  json meta;
  meta["shape"] = {tensors.size(), grid, grid, feature_dim};
  meta["dtype"] = "float32";
  meta["layout"] = "image,y,x,channel";
  write_json(prefix + "_features.meta.json", meta);

  std::ofstream bin(prefix + "_features.bin", std::ios::binary);
  if (!bin) throw DataError("cannot write " + prefix + "_features.bin");
  std::vector<float> row;
  for (const auto* t : tensors) {
    row.assign(t->begin(), t->end());
    bin.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!bin) throw DataError("write failed for " + prefix + "_features.bin");
}

struct FeatureBlock {
  int images = 0, grid = 0, channels = 0;
  std::vector<std::vector<double>> tensors;
};

FeatureBlock load_features(const std::string& prefix) {
  const json meta = read_json(prefix + "_features.meta.json");
  if (!meta.contains("shape") || meta["shape"].size() != 4) {
    throw DataError("bad feature metadata for " + prefix);
  }
  if (meta.value("dtype", "") != "float32") {
    throw DataError("unsupported feature dtype for " + prefix);
  }
  FeatureBlock block;
  block.images = meta["shape"][0].get<int>();
  block.grid = meta["shape"][1].get<int>();
  if (meta["shape"][2].get<int>() != block.grid) {
    throw DataError("non-square feature grid for " + prefix);
  }
  block.channels = meta["shape"][3].get<int>();

  std::ifstream bin(prefix + "_features.bin", std::ios::binary);
  if (!bin) throw DataError("cannot open " + prefix + "_features.bin");
  const std::size_t per_image = static_cast<std::size_t>(block.grid) *
                                block.grid * block.channels;
  std::vector<float> row(per_image);
  for (int i = 0; i < block.images; ++i) {
    bin.read(reinterpret_cast<char*>(row.data()),
             static_cast<std::streamsize>(per_image * sizeof(float)));
    if (!bin) throw DataError("truncated feature file for " + prefix);
    block.tensors.emplace_back(row.begin(), row.end());
  }
  return block;
}

std::map<std::string, int> name_index(const std::vector<std::string>& names) {
  std::map<std::string, int> idx;
  for (std::size_t i = 0; i < names.size(); ++i) {
    idx[names[i]] = static_cast<int>(i);
  }
  return idx;
}

int lookup_class(const std::map<std::string, int>& idx,
                 const std::string& name, const std::string& context) {
  auto it = idx.find(name);
  if (it == idx.end()) {
    throw DataError(context + ": unknown class '" + name + "'");
  }
  return it->second;
}

json categories_json(const std::vector<std::string>& class_names) {
  json cats = json::array();
  for (const auto& name : class_names) cats.push_back({{"name", name}});
  return cats;
}

std::vector<std::string> categories_from_json(const json& j,
                                              const std::string& context) {
  std::vector<std::string> names;
  for (const auto& c : j) {
    if (!c.contains("name")) throw DataError(context + ": category without name");
    names.push_back(c["name"].get<std::string>());
  }
  return names;
}

}  // namespace

EmbeddingFile load_embeddings(const std::filesystem::path& path) {
  const json j = read_json(path);
  if (!j.contains("dim") || !j.contains("classes")) {
    throw DataError(path.string() + ": embedding file needs 'dim' and 'classes'");
  }
  EmbeddingFile file;
  file.dim = j["dim"].get<std::size_t>();
  for (const auto& [name, values] : j["classes"].items()) {
    Embedding e = values.get<Embedding>();
    if (e.size() != file.dim) {
      throw DataError(path.string() + ": vector for '" + name +
                      "' has wrong dimension");
    }
    for (double x : e) {
      if (!std::isfinite(x)) {
        throw DataError(path.string() + ": non-finite value for '" + name + "'");
      }
    }
    file.classes.emplace(name, std::move(e));
  }
  if (j.contains("order")) {
    file.order = j["order"].get<std::vector<std::string>>();
  }
  return file;
}

void save_embeddings(const std::filesystem::path& path, std::size_t dim,
                     const std::map<std::string, Embedding>& classes,
                     const std::vector<std::string>& order) {
  json j;
  j["dim"] = dim;
  j["classes"] = json::object();
  for (const auto& [name, e] : classes) j["classes"][name] = e;
  if (!order.empty()) j["order"] = order;
  write_json(path, j);
}

ClassifierMatrix load_classifier(const std::filesystem::path& path) {
  const EmbeddingFile file = load_embeddings(path);
  std::vector<std::string> order = file.order;
  if (order.empty()) {
    for (const auto& [name, e] : file.classes) order.push_back(name);
  }
  std::vector<ClassEntry> entries;
  for (const auto& name : order) entries.push_back({name, {}, {}, {}});
  return build_classifier(ClassRegistry(std::move(entries)), file.classes);
}

void save_classifier(const std::filesystem::path& path,
                     const ClassifierMatrix& classifier) {
  std::map<std::string, Embedding> classes;
  for (std::size_t i = 0; i < classifier.size(); ++i) {
    const auto col = classifier.column(i);
    classes[classifier.names()[i]] = Embedding(col.begin(), col.end());
  }
  save_embeddings(path, classifier.dim(), classes, classifier.names());
}

ClassRegistry load_registry(const std::filesystem::path& path) {
  const json j = read_json(path);
  if (!j.contains("classes")) {
    throw DataError(path.string() + ": registry file needs 'classes'");
  }
  std::vector<ClassEntry> entries;
  for (const auto& c : j["classes"]) {
    ClassEntry e;
    if (!c.contains("name")) {
      throw DataError(path.string() + ": registry entry without name");
    }
    e.name = c["name"].get<std::string>();
    if (c.contains("superclass") && !c["superclass"].is_null()) {
      e.superclass = c["superclass"].get<std::string>();
    }
    if (c.contains("frequency") && !c["frequency"].is_null()) {
      e.frequency = c["frequency"].get<std::uint64_t>();
    }
    entries.push_back(std::move(e));
  }
  try {
    return ClassRegistry(std::move(entries));
  } catch (const std::invalid_argument& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_registry(const std::filesystem::path& path,
                   const ClassRegistry& registry) {
  json classes = json::array();
  for (const auto& e : registry.entries()) {
    json c;
    c["name"] = e.name;
    if (e.superclass) c["superclass"] = *e.superclass;
    if (e.frequency) c["frequency"] = *e.frequency;
    classes.push_back(c);
  }
  write_json(path, json{{"classes", classes}});
}

SplitSpec load_split(const std::filesystem::path& path) {
  const json j = read_json(path);
  if (!j.contains("seen") || !j.contains("unseen")) {
    throw DataError(path.string() + ": split file needs 'seen' and 'unseen'");
  }
  SplitSpec split;
  split.seen = j["seen"].get<std::vector<std::string>>();
  split.unseen = j["unseen"].get<std::vector<std::string>>();
  return split;
}

void save_split(const std::filesystem::path& path, const SplitSpec& split) {
  write_json(path, json{{"seen", split.seen}, {"unseen", split.unseen}});
}

void save_detection_dataset(const std::string& prefix,
                            std::span<const DetectionSample> samples,
                            const std::vector<std::string>& class_names,
                            int feature_dim) {
  const int grid = samples.empty() ? 0 : samples[0].grid;
  json images = json::array();
  json annotations = json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    images.push_back({{"id", i}, {"width", grid}, {"height", grid}});
    for (const auto& obj : samples[i].objects) {
      const CornerBox c = to_corners(obj.box);
      annotations.push_back({{"image_id", i},
                             {"bbox", {c.x1, c.y1, c.x2, c.y2}},
                             {"category", class_names.at(obj.class_index)}});
    }
  }
  json j;
  j["images"] = images;
  j["annotations"] = annotations;
  j["categories"] = categories_json(class_names);
  write_json(prefix + "_annotations.json", j);

  std::vector<const std::vector<double>*> tensors;
  for (const auto& s : samples) tensors.push_back(&s.features);
  save_features(prefix, tensors, grid, feature_dim);
}

std::vector<DetectionSample> load_detection_dataset(
    const std::string& prefix, const std::vector<std::string>& class_names) {
  const json j = read_json(prefix + "_annotations.json");
  FeatureBlock block = load_features(prefix);
  const auto idx = name_index(class_names);

  std::vector<DetectionSample> samples(block.images);
  for (int i = 0; i < block.images; ++i) {
    samples[i].grid = block.grid;
    samples[i].features = std::move(block.tensors[i]);
  }
  if (j.contains("images") &&
      j["images"].size() != static_cast<std::size_t>(block.images)) {
    throw DataError(prefix + ": image count differs between files");
  }
  for (const auto& a : j["annotations"]) {
    const auto image_id = a["image_id"].get<std::size_t>();
    if (image_id >= samples.size()) {
      throw DataError(prefix + ": annotation references missing image");
    }
    const auto& bbox = a["bbox"];
    const CornerBox c{bbox[0].get<double>(), bbox[1].get<double>(),
                      bbox[2].get<double>(), bbox[3].get<double>()};
    const int cls =
        lookup_class(idx, a["category"].get<std::string>(), prefix);
    samples[image_id].objects.push_back({to_center(c), cls});
  }
  return samples;
}

void save_classification_dataset(const std::string& prefix,
                                 std::span<const ImageLabelSample> samples,
                                 const std::vector<std::string>& class_names,
                                 int feature_dim) {
  const int grid = samples.empty() ? 0 : samples[0].grid;
  json labels = json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    labels.push_back(
        {{"image_id", i}, {"class", class_names.at(samples[i].label)}});
  }
  json j;
  j["labels"] = labels;
  j["categories"] = categories_json(class_names);
  write_json(prefix + "_labels.json", j);

  std::vector<const std::vector<double>*> tensors;
  for (const auto& s : samples) tensors.push_back(&s.features);
  save_features(prefix, tensors, grid, feature_dim);
}

std::vector<ImageLabelSample> load_classification_dataset(
    const std::string& prefix, const std::vector<std::string>& class_names) {
  const json j = read_json(prefix + "_labels.json");
  FeatureBlock block = load_features(prefix);
  const auto idx = name_index(class_names);

  if (j["labels"].size() != static_cast<std::size_t>(block.images)) {
    throw DataError(prefix + ": label count differs from feature count");
  }
  std::vector<ImageLabelSample> samples(block.images);
  for (int i = 0; i < block.images; ++i) {
    samples[i].grid = block.grid;
    samples[i].features = std::move(block.tensors[i]);
  }
  for (const auto& l : j["labels"]) {
    const auto image_id = l["image_id"].get<std::size_t>();
    if (image_id >= samples.size()) {
      throw DataError(prefix + ": label references missing image");
    }
    if (l.contains("classes")) {
      throw DataError(prefix + ": multi-label classification images are not supported");
    }
    samples[image_id].label =
        lookup_class(idx, l["class"].get<std::string>(), prefix);
  }
  return samples;
}

std::vector<std::string> load_dataset_categories(const std::string& prefix) {
  std::filesystem::path ann = prefix + "_annotations.json";
  const json j = read_json(std::filesystem::exists(ann)
                               ? ann
                               : std::filesystem::path(prefix + "_labels.json"));
  if (!j.contains("categories")) {
    throw DataError(prefix + ": dataset has no categories");
  }
  return categories_from_json(j["categories"], prefix);
}

void save_world(const std::filesystem::path& dir, const World& world) {
  std::filesystem::create_directories(dir);
  const auto& names = world.class_names;

  auto registry_of = [&](const std::vector<int>& ids) {
    std::vector<ClassEntry> entries;
    for (int c : ids) entries.push_back({names[c], {}, {}, {}});
    return ClassRegistry(std::move(entries));
  };
  std::vector<int> all_ids(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) all_ids[i] = static_cast<int>(i);

  save_registry(dir / "registry.json", registry_of(all_ids));
  save_registry(dir / "registry_det.json", registry_of(world.det_classes));
  save_registry(dir / "registry_cls.json", registry_of(world.cls_pool_classes));

  SplitSpec split;
  for (int c : world.seen_classes) split.seen.push_back(names[c]);
  for (int c : world.unseen_classes) split.unseen.push_back(names[c]);
  save_split(dir / "split.json", split);

  save_embeddings(dir / "class_embeddings.json", world.cfg.embed_dim,
                  world.class_embeddings);

  const int f = world.cfg.feature_dim;
  save_detection_dataset((dir / "det_train").string(), world.det_train, names, f);
  save_classification_dataset((dir / "cls_train").string(), world.cls_train,
                              names, f);
  save_detection_dataset((dir / "eval_seen").string(), world.eval_seen, names, f);
  save_detection_dataset((dir / "eval_unseen").string(), world.eval_unseen,
                         names, f);
}

World load_world(const std::filesystem::path& dir) {
  World world;
  const ClassRegistry registry = load_registry(dir / "registry.json");
  world.class_names = registry.names();

  auto ids_of = [&](const std::vector<std::string>& names,
                    const std::string& context) {
    std::vector<int> ids;
    for (const auto& name : names) {
      auto idx = registry.index_of(name);
      if (!idx) throw DataError(context + ": class '" + name +
                                "' missing from registry");
      ids.push_back(static_cast<int>(*idx));
    }
    return ids;
  };

  const SplitSpec split = load_split(dir / "split.json");
  world.seen_classes = ids_of(split.seen, "split");
  world.unseen_classes = ids_of(split.unseen, "split");
  world.det_classes =
      ids_of(load_registry(dir / "registry_det.json").names(), "registry_det");
  world.cls_pool_classes =
      ids_of(load_registry(dir / "registry_cls.json").names(), "registry_cls");

  const EmbeddingFile embeddings = load_embeddings(dir / "class_embeddings.json");
  world.class_embeddings = embeddings.classes;
  world.cfg.embed_dim = static_cast<int>(embeddings.dim);
  world.cfg.n_classes = static_cast<int>(world.class_names.size());
  world.cfg.n_unseen = static_cast<int>(world.unseen_classes.size());

  world.det_train =
      load_detection_dataset((dir / "det_train").string(), world.class_names);
  world.cls_train = load_classification_dataset((dir / "cls_train").string(),
                                                world.class_names);
  world.eval_seen =
      load_detection_dataset((dir / "eval_seen").string(), world.class_names);
  world.eval_unseen =
      load_detection_dataset((dir / "eval_unseen").string(), world.class_names);

  if (!world.det_train.empty()) {
    world.cfg.grid_size = world.det_train[0].grid;
    world.cfg.feature_dim = static_cast<int>(world.det_train[0].features.size() /
                                             (static_cast<std::size_t>(world.cfg.grid_size) *
                                              world.cfg.grid_size));
  }
  if (!world.cls_train.empty()) {
    world.cfg.cls_grid_size = world.cls_train[0].grid;
  }
  return world;
}

Checkpoint make_checkpoint(const ToyModel& model, const TemperatureParam& tau,
                           const OptimizerState& state,
                           const std::string& config_hash,
                           int epochs_completed) {
  Checkpoint ckpt;
  ckpt.config_hash = config_hash;
  ckpt.epochs_completed = epochs_completed;
  ckpt.step = state.step;
  ckpt.feature_dim = model.feature_dim();
  ckpt.hidden_dim = model.hidden_dim();
  ckpt.embed_dim = model.embed_dim();
  ckpt.tau_log_scale = tau.log_scale;
  ckpt.tau_momentum = state.tau_momentum;
  const auto flat = model.flat();
  for (const auto& seg : model.segments()) {
    ckpt.params[seg.name] = std::vector<double>(
        flat.begin() + seg.offset, flat.begin() + seg.offset + seg.size);
    if (!state.momentum.empty()) {
      ckpt.momentum[seg.name] = std::vector<double>(
          state.momentum.begin() + seg.offset,
          state.momentum.begin() + seg.offset + seg.size);
    }
  }
  return ckpt;
}

void restore_checkpoint(const Checkpoint& ckpt, ToyModel& model,
                        TemperatureParam& tau, OptimizerState& state) {
  model = ToyModel(ckpt.feature_dim, ckpt.hidden_dim, ckpt.embed_dim);
  state.momentum.assign(model.flat().size(), 0.0);
  for (const auto& seg : model.segments()) {
    auto it = ckpt.params.find(seg.name);
    if (it == ckpt.params.end() || it->second.size() != seg.size) {
      throw DataError("checkpoint: missing or misshapen tensor " + seg.name);
    }
    std::copy(it->second.begin(), it->second.end(),
              model.flat().begin() + seg.offset);
    auto mit = ckpt.momentum.find(seg.name);
    if (mit != ckpt.momentum.end()) {
      if (mit->second.size() != seg.size) {
        throw DataError("checkpoint: misshapen momentum tensor " + seg.name);
      }
      std::copy(mit->second.begin(), mit->second.end(),
                state.momentum.begin() + seg.offset);
    }
  }
  tau.log_scale = ckpt.tau_log_scale;
  state.tau_momentum = ckpt.tau_momentum;
  state.step = ckpt.step;
}

void save_checkpoint(const std::filesystem::path& path,
                     const Checkpoint& ckpt) {
  json j;
  j["format"] = "zsd-align-checkpoint-v1";
  j["config_hash"] = ckpt.config_hash;
  j["epochs_completed"] = ckpt.epochs_completed;
  j["step"] = ckpt.step;
  j["feature_dim"] = ckpt.feature_dim;
  j["hidden_dim"] = ckpt.hidden_dim;
  j["embed_dim"] = ckpt.embed_dim;
  j["tau_log_scale"] = ckpt.tau_log_scale;
  j["tau_momentum"] = ckpt.tau_momentum;
  j["params"] = ckpt.params;
  j["momentum"] = ckpt.momentum;
  write_json(path, j);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const json j = read_json(path);
  if (j.value("format", "") != "zsd-align-checkpoint-v1") {
    throw DataError(path.string() + ": not a checkpoint file");
  }
  Checkpoint ckpt;
  ckpt.config_hash = j["config_hash"].get<std::string>();
  ckpt.epochs_completed = j["epochs_completed"].get<int>();
  ckpt.step = j["step"].get<std::int64_t>();
  ckpt.feature_dim = j["feature_dim"].get<int>();
  ckpt.hidden_dim = j["hidden_dim"].get<int>();
  ckpt.embed_dim = j["embed_dim"].get<int>();
  ckpt.tau_log_scale = j["tau_log_scale"].get<double>();
  ckpt.tau_momentum = j["tau_momentum"].get<double>();
  ckpt.params = j["params"].get<std::map<std::string, std::vector<double>>>();
  ckpt.momentum =
      j["momentum"].get<std::map<std::string, std::vector<double>>>();
  return ckpt;
}

std::string metrics_line(const EpochRecord& r) {
  json j;
  j["epoch"] = r.epoch;
  j["loss_box"] = r.loss_box;
  j["loss_obj"] = r.loss_obj;
  j["loss_cls"] = r.loss_cls;
  j["map_seen"] = r.map_seen ? json(*r.map_seen) : json(nullptr);
  j["map_unseen"] = r.map_unseen ? json(*r.map_unseen) : json(nullptr);
  j["ar100_unseen"] = r.ar100_unseen ? json(*r.ar100_unseen) : json(nullptr);
  j["n_det_samples"] = r.n_det_samples;
  j["n_cls_samples"] = r.n_cls_samples;
  j["n_cls_skipped"] = r.n_cls_skipped;
  return j.dump();
}

void save_metrics(const std::filesystem::path& path,
                  std::span<const EpochRecord> records) {
  std::string text;
  for (const auto& r : records) text += metrics_line(r) + "\n";
  write_text(path, text);
}

void save_detections_jsonl(
    const std::filesystem::path& path,
    const std::vector<std::vector<Detection>>& dets_per_image,
    const std::vector<std::string>& class_names) {
  std::string text;
  for (std::size_t img = 0; img < dets_per_image.size(); ++img) {
    for (const auto& d : dets_per_image[img]) {
      json j;
      j["image_id"] = img;
      j["box"] = {d.box.x1, d.box.y1, d.box.x2, d.box.y2};
      j["class"] = class_names.at(d.class_index);
      j["confidence"] = d.confidence;
      text += j.dump() + "\n";
    }
  }
  write_text(path, text);
}

void save_eval_report(const std::filesystem::path& path,
                      const EvalReport& report,
                      const std::vector<std::string>& class_names,
                      const std::string& mode) {
  json per_class = json::object();
  for (const auto& [cls, ap] : report.per_class_ap) {
    per_class[class_names.at(cls)] = ap;
  }
  json j;
  j["subset"] = report.class_subset;
  j["mode"] = mode;
  j["classifier_classes"] = class_names;
  j["map"] = report.map;
  j["ar100"] = report.ar_at_100;
  j["per_class"] = per_class;
  write_json(path, j);
}

void save_pr_csv(const std::filesystem::path& path, const MatchResult& matches,
                 const std::vector<std::string>& class_names) {
  std::string text = "class,recall,precision\n";
  for (const auto& [cls, cm] : matches) {
    const std::vector<double> curve = interpolated_precision_curve(matches, cls);
    if (curve.empty()) continue;
    for (int k = 0; k <= 100; ++k) {
      char line[128];
      std::snprintf(line, sizeof(line), "%s,%.2f,%.17g\n",
                    class_names.at(cls).c_str(), k / 100.0, curve[k]);
      text += line;
    }
  }
  write_text(path, text);
}

}  // namespace zsd::io
