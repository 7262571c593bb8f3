// zsd-align: build text-embedding classifiers, generate synthetic worlds,
// split class registries, train the toy detector jointly on detection and
// image-label data, and evaluate zero-shot mAP/AR.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "zsd/config.hpp"
#include "zsd/data_splits.hpp"
#include "zsd/error.hpp"
#include "zsd/evaluation.hpp"
#include "zsd/inference.hpp"
#include "zsd/io.hpp"
#include "zsd/toy_world.hpp"
#include "zsd/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using namespace zsd;

ExperimentConfig resolve_config(const std::string& config_path,
                                const std::vector<std::string>& overrides) {
  ExperimentConfig cfg;
  if (!config_path.empty()) cfg = load_config(config_path);
  for (const auto& assignment : overrides) apply_override(cfg, assignment);
  apply_env_seed(cfg);
  return cfg;
}

int cmd_build_classifier(const std::string& embeddings_path,
                         const std::string& registry_path, bool use_templates,
                         const std::string& out_path) {
  const io::EmbeddingFile file = io::load_embeddings(embeddings_path);
  const ClassRegistry registry = io::load_registry(registry_path);

  std::map<std::string, Embedding> per_class;
  if (use_templates) {
    // The embedding file holds one vector per filled prompt; average the
    // seven prompts per class.
    const PromptTemplateSet templates = shipped_templates();
    const auto encoder = [&](const std::string& prompt) -> Embedding {
      auto it = file.classes.find(prompt);
      if (it == file.classes.end()) {
        throw DataError("embeddings file misses prompt '" + prompt + "'");
      }
      return it->second;
    };
    for (const auto& entry : registry.entries()) {
      per_class[entry.name] =
          build_class_embedding(entry.name, templates, encoder);
    }
  } else {
    per_class = file.classes;
  }

  ClassifierMatrix classifier;
  try {
    classifier = build_classifier(registry, per_class);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  io::save_classifier(out_path, classifier);
  std::cout << "classifier: " << classifier.dim() << " dimensions, "
            << classifier.size() << " classes -> " << out_path << "\n";
  return 0;
}

int cmd_gen_world(const ExperimentConfig& cfg, std::string out_dir) {
  if (out_dir.empty()) out_dir = cfg.paths.world_dir;
  if (out_dir.empty()) {
    throw ConfigError("gen-world: no output directory (--out or paths.world_dir)");
  }
  const World world = generate_world(cfg.world);
  io::save_world(out_dir, world);
  std::ofstream cfg_out(fs::path(out_dir) / "world_config.json");
  cfg_out << config_to_json_text(cfg);
  std::cout << "world: " << world.cfg.n_classes << " classes ("
            << world.unseen_classes.size() << " unseen), "
            << world.det_train.size() << " detection images, "
            << world.cls_train.size() << " classification images -> "
            << out_dir << "\n";
  return 0;
}

int cmd_split(const std::string& registry_path, double fraction,
              const std::string& out_path) {
  const ClassRegistry registry = io::load_registry(registry_path);
  SplitSpec split;
  try {
    split = make_rare_split(registry, fraction);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  io::save_split(out_path, split);
  std::cout << "split: " << split.seen.size() << " seen / "
            << split.unseen.size() << " unseen -> " << out_path << "\n";
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& mode_name,
              const std::string& resume_path, std::string out_dir) {
  if (out_dir.empty()) out_dir = cfg.paths.out_dir;
  if (out_dir.empty()) {
    throw ConfigError("train: no output directory (--out or paths.out_dir)");
  }
  if (cfg.paths.world_dir.empty()) {
    throw ConfigError("train: paths.world_dir is required");
  }
  const TrainMode mode = mode_name == "joint" ? TrainMode::joint
                                              : TrainMode::detection_only;

  const World world = io::load_world(cfg.paths.world_dir);
  if (cfg.paths.classifier_det.empty()) {
    throw ConfigError("train: paths.classifier_det is required");
  }
  const ClassifierMatrix c_det = io::load_classifier(cfg.paths.classifier_det);
  ClassifierMatrix c_cls;
  if (mode == TrainMode::joint) {
    if (cfg.paths.classifier_cls.empty()) {
      throw ConfigError("train: joint mode requires paths.classifier_cls");
    }
    c_cls = io::load_classifier(cfg.paths.classifier_cls);
    if (c_cls.dim() != c_det.dim()) {
      throw DataError("train: classifier dimensions disagree");
    }
  }

  const std::string hash = config_hash(cfg);
  ToyModel model;
  TemperatureParam tau;
  OptimizerState state;
  int start_epoch = 0;
  if (!resume_path.empty()) {
    const io::Checkpoint ckpt = io::load_checkpoint(resume_path);
    if (ckpt.config_hash != hash) {
      throw ConfigError("train: config hash mismatch on resume (checkpoint " +
                        ckpt.config_hash + ", config " + hash + ")");
    }
    io::restore_checkpoint(ckpt, model, tau, state);
    start_epoch = ckpt.epochs_completed;
  } else {
    model = ToyModel::random_init(world.cfg.feature_dim, cfg.model.hidden_dim,
                                  static_cast<int>(c_det.dim()),
                                  cfg.train.seed);
    tau.log_scale = cfg.temperature.init_log_scale;
    tau = clip_temperature(tau);
  }
  if (static_cast<std::size_t>(model.embed_dim()) != c_det.dim()) {
    throw DataError("train: checkpoint embedding dimension disagrees with classifier");
  }

  const TrainResult result = train(world, model, tau, c_det, c_cls, cfg.train,
                                   cfg.weak, mode, state, start_epoch,
                                   cfg.infer);

  fs::create_directories(out_dir);
  const io::Checkpoint ckpt = io::make_checkpoint(
      model, tau, state, hash,
      std::max(start_epoch, cfg.train.total_epochs));
  io::save_checkpoint(fs::path(out_dir) / "checkpoint.json", ckpt);

  // On resume, append to the existing log so the full history stays together.
  std::vector<EpochRecord> log;
  const fs::path metrics_path = fs::path(out_dir) / "metrics.jsonl";
  if (!resume_path.empty() && fs::exists(metrics_path)) {
    // keep prior lines by re-writing them verbatim
    std::ifstream in(metrics_path);
    std::string prior((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    std::ofstream out(metrics_path, std::ios::binary);
    out << prior;
    for (const auto& r : result.log) out << io::metrics_line(r) << "\n";
  } else {
    io::save_metrics(metrics_path, result.log);
  }
  std::ofstream cfg_out(fs::path(out_dir) / "config.json");
  cfg_out << config_to_json_text(cfg);

  double final_map_unseen = -1.0;
  for (const auto& r : result.log) {
    if (r.map_unseen) final_map_unseen = *r.map_unseen;
  }
  std::cout << "train: mode=" << mode_name << " epochs=["
            << start_epoch << "," << cfg.train.total_epochs << ") steps="
            << state.step;
  if (final_map_unseen >= 0.0) {
    std::cout << " map_unseen=" << final_map_unseen;
  }
  std::cout << " -> " << out_dir << "\n";
  return 0;
}

struct EvalInputs {
  ClassifierMatrix classifier;
  std::vector<std::vector<Detection>> dets;
  std::vector<std::vector<GtBox>> gts;
  TemperatureParam tau;
};

EvalInputs run_prediction(const ExperimentConfig& cfg,
                          const std::string& checkpoint_path,
                          const std::string& dataset_prefix,
                          const std::string& embeddings_path,
                          const std::string& split_path,
                          const std::string& mode) {
  const io::Checkpoint ckpt = io::load_checkpoint(checkpoint_path);
  ToyModel model;
  TemperatureParam tau;
  OptimizerState state;
  io::restore_checkpoint(ckpt, model, tau, state);

  const io::EmbeddingFile embeddings = io::load_embeddings(embeddings_path);
  const SplitSpec split = io::load_split(split_path);

  std::vector<std::string> classifier_names;
  if (mode == "zsd") {
    classifier_names = split.unseen;
  } else {
    classifier_names = split.seen;
    classifier_names.insert(classifier_names.end(), split.unseen.begin(),
                            split.unseen.end());
  }
  if (classifier_names.empty()) {
    throw DataError("evaluate: classifier class set is empty");
  }
  std::vector<ClassEntry> entries;
  for (const auto& name : classifier_names) entries.push_back({name, {}, {}, {}});
  EvalInputs inputs;
  try {
    inputs.classifier =
        build_classifier(ClassRegistry(std::move(entries)), embeddings.classes);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  inputs.tau = tau;
  if (static_cast<std::size_t>(model.embed_dim()) != inputs.classifier.dim()) {
    throw DataError("evaluate: embedding dimension disagrees with classifier");
  }

  const std::vector<std::string> categories =
      io::load_dataset_categories(dataset_prefix);
  const std::vector<DetectionSample> samples =
      io::load_detection_dataset(dataset_prefix, categories);

  std::map<std::string, int> col_of;
  for (std::size_t i = 0; i < inputs.classifier.names().size(); ++i) {
    col_of[inputs.classifier.names()[i]] = static_cast<int>(i);
  }
  for (const auto& sample : samples) {
    inputs.dets.push_back(predict(model, sample.features, sample.grid,
                                  inputs.classifier, tau, cfg.infer));
    std::vector<GtBox> image_gts;
    for (const auto& obj : sample.objects) {
      auto it = col_of.find(categories.at(obj.class_index));
      if (it != col_of.end()) {
        image_gts.push_back({to_corners(obj.box), it->second});
      }
    }
    inputs.gts.push_back(std::move(image_gts));
  }
  return inputs;
}

int cmd_evaluate(const ExperimentConfig& cfg, const std::string& checkpoint,
                 const std::string& dataset, const std::string& embeddings,
                 const std::string& split_path, const std::string& mode,
                 const std::string& subset, const std::string& out_path,
                 const std::string& pr_csv) {
  EvalInputs inputs =
      run_prediction(cfg, checkpoint, dataset, embeddings, split_path, mode);
  const SplitSpec split = io::load_split(split_path);

  std::vector<int> subset_cols;
  const auto in_list = [](const std::vector<std::string>& names,
                          const std::string& name) {
    return std::find(names.begin(), names.end(), name) != names.end();
  };
  for (std::size_t i = 0; i < inputs.classifier.names().size(); ++i) {
    const std::string& name = inputs.classifier.names()[i];
    if (subset == "all" || (subset == "seen" && in_list(split.seen, name)) ||
        (subset == "unseen" && in_list(split.unseen, name))) {
      subset_cols.push_back(static_cast<int>(i));
    }
  }
  if (subset_cols.empty()) {
    throw DataError("evaluate: subset '" + subset +
                    "' contains no classifier class");
  }

  EvalReport report;
  try {
    report = evaluate_detections(inputs.dets, inputs.gts, subset_cols, subset);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  io::save_eval_report(out_path, report, inputs.classifier.names(), mode);
  if (!pr_csv.empty()) {
    const MatchResult matches = match_detections(inputs.dets, inputs.gts, 0.5);
    io::save_pr_csv(pr_csv, matches, inputs.classifier.names());
  }
  std::cout << "evaluate: mode=" << mode << " subset=" << subset
            << " map=" << report.map << " ar100=" << report.ar_at_100 << " -> "
            << out_path << "\n";
  return 0;
}

int cmd_infer(const ExperimentConfig& cfg, const std::string& checkpoint,
              const std::string& dataset, const std::string& embeddings,
              const std::string& split_path, const std::string& mode,
              const std::string& out_path) {
  const EvalInputs inputs =
      run_prediction(cfg, checkpoint, dataset, embeddings, split_path, mode);
  io::save_detections_jsonl(out_path, inputs.dets, inputs.classifier.names());
  std::size_t total = 0;
  for (const auto& image : inputs.dets) total += image.size();
  std::cout << "infer: " << total << " detections over " << inputs.dets.size()
            << " images -> " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"embedding-aligned zero-shot detection toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "experiment config (JSON)");
  app.add_option("--set", overrides, "override config key: section.key=value");

  auto* build = app.add_subcommand("build-classifier",
                                   "build a fixed classifier from embeddings");
  std::string bc_embeddings, bc_registry, bc_out;
  bool bc_templates = false;
  build->add_option("--embeddings", bc_embeddings)->required();
  build->add_option("--registry", bc_registry)->required();
  build->add_flag("--templates", bc_templates,
                  "average the shipped prompt templates per class");
  build->add_option("--out", bc_out)->required();

  auto* gen = app.add_subcommand("gen-world", "generate a synthetic world");
  std::string gw_out;
  gen->add_option("--out", gw_out, "output directory");

  auto* split_cmd = app.add_subcommand("split", "seen/unseen rare split");
  std::string sp_registry, sp_out;
  double sp_fraction = 0.2;
  split_cmd->add_option("--registry", sp_registry)->required();
  split_cmd->add_option("--fraction", sp_fraction);
  split_cmd->add_option("--out", sp_out)->required();

  auto* train_cmd = app.add_subcommand("train", "train the toy detector");
  std::string tr_mode = "detection_only", tr_resume, tr_out;
  train_cmd->add_option("--mode", tr_mode)
      ->check(CLI::IsMember({"detection_only", "joint"}));
  train_cmd->add_option("--resume", tr_resume, "checkpoint to continue from");
  train_cmd->add_option("--out", tr_out, "output directory");

  auto* eval_cmd = app.add_subcommand("evaluate", "compute mAP/AR report");
  std::string ev_ckpt, ev_dataset, ev_embeddings, ev_split, ev_out, ev_pr;
  std::string ev_mode = "zsd", ev_subset = "unseen";
  eval_cmd->add_option("--checkpoint", ev_ckpt)->required();
  eval_cmd->add_option("--dataset", ev_dataset, "dataset prefix")->required();
  eval_cmd->add_option("--embeddings", ev_embeddings)->required();
  eval_cmd->add_option("--split", ev_split)->required();
  eval_cmd->add_option("--mode", ev_mode)->check(CLI::IsMember({"zsd", "gzsd"}));
  eval_cmd->add_option("--subset", ev_subset)
      ->check(CLI::IsMember({"seen", "unseen", "all"}));
  eval_cmd->add_option("--out", ev_out)->required();
  eval_cmd->add_option("--pr-csv", ev_pr, "write per-class PR points");

  auto* infer_cmd = app.add_subcommand("infer", "dump raw detections");
  std::string in_ckpt, in_dataset, in_embeddings, in_split, in_out;
  std::string in_mode = "zsd";
  infer_cmd->add_option("--checkpoint", in_ckpt)->required();
  infer_cmd->add_option("--dataset", in_dataset)->required();
  infer_cmd->add_option("--embeddings", in_embeddings)->required();
  infer_cmd->add_option("--split", in_split)->required();
  infer_cmd->add_option("--mode", in_mode)->check(CLI::IsMember({"zsd", "gzsd"}));
  infer_cmd->add_option("--out", in_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }

  try {
    const ExperimentConfig cfg = resolve_config(config_path, overrides);
    if (build->parsed()) {
      return cmd_build_classifier(bc_embeddings, bc_registry, bc_templates,
                                  bc_out);
    }
    if (gen->parsed()) return cmd_gen_world(cfg, gw_out);
    if (split_cmd->parsed()) return cmd_split(sp_registry, sp_fraction, sp_out);
    if (train_cmd->parsed()) return cmd_train(cfg, tr_mode, tr_resume, tr_out);
    if (eval_cmd->parsed()) {
      return cmd_evaluate(cfg, ev_ckpt, ev_dataset, ev_embeddings, ev_split,
                          ev_mode, ev_subset, ev_out, ev_pr);
    }
    if (infer_cmd->parsed()) {
      return cmd_infer(cfg, in_ckpt, in_dataset, in_embeddings, in_split,
                       in_mode, in_out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
