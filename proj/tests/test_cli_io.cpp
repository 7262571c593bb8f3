#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "zsd/config.hpp"
#include "zsd/error.hpp"
#include "zsd/io.hpp"

using namespace zsd;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("zsd_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ZSD_ALIGN_BIN) + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

World small_world(std::uint64_t seed) {
  SyntheticWorldConfig cfg;
  cfg.grid_size = 6;
  cfg.feature_dim = 12;
  cfg.embed_dim = 10;
  cfg.n_classes = 5;
  cfg.n_unseen = 1;
  cfg.det_images = 8;
  cfg.cls_images = 6;
  cfg.eval_images = 3;
  cfg.seed = seed;
  return generate_world(cfg);
}

}  // namespace

TEST_CASE("default config matches the published hyperparameters") {
  const ExperimentConfig cfg;
  CHECK(cfg.train.base_lr == 0.001);
  CHECK(cfg.train.momentum == 0.9);
  CHECK(cfg.train.weight_decay == 5e-4);
  CHECK(cfg.train.warmup_epochs == 5);
  CHECK(cfg.train.grad_accumulation == 4);
  CHECK(cfg.weak.oversample_ratio == 4.0);
  CHECK(cfg.weak.th_obj == 0.001);
  CHECK(cfg.infer.objectness_threshold == 0.1);
  CHECK(cfg.infer.score_cutoff == 0.01);
  CHECK(cfg.infer.nms_iou == 0.5);
  CHECK(cfg.infer.max_detections == 100);
  CHECK(cfg.temperature.init_log_scale == std::log(1.0 / 0.07));
  CHECK(TemperatureParam::kMaxEffectiveScale == 100.0);
}

TEST_CASE("config parsing") {
  SUBCASE("unknown keys are rejected") {
    CHECK_THROWS_AS(config_from_json_text(R"({"train": {"lr": 0.1}})"),
                    ConfigError);
    CHECK_THROWS_AS(config_from_json_text(R"({"sgd": {}})"), ConfigError);
  }

  SUBCASE("partial documents keep defaults elsewhere") {
    const ExperimentConfig cfg =
        config_from_json_text(R"({"train": {"total_epochs": 7}})");
    CHECK(cfg.train.total_epochs == 7);
    CHECK(cfg.train.base_lr == 0.001);
  }

  SUBCASE("--set overrides take dotted paths") {
    ExperimentConfig cfg;
    apply_override(cfg, "train.base_lr=0.01");
    apply_override(cfg, "world.cls_pool=label_only");
    CHECK(cfg.train.base_lr == 0.01);
    CHECK(cfg.world.cls_pool == "label_only");
    CHECK_THROWS_AS(apply_override(cfg, "train.bogus=1"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "no_equals"), ConfigError);
  }

  SUBCASE("environment seed overrides both seeds") {
    ExperimentConfig cfg;
    setenv("ZSD_ALIGN_SEED", "777", 1);
    apply_env_seed(cfg);
    unsetenv("ZSD_ALIGN_SEED");
    CHECK(cfg.world.seed == 777);
    CHECK(cfg.train.seed == 777);
  }

  SUBCASE("hash is stable and sensitive") {
    ExperimentConfig a, b;
    CHECK(config_hash(a) == config_hash(b));
    apply_override(b, "train.base_lr=0.002");
    CHECK(config_hash(a) != config_hash(b));
  }
}

TEST_CASE("embedding, registry and split files round-trip") {
  const fs::path dir = temp_dir("io");

  std::map<std::string, Embedding> classes{{"cat", {1.0, 2.0, 3.0}},
                                           {"dog", {0.5, -0.25, 0.125}}};
  io::save_embeddings(dir / "emb.json", 3, classes);
  const io::EmbeddingFile loaded = io::load_embeddings(dir / "emb.json");
  CHECK(loaded.dim == 3);
  CHECK(loaded.classes.at("dog") == classes.at("dog"));  // exact doubles

  const ClassRegistry reg(
      {{"cat", std::string("animal"), std::uint64_t{10}, ClassRole::seen},
       {"dog", std::nullopt, std::nullopt, ClassRole::seen}});
  io::save_registry(dir / "reg.json", reg);
  const ClassRegistry reg2 = io::load_registry(dir / "reg.json");
  CHECK(reg2.size() == 2);
  CHECK(reg2.at(0).superclass == "animal");
  CHECK(!reg2.at(1).frequency);

  const SplitSpec split{{"cat"}, {"dog"}};
  io::save_split(dir / "split.json", split);
  const SplitSpec split2 = io::load_split(dir / "split.json");
  CHECK(split2.seen == split.seen);
  CHECK(split2.unseen == split.unseen);
}

TEST_CASE("classifier files preserve column order") {
  const fs::path dir = temp_dir("classifier");
  std::vector<ClassEntry> entries{{"zebra", {}, {}, {}},
                                  {"ant", {}, {}, {}},
                                  {"moose", {}, {}, {}}};
  std::map<std::string, Embedding> per_class{
      {"zebra", {1.0, 0.0}}, {"ant", {0.0, 1.0}}, {"moose", {1.0, 1.0}}};
  const ClassifierMatrix c =
      build_classifier(ClassRegistry(entries), per_class);
  io::save_classifier(dir / "c.json", c);
  const ClassifierMatrix c2 = io::load_classifier(dir / "c.json");
  REQUIRE(c2.names() == c.names());  // registry order, not alphabetical
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t k = 0; k < c.dim(); ++k) {
      CHECK(c2.column(i)[k] == c.column(i)[k]);
    }
  }
}

TEST_CASE("checkpoint save-load-save is byte identical") {
  const fs::path dir = temp_dir("ckpt");
  ToyModel model = ToyModel::random_init(6, 5, 4, 11);
  TemperatureParam tau;
  tau.log_scale = std::log(1.0 / 0.07);
  OptimizerState state;
  state.momentum.assign(model.flat().size(), 0.0);
  state.momentum[3] = 0.123456789012345678;
  state.step = 42;
  state.tau_momentum = -1e-9;

  const io::Checkpoint ckpt = io::make_checkpoint(model, tau, state, "hash", 7);
  io::save_checkpoint(dir / "a.json", ckpt);
  const io::Checkpoint loaded = io::load_checkpoint(dir / "a.json");
  io::save_checkpoint(dir / "b.json", loaded);
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));

  ToyModel restored;
  TemperatureParam tau2;
  OptimizerState state2;
  io::restore_checkpoint(loaded, restored, tau2, state2);
  CHECK(std::vector<double>(restored.flat().begin(), restored.flat().end()) ==
        std::vector<double>(model.flat().begin(), model.flat().end()));
  CHECK(tau2.log_scale == tau.log_scale);
  CHECK(state2.step == 42);
  CHECK(state2.momentum == state.momentum);
}

TEST_CASE("world directory round-trips through files") {
  const fs::path dir = temp_dir("world");
  const World world = small_world(3);
  io::save_world(dir, world);
  const World loaded = io::load_world(dir);

  CHECK(loaded.class_names == world.class_names);
  CHECK(loaded.seen_classes == world.seen_classes);
  CHECK(loaded.unseen_classes == world.unseen_classes);
  CHECK(loaded.det_classes == world.det_classes);
  CHECK(loaded.cls_pool_classes == world.cls_pool_classes);
  REQUIRE(loaded.det_train.size() == world.det_train.size());
  REQUIRE(loaded.cls_train.size() == world.cls_train.size());
  REQUIRE(loaded.eval_unseen.size() == world.eval_unseen.size());

  // annotations survive exactly; features go through float32
  for (std::size_t i = 0; i < world.det_train.size(); ++i) {
    const auto& a = world.det_train[i];
    const auto& b = loaded.det_train[i];
    CHECK(a.grid == b.grid);
    REQUIRE(a.objects.size() == b.objects.size());
    for (std::size_t k = 0; k < a.objects.size(); ++k) {
      CHECK(a.objects[k].class_index == b.objects[k].class_index);
      CHECK(std::abs(a.objects[k].box.cx - b.objects[k].box.cx) < 1e-12);
      CHECK(std::abs(a.objects[k].box.w - b.objects[k].box.w) < 1e-12);
    }
    REQUIRE(a.features.size() == b.features.size());
    for (std::size_t k = 0; k < a.features.size(); ++k) {
      CHECK(std::abs(a.features[k] - b.features[k]) < 1e-6);
    }
  }
  for (std::size_t i = 0; i < world.cls_train.size(); ++i) {
    CHECK(world.cls_train[i].label == loaded.cls_train[i].label);
    CHECK(world.cls_train[i].grid == loaded.cls_train[i].grid);
  }
  // class embeddings are exact (JSON doubles)
  for (const auto& [name, e] : world.class_embeddings) {
    CHECK(loaded.class_embeddings.at(name) == e);
  }
}

TEST_CASE("metrics lines carry the published schema keys") {
  EpochRecord r;
  r.epoch = 3;
  r.loss_box = 0.25;
  r.loss_obj = 0.5;
  r.loss_cls = 1.5;
  r.map_unseen = 0.75;
  const std::string line = io::metrics_line(r);
  for (const char* key : {"\"epoch\"", "\"loss_box\"", "\"loss_obj\"",
                          "\"loss_cls\"", "\"map_unseen\"", "\"map_seen\"",
                          "\"ar100_unseen\""}) {
    CHECK(line.find(key) != std::string::npos);
  }
  CHECK(line.find("\"map_seen\":null") != std::string::npos);
}

TEST_CASE("cli: full pipeline smoke test") {
  const fs::path dir = temp_dir("cli");
  const fs::path world_dir = dir / "world";
  const fs::path run_dir = dir / "run";

  // config file used by every stage
  const fs::path cfg_path = dir / "cfg.json";
  {
    ExperimentConfig cfg;
    cfg.world.grid_size = 6;
    cfg.world.feature_dim = 12;
    cfg.world.embed_dim = 10;
    cfg.world.n_classes = 5;
    cfg.world.n_unseen = 1;
    cfg.world.det_images = 10;
    cfg.world.cls_images = 8;
    cfg.world.eval_images = 4;
    cfg.world.seed = 5;
    cfg.train.total_epochs = 2;
    cfg.train.warmup_epochs = 1;
    cfg.train.batch_size = 4;
    cfg.train.seed = 5;
    cfg.paths.world_dir = world_dir.string();
    cfg.paths.classifier_det = (dir / "c_det.json").string();
    cfg.paths.classifier_cls = (dir / "c_cls.json").string();
    cfg.paths.out_dir = run_dir.string();
    std::ofstream out(cfg_path);
    out << config_to_json_text(cfg);
  }
  const std::string base = "--config " + cfg_path.string() + " ";

  CHECK(run_cli(base + "gen-world") == 0);
  CHECK(fs::exists(world_dir / "registry.json"));
  CHECK(fs::exists(world_dir / "det_train_features.bin"));

  CHECK(run_cli(base + "build-classifier --embeddings " +
                (world_dir / "class_embeddings.json").string() +
                " --registry " + (world_dir / "registry_det.json").string() +
                " --out " + (dir / "c_det.json").string()) == 0);
  CHECK(run_cli(base + "build-classifier --embeddings " +
                (world_dir / "class_embeddings.json").string() +
                " --registry " + (world_dir / "registry_cls.json").string() +
                " --out " + (dir / "c_cls.json").string()) == 0);

  CHECK(run_cli(base + "train --mode joint") == 0);
  CHECK(fs::exists(run_dir / "checkpoint.json"));
  CHECK(fs::exists(run_dir / "metrics.jsonl"));

  CHECK(run_cli(base + "evaluate --checkpoint " +
                (run_dir / "checkpoint.json").string() + " --dataset " +
                (world_dir / "eval_unseen").string() + " --embeddings " +
                (world_dir / "class_embeddings.json").string() + " --split " +
                (world_dir / "split.json").string() +
                " --mode zsd --subset unseen --out " +
                (dir / "report.json").string() + " --pr-csv " +
                (dir / "pr.csv").string()) == 0);
  CHECK(fs::exists(dir / "report.json"));
  CHECK(fs::exists(dir / "pr.csv"));

  CHECK(run_cli(base + "infer --checkpoint " +
                (run_dir / "checkpoint.json").string() + " --dataset " +
                (world_dir / "eval_unseen").string() + " --embeddings " +
                (world_dir / "class_embeddings.json").string() + " --split " +
                (world_dir / "split.json").string() + " --mode zsd --out " +
                (dir / "dets.jsonl").string()) == 0);
  CHECK(fs::exists(dir / "dets.jsonl"));

  // split subcommand on the COCO fixture
  CHECK(run_cli("split --registry " + std::string(ZSD_DATA_DIR) +
                "/coco_classes.json --fraction 0.2 --out " +
                (dir / "coco_split.json").string()) == 0);
  const SplitSpec coco = io::load_split(dir / "coco_split.json");
  CHECK(coco.seen.size() == 65);
  CHECK(coco.unseen.size() == 15);
}

TEST_CASE("cli: error exit codes") {
  const fs::path dir = temp_dir("cli_err");

  SUBCASE("usage errors exit 1") {
    CHECK(run_cli("train --mode bogus") == 1);
    CHECK(run_cli("definitely-not-a-command") == 1);
  }

  SUBCASE("config errors exit 1") {
    const fs::path bad = dir / "bad.json";
    std::ofstream(bad) << R"({"train": {"no_such_key": 1}})";
    CHECK(run_cli("--config " + bad.string() + " gen-world --out " +
                  (dir / "w").string()) == 1);
  }

  SUBCASE("data errors exit 2") {
    // registry referencing a class the embeddings file lacks
    const fs::path emb = dir / "emb.json";
    const fs::path reg = dir / "reg.json";
    std::ofstream(emb) << R"({"dim": 2, "classes": {"cat": [1.0, 0.0]}})";
    std::ofstream(reg) << R"({"classes": [{"name": "cat"}, {"name": "dog"}]})";
    CHECK(run_cli("build-classifier --embeddings " + emb.string() +
                  " --registry " + reg.string() + " --out " +
                  (dir / "c.json").string()) == 2);
    // split without frequencies
    CHECK(run_cli("split --registry " + reg.string() + " --out " +
                  (dir / "s.json").string()) == 2);
  }
}

TEST_CASE("cli: gen-world determinism and resume hash checking") {
  const fs::path dir = temp_dir("cli_det");
  const fs::path cfg_path = dir / "cfg.json";
  {
    ExperimentConfig cfg;
    cfg.world.grid_size = 6;
    cfg.world.feature_dim = 12;
    cfg.world.embed_dim = 10;
    cfg.world.n_classes = 5;
    cfg.world.n_unseen = 1;
    cfg.world.det_images = 6;
    cfg.world.cls_images = 4;
    cfg.world.eval_images = 2;
    cfg.train.total_epochs = 2;
    cfg.train.warmup_epochs = 1;
    cfg.paths.world_dir = (dir / "w1").string();
    std::ofstream out(cfg_path);
    out << config_to_json_text(cfg);
  }
  const std::string base = "--config " + cfg_path.string() + " ";
  CHECK(run_cli(base + "gen-world") == 0);
  CHECK(run_cli(base + "gen-world --out " + (dir / "w2").string()) == 0);
  CHECK(slurp(dir / "w1" / "det_train_features.bin") ==
        slurp(dir / "w2" / "det_train_features.bin"));
  CHECK(slurp(dir / "w1" / "det_train_annotations.json") ==
        slurp(dir / "w2" / "det_train_annotations.json"));
  CHECK(slurp(dir / "w1" / "class_embeddings.json") ==
        slurp(dir / "w2" / "class_embeddings.json"));

  // resume with a different config must fail with exit 1
  const fs::path c_det = dir / "c_det.json";
  CHECK(run_cli(base + "build-classifier --embeddings " +
                (dir / "w1" / "class_embeddings.json").string() +
                " --registry " + (dir / "w1" / "registry_det.json").string() +
                " --out " + c_det.string()) == 0);
  CHECK(run_cli(base + "train --mode detection_only --out " +
                (dir / "run").string() + " --set paths.classifier_det=" +
                c_det.string()) == 0);
  CHECK(run_cli(base + "train --mode detection_only --out " +
                (dir / "run2").string() + " --set paths.classifier_det=" +
                c_det.string() + " --set train.base_lr=0.002 --resume " +
                (dir / "run" / "checkpoint.json").string()) == 1);
}
