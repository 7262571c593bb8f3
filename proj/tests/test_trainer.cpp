#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "zsd/error.hpp"
#include "zsd/trainer.hpp"

using namespace zsd;

namespace {

World make_world(int n_classes, int n_unseen, double noise, std::uint64_t seed,
                 int det_images = 40, int cls_images = 40) {
  SyntheticWorldConfig cfg;
  cfg.grid_size = 6;
  cfg.feature_dim = 14;
  cfg.embed_dim = 12;
  cfg.n_classes = n_classes;
  cfg.n_unseen = n_unseen;
  cfg.noise_sigma = noise;
  cfg.det_images = det_images;
  cfg.cls_images = cls_images;
  cfg.eval_images = 25;
  cfg.objects_min = 1;
  cfg.objects_max = 2;
  cfg.seed = seed;
  return generate_world(cfg);
}

ClassifierMatrix classifier_for(const World& world,
                                const std::vector<int>& classes) {
  std::vector<ClassEntry> entries;
  for (int c : classes) entries.push_back({world.class_names[c], {}, {}, {}});
  return build_classifier(ClassRegistry(std::move(entries)),
                          world.class_embeddings);
}

TrainConfig quick_config(int epochs, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.total_epochs = epochs;
  cfg.warmup_epochs = std::min(5, std::max(1, epochs / 4));
  cfg.batch_size = 4;
  cfg.grad_accumulation = 2;
  cfg.eval_every = 1000;  // only the final epoch
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("zero epochs leave the model untouched") {
  const World world = make_world(5, 1, 0.02, 1);
  ToyModel model = ToyModel::random_init(14, 8, 12, 7);
  const std::vector<double> before(model.flat().begin(), model.flat().end());
  TemperatureParam tau;
  tau.log_scale = TemperatureParam::default_log_scale();
  OptimizerState state;
  TrainConfig cfg = quick_config(0, 3);
  const ClassifierMatrix c = classifier_for(world, world.det_classes);
  const TrainResult result = train(world, model, tau, c, c, cfg, {},
                                   TrainMode::detection_only, state);
  CHECK(result.log.empty());
  CHECK(std::vector<double>(model.flat().begin(), model.flat().end()) == before);
}

TEST_CASE("training is deterministic given seeds") {
  const World world = make_world(5, 1, 0.05, 11);
  const ClassifierMatrix c_det = classifier_for(world, world.det_classes);
  const ClassifierMatrix c_cls = classifier_for(world, world.cls_pool_classes);

  auto run = [&]() {
    ToyModel model = ToyModel::random_init(14, 8, 12, 5);
    TemperatureParam tau;
    tau.log_scale = TemperatureParam::default_log_scale();
    OptimizerState state;
    TrainConfig cfg = quick_config(4, 17);
    train(world, model, tau, c_det, c_cls, cfg, {}, TrainMode::joint, state);
    return std::make_pair(
        std::vector<double>(model.flat().begin(), model.flat().end()),
        tau.log_scale);
  };

  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);  // bitwise identical parameters
  CHECK(a.second == b.second);
}

TEST_CASE("detection-only training on a noiseless world reaches high seen mAP") {
  SyntheticWorldConfig wcfg;
  wcfg.grid_size = 6;
  wcfg.feature_dim = 14;
  wcfg.embed_dim = 12;
  wcfg.n_classes = 4;
  wcfg.n_unseen = 1;
  wcfg.noise_sigma = 0.0;
  wcfg.det_images = 60;
  wcfg.cls_images = 4;
  wcfg.eval_images = 30;
  wcfg.objects_min = 1;
  wcfg.objects_max = 2;
  wcfg.seed = 23;
  const World world = generate_world(wcfg);

  const ClassifierMatrix c = classifier_for(world, world.det_classes);
  ToyModel model = ToyModel::random_init(14, 16, 12, 29);
  TemperatureParam tau;
  tau.log_scale = TemperatureParam::default_log_scale();
  OptimizerState state;

  TrainConfig cfg;
  cfg.total_epochs = 50;
  cfg.warmup_epochs = 5;
  cfg.batch_size = 8;
  cfg.grad_accumulation = 1;
  cfg.base_lr = 0.02;
  cfg.eval_every = 1000;  // final only
  cfg.seed = 31;

  const TrainResult result = train(world, model, tau, c, c, cfg, {},
                                   TrainMode::detection_only, state);
  REQUIRE(!result.log.empty());
  const EpochRecord& last = result.log.back();
  REQUIRE(last.map_seen.has_value());
  CHECK(*last.map_seen > 0.9);
}

TEST_CASE("joint mode consumes classification data and logs it") {
  const World world = make_world(6, 1, 0.05, 41);
  const ClassifierMatrix c_det = classifier_for(world, world.det_classes);
  const ClassifierMatrix c_cls = classifier_for(world, world.cls_pool_classes);

  ToyModel model = ToyModel::random_init(14, 8, 12, 43);
  TemperatureParam tau;
  tau.log_scale = TemperatureParam::default_log_scale();
  OptimizerState state;
  TrainConfig cfg = quick_config(2, 47);
  WeakConfig weak;
  weak.oversample_ratio = 4.0;

  const TrainResult result =
      train(world, model, tau, c_det, c_cls, cfg, weak, TrainMode::joint, state);
  REQUIRE(result.log.size() == 2);
  for (const auto& r : result.log) {
    CHECK(r.n_cls_samples == 40);           // every classification sample once
    CHECK(r.n_det_samples == 10);           // 40 / ratio detection slots
    CHECK(r.n_cls_skipped <= r.n_cls_samples);
  }

  // detection-only mode consumes no classification samples
  ToyModel model2 = ToyModel::random_init(14, 8, 12, 43);
  OptimizerState state2;
  TemperatureParam tau2;
  const TrainResult det_only = train(world, model2, tau2, c_det, c_cls, cfg,
                                     weak, TrainMode::detection_only, state2);
  for (const auto& r : det_only.log) {
    CHECK(r.n_cls_samples == 0);
    CHECK(r.n_det_samples == 40);
  }
}

TEST_CASE("temperature stays clipped during training") {
  const World world = make_world(5, 1, 0.05, 51);
  const ClassifierMatrix c = classifier_for(world, world.det_classes);
  ToyModel model = ToyModel::random_init(14, 8, 12, 53);
  TemperatureParam tau;
  tau.log_scale = std::log(99.9);  // start at the edge
  OptimizerState state;
  TrainConfig cfg = quick_config(3, 57);
  train(world, model, tau, c, c, cfg, {}, TrainMode::detection_only, state);
  CHECK(tau.effective_scale() <=
        TemperatureParam::kMaxEffectiveScale * (1 + 1e-12));
}

TEST_CASE("validation errors") {
  const World world = make_world(5, 1, 0.05, 61);
  const ClassifierMatrix c = classifier_for(world, world.det_classes);
  ToyModel model = ToyModel::random_init(14, 8, 12, 63);
  TemperatureParam tau;
  OptimizerState state;

  TrainConfig bad = quick_config(3, 1);
  bad.warmup_epochs = 3;
  CHECK_THROWS_AS(train(world, model, tau, c, c, bad, {},
                        TrainMode::detection_only, state),
                  ConfigError);

  // classifier missing a detection class
  const ClassifierMatrix partial =
      classifier_for(world, {world.det_classes[0]});
  TrainConfig cfg = quick_config(2, 1);
  CHECK_THROWS_AS(train(world, model, tau, partial, partial, cfg, {},
                        TrainMode::detection_only, state),
                  DataError);
}
