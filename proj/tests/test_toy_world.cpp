#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "zsd/error.hpp"
#include "zsd/toy_world.hpp"

using namespace zsd;

namespace {

SyntheticWorldConfig small_config() {
  SyntheticWorldConfig cfg;
  cfg.grid_size = 6;
  cfg.feature_dim = 12;
  cfg.embed_dim = 16;
  cfg.n_classes = 6;
  cfg.n_unseen = 2;
  cfg.det_images = 12;
  cfg.cls_images = 10;
  cfg.eval_images = 4;
  cfg.seed = 42;
  return cfg;
}

}  // namespace

TEST_CASE("noiseless single object stamps prototype plus encoding exactly") {
  SyntheticWorldConfig cfg = small_config();
  cfg.noise_sigma = 0.0;
  cfg.objects_min = 1;
  cfg.objects_max = 1;
  const World world = generate_world(cfg);

  const int grid = cfg.grid_size;
  const int f = cfg.feature_dim;
  for (const auto& sample : world.det_train) {
    REQUIRE(sample.objects.size() == 1);
    const GtObject& obj = sample.objects[0];
    const CornerBox corners = to_corners(obj.box);
    const int center_x = static_cast<int>(obj.box.cx * grid);
    const int center_y = static_cast<int>(obj.box.cy * grid);
    for (int cy = 0; cy < grid; ++cy) {
      for (int cx = 0; cx < grid; ++cx) {
        const double cell_cx = (cx + 0.5) / grid;
        const double cell_cy = (cy + 0.5) / grid;
        const bool covered =
            (cell_cx > corners.x1 && cell_cx < corners.x2 &&
             cell_cy > corners.y1 && cell_cy < corners.y2) ||
            (cx == center_x && cy == center_y);
        const double* cell = sample.features.data() + (cy * grid + cx) * f;
        if (!covered) {
          for (int k = 0; k < f; ++k) CHECK(cell[k] == 0.0);
          continue;
        }
        double enc[kPosEncChannels];
        box_positional_encoding(obj.box, cx, cy, grid, enc);
        const auto& proto = world.prototypes[obj.class_index];
        for (int k = 0; k < f; ++k) {
          const double expect = proto[k] + (k < kPosEncChannels ? enc[k] : 0.0);
          CHECK(cell[k] == doctest::Approx(expect).epsilon(1e-15));
        }
      }
    }
  }
}

TEST_CASE("identical seeds generate identical worlds") {
  const SyntheticWorldConfig cfg = small_config();
  const World a = generate_world(cfg);
  const World b = generate_world(cfg);
  REQUIRE(a.det_train.size() == b.det_train.size());
  for (std::size_t i = 0; i < a.det_train.size(); ++i) {
    CHECK(a.det_train[i].features == b.det_train[i].features);
    REQUIRE(a.det_train[i].objects.size() == b.det_train[i].objects.size());
    for (std::size_t k = 0; k < a.det_train[i].objects.size(); ++k) {
      CHECK(a.det_train[i].objects[k].box.cx == b.det_train[i].objects[k].box.cx);
      CHECK(a.det_train[i].objects[k].class_index ==
            b.det_train[i].objects[k].class_index);
    }
  }
  for (std::size_t i = 0; i < a.cls_train.size(); ++i) {
    CHECK(a.cls_train[i].features == b.cls_train[i].features);
    CHECK(a.cls_train[i].label == b.cls_train[i].label);
  }
  for (const auto& [name, e] : a.class_embeddings) {
    CHECK(e == b.class_embeddings.at(name));
  }

  SyntheticWorldConfig other = cfg;
  other.seed = 43;
  const World c = generate_world(other);
  CHECK(a.det_train[0].features != c.det_train[0].features);
}

TEST_CASE("all generated boxes are inside the unit square with positive size") {
  SyntheticWorldConfig cfg = small_config();
  cfg.det_images = 60;
  cfg.objects_min = 1;
  cfg.objects_max = 3;
  const World world = generate_world(cfg);
  auto check_set = [](const std::vector<DetectionSample>& samples) {
    for (const auto& sample : samples) {
      for (const auto& obj : sample.objects) {
        CHECK(obj.box.w > 0.0);
        CHECK(obj.box.h > 0.0);
        const CornerBox c = to_corners(obj.box);
        CHECK(c.x1 >= 0.0);
        CHECK(c.y1 >= 0.0);
        CHECK(c.x2 <= 1.0);
        CHECK(c.y2 <= 1.0);
      }
    }
  };
  check_set(world.det_train);
  check_set(world.eval_seen);
  check_set(world.eval_unseen);
}

TEST_CASE("split structure and class pools") {
  SyntheticWorldConfig cfg = small_config();
  cfg.det_class_count = 3;
  cfg.cls_pool = "label_only";
  const World world = generate_world(cfg);

  CHECK(world.seen_classes.size() == 4);
  CHECK(world.unseen_classes.size() == 2);
  CHECK(world.det_classes == std::vector<int>{0, 1, 2});
  CHECK(world.cls_pool_classes == std::vector<int>{3});

  // detection annotations never reference unseen or label-only classes
  for (const auto& sample : world.det_train) {
    for (const auto& obj : sample.objects) {
      CHECK(obj.class_index < 3);
    }
  }
  // classification labels come from the configured pool
  for (const auto& sample : world.cls_train) {
    CHECK(sample.label == 3);
  }
  // evaluation sets respect their pools
  for (const auto& sample : world.eval_unseen) {
    for (const auto& obj : sample.objects) {
      CHECK(obj.class_index >= 4);
    }
  }
  for (const auto& sample : world.eval_seen) {
    for (const auto& obj : sample.objects) {
      CHECK(obj.class_index < 4);
    }
  }
}

TEST_CASE("classification images use the smaller grid") {
  SyntheticWorldConfig cfg = small_config();
  const World world = generate_world(cfg);
  for (const auto& sample : world.cls_train) {
    CHECK(sample.grid == cfg.grid_size / 2);
    CHECK(sample.features.size() ==
          static_cast<std::size_t>(sample.grid) * sample.grid * cfg.feature_dim);
  }
}

TEST_CASE("class embeddings are unit norm and prototype-correlated") {
  SyntheticWorldConfig cfg = small_config();
  cfg.class_embed_noise = 0.0;
  const World world = generate_world(cfg);
  for (const auto& [name, e] : world.class_embeddings) {
    double n = 0.0;
    for (double x : e) n += x * x;
    CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-9);
  }
}

TEST_CASE("config validation") {
  SyntheticWorldConfig cfg = small_config();
  cfg.n_unseen = cfg.n_classes;
  CHECK_THROWS_AS(generate_world(cfg), ConfigError);

  cfg = small_config();
  cfg.feature_dim = 3;
  CHECK_THROWS_AS(generate_world(cfg), ConfigError);

  cfg = small_config();
  cfg.objects_max = 0;
  CHECK_THROWS_AS(generate_world(cfg), ConfigError);

  cfg = small_config();
  cfg.cls_pool = "bogus";
  CHECK_THROWS_AS(generate_world(cfg), ConfigError);

  cfg = small_config();
  cfg.det_class_count = 5;  // only 4 seen classes
  CHECK_THROWS_AS(generate_world(cfg), ConfigError);
}

TEST_CASE("infeasible placement is reported") {
  SyntheticWorldConfig cfg = small_config();
  cfg.grid_size = 2;  // 4 cells
  cfg.feature_dim = 12;
  cfg.objects_min = 5;  // cannot give 5 objects distinct center cells
  cfg.objects_max = 5;
  CHECK_THROWS_AS(generate_world(cfg), DataError);
}
