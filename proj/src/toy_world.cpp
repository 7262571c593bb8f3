#include "zsd/toy_world.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

#include "zsd/error.hpp"
#include "zsd/kernels.hpp"

namespace zsd {

namespace {

constexpr double kMaxRawOffset = 0.97;  // tanh-space clamp for the encoding

std::string class_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "class_%02d", i);
  return buf;
}

std::vector<double> random_unit_vector(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  for (double& x : v) x = normal(rng);
  return normalize(v);
}

void validate(const SyntheticWorldConfig& cfg) {
  if (cfg.grid_size < 2) throw ConfigError("world: grid_size must be >= 2");
  if (cfg.feature_dim < 4) throw ConfigError("world: feature_dim must be >= 4");
  if (cfg.feature_dim < kPosEncChannels) {
    throw ConfigError("world: feature_dim must cover the positional encoding");
  }
  if (cfg.embed_dim < 2) throw ConfigError("world: embed_dim must be >= 2");
  if (cfg.n_classes < 4) throw ConfigError("world: n_classes must be >= 4");
  if (cfg.n_unseen < 1 || cfg.n_unseen >= cfg.n_classes) {
    throw ConfigError("world: need 1 <= n_unseen < n_classes");
  }
  if (cfg.noise_sigma < 0.0) throw ConfigError("world: noise_sigma must be >= 0");
  if (cfg.objects_min < 1 || cfg.objects_max < cfg.objects_min) {
    throw ConfigError("world: invalid objects_per_image range");
  }
  if (cfg.cls_pool != "seen" && cfg.cls_pool != "label_only") {
    throw ConfigError("world: cls_pool must be 'seen' or 'label_only'");
  }
  if (cfg.effective_cls_grid() < 2 || cfg.effective_cls_grid() > cfg.grid_size) {
    throw ConfigError("world: classification grid must be in [2, grid_size]");
  }
}

// Stamps one object into a feature grid.
void write_object(std::vector<double>& features, int grid, int feature_dim,
                  const CenterBox& box, const std::vector<double>& prototype) {
  const CornerBox corners = to_corners(box);
  const int center_x =
      std::clamp(static_cast<int>(box.cx * grid), 0, grid - 1);
  const int center_y =
      std::clamp(static_cast<int>(box.cy * grid), 0, grid - 1);
  for (int cy = 0; cy < grid; ++cy) {
    for (int cx = 0; cx < grid; ++cx) {
      const double cell_cx = (cx + 0.5) / grid;
      const double cell_cy = (cy + 0.5) / grid;
      const bool center_inside = cell_cx > corners.x1 && cell_cx < corners.x2 &&
                                 cell_cy > corners.y1 && cell_cy < corners.y2;
      if (!center_inside && !(cx == center_x && cy == center_y)) continue;
      double* cell = features.data() + (cy * grid + cx) * feature_dim;
      kernels::axpy(1.0, prototype.data(), cell, feature_dim);
      double enc[kPosEncChannels];
      box_positional_encoding(box, cx, cy, grid, enc);
      for (int k = 0; k < kPosEncChannels; ++k) cell[k] += enc[k];
    }
  }
}

void add_noise(std::vector<double>& features, double sigma,
               std::mt19937_64& rng) {
  if (sigma == 0.0) return;
  std::normal_distribution<double> normal(0.0, sigma);
  for (double& x : features) x += normal(rng);
}

CenterBox sample_box(std::mt19937_64& rng, int grid, double min_cells,
                     double max_cells) {
  std::uniform_real_distribution<double> size_dist(min_cells / grid,
                                                   max_cells / grid);
  const double w = size_dist(rng);
  const double h = size_dist(rng);
  std::uniform_real_distribution<double> cx_dist(w / 2.0, 1.0 - w / 2.0);
  std::uniform_real_distribution<double> cy_dist(h / 2.0, 1.0 - h / 2.0);
  return {cx_dist(rng), cy_dist(rng), w, h};
}

DetectionSample make_detection_sample(std::mt19937_64& rng,
                                      const SyntheticWorldConfig& cfg,
                                      const std::vector<int>& class_pool,
                                      const World& world) {
  const int grid = cfg.grid_size;
  DetectionSample sample;
  sample.grid = grid;
  sample.features.assign(static_cast<std::size_t>(grid) * grid *
                             cfg.feature_dim,
                         0.0);
  std::uniform_int_distribution<int> count_dist(cfg.objects_min,
                                                cfg.objects_max);
  std::uniform_int_distribution<std::size_t> class_dist(0,
                                                        class_pool.size() - 1);
  const int n_objects = count_dist(rng);
  std::set<int> used_cells;
  for (int k = 0; k < n_objects; ++k) {
    CenterBox box;
    int cell = -1;
    bool placed = false;
    for (int attempt = 0; attempt < 100; ++attempt) {
      box = sample_box(rng, grid, 1.3, 3.2);
      const int cell_x = std::clamp(static_cast<int>(box.cx * grid), 0, grid - 1);
      const int cell_y = std::clamp(static_cast<int>(box.cy * grid), 0, grid - 1);
      cell = cell_y * grid + cell_x;
      if (used_cells.insert(cell).second) {
        placed = true;
        break;
      }
    }
    if (!placed) {
      throw DataError("generate_world: infeasible object placement");
    }
    const int cls = class_pool[class_dist(rng)];
    write_object(sample.features, grid, cfg.feature_dim, box,
                 world.prototypes[cls]);
    sample.objects.push_back({box, cls});
  }
  add_noise(sample.features, cfg.noise_sigma, rng);
  return sample;
}

ImageLabelSample make_label_sample(std::mt19937_64& rng,
                                   const SyntheticWorldConfig& cfg,
                                   const World& world) {
  const int grid = cfg.effective_cls_grid();
  ImageLabelSample sample;
  sample.grid = grid;
  sample.features.assign(static_cast<std::size_t>(grid) * grid *
                             cfg.feature_dim,
                         0.0);
  std::uniform_int_distribution<std::size_t> class_dist(
      0, world.cls_pool_classes.size() - 1);
  sample.label = world.cls_pool_classes[class_dist(rng)];
  // Object-centric image: one prominent object near the middle.
  std::uniform_real_distribution<double> size_dist(0.5, 0.8);
  const double w = size_dist(rng);
  const double h = size_dist(rng);
  std::uniform_real_distribution<double> center_dist(0.45, 0.55);
  const CenterBox box{center_dist(rng), center_dist(rng), w, h};
  write_object(sample.features, grid, cfg.feature_dim, box,
               world.prototypes[sample.label]);
  add_noise(sample.features, cfg.noise_sigma, rng);
  return sample;
}

}  // namespace

void box_positional_encoding(const CenterBox& box, int cell_x, int cell_y,
                             int grid, double* enc) {
  const double dx = std::clamp(2.0 * (grid * box.cx - cell_x - 0.5),
                               -kMaxRawOffset, kMaxRawOffset);
  const double dy = std::clamp(2.0 * (grid * box.cy - cell_y - 0.5),
                               -kMaxRawOffset, kMaxRawOffset);
  enc[0] = 1.0;  // object-present indicator
  enc[1] = std::atanh(dx);
  enc[2] = std::atanh(dy);
  enc[3] = std::log(grid * box.w);
  enc[4] = std::log(grid * box.h);
}

World generate_world(const SyntheticWorldConfig& cfg) {
  validate(cfg);
  std::mt19937_64 rng(cfg.seed);

  World world;
  world.cfg = cfg;
  const int n_seen = cfg.n_classes - cfg.n_unseen;
  for (int i = 0; i < cfg.n_classes; ++i) {
    world.class_names.push_back(class_name(i));
    (i < n_seen ? world.seen_classes : world.unseen_classes).push_back(i);
  }
  const int det_count =
      cfg.det_class_count > 0 ? cfg.det_class_count : n_seen;
  if (det_count > n_seen) {
    throw ConfigError("world: det_class_count exceeds seen classes");
  }
  world.det_classes.assign(world.seen_classes.begin(),
                           world.seen_classes.begin() + det_count);
  if (cfg.cls_pool == "seen") {
    world.cls_pool_classes = world.seen_classes;
  } else {
    world.cls_pool_classes.assign(world.seen_classes.begin() + det_count,
                                  world.seen_classes.end());
    if (world.cls_pool_classes.empty()) {
      throw ConfigError("world: label_only pool is empty");
    }
  }

  for (int i = 0; i < cfg.n_classes; ++i) {
    world.prototypes.push_back(random_unit_vector(rng, cfg.feature_dim));
  }

  // Fixed random linear map from feature space into the embedding space; the
  // class "text" embeddings are noisy images of the prototypes under it, so
  // alignment learned on seen classes transfers to unseen ones.
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> embed_map(static_cast<std::size_t>(cfg.embed_dim) *
                                cfg.feature_dim);
  const double map_scale = 1.0 / std::sqrt(cfg.feature_dim);
  for (double& x : embed_map) x = normal(rng) * map_scale;
  for (int i = 0; i < cfg.n_classes; ++i) {
    std::vector<double> e(cfg.embed_dim);
    kernels::matvec(embed_map.data(), world.prototypes[i].data(), e.data(),
                    cfg.embed_dim, cfg.feature_dim);
    for (double& x : e) x += cfg.class_embed_noise * normal(rng);
    world.class_embeddings[world.class_names[i]] = normalize(e);
  }

  for (int i = 0; i < cfg.det_images; ++i) {
    world.det_train.push_back(
        make_detection_sample(rng, cfg, world.det_classes, world));
  }
  for (int i = 0; i < cfg.cls_images; ++i) {
    world.cls_train.push_back(make_label_sample(rng, cfg, world));
  }
  for (int i = 0; i < cfg.eval_images; ++i) {
    world.eval_seen.push_back(
        make_detection_sample(rng, cfg, world.seen_classes, world));
  }
  for (int i = 0; i < cfg.eval_images; ++i) {
    world.eval_unseen.push_back(
        make_detection_sample(rng, cfg, world.unseen_classes, world));
  }
  return world;
}

}  // namespace zsd
