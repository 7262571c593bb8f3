#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "zsd/boxes.hpp"
#include "zsd/embedding.hpp"

namespace zsd {

// Desk-scale stand-in for detection/classification imagery. Objects stamp a
// class prototype plus a box-relative positional encoding into the grid cells
// they cover, so an affine head can recover class, box and objectness.
struct SyntheticWorldConfig {
  int grid_size = 8;
  int cls_grid_size = 0;  // 0 -> grid_size / 2
  int feature_dim = 24;
  int embed_dim = 32;   // dimension of the class "text" embeddings
  int n_classes = 12;
  int n_unseen = 3;
  // Seen classes carrying detection boxes; 0 -> all seen classes.
  int det_class_count = 0;
  // Classes appearing in image-label samples: "seen" or "label_only"
  // (seen classes without detection boxes).
  std::string cls_pool = "seen";
  double noise_sigma = 0.05;
  double class_embed_noise = 0.05;
  int objects_min = 1;
  int objects_max = 3;
  int det_images = 200;
  int cls_images = 400;
  int eval_images = 100;  // per evaluation split (seen / unseen)
  std::uint64_t seed = 1;

  int effective_cls_grid() const {
    return cls_grid_size > 0 ? cls_grid_size : grid_size / 2;
  }
};

struct GtObject {
  CenterBox box;
  int class_index = 0;
};

struct DetectionSample {
  int grid = 0;
  std::vector<double> features;  // [cell][channel], cell = y * grid + x
  std::vector<GtObject> objects;
};

struct ImageLabelSample {
  int grid = 0;
  std::vector<double> features;
  int label = 0;
};

struct World {
  SyntheticWorldConfig cfg;
  std::vector<std::string> class_names;
  std::vector<int> seen_classes;
  std::vector<int> unseen_classes;
  std::vector<int> det_classes;       // seen classes with boxes
  std::vector<int> cls_pool_classes;  // classes drawn for image labels
  std::vector<std::vector<double>> prototypes;      // n_classes x feature_dim
  std::map<std::string, Embedding> class_embeddings;  // "text" embeddings
  std::vector<DetectionSample> det_train;
  std::vector<ImageLabelSample> cls_train;
  std::vector<DetectionSample> eval_seen;
  std::vector<DetectionSample> eval_unseen;
};

// Channels 0..4 of a covered cell carry (indicator, raw_x, raw_y, raw_w,
// raw_h): the raw-space box parameters the head should output at that cell.
constexpr int kPosEncChannels = 5;

// Positional encoding of `box` relative to grid cell (cell_x, cell_y);
// writes kPosEncChannels values into enc.
void box_positional_encoding(const CenterBox& box, int cell_x, int cell_y,
                             int grid, double* enc);

World generate_world(const SyntheticWorldConfig& cfg);

}  // namespace zsd
