#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "zsd/toy_world.hpp"
#include "zsd/weak_supervision.hpp"

namespace zsd {

// Grid detection head: a shared per-cell affine map into a hidden width,
// branching into affine box / objectness / embedding heads. All parameters
// live in one flat buffer so the optimizer and checkpoints can treat them
// uniformly.
class ToyModel {
 public:
  ToyModel() = default;
  ToyModel(int feature_dim, int hidden_dim, int embed_dim);

  static ToyModel random_init(int feature_dim, int hidden_dim, int embed_dim,
                              std::uint64_t seed);

  int feature_dim() const { return feature_dim_; }
  int hidden_dim() const { return hidden_dim_; }
  int embed_dim() const { return embed_dim_; }

  std::span<double> flat() { return params_; }
  std::span<const double> flat() const { return params_; }

  // Named segments of the flat buffer, in layout order.
  struct Segment {
    std::string name;
    std::size_t offset;
    std::size_t size;
  };
  std::vector<Segment> segments() const;

  std::span<const double> w_trunk() const { return seg(0); }
  std::span<const double> b_trunk() const { return seg(1); }
  std::span<const double> w_box() const { return seg(2); }
  std::span<const double> b_box() const { return seg(3); }
  std::span<const double> w_obj() const { return seg(4); }
  std::span<const double> b_obj() const { return seg(5); }
  std::span<const double> w_emb() const { return seg(6); }
  std::span<const double> b_emb() const { return seg(7); }

 private:
  std::span<const double> seg(int i) const;

  int feature_dim_ = 0;
  int hidden_dim_ = 0;
  int embed_dim_ = 0;
  std::vector<double> params_;
};

// Raw per-cell head outputs plus the hidden activations needed for backward.
struct ForwardCache {
  int grid = 0;
  std::vector<double> hidden;   // cells x H
  std::vector<double> raw_box;  // cells x 4
  std::vector<double> raw_obj;  // cells
  std::vector<double> emb;      // cells x D
};

ForwardCache forward_cells(const ToyModel& model,
                           std::span<const double> features, int grid);

// Box decoding: cell center plus a tanh-squashed offset, sizes via exp of the
// raw outputs in cell units, objectness via the logistic.
CenterBox decode_box(int cell_x, int cell_y, int grid,
                     std::span<const double> raw);

// One BoxPrediction per cell, row-major over the grid.
std::vector<BoxPrediction> decode_predictions(const ToyModel& model,
                                              const ForwardCache& cache);
std::vector<BoxPrediction> forward(const ToyModel& model,
                                   std::span<const double> features, int grid);

// Ground truth assigned to the cell containing its box center; an object
// whose center cell is already taken is dropped with a logged warning.
struct CellAssignment {
  int cell = 0;
  int gt_index = 0;
};
std::vector<CellAssignment> assign_center_cells(std::span<const GtObject> gts,
                                                int grid);

struct DetectionLossResult {
  double box_loss = 0.0;  // mean over assigned cells of 1 - IoU
  double obj_loss = 0.0;  // mean binary cross entropy over all cells
  int n_assigned = 0;
  int n_dropped = 0;
};

DetectionLossResult detection_losses(std::span<const BoxPrediction> preds,
                                     std::span<const GtObject> gts, int grid);

// Same losses evaluated from the cache, plus gradients with respect to the
// raw box/objectness outputs (embedding gradients come from the alignment
// loss and are composed by the trainer).
struct DetectionLossGrads {
  DetectionLossResult losses;
  std::vector<double> d_raw_box;  // cells x 4
  std::vector<double> d_raw_obj;  // cells
};

DetectionLossGrads detection_loss_grads(const ForwardCache& cache,
                                        std::span<const GtObject> gts,
                                        int grid);

// Accumulates parameter gradients for one cell given gradients with respect
// to that cell's raw outputs. `grads` mirrors ToyModel::flat().
void accumulate_cell_backward(const ToyModel& model,
                              std::span<const double> cell_features,
                              const ForwardCache& cache, int cell,
                              std::span<const double> d_raw_box,
                              double d_raw_obj, std::span<const double> d_emb,
                              std::span<double> grads);

double sigmoid(double x);

}  // namespace zsd
