#include "zsd/toy_model.hpp"

#include <cmath>
#include <iostream>
#include <random>
#include <set>
#include <stdexcept>

#include "zsd/kernels.hpp"

namespace zsd {

namespace {

constexpr double kBceEps = 1e-12;

double bce(double p, double target) {
  p = std::clamp(p, kBceEps, 1.0 - kBceEps);
  return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
}

// dIoU/d(pred corners) for fixed gt; zero on the disjoint plateau.
std::array<double, 4> iou_grad_corners(const CornerBox& a, const CornerBox& b) {
  std::array<double, 4> g{0, 0, 0, 0};
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return g;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  const double aw = a.width(), ah = a.height();
  // dI/d corner
  const double di_x1 = (a.x1 > b.x1) ? -ih : 0.0;
  const double di_y1 = (a.y1 > b.y1) ? -iw : 0.0;
  const double di_x2 = (a.x2 < b.x2) ? ih : 0.0;
  const double di_y2 = (a.y2 < b.y2) ? iw : 0.0;
  // dA/d corner
  const double da_x1 = -ah, da_y1 = -aw, da_x2 = ah, da_y2 = aw;
  const double inv_u2 = 1.0 / (uni * uni);
  g[0] = (di_x1 * uni - inter * (da_x1 - di_x1)) * inv_u2;
  g[1] = (di_y1 * uni - inter * (da_y1 - di_y1)) * inv_u2;
  g[2] = (di_x2 * uni - inter * (da_x2 - di_x2)) * inv_u2;
  g[3] = (di_y2 * uni - inter * (da_y2 - di_y2)) * inv_u2;
  return g;
}

}  // namespace

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

ToyModel::ToyModel(int feature_dim, int hidden_dim, int embed_dim)
    : feature_dim_(feature_dim), hidden_dim_(hidden_dim), embed_dim_(embed_dim) {
  if (feature_dim < 1 || hidden_dim < 1 || embed_dim < 2) {
    throw std::invalid_argument("ToyModel: invalid dimensions");
  }
  std::size_t total = 0;
  for (const auto& s : segments()) total = s.offset + s.size;
  params_.assign(total, 0.0);
}

std::vector<ToyModel::Segment> ToyModel::segments() const {
  const auto f = static_cast<std::size_t>(feature_dim_);
  const auto h = static_cast<std::size_t>(hidden_dim_);
  const auto d = static_cast<std::size_t>(embed_dim_);
  std::vector<Segment> out;
  std::size_t off = 0;
  auto push = [&](const char* name, std::size_t size) {
    out.push_back({name, off, size});
    off += size;
  };
  push("w_trunk", h * f);
  push("b_trunk", h);
  push("w_box", 4 * h);
  push("b_box", 4);
  push("w_obj", h);
  push("b_obj", 1);
  push("w_emb", d * h);
  push("b_emb", d);
  return out;
}

std::span<const double> ToyModel::seg(int i) const {
  const auto segs = segments();
  return {params_.data() + segs[i].offset, segs[i].size};
}

ToyModel ToyModel::random_init(int feature_dim, int hidden_dim, int embed_dim,
                               std::uint64_t seed) {
  ToyModel m(feature_dim, hidden_dim, embed_dim);
  std::mt19937_64 rng(seed);
  const auto segs = m.segments();
  for (const auto& s : segs) {
    if (s.name[0] == 'b') continue;  // biases start at zero
    const double fan_in = (s.name == "w_trunk") ? feature_dim : hidden_dim;
    std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(fan_in),
                                                1.0 / std::sqrt(fan_in));
    for (std::size_t i = 0; i < s.size; ++i) m.params_[s.offset + i] = dist(rng);
  }
  return m;
}

ForwardCache forward_cells(const ToyModel& model,
                           std::span<const double> features, int grid) {
  const int f = model.feature_dim();
  const int h = model.hidden_dim();
  const int d = model.embed_dim();
  const std::size_t cells = static_cast<std::size_t>(grid) * grid;
  if (features.size() != cells * f) {
    throw std::invalid_argument("forward: feature tensor shape mismatch");
  }
  ForwardCache cache;
  cache.grid = grid;
  cache.hidden.resize(cells * h);
  cache.raw_box.resize(cells * 4);
  cache.raw_obj.resize(cells);
  cache.emb.resize(cells * d);

  const auto wt = model.w_trunk(), bt = model.b_trunk();
  const auto wb = model.w_box(), bb = model.b_box();
  const auto wo = model.w_obj(), bo = model.b_obj();
  const auto we = model.w_emb(), be = model.b_emb();
  for (std::size_t c = 0; c < cells; ++c) {
    const double* fc = features.data() + c * f;
    double* hid = cache.hidden.data() + c * h;
    kernels::matvec(wt.data(), fc, hid, h, f);
    kernels::axpy(1.0, bt.data(), hid, h);

    double* rb = cache.raw_box.data() + c * 4;
    kernels::matvec(wb.data(), hid, rb, 4, h);
    kernels::axpy(1.0, bb.data(), rb, 4);

    cache.raw_obj[c] = kernels::dot(wo.data(), hid, h) + bo[0];

    double* em = cache.emb.data() + c * d;
    kernels::matvec(we.data(), hid, em, d, h);
    kernels::axpy(1.0, be.data(), em, d);
  }
  return cache;
}

CenterBox decode_box(int cell_x, int cell_y, int grid,
                     std::span<const double> raw) {
  CenterBox b;
  b.cx = (cell_x + 0.5 + 0.5 * std::tanh(raw[0])) / grid;
  b.cy = (cell_y + 0.5 + 0.5 * std::tanh(raw[1])) / grid;
  b.w = std::exp(raw[2]) / grid;
  b.h = std::exp(raw[3]) / grid;
  return b;
}

std::vector<BoxPrediction> decode_predictions(const ToyModel& model,
                                              const ForwardCache& cache) {
  const int d = model.embed_dim();
  const int grid = cache.grid;
  std::vector<BoxPrediction> preds;
  preds.reserve(cache.raw_obj.size());
  for (int cy = 0; cy < grid; ++cy) {
    for (int cx = 0; cx < grid; ++cx) {
      const std::size_t c = static_cast<std::size_t>(cy) * grid + cx;
      BoxPrediction p;
      p.box = decode_box(cx, cy, grid, {cache.raw_box.data() + c * 4, 4});
      p.objectness = sigmoid(cache.raw_obj[c]);
      p.embedding.assign(cache.emb.begin() + c * d,
                         cache.emb.begin() + (c + 1) * d);
      preds.push_back(std::move(p));
    }
  }
  return preds;
}

std::vector<BoxPrediction> forward(const ToyModel& model,
                                   std::span<const double> features,
                                   int grid) {
  return decode_predictions(model, forward_cells(model, features, grid));
}

std::vector<CellAssignment> assign_center_cells(std::span<const GtObject> gts,
                                                int grid) {
  std::vector<CellAssignment> assigned;
  std::set<int> used;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const auto& gt = gts[i];
    const int cx = std::clamp(static_cast<int>(gt.box.cx * grid), 0, grid - 1);
    const int cy = std::clamp(static_cast<int>(gt.box.cy * grid), 0, grid - 1);
    const int cell = cy * grid + cx;
    if (!used.insert(cell).second) {
      std::clog << "detection_losses: dropping object " << i
                << " sharing center cell " << cell << "\n";
      continue;
    }
    assigned.push_back({cell, static_cast<int>(i)});
  }
  return assigned;
}

DetectionLossResult detection_losses(std::span<const BoxPrediction> preds,
                                     std::span<const GtObject> gts, int grid) {
  const std::size_t cells = static_cast<std::size_t>(grid) * grid;
  if (preds.size() != cells) {
    throw std::invalid_argument("detection_losses: prediction count mismatch");
  }
  const auto assigned = assign_center_cells(gts, grid);

  DetectionLossResult result;
  result.n_assigned = static_cast<int>(assigned.size());
  result.n_dropped = static_cast<int>(gts.size()) - result.n_assigned;

  std::vector<char> positive(cells, 0);
  for (const auto& a : assigned) {
    positive[a.cell] = 1;
    result.box_loss += 1.0 - iou(preds[a.cell].box, gts[a.gt_index].box);
  }
  if (!assigned.empty()) result.box_loss /= assigned.size();

  for (std::size_t c = 0; c < cells; ++c) {
    result.obj_loss += bce(preds[c].objectness, positive[c] ? 1.0 : 0.0);
  }
  result.obj_loss /= static_cast<double>(cells);
  return result;
}

DetectionLossGrads detection_loss_grads(const ForwardCache& cache,
                                        std::span<const GtObject> gts,
                                        int grid) {
  const std::size_t cells = static_cast<std::size_t>(grid) * grid;
  const auto assigned = assign_center_cells(gts, grid);

  DetectionLossGrads out;
  out.d_raw_box.assign(cells * 4, 0.0);
  out.d_raw_obj.assign(cells, 0.0);
  out.losses.n_assigned = static_cast<int>(assigned.size());
  out.losses.n_dropped = static_cast<int>(gts.size()) - out.losses.n_assigned;

  std::vector<char> positive(cells, 0);
  for (const auto& a : assigned) positive[a.cell] = 1;

  // Objectness: mean BCE over cells; d/d raw = (sigmoid(raw) - target) / cells.
  const double inv_cells = 1.0 / static_cast<double>(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    const double p = sigmoid(cache.raw_obj[c]);
    const double target = positive[c] ? 1.0 : 0.0;
    out.losses.obj_loss += bce(p, target);
    out.d_raw_obj[c] = (p - target) * inv_cells;
  }
  out.losses.obj_loss *= inv_cells;

  if (assigned.empty()) return out;

  const double inv_assigned = 1.0 / static_cast<double>(assigned.size());
  for (const auto& a : assigned) {
    const std::size_t c = a.cell;
    const int cell_x = static_cast<int>(c) % grid;
    const int cell_y = static_cast<int>(c) / grid;
    const std::span<const double> raw{cache.raw_box.data() + c * 4, 4};
    const CenterBox pred = decode_box(cell_x, cell_y, grid, raw);
    const CornerBox pc = to_corners(pred);
    const CornerBox gc = to_corners(gts[a.gt_index].box);
    out.losses.box_loss += 1.0 - iou(pc, gc);

    const auto g_corner = iou_grad_corners(pc, gc);
    // corners -> (cx, cy, w, h)
    const double g_cx = g_corner[0] + g_corner[2];
    const double g_cy = g_corner[1] + g_corner[3];
    const double g_w = 0.5 * (g_corner[2] - g_corner[0]);
    const double g_h = 0.5 * (g_corner[3] - g_corner[1]);
    // (cx, cy, w, h) -> raw, for loss (1 - IoU) averaged over assignments
    const double th_x = std::tanh(raw[0]);
    const double th_y = std::tanh(raw[1]);
    double* d_raw = out.d_raw_box.data() + c * 4;
    d_raw[0] = -g_cx * 0.5 * (1.0 - th_x * th_x) / grid * inv_assigned;
    d_raw[1] = -g_cy * 0.5 * (1.0 - th_y * th_y) / grid * inv_assigned;
    d_raw[2] = -g_w * pred.w * inv_assigned;
    d_raw[3] = -g_h * pred.h * inv_assigned;
  }
  out.losses.box_loss *= inv_assigned;
  return out;
}

void accumulate_cell_backward(const ToyModel& model,
                              std::span<const double> cell_features,
                              const ForwardCache& cache, int cell,
                              std::span<const double> d_raw_box,
                              double d_raw_obj, std::span<const double> d_emb,
                              std::span<double> grads) {
  const int f = model.feature_dim();
  const int h = model.hidden_dim();
  const int d = model.embed_dim();
  const auto segs = model.segments();
  const double* hid = cache.hidden.data() + static_cast<std::size_t>(cell) * h;

  double* g_wt = grads.data() + segs[0].offset;
  double* g_bt = grads.data() + segs[1].offset;
  double* g_wb = grads.data() + segs[2].offset;
  double* g_bb = grads.data() + segs[3].offset;
  double* g_wo = grads.data() + segs[4].offset;
  double* g_bo = grads.data() + segs[5].offset;
  double* g_we = grads.data() + segs[6].offset;
  double* g_be = grads.data() + segs[7].offset;

  std::vector<double> d_hidden(h, 0.0);

  if (!d_raw_box.empty()) {
    kernels::ger_acc(g_wb, 1.0, d_raw_box.data(), hid, 4, h);
    for (int k = 0; k < 4; ++k) g_bb[k] += d_raw_box[k];
    kernels::matvec_t_acc(model.w_box().data(), d_raw_box.data(),
                          d_hidden.data(), 4, h);
  }
  if (d_raw_obj != 0.0) {
    kernels::axpy(d_raw_obj, hid, g_wo, h);
    g_bo[0] += d_raw_obj;
    kernels::axpy(d_raw_obj, model.w_obj().data(), d_hidden.data(), h);
  }
  if (!d_emb.empty()) {
    kernels::ger_acc(g_we, 1.0, d_emb.data(), hid, d, h);
    kernels::axpy(1.0, d_emb.data(), g_be, d);
    kernels::matvec_t_acc(model.w_emb().data(), d_emb.data(), d_hidden.data(),
                          d, h);
  }

  kernels::ger_acc(g_wt, 1.0, d_hidden.data(), cell_features.data(), h, f);
  kernels::axpy(1.0, d_hidden.data(), g_bt, h);
}

}  // namespace zsd
