#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <random>

#include "zsd/error.hpp"
#include "zsd/inference.hpp"
#include "zsd/toy_model.hpp"
#include "zsd/trainer.hpp"

using namespace zsd;

namespace {

std::vector<double> random_features(std::mt19937_64& rng, int grid, int f) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(grid) * grid * f);
  for (double& x : v) x = dist(rng);
  return v;
}

ClassifierMatrix random_classifier(std::mt19937_64& rng, std::size_t n,
                                   std::size_t dim) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<ClassEntry> entries;
  std::map<std::string, Embedding> per_class;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string name = "c" + std::to_string(i);
    entries.push_back({name, {}, {}, {}});
    Embedding e(dim);
    for (double& x : e) x = dist(rng);
    per_class[name] = e;
  }
  return build_classifier(ClassRegistry(std::move(entries)), per_class);
}

}  // namespace

TEST_CASE("zero model predicts cell centers, unit cell size, objectness 0.5") {
  const int grid = 4;
  ToyModel model(6, 5, 4);  // all parameters zero
  std::mt19937_64 rng(1);
  const auto features = random_features(rng, grid, 6);
  const auto preds = forward(model, features, grid);
  REQUIRE(preds.size() == static_cast<std::size_t>(grid) * grid);
  for (int cy = 0; cy < grid; ++cy) {
    for (int cx = 0; cx < grid; ++cx) {
      const auto& p = preds[cy * grid + cx];
      CHECK(p.box.cx == doctest::Approx((cx + 0.5) / grid).epsilon(1e-15));
      CHECK(p.box.cy == doctest::Approx((cy + 0.5) / grid).epsilon(1e-15));
      CHECK(p.box.w == doctest::Approx(1.0 / grid).epsilon(1e-15));
      CHECK(p.box.h == doctest::Approx(1.0 / grid).epsilon(1e-15));
      CHECK(p.objectness == doctest::Approx(0.5).epsilon(1e-15));
    }
  }
}

TEST_CASE("per-cell locality") {
  const int grid = 5;
  std::mt19937_64 rng(2);
  const ToyModel model = ToyModel::random_init(8, 7, 6, 3);
  auto features = random_features(rng, grid, 8);
  const auto base = forward(model, features, grid);

  const int target_cell = 7;
  features[target_cell * 8 + 3] += 0.5;
  const auto perturbed = forward(model, features, grid);
  for (std::size_t c = 0; c < base.size(); ++c) {
    if (static_cast<int>(c) == target_cell) {
      CHECK(base[c].embedding != perturbed[c].embedding);
    } else {
      CHECK(base[c].box.cx == perturbed[c].box.cx);
      CHECK(base[c].objectness == perturbed[c].objectness);
      CHECK(base[c].embedding == perturbed[c].embedding);
    }
  }
}

TEST_CASE("dimension mismatch is rejected") {
  const ToyModel model = ToyModel::random_init(8, 7, 6, 3);
  CHECK_THROWS_AS(forward(model, std::vector<double>(10, 0.0), 5),
                  std::invalid_argument);
}

TEST_CASE("detection_losses") {
  const int grid = 4;
  std::mt19937_64 rng(4);

  SUBCASE("predictions equal to ground truth give zero box loss") {
    ToyModel model(6, 5, 4);  // zero weights: predicts cell-center unit boxes
    const auto features = random_features(rng, grid, 6);
    const auto preds = forward(model, features, grid);
    // ground truth exactly the decoded boxes of two cells
    std::vector<GtObject> gts{{preds[5].box, 0}, {preds[10].box, 1}};
    const DetectionLossResult r = detection_losses(preds, gts, grid);
    CHECK(r.box_loss == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.n_assigned == 2);
  }

  SUBCASE("near-perfect objectness reaches the epsilon floor") {
    ToyModel model(6, 5, 4);
    const auto features = random_features(rng, grid, 6);
    auto preds = forward(model, features, grid);
    std::vector<GtObject> gts{{preds[5].box, 0}};
    for (std::size_t c = 0; c < preds.size(); ++c) {
      preds[c].objectness = (c == 5) ? 1.0 - 1e-13 : 1e-13;
    }
    const DetectionLossResult r = detection_losses(preds, gts, grid);
    CHECK(r.obj_loss < 1e-11);
  }

  SUBCASE("random instance matches a direct per-cell recomputation") {
    for (int trial = 0; trial < 20; ++trial) {
      const ToyModel model = ToyModel::random_init(6, 5, 4, 100 + trial);
      const auto features = random_features(rng, grid, 6);
      const auto preds = forward(model, features, grid);
      std::uniform_real_distribution<double> unit(0.1, 0.9);
      std::vector<GtObject> gts;
      gts.push_back({{unit(rng), unit(rng), 0.2, 0.3}, 0});
      gts.push_back({{unit(rng), unit(rng), 0.3, 0.2}, 1});
      const DetectionLossResult r = detection_losses(preds, gts, grid);

      // independent recomputation
      std::map<int, const GtObject*> by_cell;
      for (const auto& gt : gts) {
        const int cell = static_cast<int>(gt.box.cy * grid) * grid +
                         static_cast<int>(gt.box.cx * grid);
        if (!by_cell.count(cell)) by_cell[cell] = &gt;
      }
      double box = 0.0, obj = 0.0;
      for (int c = 0; c < grid * grid; ++c) {
        const double target = by_cell.count(c) ? 1.0 : 0.0;
        const double p = std::clamp(preds[c].objectness, 1e-12, 1.0 - 1e-12);
        obj += -(target * std::log(p) + (1 - target) * std::log(1 - p));
        if (by_cell.count(c)) {
          box += 1.0 - iou(to_corners(preds[c].box),
                           to_corners(by_cell.at(c)->box));
        }
      }
      obj /= grid * grid;
      if (!by_cell.empty()) box /= static_cast<double>(by_cell.size());
      CHECK(std::abs(r.box_loss - box) < 1e-12);
      CHECK(std::abs(r.obj_loss - obj) < 1e-12);
    }
  }

  SUBCASE("objects sharing a center cell: the later one is dropped") {
    ToyModel model(6, 5, 4);
    const auto features = random_features(rng, grid, 6);
    const auto preds = forward(model, features, grid);
    std::vector<GtObject> gts{{{0.3, 0.3, 0.2, 0.2}, 0},
                              {{0.31, 0.29, 0.25, 0.25}, 1}};
    const DetectionLossResult r = detection_losses(preds, gts, grid);
    CHECK(r.n_assigned == 1);
    CHECK(r.n_dropped == 1);
  }
}

TEST_CASE("end-to-end batch gradients match central finite differences") {
  // A small joint batch: one detection sample with two objects plus one
  // image-label sample. Checks every model parameter and the temperature.
  const int grid = 3, f = 6, h = 5, d = 4;
  std::mt19937_64 rng(11);

  ToyModel model = ToyModel::random_init(f, h, d, 21);
  TemperatureParam tau;
  tau.log_scale = std::log(10.0);
  const ClassifierMatrix c_det = random_classifier(rng, 3, d);
  const ClassifierMatrix c_cls = random_classifier(rng, 4, d);
  WeakConfig weak;
  weak.th_obj = 0.001;

  DetectionSample det;
  det.grid = grid;
  det.features = random_features(rng, grid, f);
  det.objects = {{{0.2, 0.25, 0.22, 0.28}, 1}, {{0.7, 0.72, 0.3, 0.22}, 2}};

  ImageLabelSample cls;
  cls.grid = grid;
  cls.features = random_features(rng, grid, f);
  cls.label = 3;

  const std::vector<int> det_cols{0, 1, 2, -1};
  const std::vector<int> cls_cols{0, 1, 2, 3};
  SampleBatch batch;
  batch.detection.push_back(&det);
  batch.classification.push_back(&cls);

  const BatchGradients analytic = batch_gradients(
      model, tau, c_det, c_cls, weak, batch, det_cols, cls_cols);

  const double step = 1e-6;
  auto loss_at = [&](const ToyModel& m, const TemperatureParam& t) {
    return batch_gradients(m, t, c_det, c_cls, weak, batch, det_cols, cls_cols)
        .loss;
  };

  double err_sq = 0.0, norm_sq = 0.0;
  for (std::size_t i = 0; i < model.flat().size(); ++i) {
    ToyModel mp = model, mm = model;
    mp.flat()[i] += step;
    mm.flat()[i] -= step;
    const double fd = (loss_at(mp, tau) - loss_at(mm, tau)) / (2.0 * step);
    err_sq += (fd - analytic.param_grads[i]) * (fd - analytic.param_grads[i]);
    norm_sq += analytic.param_grads[i] * analytic.param_grads[i];
  }
  CHECK(std::sqrt(err_sq) <= 1e-4 * std::max(1e-8, std::sqrt(norm_sq)));

  TemperatureParam tp = tau, tm = tau;
  tp.log_scale += step;
  tm.log_scale -= step;
  const double fd_tau = (loss_at(model, tp) - loss_at(model, tm)) / (2.0 * step);
  CHECK(std::abs(fd_tau - analytic.d_tau) <=
        1e-4 * std::max(1e-8, std::abs(analytic.d_tau)));
}

TEST_CASE("classification-only batches leave box and objectness heads alone") {
  const int grid = 4, f = 6, h = 5, d = 4;
  std::mt19937_64 rng(13);
  const ToyModel model = ToyModel::random_init(f, h, d, 31);
  TemperatureParam tau;
  tau.log_scale = std::log(14.0);
  const ClassifierMatrix c_cls = random_classifier(rng, 4, d);
  const ClassifierMatrix c_det = c_cls;

  ImageLabelSample cls;
  cls.grid = grid;
  cls.features = random_features(rng, grid, f);
  cls.label = 2;

  SampleBatch batch;
  batch.classification.push_back(&cls);
  const std::vector<int> cols{0, 1, 2, 3};
  const BatchGradients bg =
      batch_gradients(model, tau, c_det, c_cls, {}, batch, cols, cols);

  const auto segs = model.segments();
  for (const auto& seg : segs) {
    const bool box_or_obj = seg.name == "w_box" || seg.name == "b_box" ||
                            seg.name == "w_obj" || seg.name == "b_obj";
    double norm = 0.0;
    for (std::size_t i = 0; i < seg.size; ++i) {
      norm += std::abs(bg.param_grads[seg.offset + i]);
    }
    if (box_or_obj) {
      CHECK(norm == 0.0);  // exactly zero, not just small
    }
  }
  // trunk and embedding head do receive gradient
  double trunk_norm = 0.0;
  for (std::size_t i = 0; i < segs[0].size; ++i) {
    trunk_norm += std::abs(bg.param_grads[segs[0].offset + i]);
  }
  CHECK(trunk_norm > 0.0);
}

TEST_CASE("sgd_step") {
  SUBCASE("zero gradients and zero weight decay leave parameters unchanged") {
    std::vector<double> params{1.0, -2.0, 3.0};
    std::vector<double> grads(3, 0.0);
    std::vector<double> buf(3, 0.0);
    const auto before = params;
    sgd_step(params, grads, buf, 0.1, 0.9, 0.0);
    CHECK(params == before);
  }

  SUBCASE("two hand-computed momentum steps on a scalar") {
    // momentum 0.9, lr 0.1, no weight decay, gradients 1.0 then 0.5:
    // b1 = 1.0,   p1 = 1.0 - 0.1*1.0 = 0.9
    // b2 = 0.9*1.0 + 0.5 = 1.4, p2 = 0.9 - 0.1*1.4 = 0.76
    std::vector<double> p{1.0}, buf{0.0};
    std::vector<double> g1{1.0}, g2{0.5};
    sgd_step(p, g1, buf, 0.1, 0.9, 0.0);
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-15));
    sgd_step(p, g2, buf, 0.1, 0.9, 0.0);
    CHECK(p[0] == doctest::Approx(0.76).epsilon(1e-15));
  }

  SUBCASE("weight decay alone decays geometrically") {
    std::vector<double> p{2.0}, buf{0.0}, g{0.0};
    const double lr = 0.1, wd = 0.01;
    double expect = 2.0;
    for (int i = 0; i < 5; ++i) {
      buf[0] = 0.0;  // isolate the decay factor per step
      sgd_step(p, g, buf, lr, 0.0, wd);
      expect *= 1.0 - lr * wd;
      CHECK(p[0] == doctest::Approx(expect).epsilon(1e-14));
    }
  }

  SUBCASE("non-finite gradients abort") {
    std::vector<double> p{1.0}, buf{0.0};
    std::vector<double> g{std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_AS(sgd_step(p, g, buf, 0.1, 0.9, 0.0), NumericError);
  }
}

TEST_CASE("lr_schedule") {
  TrainConfig cfg;
  cfg.base_lr = 0.001;
  cfg.warmup_epochs = 5;
  cfg.total_epochs = 50;
  cfg.min_lr_ratio = 0.05;
  const std::int64_t spe = 10;  // steps per epoch
  const std::int64_t warmup = cfg.warmup_epochs * spe;
  const std::int64_t total = cfg.total_epochs * spe;

  SUBCASE("end of warmup reaches base_lr exactly") {
    CHECK(lr_schedule(warmup - 1, cfg, spe) == doctest::Approx(cfg.base_lr));
  }

  SUBCASE("final step reaches the floor exactly") {
    CHECK(lr_schedule(total - 1, cfg, spe) ==
          doctest::Approx(0.05 * cfg.base_lr).epsilon(1e-12));
  }

  SUBCASE("cosine midpoint") {
    // midpoint of the cosine span [warmup, total-1]
    const std::int64_t mid = warmup + (total - 1 - warmup) / 2;
    if ((total - 1 - warmup) % 2 == 0) {
      const double expect = (cfg.base_lr + 0.05 * cfg.base_lr) / 2.0;
      CHECK(std::abs(lr_schedule(mid, cfg, spe) - expect) < 1e-12);
    }
  }

  SUBCASE("continuous at the warmup/cosine junction") {
    const double before = lr_schedule(warmup - 1, cfg, spe);
    const double after = lr_schedule(warmup, cfg, spe);
    CHECK(std::abs(after - before) < cfg.base_lr / (total - warmup) * 4);
  }

  SUBCASE("warmup ramps linearly from zero") {
    CHECK(lr_schedule(0, cfg, spe) ==
          doctest::Approx(cfg.base_lr / warmup).epsilon(1e-12));
    for (int s = 1; s < warmup; ++s) {
      CHECK(lr_schedule(s, cfg, spe) > lr_schedule(s - 1, cfg, spe));
    }
  }
}
