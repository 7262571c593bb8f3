#pragma once

#include <span>
#include <vector>

#include "zsd/classifier.hpp"
#include "zsd/embedding.hpp"

namespace zsd {

// Softmax over temperature-scaled cosine similarities. Entries sum to 1.
struct SimilarityVector {
  std::vector<double> probabilities;
};

struct LossValue {
  double value = 0.0;
};

// Analytic gradients of the alignment loss with respect to the predicted
// embedding and the log-scale temperature.
struct GradientBundle {
  std::vector<double> d_embedding;
  double d_log_scale = 0.0;
};

// cos(e, c_i) for every classifier column, clamped to [-1, 1]. Throws on a
// zero-norm embedding or dimension mismatch.
std::vector<double> cosine_row(std::span<const double> e,
                               const ClassifierMatrix& classifier);

// Softmax over cosines * scale, with max-subtraction. Exposed so the
// loss/softmax invariants can be tested directly on cosine fixtures.
SimilarityVector softmax_scaled(std::span<const double> cosines, double scale);

// -log softmax(cosines * scale)[target], in log-sum-exp form.
double loss_from_cosines(std::span<const double> cosines, double scale,
                         std::size_t target);

SimilarityVector similarity_scores(std::span<const double> e,
                                   const ClassifierMatrix& classifier,
                                   const TemperatureParam& temperature);

// Cross entropy between the similarity vector and target class t.
LossValue alignment_loss(std::span<const double> e,
                         const ClassifierMatrix& classifier,
                         const TemperatureParam& temperature,
                         std::size_t target);

// d_embedding = sum_i (s_i - 1[i=t]) * exp(tau) * dcos(e, c_i)/de
// d_log_scale = sum_i (s_i - 1[i=t]) * cos(e, c_i) * exp(tau),
// zeroed when exp(tau) sits at the clip bound and the step would leave it.
GradientBundle alignment_loss_grad(std::span<const double> e,
                                   const ClassifierMatrix& classifier,
                                   const TemperatureParam& temperature,
                                   std::size_t target);

}  // namespace zsd
