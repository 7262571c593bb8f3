#include "zsd/alignment_loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "zsd/kernels.hpp"

namespace zsd {

std::vector<double> cosine_row(std::span<const double> e,
                               const ClassifierMatrix& classifier) {
  if (e.size() != classifier.dim()) {
    throw std::invalid_argument("cosine_row: embedding dimension mismatch");
  }
  const double norm_e = norm(e);
  if (norm_e == 0.0 || !std::isfinite(norm_e)) {
    throw std::invalid_argument("cosine_row: zero-norm embedding");
  }
  std::vector<double> cosines(classifier.size());
  // Columns are unit-norm by construction, so cos = <e, c_i> / |e|.
  kernels::matvec(classifier.data().data(), e.data(), cosines.data(),
                  classifier.size(), classifier.dim());
  for (double& c : cosines) {
    c /= norm_e;
    c = std::clamp(c, -1.0, 1.0);
  }
  return cosines;
}

SimilarityVector softmax_scaled(std::span<const double> cosines, double scale) {
  if (cosines.empty()) {
    throw std::invalid_argument("softmax_scaled: empty input");
  }
  double zmax = cosines[0] * scale;
  for (double c : cosines) zmax = std::max(zmax, c * scale);
  SimilarityVector s;
  s.probabilities.resize(cosines.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < cosines.size(); ++i) {
    const double p = std::exp(cosines[i] * scale - zmax);
    s.probabilities[i] = p;
    sum += p;
  }
  for (double& p : s.probabilities) p /= sum;
  return s;
}

double loss_from_cosines(std::span<const double> cosines, double scale,
                         std::size_t target) {
  if (target >= cosines.size()) {
    throw std::invalid_argument("loss_from_cosines: target class out of range");
  }
  double zmax = cosines[0] * scale;
  for (double c : cosines) zmax = std::max(zmax, c * scale);
  double sum = 0.0;
  for (double c : cosines) sum += std::exp(c * scale - zmax);
  // -log s_t = log(sum_j exp(z_j - zmax)) + zmax - z_t
  return std::log(sum) + zmax - cosines[target] * scale;
}

SimilarityVector similarity_scores(std::span<const double> e,
                                   const ClassifierMatrix& classifier,
                                   const TemperatureParam& temperature) {
  return softmax_scaled(cosine_row(e, classifier),
                        temperature.effective_scale());
}

LossValue alignment_loss(std::span<const double> e,
                         const ClassifierMatrix& classifier,
                         const TemperatureParam& temperature,
                         std::size_t target) {
  if (target >= classifier.size()) {
    throw std::invalid_argument("alignment_loss: target class out of range");
  }
  return {loss_from_cosines(cosine_row(e, classifier),
                            temperature.effective_scale(), target)};
}

GradientBundle alignment_loss_grad(std::span<const double> e,
                                   const ClassifierMatrix& classifier,
                                   const TemperatureParam& temperature,
                                   std::size_t target) {
  if (target >= classifier.size()) {
    throw std::invalid_argument("alignment_loss_grad: target class out of range");
  }
  const std::vector<double> cosines = cosine_row(e, classifier);
  const double scale = temperature.effective_scale();
  const SimilarityVector s = softmax_scaled(cosines, scale);

  const double norm_e = norm(e);
  const double inv_norm = 1.0 / norm_e;
  const double inv_norm_sq = inv_norm * inv_norm;

  GradientBundle g;
  g.d_embedding.assign(e.size(), 0.0);
  double e_coeff = 0.0;  // accumulated coefficient of e in d_embedding
  double d_tau = 0.0;
  for (std::size_t i = 0; i < classifier.size(); ++i) {
    const double w = (s.probabilities[i] - (i == target ? 1.0 : 0.0)) * scale;
    // dcos_i/de = c_i / |e| - cos_i * e / |e|^2 for unit c_i
    const auto col = classifier.column(i);
    kernels::axpy(w * inv_norm, col.data(), g.d_embedding.data(), e.size());
    e_coeff -= w * cosines[i] * inv_norm_sq;
    d_tau += (s.probabilities[i] - (i == target ? 1.0 : 0.0)) * cosines[i] * scale;
  }
  kernels::axpy(e_coeff, e.data(), g.d_embedding.data(), e.size());

  // Projection at the clip bound: no gradient component that would push the
  // effective scale past the maximum.
  const double max_log = std::log(TemperatureParam::kMaxEffectiveScale);
  if (temperature.log_scale >= max_log - 1e-12 && d_tau < 0.0) {
    d_tau = 0.0;
  }
  g.d_log_scale = d_tau;
  return g;
}

}  // namespace zsd
