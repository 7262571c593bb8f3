#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "zsd/embedding.hpp"
#include "zsd/registry.hpp"

namespace zsd {

// Fixed linear classifier: one unit-norm column per registry class, in
// registry order. Immutable after construction; never updated by training.
class ClassifierMatrix {
 public:
  ClassifierMatrix() = default;

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return names_.size(); }
  std::span<const double> column(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::span<const double> data() const noexcept { return data_; }

  friend ClassifierMatrix build_classifier(
      const ClassRegistry& registry,
      const std::map<std::string, Embedding>& per_class);

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;  // column i at data_[i * dim_]
  std::vector<std::string> names_;
};

// Learnable log-scale temperature. The softmax uses exp(log_scale), clipped
// to at most kMaxEffectiveScale.
struct TemperatureParam {
  static constexpr double kMaxEffectiveScale = 100.0;

  // ln(1/0.07): the CLIP initialization.
  static double default_log_scale() { return std::log(1.0 / 0.07); }

  double log_scale = 0.0;

  double effective_scale() const { return std::exp(log_scale); }
};

// Clamps the effective scale to kMaxEffectiveScale; a no-op below the bound.
TemperatureParam clip_temperature(TemperatureParam t);

using TextEncoder = std::function<Embedding(const std::string&)>;

// normalize(mean over templates of encoder(template filled with class_name)).
// Throws when the averaged vector has zero norm ("cancelling template
// embeddings") or the encoder outputs disagree on dimension.
Embedding build_class_embedding(const std::string& class_name,
                                const PromptTemplateSet& templates,
                                const TextEncoder& encoder);

// Column i = normalize(per_class[name_i]). Throws listing every registry
// class missing from the mapping.
ClassifierMatrix build_classifier(
    const ClassRegistry& registry,
    const std::map<std::string, Embedding>& per_class);

}  // namespace zsd
