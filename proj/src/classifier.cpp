#include "zsd/classifier.hpp"

#include <stdexcept>

#include "zsd/kernels.hpp"

namespace zsd {

TemperatureParam clip_temperature(TemperatureParam t) {
  const double max_log = std::log(TemperatureParam::kMaxEffectiveScale);
  if (t.log_scale > max_log) t.log_scale = max_log;
  return t;
}

Embedding build_class_embedding(const std::string& class_name,
                                const PromptTemplateSet& templates,
                                const TextEncoder& encoder) {
  Embedding mean;
  for (std::size_t i = 0; i < templates.size(); ++i) {
    Embedding e = encoder(templates.fill(i, class_name));
    if (mean.empty()) {
      mean.assign(e.size(), 0.0);
    } else if (e.size() != mean.size()) {
      throw std::invalid_argument(
          "build_class_embedding: encoder output dimension mismatch for '" +
          class_name + "'");
    }
    kernels::axpy(1.0, e.data(), mean.data(), mean.size());
  }
  kernels::scale(mean.data(), 1.0 / static_cast<double>(templates.size()),
                 mean.size());
  if (norm(mean) == 0.0) {
    throw std::invalid_argument("cancelling template embeddings for '" +
                                class_name + "'");
  }
  return normalize(mean);
}

ClassifierMatrix build_classifier(
    const ClassRegistry& registry,
    const std::map<std::string, Embedding>& per_class) {
  std::string missing;
  std::size_t dim = 0;
  for (const auto& entry : registry.entries()) {
    auto it = per_class.find(entry.name);
    if (it == per_class.end()) {
      missing += missing.empty() ? entry.name : ", " + entry.name;
    } else if (dim == 0) {
      dim = it->second.size();
    } else if (it->second.size() != dim) {
      throw std::invalid_argument(
          "build_classifier: embedding dimension mismatch for '" + entry.name +
          "'");
    }
  }
  if (!missing.empty()) {
    throw std::invalid_argument("build_classifier: missing classes: " + missing);
  }
  if (registry.size() == 0) {
    throw std::invalid_argument("build_classifier: empty registry");
  }

  ClassifierMatrix c;
  c.dim_ = dim;
  c.names_ = registry.names();
  c.data_.reserve(dim * registry.size());
  for (const auto& entry : registry.entries()) {
    Embedding col = normalize(per_class.at(entry.name));
    c.data_.insert(c.data_.end(), col.begin(), col.end());
  }
  return c;
}

}  // namespace zsd
