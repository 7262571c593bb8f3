#include "zsd/registry.hpp"

#include <stdexcept>

namespace zsd {

ClassRegistry::ClassRegistry(std::vector<ClassEntry> entries)
    : entries_(std::move(entries)) {
  index_.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.name.empty()) {
      throw std::invalid_argument("ClassRegistry: empty class name at index " +
                                  std::to_string(i));
    }
    if (!index_.emplace(e.name, i).second) {
      throw std::invalid_argument("ClassRegistry: duplicate class name '" +
                                  e.name + "'");
    }
  }
}

std::optional<std::size_t> ClassRegistry::index_of(
    const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> ClassRegistry::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

namespace {

std::size_t count_occurrences(const std::string& s, std::string_view token) {
  std::size_t count = 0;
  for (std::size_t pos = s.find(token); pos != std::string::npos;
       pos = s.find(token, pos + token.size())) {
    ++count;
  }
  return count;
}

}  // namespace

PromptTemplateSet::PromptTemplateSet(std::vector<std::string> templates)
    : templates_(std::move(templates)) {
  if (templates_.empty()) {
    throw std::invalid_argument("PromptTemplateSet: at least one template required");
  }
  for (const auto& t : templates_) {
    if (count_occurrences(t, kPlaceholder) != 1) {
      throw std::invalid_argument(
          "PromptTemplateSet: template must contain '" +
          std::string(kPlaceholder) + "' exactly once: '" + t + "'");
    }
  }
}

std::string PromptTemplateSet::fill(std::size_t i,
                                    const std::string& class_name) const {
  std::string out = templates_.at(i);
  const std::size_t pos = out.find(kPlaceholder);
  out.replace(pos, kPlaceholder.size(), class_name);
  return out;
}

}  // namespace zsd
