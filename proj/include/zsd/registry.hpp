#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace zsd {

enum class ClassRole { seen, unseen };

struct ClassEntry {
  std::string name;
  std::optional<std::string> superclass;
  std::optional<std::uint64_t> frequency;  // instance count in the source set
  ClassRole role = ClassRole::seen;
};

// Ordered, name-unique class list. Index i identifies class i everywhere.
class ClassRegistry {
 public:
  ClassRegistry() = default;
  explicit ClassRegistry(std::vector<ClassEntry> entries);

  std::size_t size() const noexcept { return entries_.size(); }
  const ClassEntry& at(std::size_t i) const { return entries_.at(i); }
  std::span<const ClassEntry> entries() const noexcept { return entries_; }
  std::optional<std::size_t> index_of(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::vector<ClassEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Prompt sentences, each containing the placeholder `{class}` exactly once.
class PromptTemplateSet {
 public:
  static constexpr std::string_view kPlaceholder = "{class}";

  explicit PromptTemplateSet(std::vector<std::string> templates);

  std::size_t size() const noexcept { return templates_.size(); }
  const std::string& at(std::size_t i) const { return templates_.at(i); }
  std::span<const std::string> templates() const noexcept { return templates_; }

  // Template i with the placeholder replaced by class_name.
  std::string fill(std::size_t i, const std::string& class_name) const;

 private:
  std::vector<std::string> templates_;
};

}  // namespace zsd
