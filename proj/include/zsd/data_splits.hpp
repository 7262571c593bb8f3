#pragma once

#include <span>
#include <string>
#include <vector>

#include "zsd/registry.hpp"

namespace zsd {

// Disjoint seen/unseen class-name partition, in registry order.
struct SplitSpec {
  std::vector<std::string> seen;
  std::vector<std::string> unseen;
};

// Classification class names excluded from training because they would leak
// unseen detection classes.
struct ExclusionList {
  std::vector<std::string> names;
};

// Per superclass: sort ascending by frequency (ties by name) and mark the
// rarest round(fraction * group size) classes unseen (half rounds up).
// Requires superclass and frequency on every entry.
SplitSpec make_rare_split(const ClassRegistry& registry, double fraction = 0.2);

struct FilterReport {
  std::vector<std::string> kept;       // order-preserving
  std::vector<std::string> matched;    // exclusion entries found
  std::vector<std::string> unmatched;  // exclusion entries not present
};

// Order-preserving removal by exact name match. Unmatched exclusion entries
// are reported, not fatal.
FilterReport filter_classification_classes(std::span<const std::string> names,
                                           const ExclusionList& exclusion);

// The seven prompt templates, verbatim, in printed order.
PromptTemplateSet shipped_templates();

// The 19 classification classes excluded for the default benchmark setup.
ExclusionList shipped_exclusions();

}  // namespace zsd
