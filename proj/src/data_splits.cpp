#include "zsd/data_splits.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace zsd {

SplitSpec make_rare_split(const ClassRegistry& registry, double fraction) {
  if (fraction < 0.0 || fraction > 1.0) {
    throw std::invalid_argument("make_rare_split: fraction outside [0,1]");
  }
  struct Member {
    std::uint64_t frequency;
    std::string name;
  };
  std::map<std::string, std::vector<Member>> groups;  // by superclass
  for (const auto& entry : registry.entries()) {
    if (!entry.superclass) {
      throw std::invalid_argument("make_rare_split: class '" + entry.name +
                                  "' has no superclass");
    }
    if (!entry.frequency) {
      throw std::invalid_argument("make_rare_split: class '" + entry.name +
                                  "' has no frequency");
    }
    groups[*entry.superclass].push_back({*entry.frequency, entry.name});
  }

  std::set<std::string> unseen_names;
  for (auto& [superclass, members] : groups) {
    std::sort(members.begin(), members.end(), [](const Member& a, const Member& b) {
      if (a.frequency != b.frequency) return a.frequency < b.frequency;
      return a.name < b.name;
    });
    // round to nearest, half up
    const auto n_unseen = static_cast<std::size_t>(
        std::floor(fraction * static_cast<double>(members.size()) + 0.5));
    for (std::size_t i = 0; i < n_unseen && i < members.size(); ++i) {
      unseen_names.insert(members[i].name);
    }
  }

  SplitSpec split;
  for (const auto& entry : registry.entries()) {
    (unseen_names.count(entry.name) ? split.unseen : split.seen)
        .push_back(entry.name);
  }
  return split;
}

FilterReport filter_classification_classes(std::span<const std::string> names,
                                           const ExclusionList& exclusion) {
  const std::set<std::string> excluded(exclusion.names.begin(),
                                       exclusion.names.end());
  FilterReport report;
  std::set<std::string> present;
  for (const auto& name : names) {
    if (excluded.count(name)) {
      present.insert(name);
    } else {
      report.kept.push_back(name);
    }
  }
  for (const auto& name : excluded) {
    (present.count(name) ? report.matched : report.unmatched).push_back(name);
  }
  return report;
}

PromptTemplateSet shipped_templates() {
  return PromptTemplateSet({
      "itap of a {class}.",
      "a bad photo of the {class}.",
      "a origami {class}.",
      "a photo of the large {class}.",
      "a {class} in a video game.",
      "art of the {class}.",
      "a photo of the small {class}.",
  });
}

ExclusionList shipped_exclusions() {
  return ExclusionList{{
      "airplane wing",
      "airliner",
      "military aircraft",
      "high-speed train",
      "parking meter",
      "tabby cat",
      "tiger cat",
      "Persian cat",
      "Siamese cat",
      "Egyptian Mau",
      "brown bear",
      "American black bear",
      "polar bear",
      "sloth bear",
      "hot dog",
      "toilet seat",
      "computer mouse",
      "toaster",
      "hair dryer",
  }};
}

}  // namespace zsd
