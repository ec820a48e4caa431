#include "ctxrel/detection.hpp"

#include <numeric>

#include "ctxrel/error.hpp"

namespace ctxrel {

ClassVocabulary::ClassVocabulary(std::vector<std::string> names) {
  std::vector<std::int64_t> ids(names.size());
  std::iota(ids.begin(), ids.end(), std::int64_t{0});
  *this = ClassVocabulary(std::move(names), std::move(ids));
}

ClassVocabulary::ClassVocabulary(std::vector<std::string> names, std::vector<std::int64_t> category_ids)
    : names_(std::move(names)), category_ids_(std::move(category_ids)) {
  if (names_.size() != category_ids_.size())
    throw DataError("vocabulary: names and category ids differ in length");
  std::unordered_map<std::string_view, int> seen;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!seen.emplace(names_[i], 0).second)
      throw DataError("vocabulary: duplicate class name '" + names_[i] + "'");
    if (!by_category_.emplace(category_ids_[i], static_cast<ClassId>(i)).second)
      throw DataError("vocabulary: duplicate category id " + std::to_string(category_ids_[i]));
  }
}

const std::string& ClassVocabulary::name(ClassId id) const {
  if (!contains(id)) throw DataError("class id " + std::to_string(id) + " outside vocabulary");
  return names_[static_cast<std::size_t>(id)];
}

std::int64_t ClassVocabulary::category_id(ClassId id) const {
  if (!contains(id)) throw DataError("class id " + std::to_string(id) + " outside vocabulary");
  return category_ids_[static_cast<std::size_t>(id)];
}

std::optional<ClassId> ClassVocabulary::find_name(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<ClassId>(i);
  return std::nullopt;
}

std::optional<ClassId> ClassVocabulary::find_category(std::int64_t category_id) const {
  auto it = by_category_.find(category_id);
  if (it == by_category_.end()) return std::nullopt;
  return it->second;
}

ClassVocabulary ClassVocabulary::numbered(std::size_t n) {
  std::vector<std::string> names;
  names.reserve(n);
  for (std::size_t i = 0; i < n; ++i) names.push_back("class" + std::to_string(i));
  return ClassVocabulary(std::move(names));
}

}  // namespace ctxrel
