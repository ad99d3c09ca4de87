#pragma once
// Safety categories and label parsing.
//
// Canonical names are lowercase snake_case ("illegal_activity") so they can
// double as policy-lookup keys and path segments. Parsing folds case and
// maps whitespace/hyphens to underscores; source-dataset labels that are not
// canonical ("humiliation", "disturbing") go through an explicit remap table.

#include <array>
#include <map>
#include <string>
#include <string_view>

namespace safeedit {

enum class Category {
  Safe,
  Sexual,
  Violence,
  Harassment,
  Shocking,
  Hate,
  IllegalActivity,
};

inline constexpr std::size_t kCategoryCount = 7;
inline constexpr std::size_t kUnsafeCategoryCount = 6;

constexpr std::array<Category, kCategoryCount> all_categories() {
  return {Category::Safe,     Category::Sexual,   Category::Violence,
          Category::Harassment, Category::Shocking, Category::Hate,
          Category::IllegalActivity};
}

constexpr std::array<Category, kUnsafeCategoryCount> unsafe_categories() {
  return {Category::Sexual,   Category::Violence, Category::Harassment,
          Category::Shocking, Category::Hate,     Category::IllegalActivity};
}

constexpr bool is_unsafe(Category c) { return c != Category::Safe; }

std::string_view to_string(Category c);

using CategoryRemap = std::map<std::string, Category>;

// The standard source-label remap: "humiliation" -> harassment,
// "disturbing" -> shocking.
const CategoryRemap &default_source_remap();

// Parses a canonical category name. Throws UnknownCategoryError for anything
// that is not one of the 7 canonical names after normalization.
Category parse_category(std::string_view text);

// Same, but consults `remap` (on the normalized label) before failing.
Category parse_category(std::string_view text, const CategoryRemap &remap);

// Lowercases and maps runs of whitespace/hyphens to a single underscore.
std::string normalize_label(std::string_view text);

} // namespace safeedit
