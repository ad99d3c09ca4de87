#include "safeedit/category.hpp"

#include "safeedit/errors.hpp"

#include <cctype>

namespace safeedit {

std::string_view to_string(Category c) {
  switch (c) {
  case Category::Safe:
    return "safe";
  case Category::Sexual:
    return "sexual";
  case Category::Violence:
    return "violence";
  case Category::Harassment:
    return "harassment";
  case Category::Shocking:
    return "shocking";
  case Category::Hate:
    return "hate";
  case Category::IllegalActivity:
    return "illegal_activity";
  }
  return "safe";
}

std::string normalize_label(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_sep = false;
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || c == '-' || c == '_') {
      if (!out.empty()) pending_sep = true;
      continue;
    }
    if (pending_sep) {
      out.push_back('_');
      pending_sep = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

const CategoryRemap &default_source_remap() {
  static const CategoryRemap remap = {
      {"humiliation", Category::Harassment},
      {"disturbing", Category::Shocking},
  };
  return remap;
}

Category parse_category(std::string_view text) {
  static const CategoryRemap empty;
  return parse_category(text, empty);
}

Category parse_category(std::string_view text, const CategoryRemap &remap) {
  std::string key = normalize_label(text);
  for (Category c : all_categories()) {
    if (key == to_string(c)) return c;
  }
  auto it = remap.find(key);
  if (it != remap.end()) return it->second;
  throw UnknownCategoryError(std::string(text));
}

} // namespace safeedit
