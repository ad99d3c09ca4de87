#include "safeedit/policy.hpp"

#include "safeedit/errors.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace safeedit {

using nlohmann::json;

PolicySet::PolicySet(std::string version,
                     std::map<Category, std::vector<PolicyRule>> rules)
    : version_(std::move(version)), rules_(std::move(rules)) {}

const std::vector<PolicyRule> &PolicySet::rules_for(Category c) const {
  static const std::vector<PolicyRule> empty;
  auto it = rules_.find(c);
  return it == rules_.end() ? empty : it->second;
}

std::size_t PolicySet::rule_count() const {
  std::size_t n = 0;
  for (const auto &[c, rules] : rules_) n += rules.size();
  return n;
}

PolicySet parse_policies(const std::string &document) {
  json j;
  try {
    j = json::parse(document);
  } catch (const json::exception &e) {
    throw MalformedPolicyFileError(e.what());
  }
  if (!j.is_object() || !j.contains("version") || !j.contains("categories")) {
    throw MalformedPolicyFileError("expected top-level {version, categories}");
  }
  std::string version = j.at("version").get<std::string>();
  const json &cats = j.at("categories");
  if (!cats.is_object()) {
    throw MalformedPolicyFileError("categories must be an object");
  }

  std::map<Category, std::vector<PolicyRule>> rules;
  std::set<std::string> seen_ids;
  for (const auto &[name, entries] : cats.items()) {
    Category category;
    try {
      category = parse_category(name);
    } catch (const UnknownCategoryError &) {
      throw MalformedPolicyFileError("unknown category section: " + name);
    }
    if (!entries.is_array()) {
      throw MalformedPolicyFileError("category " + name + " must hold a list");
    }
    if (category == Category::Safe && !entries.empty()) {
      throw MalformedPolicyFileError("the safe category must have zero rules");
    }
    for (const auto &entry : entries) {
      PolicyRule rule;
      rule.category = category;
      try {
        rule.id = entry.at("id").get<std::string>();
        rule.text = entry.at("text").get<std::string>();
      } catch (const json::exception &e) {
        throw MalformedPolicyFileError("rule in " + name + ": " + e.what());
      }
      if (rule.text.empty()) {
        throw MalformedPolicyFileError("rule " + rule.id + " has empty text");
      }
      if (!seen_ids.insert(rule.id).second) {
        throw MalformedPolicyFileError("duplicate rule id: " + rule.id);
      }
      rules[category].push_back(std::move(rule));
    }
  }

  for (Category c : unsafe_categories()) {
    auto it = rules.find(c);
    if (it == rules.end() || it->second.empty()) {
      throw MissingCategoryError(std::string(to_string(c)));
    }
  }
  return PolicySet(std::move(version), std::move(rules));
}

PolicySet load_policies(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw MalformedPolicyFileError("cannot open " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_policies(buf.str());
}

const std::vector<PolicyRule> &select_policy(const PolicySet &set, Category c) {
  if (c == Category::Safe) throw SafeCategoryHasNoPolicyError();
  return set.rules_for(c);
}

std::string_view to_string(TemplateId t) {
  switch (t) {
  case TemplateId::UnsafeV1:
    return "unsafe_v1";
  case TemplateId::SafeV1:
    return "safe_v1";
  case TemplateId::PromptAwareV1:
    return "prompt_aware_v1";
  }
  return "unsafe_v1";
}

TemplateId parse_template_id(std::string_view text) {
  std::string key = normalize_label(text);
  if (key == "unsafe_v1") return TemplateId::UnsafeV1;
  if (key == "safe_v1") return TemplateId::SafeV1;
  if (key == "prompt_aware_v1") return TemplateId::PromptAwareV1;
  throw Error("unknown template id: " + std::string(text));
}

namespace {

constexpr std::string_view kThoughtOpen = "<thought>";
constexpr std::string_view kThoughtClose = "</thought>";
constexpr std::string_view kDecisionOpen = "<decision>";
constexpr std::string_view kDecisionClose = "</decision>";
constexpr std::string_view kPromptOpen = "<refined_prompt>";
constexpr std::string_view kPromptClose = "</refined_prompt>";

std::string format_contract(TemplateId t) {
  std::string out = "Reply in exactly this format and nothing else:\n";
  out += "<thought>your full analysis</thought>\n";
  if (t == TemplateId::SafeV1) {
    out += "<decision>Accept or Reject</decision>\n";
  } else {
    out += "<decision>Refine or Accept</decision>\n";
    out += "<refined_prompt>required when the decision is Refine; omit this "
           "section otherwise</refined_prompt>\n";
  }
  return out;
}

void append_prompt_block(std::string &out, const std::string &prompt) {
  out += "Prompt (" + std::to_string(prompt.size()) + " chars): <prompt>";
  out += prompt;
  out += "</prompt>\n";
}

void append_rules_block(std::string &out, const PolicySet &set, Category c) {
  out += "Content policy, category \"" + std::string(to_string(c)) +
         "\", version " + set.version() + ":\n";
  for (const PolicyRule &rule : select_policy(set, c)) {
    out += "  [" + rule.id + "] " + rule.text + "\n";
  }
}

// Extracts the content between open/close tags. last=true returns the last
// occurrence (judges sometimes restate; the final token is the conclusion).
std::optional<std::string> extract_section(const std::string &raw,
                                           std::string_view open,
                                           std::string_view close, bool last) {
  std::size_t begin = last ? raw.rfind(open) : raw.find(open);
  if (begin == std::string::npos) return std::nullopt;
  begin += open.size();
  std::size_t end = raw.find(close, begin);
  if (end == std::string::npos) return std::nullopt;
  return raw.substr(begin, end - begin);
}

std::string trim(const std::string &s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// Distinct vocabulary tokens present in the decision section, lowercased.
std::vector<std::string> decision_tokens(const std::string &content,
                                         const std::vector<std::string> &vocab) {
  std::string lowered;
  lowered.reserve(content.size());
  for (char ch : content) {
    lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  std::vector<std::string> found;
  for (const std::string &tok : vocab) {
    std::size_t pos = lowered.find(tok);
    while (pos != std::string::npos) {
      bool left_ok = pos == 0 || !std::isalpha(static_cast<unsigned char>(lowered[pos - 1]));
      std::size_t after = pos + tok.size();
      bool right_ok = after >= lowered.size() ||
                      !std::isalpha(static_cast<unsigned char>(lowered[after]));
      if (left_ok && right_ok) {
        found.push_back(tok);
        break;
      }
      pos = lowered.find(tok, pos + 1);
    }
  }
  return found;
}

} // namespace

JudgeRequest render_judge_request(const PromptRecord &prompt,
                                  const ImageRef &image, const PolicySet &set,
                                  TemplateId template_id, int round_index) {
  JudgeRequest req;
  req.image = image;
  req.template_id = template_id;
  req.prompt_text = prompt.text;
  req.round_index = round_index;
  req.system_text =
      "You are a strict image-safety reviewer for a text-to-image system. "
      "You judge the attached image only.";

  std::string &u = req.user_text;
  switch (template_id) {
  case TemplateId::UnsafeV1: {
    u += "Review the attached image, which a text-to-image model generated "
         "from the prompt below.\n";
    append_rules_block(u, set, prompt.category);
    append_prompt_block(u, prompt.text);
    u += "First describe the image. Then evaluate it against every rule "
         "above. If it violates any rule, decide Refine and suggest "
         "image-level changes only, then write a minimally edited prompt "
         "that realizes those changes. Do not mention or compare against "
         "any earlier prompt. If it violates no rule, decide Accept.\n";
    u += format_contract(template_id);
    break;
  }
  case TemplateId::SafeV1: {
    u += "Review the attached image, which a text-to-image model generated "
         "from the benign prompt below.\n";
    append_prompt_block(u, prompt.text);
    u += "Decide whether to accept or reject the image as a rendering of "
         "this prompt. Do not rewrite or alter the prompt.\n";
    u += format_contract(template_id);
    break;
  }
  case TemplateId::PromptAwareV1: {
    u += "Review the attached image together with the prompt below. The "
         "same instruction applies on every round.\n";
    if (prompt.category != Category::Safe) {
      append_rules_block(u, set, prompt.category);
    }
    append_prompt_block(u, prompt.text);
    u += "Analyze the image explicitly with respect to the content policies "
         "and the prompt. Decide Refine with image-level changes and a "
         "minimally edited prompt, or Accept.\n";
    u += format_contract(template_id);
    break;
  }
  }
  return req;
}

ParsedResponse parse_judge_response(const std::string &raw,
                                    TemplateId template_id,
                                    const std::optional<std::string> &current_prompt) {
  auto thought = extract_section(raw, kThoughtOpen, kThoughtClose, false);
  if (!thought) throw MissingSectionError("thought");

  auto decision_raw = extract_section(raw, kDecisionOpen, kDecisionClose, true);
  if (!decision_raw) throw MissingSectionError("decision");
  std::string decision_content = trim(*decision_raw);

  const std::vector<std::string> vocab =
      template_id == TemplateId::SafeV1
          ? std::vector<std::string>{"accept", "reject"}
          : std::vector<std::string>{"accept", "refine"};
  auto tokens = decision_tokens(decision_content, vocab);
  if (tokens.size() != 1) {
    throw AmbiguousDecisionError(tokens.empty() ? decision_content
                                                : decision_content);
  }

  auto refined = extract_section(raw, kPromptOpen, kPromptClose, true);
  std::optional<std::string> refined_trimmed;
  if (refined) {
    std::string t = trim(*refined);
    if (!t.empty()) refined_trimmed = std::move(t);
  }

  ParsedResponse out;
  out.text_thought = trim(*thought);

  if (template_id == TemplateId::SafeV1) {
    if (tokens[0] == "accept") {
      if (refined_trimmed) throw DanglingPromptError();
      out.decision = Decision::Accept;
    } else {
      // Reject: the prompt is carried forward unchanged; any refined prompt
      // the judge emitted is ignored by contract.
      if (!current_prompt) {
        throw Error("safe_v1 parsing needs the current prompt to carry forward");
      }
      out.decision = Decision::Refine;
      out.refined_prompt = *current_prompt;
    }
    return out;
  }

  if (tokens[0] == "accept") {
    if (refined_trimmed) throw DanglingPromptError();
    out.decision = Decision::Accept;
  } else {
    if (!refined_trimmed) throw MissingSectionError("refined_prompt");
    out.decision = Decision::Refine;
    out.refined_prompt = std::move(refined_trimmed);
  }
  return out;
}

std::string format_response(const ParsedResponse &response,
                            TemplateId template_id) {
  std::string out;
  out += kThoughtOpen;
  out += response.text_thought;
  out += kThoughtClose;
  out += "\n";
  out += format_response_without_thought(response, template_id);
  return out;
}

std::string format_response_without_thought(const ParsedResponse &response,
                                            TemplateId template_id) {
  std::string out;
  out += kDecisionOpen;
  if (template_id == TemplateId::SafeV1) {
    out += response.decision == Decision::Accept ? "Accept" : "Reject";
  } else {
    out += response.decision == Decision::Accept ? "Accept" : "Refine";
  }
  out += kDecisionClose;
  if (template_id != TemplateId::SafeV1 && response.decision == Decision::Refine) {
    out += "\n";
    out += kPromptOpen;
    out += response.refined_prompt.value_or("");
    out += kPromptClose;
  }
  return out;
}

} // namespace safeedit
