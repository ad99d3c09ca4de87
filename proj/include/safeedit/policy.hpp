#pragma once
// Content policies, judge query templates, and the structured-response
// grammar.
//
// The judge is asked to reply inside three delimited sections:
//
//   <thought>...</thought>
//   <decision>Refine | Accept | Reject</decision>
//   <refined_prompt>...</refined_prompt>   (Refine only, unsafe templates)
//
// Rendering is pure and deterministic; parsing is strict about sections and
// decision tokens so every persisted judge response stays machine-readable.

#include "safeedit/types.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace safeedit {

struct PolicyRule {
  std::string id;
  Category category = Category::Sexual;
  std::string text;

  bool operator==(const PolicyRule &) const = default;
};

class PolicySet {
public:
  PolicySet() = default;
  PolicySet(std::string version,
            std::map<Category, std::vector<PolicyRule>> rules);

  const std::string &version() const { return version_; }

  // Rules for a category in file order; empty for Category::Safe.
  const std::vector<PolicyRule> &rules_for(Category c) const;

  std::size_t rule_count() const;

private:
  std::string version_;
  std::map<Category, std::vector<PolicyRule>> rules_;
};

// Loads and validates a policy document:
//   {"version": "...", "categories": {"sexual": [{"id","text"}, ...], ...}}
// Every unsafe category needs at least one rule; "safe" must be absent or
// empty; rule ids are unique across the set.
PolicySet load_policies(const std::filesystem::path &path);
PolicySet parse_policies(const std::string &document);

// Throws SafeCategoryHasNoPolicyError for Category::Safe.
const std::vector<PolicyRule> &select_policy(const PolicySet &set, Category c);

enum class TemplateId { UnsafeV1, SafeV1, PromptAwareV1 };

std::string_view to_string(TemplateId t);
TemplateId parse_template_id(std::string_view text);

struct JudgeRequest {
  std::string system_text;
  std::string user_text;
  ImageRef image;
  TemplateId template_id = TemplateId::UnsafeV1;
  // Metadata carried for script keys, idempotency keys, and audit; not part
  // of the rendered text beyond the prompt section itself.
  std::string prompt_text;
  int round_index = 1;
};

// Renders the query for one round. prompt.text is the prompt currently in
// force (the carried refined prompt on rounds >= 2). UnsafeV1 requires an
// unsafe category; the rendered text never references any earlier prompt.
JudgeRequest render_judge_request(const PromptRecord &prompt,
                                  const ImageRef &image, const PolicySet &set,
                                  TemplateId template_id, int round_index = 1);

struct ParsedResponse {
  std::string text_thought;
  Decision decision = Decision::Accept;
  std::optional<std::string> refined_prompt;

  bool operator==(const ParsedResponse &) const = default;
};

// Extracts the delimited sections from a raw judge reply.
//
// SafeV1 maps accept/reject onto Accept/Refine; on reject the refined prompt
// is the unchanged current prompt, which the caller passes in.
// Errors: MissingSectionError, AmbiguousDecisionError, DanglingPromptError.
ParsedResponse parse_judge_response(
    const std::string &raw, TemplateId template_id,
    const std::optional<std::string> &current_prompt = std::nullopt);

// Canonical emission of a response in the section grammar. Mock judges and
// the training exporter both use this, so parse(format(x)) == x.
std::string format_response(const ParsedResponse &response,
                            TemplateId template_id = TemplateId::UnsafeV1);

// Same body with the thought section removed (training ablation).
std::string format_response_without_thought(const ParsedResponse &response,
                                            TemplateId template_id = TemplateId::UnsafeV1);

} // namespace safeedit
