#pragma once
// Transforms multi-round edit instances into single-round multimodal
// question-answer training pairs, including the truncated and no-thought
// corpus variants.
//
// An n-round instance yields n pairs: round 1 gets text+image input, later
// rounds image only (the prompt-aware variant supplies the carried prompt
// on every round). Refine rounds output reasoning plus the edited image;
// Accept rounds output reasoning only. Output text reuses the judge
// response grammar, so emitting and parsing stay symmetric.

#include "safeedit/policy.hpp"
#include "safeedit/types.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace safeedit {

enum class TemplateVariant {
  Standard,
  PromptAware,
  NoThought,
  Round1Trunc,
  Round2Trunc,
};

std::string_view to_string(TemplateVariant v);
TemplateVariant parse_template_variant(std::string_view text);

struct QAPair {
  std::string instance_id;
  int round_index = 0;
  std::optional<std::string> input_text;
  ImageRef input_image;
  std::string output_text;
  std::optional<ImageRef> output_image;
  TemplateVariant variant = TemplateVariant::Standard;

  bool operator==(const QAPair &) const = default;
};

void to_json(nlohmann::json &j, const QAPair &p);
void from_json(const nlohmann::json &j, QAPair &p);

// Throws InvalidInstanceError when the instance fails validate_instance.
std::vector<QAPair> export_qa_pairs(const EditInstance &instance,
                                    TemplateVariant variant);

// Keeps rounds 1..k. An instance that originally continued past round k
// becomes terminal there: its final Refine round (edit included) is kept and
// the terminal state records the round budget as exhausted, so the last
// editing round stays in the training data. Instances with round_count <= k
// pass through unchanged.
EditInstance truncate_rounds(const EditInstance &instance, int k);

struct CorpusOptions {
  // Drop the final still-unsafe pair of budget-exhausted instances.
  bool drop_trailing_unsafe = false;
};

struct CorpusManifest {
  TemplateVariant variant = TemplateVariant::Standard;
  std::size_t pair_count = 0;
  std::size_t instance_count = 0;
  std::size_t skipped_failed = 0;
  std::size_t dropped_trailing_pairs = 0;
  std::vector<std::string> budget_exhausted_instances;
};

// Writes one pair per line, ordered by (instance_id, round_index), via a
// temp file + rename. Failed instances are skipped and counted. The
// manifest lands at <out_path>.manifest.json.
CorpusManifest export_corpus(const std::vector<EditInstance> &instances,
                             TemplateVariant variant,
                             const std::filesystem::path &out_path,
                             const CorpusOptions &options = {});

std::vector<QAPair> load_corpus(const std::filesystem::path &path);

} // namespace safeedit
