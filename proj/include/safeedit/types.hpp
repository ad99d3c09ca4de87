#pragma once
// Core domain types shared by every pipeline stage.
//
// All of these are immutable value objects once constructed; they are safe
// to copy between worker threads. Instances serialize to single-line JSON
// records with an embedded schema version; decode(encode(x)) == x and the
// re-encode is byte-identical (object keys serialize in sorted order).

#include "safeedit/category.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace safeedit {

inline constexpr const char *kSchemaVersion = "safeedit/v1";

enum class PromptSource { T2ISafety, P4D, CoPro, HPDv2, User };

std::string_view to_string(PromptSource s);
PromptSource parse_prompt_source(std::string_view text);

struct PromptRecord {
  std::string id;
  std::string text;
  Category category = Category::Safe;
  PromptSource source = PromptSource::User;
  std::optional<std::string> original_label;

  bool operator==(const PromptRecord &) const = default;
};

struct ImageRef {
  std::string digest; // sha256 hex of the image bytes
  std::string uri;    // location relative to the store root
  int width = 0;
  int height = 0;

  // Digest equality is byte equality of the stored images.
  friend bool operator==(const ImageRef &a, const ImageRef &b) {
    return a.digest == b.digest;
  }
};

enum class Decision { Refine, Accept };

std::string_view to_string(Decision d);
Decision parse_decision(std::string_view text);

struct EditRound {
  int index = 0; // 1-based
  std::string text_thought;
  Decision decision = Decision::Accept;
  std::optional<std::string> refined_prompt;
  std::optional<ImageRef> image;  // generated from refined_prompt this round
  ImageRef evaluated_image;       // what the judge saw this round
  std::string judge_raw;
  std::string template_id;

  friend bool operator==(const EditRound &a, const EditRound &b) {
    return a.index == b.index && a.text_thought == b.text_thought &&
           a.decision == b.decision && a.refined_prompt == b.refined_prompt &&
           a.image == b.image && a.evaluated_image == b.evaluated_image &&
           a.judge_raw == b.judge_raw && a.template_id == b.template_id;
  }
};

enum class Terminal { Accepted, BudgetExhausted, Failed };

std::string_view to_string(Terminal t);
Terminal parse_terminal(std::string_view text);

struct EditInstance {
  PromptRecord prompt;
  ImageRef initial_image;
  std::vector<EditRound> rounds;
  Terminal terminal = Terminal::Failed;
  int round_count = 0;
  std::optional<std::string> failure_reason;

  // Last generated image, or the initial image when no round generated one.
  const ImageRef &final_image() const;

  friend bool operator==(const EditInstance &a, const EditInstance &b) {
    return a.prompt == b.prompt && a.initial_image == b.initial_image &&
           a.rounds == b.rounds && a.terminal == b.terminal &&
           a.round_count == b.round_count &&
           a.failure_reason == b.failure_reason;
  }
};

// -- Invariant checking --------------------------------------------------

enum class ViolationCode {
  EmptyRounds,
  NonContiguousRounds,
  EmptyThought,
  RefineRequiresPrompt,
  RefineRequiresImage,
  AcceptForbidsPrompt,
  AcceptForbidsImage,
  AcceptNotTerminal,
  RoundCountMismatch,
  RoundCountOutOfRange,
  TerminalMismatch,
  LineageBroken,
};

std::string_view to_string(ViolationCode code);

struct Violation {
  ViolationCode code;
  std::string field; // which field/round the rule failed on
  std::string rule;  // human-readable statement of the rule

  std::string describe() const;
};

// Returns every invariant violation found; empty means the instance is
// well-formed. Violations are data, not faults.
std::vector<Violation> validate_instance(const EditInstance &instance,
                                         int max_rounds = 4);

// -- Run manifest ---------------------------------------------------------

struct InstanceStatus {
  Terminal terminal = Terminal::Failed;
  int round_count = 0;
  std::optional<std::string> served_image; // digest handed back to the caller
  std::optional<std::string> failure_reason;

  bool operator==(const InstanceStatus &) const = default;
};

struct RunManifest {
  std::string run_id;
  nlohmann::json config_snapshot; // scrubbed: never contains credentials
  std::uint64_t seed = 0;
  int max_rounds = 4;
  std::string judge_identity;
  std::string generator_identity;
  // The full input dataset, so a run can resume from the manifest alone.
  std::vector<std::pair<PromptRecord, ImageRef>> dataset;
  std::map<std::string, InstanceStatus> statuses;
  // Logical commit ticks under deterministic backends, unix seconds
  // otherwise; which one is in force is recorded in clock_kind.
  std::string clock_kind = "logical";
  std::uint64_t started_at = 0;
  std::uint64_t finished_at = 0;
  bool interrupted = false;

  std::size_t failed_count() const;
};

// -- Serialization --------------------------------------------------------

void to_json(nlohmann::json &j, const PromptRecord &r);
void from_json(const nlohmann::json &j, PromptRecord &r);
void to_json(nlohmann::json &j, const ImageRef &r);
void from_json(const nlohmann::json &j, ImageRef &r);
void to_json(nlohmann::json &j, const EditRound &r);
void from_json(const nlohmann::json &j, EditRound &r);
void to_json(nlohmann::json &j, const EditInstance &inst);
void from_json(const nlohmann::json &j, EditInstance &inst);
void to_json(nlohmann::json &j, const RunManifest &m);
void from_json(const nlohmann::json &j, RunManifest &m);

// One instance per line; the line embeds the schema version.
std::string encode_instance(const EditInstance &inst);
EditInstance decode_instance(const std::string &line);

} // namespace safeedit
