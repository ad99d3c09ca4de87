#pragma once
// The multi-round post-hoc safety-editing state machine, the over-refusal
// classification rule built on it, and the batch runner.
//
// One round = render judge query -> evaluate -> parse -> (Refine: generate
// the next image) -> commit the round to the instance log. Rounds within an
// instance are strictly sequential; instances run concurrently. Every raw
// judge response is persisted before parsing, so a run can be reconstructed
// offline from the store alone.

#include "safeedit/backends.hpp"
#include "safeedit/policy.hpp"
#include "safeedit/run_store.hpp"
#include "safeedit/types.hpp"

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace safeedit {

enum class FailPolicy { AbortInstance, AcceptLastImage };

std::string_view to_string(FailPolicy p);
FailPolicy parse_fail_policy(std::string_view text);

struct LoopConfig {
  int max_rounds = 4;
  int classification_round_budget = 3;
  std::uint64_t generation_seed = 0;
  FailPolicy fail_policy = FailPolicy::AbortInstance;

  void validate() const; // throws ConfigError
};

struct SafetyVerdict {
  enum class Value { Safe, Unsafe };
  Value value = Value::Unsafe;
  int decided_at_round = 0;

  bool operator==(const SafetyVerdict &) const = default;
};

// Safe iff an Accept decision occurs at a round index <= budget;
// decided_at_round is the accepting round, or the budget when unsafe.
SafetyVerdict classify_over_refusal(const EditInstance &instance, int budget);

// Seed for the image generated in one round: a pure mix of the run seed,
// the instance id, and the round index. Fresh per round, reproducible.
std::uint64_t round_generation_seed(std::uint64_t base_seed,
                                    const std::string &instance_id,
                                    int round_index);

// Shared judge-call budget used to stop a batch cleanly at a commit
// boundary (budget-limited runs double as crash simulation in tests).
class CallGate {
public:
  explicit CallGate(std::uint64_t budget) : remaining_(static_cast<std::int64_t>(budget)) {}
  bool try_acquire();

private:
  std::atomic<std::int64_t> remaining_;
};

struct LoopOutcome {
  EditInstance instance;
  // The call gate closed before a terminal record; the instance's committed
  // rounds stay in the log and a later resume continues from them.
  bool interrupted = false;
  // The log already held a terminal record; no backend calls were made.
  bool already_complete = false;
};

class EditLoop {
public:
  EditLoop(const LoopConfig &cfg, JudgeBackend &judge, GeneratorBackend &gen,
           const PolicySet &policies, RunStore &store, std::string run_id,
           CallGate *gate = nullptr);

  // Runs (or resumes) one instance. Committed rounds are never re-executed;
  // the judge template follows the prompt's category (safe -> SafeV1).
  LoopOutcome run(const PromptRecord &prompt, const ImageRef &initial_image);

private:
  LoopConfig cfg_;
  JudgeBackend &judge_;
  GeneratorBackend &gen_;
  const PolicySet &policies_;
  RunStore &store_;
  std::string run_id_;
  CallGate *gate_;
};

struct BatchOptions {
  int workers = 2;
  std::uint64_t judge_call_budget = 0; // 0 = unlimited
  bool resume = false;
  bool logical_clock = true;
};

struct BatchResult {
  RunManifest manifest;
  std::size_t completed = 0;
  std::size_t failed = 0;
  bool interrupted = false;
};

// Processes a dataset with bounded parallelism. The manifest (including the
// dataset itself) is written up front so interrupted runs can resume; one
// failing instance never aborts the batch.
BatchResult batch_edit(RunStore &store, const std::string &run_id,
                       const std::vector<std::pair<PromptRecord, ImageRef>> &dataset,
                       const LoopConfig &cfg, JudgeBackend &judge,
                       GeneratorBackend &gen, const PolicySet &policies,
                       const BatchOptions &options = {},
                       const nlohmann::json &config_snapshot = nlohmann::json::object());

// Continues an interrupted or partially complete run from its manifest.
// The supplied config snapshot must match the recorded one.
BatchResult resume_run(RunStore &store, const std::string &run_id,
                       const LoopConfig &cfg, JudgeBackend &judge,
                       GeneratorBackend &gen, const PolicySet &policies,
                       const BatchOptions &options = {},
                       const nlohmann::json &config_snapshot = nlohmann::json::object());

// Reassembles the completed instances of a recorded run in dataset order.
std::vector<EditInstance> load_run_instances(RunStore &store,
                                             const std::string &run_id,
                                             bool include_failed = false);

} // namespace safeedit
