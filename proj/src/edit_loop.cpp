#include "safeedit/edit_loop.hpp"

#include "safeedit/errors.hpp"
#include "safeedit/sha256.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

namespace safeedit {

std::string_view to_string(FailPolicy p) {
  return p == FailPolicy::AbortInstance ? "abort_instance" : "accept_last_image";
}

FailPolicy parse_fail_policy(std::string_view text) {
  std::string key = normalize_label(text);
  if (key == "abort_instance") return FailPolicy::AbortInstance;
  if (key == "accept_last_image") return FailPolicy::AcceptLastImage;
  throw ConfigError("unknown fail policy: " + std::string(text));
}

void LoopConfig::validate() const {
  if (max_rounds < 1) throw ConfigError("max_rounds must be >= 1");
  if (classification_round_budget < 1 ||
      classification_round_budget > max_rounds) {
    throw ConfigError("classification_round_budget must be in [1, max_rounds]");
  }
}

SafetyVerdict classify_over_refusal(const EditInstance &instance, int budget) {
  for (const EditRound &round : instance.rounds) {
    if (round.decision == Decision::Accept && round.index <= budget) {
      return {SafetyVerdict::Value::Safe, round.index};
    }
  }
  return {SafetyVerdict::Value::Unsafe, budget};
}

std::uint64_t round_generation_seed(std::uint64_t base_seed,
                                    const std::string &instance_id,
                                    int round_index) {
  return sha256_prefix64("roundseed|" + std::to_string(base_seed) + "|" +
                         instance_id + "|" + std::to_string(round_index));
}

bool CallGate::try_acquire() {
  std::int64_t cur = remaining_.load();
  while (cur > 0) {
    if (remaining_.compare_exchange_weak(cur, cur - 1)) return true;
  }
  return false;
}

EditLoop::EditLoop(const LoopConfig &cfg, JudgeBackend &judge,
                   GeneratorBackend &gen, const PolicySet &policies,
                   RunStore &store, std::string run_id, CallGate *gate)
    : cfg_(cfg), judge_(judge), gen_(gen), policies_(policies), store_(store),
      run_id_(std::move(run_id)), gate_(gate) {
  cfg_.validate();
}

namespace {

EditInstance assemble_instance(const PromptRecord &prompt,
                               const ImageRef &initial_image,
                               const RunStore::PersistedInstance &state) {
  EditInstance inst;
  inst.prompt = prompt;
  inst.initial_image = initial_image;
  inst.rounds = state.rounds;
  inst.terminal = state.terminal.value_or(Terminal::Failed);
  inst.round_count = state.terminal ? state.round_count
                                    : static_cast<int>(state.rounds.size());
  inst.failure_reason = state.failure_reason;
  return inst;
}

} // namespace

LoopOutcome EditLoop::run(const PromptRecord &prompt,
                          const ImageRef &initial_image) {
  RunStore::InstanceLog log = store_.open_instance_log(run_id_, prompt.id);

  if (log.state().complete()) {
    LoopOutcome out;
    out.instance = assemble_instance(prompt, initial_image, log.state());
    out.already_complete = true;
    return out;
  }

  TemplateId template_id = prompt.category == Category::Safe
                               ? TemplateId::SafeV1
                               : TemplateId::UnsafeV1;

  // Rebuild the carried prompt/image from committed rounds.
  std::string current_prompt = prompt.text;
  ImageRef current_image = initial_image;
  for (const EditRound &round : log.state().rounds) {
    if (round.refined_prompt) current_prompt = *round.refined_prompt;
    if (round.image) current_image = *round.image;
  }

  auto fail_instance = [&](const std::string &reason) {
    std::optional<std::string> served;
    if (cfg_.fail_policy == FailPolicy::AcceptLastImage) {
      const auto &rounds = log.state().rounds;
      auto it = std::find_if(rounds.rbegin(), rounds.rend(),
                             [](const EditRound &r) { return r.image.has_value(); });
      served = it != rounds.rend() ? it->image->digest : initial_image.digest;
    }
    log.append_terminal(Terminal::Failed,
                        static_cast<int>(log.state().rounds.size()), served,
                        reason);
    LoopOutcome out;
    out.instance = assemble_instance(prompt, initial_image, log.state());
    return out;
  };

  while (static_cast<int>(log.state().rounds.size()) < cfg_.max_rounds) {
    int round_index = static_cast<int>(log.state().rounds.size()) + 1;

    if (gate_ && !gate_->try_acquire()) {
      LoopOutcome out;
      out.instance = assemble_instance(prompt, initial_image, log.state());
      out.interrupted = true;
      return out;
    }

    PromptRecord carried = prompt;
    carried.text = current_prompt;
    JudgeRequest request = render_judge_request(carried, current_image,
                                                policies_, template_id,
                                                round_index);

    std::string raw;
    ParsedResponse parsed;
    bool have_parsed = false;
    std::string parse_failure;
    // One automatic re-ask on a parse failure, then the instance fails.
    for (int attempt = 1; attempt <= 2 && !have_parsed; ++attempt) {
      if (attempt == 2 && gate_ && !gate_->try_acquire()) {
        LoopOutcome out;
        out.instance = assemble_instance(prompt, initial_image, log.state());
        out.interrupted = true;
        return out;
      }
      try {
        raw = judge_.evaluate(request);
      } catch (const Error &e) {
        return fail_instance(std::string("judge: ") + e.what());
      }
      store_.append_raw_response(run_id_, prompt.id, round_index, attempt, raw);
      try {
        parsed = parse_judge_response(raw, template_id, current_prompt);
        have_parsed = true;
      } catch (const Error &e) {
        parse_failure = e.what();
      }
    }
    if (!have_parsed) {
      return fail_instance("parse: " + parse_failure);
    }

    EditRound round;
    round.index = round_index;
    round.text_thought = parsed.text_thought;
    round.decision = parsed.decision;
    round.refined_prompt = parsed.refined_prompt;
    round.evaluated_image = current_image;
    round.judge_raw = raw;
    round.template_id = std::string(to_string(template_id));

    if (parsed.decision == Decision::Refine) {
      std::uint64_t seed =
          round_generation_seed(cfg_.generation_seed, prompt.id, round_index);
      std::vector<std::uint8_t> bytes;
      try {
        bytes = gen_.generate(*parsed.refined_prompt, seed);
      } catch (const Error &e) {
        return fail_instance(std::string("generator: ") + e.what());
      }
      round.image = store_.put_image(bytes);
    }

    log.append_round(round);

    if (parsed.decision == Decision::Accept) {
      log.append_terminal(Terminal::Accepted, round_index,
                          round.evaluated_image.digest, std::nullopt);
      LoopOutcome out;
      out.instance = assemble_instance(prompt, initial_image, log.state());
      return out;
    }

    current_prompt = *round.refined_prompt;
    current_image = *round.image;

    if (round_index == cfg_.max_rounds) {
      // Out of rounds: hand back the last edit, flagged unsafe.
      log.append_terminal(Terminal::BudgetExhausted, round_index,
                          round.image->digest, std::nullopt);
      LoopOutcome out;
      out.instance = assemble_instance(prompt, initial_image, log.state());
      return out;
    }
  }

  // Only reachable when a resumed log already held max_rounds Refine rounds
  // but no terminal record.
  const auto &rounds = log.state().rounds;
  log.append_terminal(Terminal::BudgetExhausted, cfg_.max_rounds,
                      rounds.back().image ? std::optional(rounds.back().image->digest)
                                          : std::nullopt,
                      std::nullopt);
  LoopOutcome out;
  out.instance = assemble_instance(prompt, initial_image, log.state());
  return out;
}

// -- batch_edit -------------------------------------------------------------

namespace {

std::uint64_t wall_seconds() {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::seconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count());
}

BatchResult run_batch(RunStore &store, RunManifest manifest,
                      const LoopConfig &cfg, JudgeBackend &judge,
                      GeneratorBackend &gen, const PolicySet &policies,
                      const BatchOptions &options) {
  cfg.validate();
  const auto &dataset = manifest.dataset;

  std::optional<CallGate> gate;
  if (options.judge_call_budget > 0) gate.emplace(options.judge_call_budget);

  std::atomic<std::size_t> next{0};
  std::atomic<bool> interrupted{false};

  auto worker = [&] {
    EditLoop loop(cfg, judge, gen, policies, store, manifest.run_id,
                  gate ? &*gate : nullptr);
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= dataset.size() || interrupted.load()) return;
      const auto &[prompt, image] = dataset[i];
      try {
        LoopOutcome outcome = loop.run(prompt, image);
        if (outcome.interrupted) {
          interrupted.store(true);
          return;
        }
      } catch (const std::exception &e) {
        // Isolation: one instance never brings down the batch. The loop
        // already records backend faults; this only catches store-level
        // failures for this instance.
        try {
          auto log = store.open_instance_log(manifest.run_id, prompt.id);
          if (!log.state().complete()) {
            log.append_terminal(Terminal::Failed,
                                static_cast<int>(log.state().rounds.size()),
                                std::nullopt, e.what());
          }
        } catch (const std::exception &) {
          // Log unwritable; the manifest will show the instance as missing.
        }
      }
    }
  };

  int workers = std::max(1, options.workers);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto &t : pool) t.join();
  }

  BatchResult result;
  result.interrupted = interrupted.load();

  manifest.statuses.clear();
  for (const auto &[prompt, image] : dataset) {
    auto state = store.read_instance_log(manifest.run_id, prompt.id);
    if (!state || !state->complete()) continue; // interrupted mid-instance
    InstanceStatus st;
    st.terminal = *state->terminal;
    st.round_count = state->round_count;
    st.served_image = state->served_image;
    st.failure_reason = state->failure_reason;
    if (st.terminal == Terminal::Failed) {
      ++result.failed;
    } else {
      ++result.completed;
    }
    manifest.statuses[prompt.id] = std::move(st);
  }

  manifest.interrupted = result.interrupted;
  if (manifest.clock_kind == "logical") {
    manifest.finished_at = store.committed_record_count(manifest.run_id);
  } else {
    manifest.finished_at = wall_seconds();
  }
  store.write_manifest(manifest);
  result.manifest = std::move(manifest);
  return result;
}

} // namespace

BatchResult batch_edit(RunStore &store, const std::string &run_id,
                       const std::vector<std::pair<PromptRecord, ImageRef>> &dataset,
                       const LoopConfig &cfg, JudgeBackend &judge,
                       GeneratorBackend &gen, const PolicySet &policies,
                       const BatchOptions &options,
                       const nlohmann::json &config_snapshot) {
  if (store.has_run(run_id)) {
    if (!options.resume) {
      throw StoreError("run " + run_id + " already exists; resume it instead");
    }
    return resume_run(store, run_id, cfg, judge, gen, policies, options,
                      config_snapshot);
  }

  RunManifest manifest;
  manifest.run_id = run_id;
  manifest.config_snapshot = config_snapshot;
  manifest.seed = cfg.generation_seed;
  manifest.max_rounds = cfg.max_rounds;
  manifest.judge_identity = judge.identity();
  manifest.generator_identity = gen.identity();
  manifest.dataset = dataset;
  manifest.clock_kind = options.logical_clock ? "logical" : "wall";
  manifest.started_at = options.logical_clock ? 0 : wall_seconds();
  manifest.interrupted = true; // until the batch finishes or resumes cleanly
  store.write_manifest(manifest);

  return run_batch(store, std::move(manifest), cfg, judge, gen, policies,
                   options);
}

BatchResult resume_run(RunStore &store, const std::string &run_id,
                       const LoopConfig &cfg, JudgeBackend &judge,
                       GeneratorBackend &gen, const PolicySet &policies,
                       const BatchOptions &options,
                       const nlohmann::json &config_snapshot) {
  RunManifest manifest = store.read_manifest(run_id); // UnknownRunError
  if (manifest.config_snapshot.dump() != config_snapshot.dump()) {
    throw ConfigMismatchError("snapshot hash " +
                              sha256_hex(config_snapshot.dump()).substr(0, 12) +
                              " != recorded " +
                              sha256_hex(manifest.config_snapshot.dump()).substr(0, 12));
  }
  return run_batch(store, std::move(manifest), cfg, judge, gen, policies,
                   options);
}

std::vector<EditInstance> load_run_instances(RunStore &store,
                                             const std::string &run_id,
                                             bool include_failed) {
  RunManifest manifest = store.read_manifest(run_id);
  std::vector<EditInstance> out;
  for (const auto &[prompt, image] : manifest.dataset) {
    auto state = store.read_instance_log(run_id, prompt.id);
    if (!state || !state->complete()) continue;
    if (*state->terminal == Terminal::Failed && !include_failed) continue;
    out.push_back(assemble_instance(prompt, image, *state));
  }
  return out;
}

} // namespace safeedit
