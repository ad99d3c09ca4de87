#pragma once
// Configuration file handling and backend construction.
//
// A config file holds named backend profiles plus loop parameters:
//
//   {
//     "profiles": {
//       "mock":   {"judge": {"kind": "mock", "salt": 7}, ...},
//       "remote": {"judge": {"kind": "http", "base_url": ..., "model": ...,
//                            "api_key_env": "JUDGE_API_KEY"}, ...}
//     },
//     "loop": {"max_rounds": 4, "budget": 3, "seed": 1234,
//              "fail_policy": "abort_instance"},
//     "policy_file": "policies.json",
//     "workers": 2
//   }
//
// Credentials are only ever named by environment variable; resolved values
// stay in memory and never reach a manifest or snapshot.

#include "safeedit/backends.hpp"
#include "safeedit/edit_loop.hpp"
#include "safeedit/eval.hpp"
#include "safeedit/policy.hpp"
#include "safeedit/run_store.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include <json.hpp>

namespace safeedit {

struct Config {
  nlohmann::json raw;             // as loaded, credentials never inlined
  std::filesystem::path base_dir; // for resolving relative paths
  LoopConfig loop;
  std::filesystem::path policy_file;
  int workers = 2;

  static Config load(const std::filesystem::path &path);
  // Built-in single-profile mock configuration.
  static Config defaults();

  bool has_profile(const std::string &name) const;

  // The reproducibility snapshot recorded in every run manifest. Covers the
  // selected profile, loop parameters, and the policy set identity; never
  // covers store paths or credentials.
  nlohmann::json snapshot(const std::string &profile,
                          const std::string &policy_sha256) const;
};

struct BackendSet {
  std::unique_ptr<JudgeBackend> judge;
  std::unique_ptr<GeneratorBackend> generator;
  std::unique_ptr<SafetyClassifierBackend> classifier;
  std::unique_ptr<EmbeddingBackend> embedding;
  std::unique_ptr<ScalarScorerBackend> aesthetic;
  std::unique_ptr<ScalarScorerBackend> preference;
  std::unique_ptr<ScalarScorerBackend> uia;
  std::unique_ptr<ScalarScorerBackend> perceptual;
  // True when every constructed backend is a pure function of its inputs.
  bool deterministic = true;

  EvalBackends eval_backends() const;
};

// Instantiates the backends of one profile. HTTP judges resolve image bytes
// through the store.
BackendSet build_backends(const Config &config, const std::string &profile,
                          RunStore &store);

} // namespace safeedit
