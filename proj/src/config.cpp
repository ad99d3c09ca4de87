#include "safeedit/config.hpp"

#include "safeedit/errors.hpp"
#include "safeedit/http_backends.hpp"
#include "safeedit/mock_backends.hpp"

#include <cstdlib>
#include <fstream>

namespace safeedit {

namespace fs = std::filesystem;
using nlohmann::json;

Config Config::defaults() {
  Config config;
  config.raw = json::parse(R"({
    "profiles": {
      "mock": {
        "judge": {"kind": "mock", "salt": 1},
        "generator": {"kind": "mock", "salt": 1},
        "classifier": {"kind": "mock", "salt": 1},
        "embedding": {"kind": "mock", "dimension": 16, "salt": 1},
        "scorers": {
          "aesthetic": {"kind": "mock", "salt": 1},
          "hp": {"kind": "mock", "salt": 1},
          "uia": {"kind": "mock", "salt": 1},
          "lpips": {"kind": "mock", "salt": 1}
        }
      }
    },
    "loop": {"max_rounds": 4, "budget": 3, "seed": 1234,
             "fail_policy": "abort_instance"},
    "workers": 2
  })");
  config.base_dir = fs::current_path();
  config.loop.max_rounds = 4;
  config.loop.classification_round_budget = 3;
  config.loop.generation_seed = 1234;
  return config;
}

Config Config::load(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  Config config;
  try {
    in >> config.raw;
  } catch (const json::exception &e) {
    throw ConfigError("config parse failure: " + std::string(e.what()));
  }
  config.base_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");

  const json &loop = config.raw.value("loop", json::object());
  config.loop.max_rounds = loop.value("max_rounds", 4);
  config.loop.classification_round_budget = loop.value("budget", 3);
  config.loop.generation_seed = loop.value("seed", std::uint64_t{0});
  if (loop.contains("fail_policy")) {
    config.loop.fail_policy =
        parse_fail_policy(loop.at("fail_policy").get<std::string>());
  }
  config.loop.validate();

  if (config.raw.contains("policy_file")) {
    fs::path p = config.raw.at("policy_file").get<std::string>();
    config.policy_file = p.is_absolute() ? p : config.base_dir / p;
  }
  config.workers = config.raw.value("workers", 2);
  if (config.workers < 1) throw ConfigError("workers must be >= 1");
  return config;
}

bool Config::has_profile(const std::string &name) const {
  return raw.contains("profiles") && raw.at("profiles").contains(name);
}

json Config::snapshot(const std::string &profile,
                      const std::string &policy_sha256) const {
  if (!has_profile(profile)) throw ConfigError("no such profile: " + profile);
  return json{{"profile", profile},
              {"profile_config", raw.at("profiles").at(profile)},
              {"loop",
               {{"max_rounds", loop.max_rounds},
                {"budget", loop.classification_round_budget},
                {"seed", loop.generation_seed},
                {"fail_policy", to_string(loop.fail_policy)}}},
              {"policy_sha256", policy_sha256}};
}

namespace {

std::string env_or_throw(const std::string &name) {
  const char *value = std::getenv(name.c_str());
  if (!value) throw ConfigError("environment variable not set: " + name);
  return value;
}

HttpEndpoint endpoint_from(const json &spec, const fs::path &) {
  HttpEndpoint ep;
  ep.base_url = spec.at("base_url").get<std::string>();
  ep.path = spec.value("path", std::string{});
  ep.model = spec.value("model", std::string{});
  if (spec.contains("api_key_env")) {
    ep.api_key = env_or_throw(spec.at("api_key_env").get<std::string>());
  }
  ep.timeout = std::chrono::milliseconds(spec.value("timeout_ms", 60000));
  if (spec.contains("retry")) {
    const json &r = spec.at("retry");
    ep.retry.max_attempts = r.value("max_attempts", 3);
    ep.retry.initial_backoff =
        std::chrono::milliseconds(r.value("initial_backoff_ms", 1000));
    ep.retry.backoff_factor = r.value("backoff_factor", 2.0);
  }
  return ep;
}

ScriptedJudge::Script load_script(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open judge script " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception &e) {
    throw ConfigError("judge script parse failure: " + std::string(e.what()));
  }
  ScriptedJudge::Script script;
  for (const auto &entry : j) {
    script[{entry.at("prompt").get<std::string>(),
            entry.at("round").get<int>()}] =
        entry.at("response").get<std::string>();
  }
  return script;
}

} // namespace

EvalBackends BackendSet::eval_backends() const {
  EvalBackends b;
  b.classifier = classifier.get();
  b.embedding = embedding.get();
  b.aesthetic = aesthetic.get();
  b.preference = preference.get();
  b.uia = uia.get();
  b.perceptual = perceptual.get();
  return b;
}

BackendSet build_backends(const Config &config, const std::string &profile,
                          RunStore &store) {
  if (!config.has_profile(profile)) {
    throw ConfigError("no such profile: " + profile);
  }
  const json &p = config.raw.at("profiles").at(profile);
  BackendSet set;

  auto note_kind = [&](const std::string &kind) {
    if (kind != "mock" && kind != "script") set.deterministic = false;
  };

  // judge
  {
    const json &spec = p.value("judge", json{{"kind", "mock"}});
    std::string kind = spec.value("kind", "mock");
    note_kind(kind);
    if (kind == "mock") {
      set.judge = std::make_unique<HashDecisionJudge>(
          spec.value("salt", std::uint64_t{0}), config.loop.max_rounds);
    } else if (kind == "script") {
      fs::path path = spec.at("path").get<std::string>();
      if (!path.is_absolute()) path = config.base_dir / path;
      set.judge = std::make_unique<ScriptedJudge>(load_script(path));
    } else if (kind == "http") {
      HttpEndpoint ep = endpoint_from(spec, config.base_dir);
      if (ep.path.empty()) ep.path = "/v1/chat/completions";
      set.judge = std::make_unique<HttpChatJudge>(
          ep, [&store](const ImageRef &ref) { return store.get_image(ref.digest); });
    } else {
      throw ConfigError("unknown judge kind: " + kind);
    }
  }

  // generator
  {
    const json &spec = p.value("generator", json{{"kind", "mock"}});
    std::string kind = spec.value("kind", "mock");
    note_kind(kind);
    if (kind == "mock") {
      set.generator = std::make_unique<StubGenerator>(
          spec.value("salt", std::uint64_t{0}), spec.value("width", 8),
          spec.value("height", 8));
    } else if (kind == "http") {
      HttpEndpoint ep = endpoint_from(spec, config.base_dir);
      if (ep.path.empty()) ep.path = "/v1/images/generations";
      set.generator = std::make_unique<HttpImageGenerator>(
          ep, spec.value("size", "512x512"));
    } else {
      throw ConfigError("unknown generator kind: " + kind);
    }
  }

  // classifier / embedding / scorers: deterministic mocks; recorded series
  // files cover externally computed metrics.
  if (p.contains("classifier")) {
    const json &spec = p.at("classifier");
    std::string kind = spec.value("kind", "mock");
    if (kind != "mock") throw ConfigError("classifier backend must be mock; ingest recorded labels instead");
    set.classifier =
        std::make_unique<HashClassifier>(spec.value("salt", std::uint64_t{0}));
  }
  if (p.contains("embedding")) {
    const json &spec = p.at("embedding");
    std::string kind = spec.value("kind", "mock");
    if (kind != "mock") throw ConfigError("embedding backend must be mock; ingest recorded series instead");
    set.embedding = std::make_unique<HashEmbedding>(
        spec.value("dimension", std::size_t{16}),
        spec.value("salt", std::uint64_t{0}));
  }
  if (p.contains("scorers")) {
    const json &scorers = p.at("scorers");
    auto make_scorer = [&](const char *name, ScorerKind kind)
        -> std::unique_ptr<ScalarScorerBackend> {
      if (!scorers.contains(name)) return nullptr;
      const json &spec = scorers.at(name);
      if (spec.value("kind", "mock") != "mock") {
        throw ConfigError(std::string("scorer ") + name +
                          " must be mock; ingest recorded series instead");
      }
      return std::make_unique<HashScorer>(kind,
                                          spec.value("salt", std::uint64_t{0}));
    };
    set.aesthetic = make_scorer("aesthetic", ScorerKind::Aesthetic);
    set.preference = make_scorer("hp", ScorerKind::Preference);
    set.uia = make_scorer("uia", ScorerKind::UiaRating);
    set.perceptual = make_scorer("lpips", ScorerKind::PerceptualDistance);
  }

  return set;
}

} // namespace safeedit
