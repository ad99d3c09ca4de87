#include "safeedit/types.hpp"

#include "safeedit/errors.hpp"

namespace safeedit {

using nlohmann::json;

std::string_view to_string(PromptSource s) {
  switch (s) {
  case PromptSource::T2ISafety:
    return "T2ISafety";
  case PromptSource::P4D:
    return "P4D";
  case PromptSource::CoPro:
    return "CoPro";
  case PromptSource::HPDv2:
    return "HPDv2";
  case PromptSource::User:
    return "user";
  }
  return "user";
}

PromptSource parse_prompt_source(std::string_view text) {
  std::string key = normalize_label(text);
  if (key == "t2isafety") return PromptSource::T2ISafety;
  if (key == "p4d") return PromptSource::P4D;
  if (key == "copro") return PromptSource::CoPro;
  if (key == "hpdv2" || key == "hpd_v2") return PromptSource::HPDv2;
  if (key == "user") return PromptSource::User;
  throw Error("unknown prompt source: " + std::string(text));
}

std::string_view to_string(Decision d) {
  return d == Decision::Refine ? "refine" : "accept";
}

Decision parse_decision(std::string_view text) {
  std::string key = normalize_label(text);
  if (key == "refine") return Decision::Refine;
  if (key == "accept") return Decision::Accept;
  throw Error("unknown decision: " + std::string(text));
}

std::string_view to_string(Terminal t) {
  switch (t) {
  case Terminal::Accepted:
    return "accepted";
  case Terminal::BudgetExhausted:
    return "budget_exhausted";
  case Terminal::Failed:
    return "failed";
  }
  return "failed";
}

Terminal parse_terminal(std::string_view text) {
  std::string key = normalize_label(text);
  if (key == "accepted") return Terminal::Accepted;
  if (key == "budget_exhausted") return Terminal::BudgetExhausted;
  if (key == "failed") return Terminal::Failed;
  throw Error("unknown terminal state: " + std::string(text));
}

const ImageRef &EditInstance::final_image() const {
  for (auto it = rounds.rbegin(); it != rounds.rend(); ++it) {
    if (it->image) return *it->image;
  }
  return initial_image;
}

std::size_t RunManifest::failed_count() const {
  std::size_t n = 0;
  for (const auto &[id, st] : statuses) {
    if (st.terminal == Terminal::Failed) ++n;
  }
  return n;
}

// -- validate_instance ----------------------------------------------------

std::string_view to_string(ViolationCode code) {
  switch (code) {
  case ViolationCode::EmptyRounds:
    return "EmptyRounds";
  case ViolationCode::NonContiguousRounds:
    return "NonContiguousRounds";
  case ViolationCode::EmptyThought:
    return "EmptyThought";
  case ViolationCode::RefineRequiresPrompt:
    return "RefineRequiresPrompt";
  case ViolationCode::RefineRequiresImage:
    return "RefineRequiresImage";
  case ViolationCode::AcceptForbidsPrompt:
    return "AcceptForbidsPrompt";
  case ViolationCode::AcceptForbidsImage:
    return "AcceptForbidsImage";
  case ViolationCode::AcceptNotTerminal:
    return "AcceptNotTerminal";
  case ViolationCode::RoundCountMismatch:
    return "RoundCountMismatch";
  case ViolationCode::RoundCountOutOfRange:
    return "RoundCountOutOfRange";
  case ViolationCode::TerminalMismatch:
    return "TerminalMismatch";
  case ViolationCode::LineageBroken:
    return "LineageBroken";
  }
  return "Unknown";
}

std::string Violation::describe() const {
  return std::string(to_string(code)) + " on " + field + ": " + rule;
}

std::vector<Violation> validate_instance(const EditInstance &instance,
                                         int max_rounds) {
  std::vector<Violation> out;
  auto add = [&](ViolationCode code, std::string field, std::string rule) {
    out.push_back({code, std::move(field), std::move(rule)});
  };

  const auto &rounds = instance.rounds;
  if (rounds.empty()) {
    add(ViolationCode::EmptyRounds, "rounds", "an instance has at least one round");
  }
  for (std::size_t i = 0; i < rounds.size(); ++i) {
    const EditRound &r = rounds[i];
    std::string where = "rounds[" + std::to_string(i) + "]";
    if (r.index != static_cast<int>(i) + 1) {
      add(ViolationCode::NonContiguousRounds, where + ".index",
          "round indices are contiguous starting at 1");
    }
    if (r.text_thought.empty()) {
      add(ViolationCode::EmptyThought, where + ".text_thought",
          "text_thought is non-empty");
    }
    if (r.decision == Decision::Refine) {
      if (!r.refined_prompt || r.refined_prompt->empty()) {
        add(ViolationCode::RefineRequiresPrompt, where + ".refined_prompt",
            "Refine requires a refined prompt");
      }
      if (!r.image) {
        add(ViolationCode::RefineRequiresImage, where + ".image",
            "Refine requires a generated image");
      }
    } else {
      if (r.refined_prompt) {
        add(ViolationCode::AcceptForbidsPrompt, where + ".refined_prompt",
            "Accept forbids a refined prompt");
      }
      if (r.image) {
        add(ViolationCode::AcceptForbidsImage, where + ".image",
            "Accept forbids a generated image");
      }
      if (i + 1 < rounds.size()) {
        add(ViolationCode::AcceptNotTerminal, where + ".decision",
            "only the final round may decide Accept");
      }
    }
    if (i == 0) {
      if (!instance.initial_image.digest.empty() &&
          r.evaluated_image.digest != instance.initial_image.digest) {
        add(ViolationCode::LineageBroken, where + ".evaluated_image",
            "round 1 evaluates the initial image");
      }
    } else {
      const EditRound &prev = rounds[i - 1];
      if (prev.image && r.evaluated_image.digest != prev.image->digest) {
        add(ViolationCode::LineageBroken, where + ".evaluated_image",
            "round k evaluates the image generated in round k-1");
      }
    }
  }

  if (instance.round_count != static_cast<int>(rounds.size())) {
    add(ViolationCode::RoundCountMismatch, "round_count",
        "round_count equals the number of rounds");
  }
  if (instance.round_count < 1 || instance.round_count > max_rounds) {
    add(ViolationCode::RoundCountOutOfRange, "round_count",
        "1 <= round_count <= max_rounds (" + std::to_string(max_rounds) + ")");
  }
  if (!rounds.empty() && instance.terminal != Terminal::Failed) {
    bool last_accept = rounds.back().decision == Decision::Accept;
    bool marked_accepted = instance.terminal == Terminal::Accepted;
    if (last_accept != marked_accepted) {
      add(ViolationCode::TerminalMismatch, "terminal",
          "terminal is Accepted iff the last round's decision is Accept");
    }
  }
  return out;
}

// -- Serialization --------------------------------------------------------

void to_json(json &j, const PromptRecord &r) {
  j = json{{"id", r.id},
           {"text", r.text},
           {"category", to_string(r.category)},
           {"source", to_string(r.source)}};
  if (r.original_label) j["original_label"] = *r.original_label;
}

void from_json(const json &j, PromptRecord &r) {
  r.id = j.at("id").get<std::string>();
  r.text = j.at("text").get<std::string>();
  r.category = parse_category(j.at("category").get<std::string>());
  r.source = parse_prompt_source(j.at("source").get<std::string>());
  if (j.contains("original_label")) {
    r.original_label = j.at("original_label").get<std::string>();
  } else {
    r.original_label.reset();
  }
}

void to_json(json &j, const ImageRef &r) {
  j = json{{"digest", r.digest},
           {"uri", r.uri},
           {"width", r.width},
           {"height", r.height}};
}

void from_json(const json &j, ImageRef &r) {
  r.digest = j.at("digest").get<std::string>();
  r.uri = j.at("uri").get<std::string>();
  r.width = j.at("width").get<int>();
  r.height = j.at("height").get<int>();
}

void to_json(json &j, const EditRound &r) {
  j = json{{"index", r.index},
           {"text_thought", r.text_thought},
           {"decision", to_string(r.decision)},
           {"evaluated_image", r.evaluated_image},
           {"judge_raw", r.judge_raw},
           {"template_id", r.template_id}};
  if (r.refined_prompt) j["refined_prompt"] = *r.refined_prompt;
  if (r.image) j["image"] = *r.image;
}

void from_json(const json &j, EditRound &r) {
  r.index = j.at("index").get<int>();
  r.text_thought = j.at("text_thought").get<std::string>();
  r.decision = parse_decision(j.at("decision").get<std::string>());
  r.evaluated_image = j.at("evaluated_image").get<ImageRef>();
  r.judge_raw = j.at("judge_raw").get<std::string>();
  r.template_id = j.at("template_id").get<std::string>();
  if (j.contains("refined_prompt")) {
    r.refined_prompt = j.at("refined_prompt").get<std::string>();
  } else {
    r.refined_prompt.reset();
  }
  if (j.contains("image")) {
    r.image = j.at("image").get<ImageRef>();
  } else {
    r.image.reset();
  }
}

void to_json(json &j, const EditInstance &inst) {
  j = json{{"schema", kSchemaVersion},
           {"prompt", inst.prompt},
           {"initial_image", inst.initial_image},
           {"rounds", inst.rounds},
           {"terminal", to_string(inst.terminal)},
           {"round_count", inst.round_count}};
  if (inst.failure_reason) j["failure_reason"] = *inst.failure_reason;
}

void from_json(const json &j, EditInstance &inst) {
  inst.prompt = j.at("prompt").get<PromptRecord>();
  inst.initial_image = j.at("initial_image").get<ImageRef>();
  inst.rounds = j.at("rounds").get<std::vector<EditRound>>();
  inst.terminal = parse_terminal(j.at("terminal").get<std::string>());
  inst.round_count = j.at("round_count").get<int>();
  if (j.contains("failure_reason")) {
    inst.failure_reason = j.at("failure_reason").get<std::string>();
  } else {
    inst.failure_reason.reset();
  }
}

void to_json(json &j, const RunManifest &m) {
  json statuses = json::object();
  for (const auto &[id, st] : m.statuses) {
    json s{{"terminal", to_string(st.terminal)},
           {"round_count", st.round_count}};
    if (st.served_image) s["served_image"] = *st.served_image;
    if (st.failure_reason) s["failure_reason"] = *st.failure_reason;
    statuses[id] = std::move(s);
  }
  json dataset = json::array();
  for (const auto &[prompt, image] : m.dataset) {
    dataset.push_back(json{{"prompt", prompt}, {"initial_image", image}});
  }
  j = json{{"schema", kSchemaVersion},
           {"run_id", m.run_id},
           {"config", m.config_snapshot},
           {"seed", m.seed},
           {"max_rounds", m.max_rounds},
           {"judge", m.judge_identity},
           {"generator", m.generator_identity},
           {"dataset", std::move(dataset)},
           {"statuses", std::move(statuses)},
           {"clock_kind", m.clock_kind},
           {"started_at", m.started_at},
           {"finished_at", m.finished_at},
           {"interrupted", m.interrupted}};
}

void from_json(const json &j, RunManifest &m) {
  if (j.at("schema").get<std::string>() != kSchemaVersion) {
    throw Error("unsupported manifest schema: " +
                j.at("schema").get<std::string>());
  }
  m.run_id = j.at("run_id").get<std::string>();
  m.config_snapshot = j.at("config");
  m.seed = j.at("seed").get<std::uint64_t>();
  m.max_rounds = j.at("max_rounds").get<int>();
  m.judge_identity = j.at("judge").get<std::string>();
  m.generator_identity = j.at("generator").get<std::string>();
  m.dataset.clear();
  for (const auto &entry : j.at("dataset")) {
    m.dataset.emplace_back(entry.at("prompt").get<PromptRecord>(),
                           entry.at("initial_image").get<ImageRef>());
  }
  m.statuses.clear();
  for (const auto &[id, s] : j.at("statuses").items()) {
    InstanceStatus st;
    st.terminal = parse_terminal(s.at("terminal").get<std::string>());
    st.round_count = s.at("round_count").get<int>();
    if (s.contains("served_image")) st.served_image = s.at("served_image").get<std::string>();
    if (s.contains("failure_reason")) st.failure_reason = s.at("failure_reason").get<std::string>();
    m.statuses[id] = std::move(st);
  }
  m.clock_kind = j.at("clock_kind").get<std::string>();
  m.started_at = j.at("started_at").get<std::uint64_t>();
  m.finished_at = j.at("finished_at").get<std::uint64_t>();
  m.interrupted = j.at("interrupted").get<bool>();
}

std::string encode_instance(const EditInstance &inst) {
  return json(inst).dump();
}

EditInstance decode_instance(const std::string &line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception &e) {
    throw Error(std::string("cannot parse instance record: ") + e.what());
  }
  if (!j.is_object() || !j.contains("schema") ||
      !j.at("schema").is_string() ||
      j.at("schema").get<std::string>() != kSchemaVersion) {
    throw Error("instance record has missing or unsupported schema version");
  }
  try {
    return j.get<EditInstance>();
  } catch (const json::exception &e) {
    throw Error(std::string("malformed instance record: ") + e.what());
  }
}

} // namespace safeedit
