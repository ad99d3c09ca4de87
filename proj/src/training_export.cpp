#include "safeedit/training_export.hpp"

#include "safeedit/errors.hpp"

#include <algorithm>
#include <fstream>
#include <system_error>

#include <json.hpp>

namespace safeedit {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(TemplateVariant v) {
  switch (v) {
  case TemplateVariant::Standard:
    return "standard";
  case TemplateVariant::PromptAware:
    return "prompt_aware";
  case TemplateVariant::NoThought:
    return "no_thought";
  case TemplateVariant::Round1Trunc:
    return "round1_trunc";
  case TemplateVariant::Round2Trunc:
    return "round2_trunc";
  }
  return "standard";
}

TemplateVariant parse_template_variant(std::string_view text) {
  std::string key = normalize_label(text);
  if (key == "standard") return TemplateVariant::Standard;
  if (key == "prompt_aware") return TemplateVariant::PromptAware;
  if (key == "no_thought") return TemplateVariant::NoThought;
  if (key == "round1_trunc") return TemplateVariant::Round1Trunc;
  if (key == "round2_trunc") return TemplateVariant::Round2Trunc;
  throw Error("unknown template variant: " + std::string(text));
}

void to_json(json &j, const QAPair &p) {
  j = json{{"schema", kSchemaVersion},
           {"instance_id", p.instance_id},
           {"round_index", p.round_index},
           {"input_image", p.input_image},
           {"output_text", p.output_text},
           {"variant", to_string(p.variant)}};
  if (p.input_text) j["input_text"] = *p.input_text;
  if (p.output_image) j["output_image"] = *p.output_image;
}

void from_json(const json &j, QAPair &p) {
  p.instance_id = j.at("instance_id").get<std::string>();
  p.round_index = j.at("round_index").get<int>();
  p.input_image = j.at("input_image").get<ImageRef>();
  p.output_text = j.at("output_text").get<std::string>();
  p.variant = parse_template_variant(j.at("variant").get<std::string>());
  if (j.contains("input_text")) {
    p.input_text = j.at("input_text").get<std::string>();
  } else {
    p.input_text.reset();
  }
  if (j.contains("output_image")) {
    p.output_image = j.at("output_image").get<ImageRef>();
  } else {
    p.output_image.reset();
  }
}

EditInstance truncate_rounds(const EditInstance &instance, int k) {
  if (k < 1) throw Error("truncate_rounds requires k >= 1");
  if (instance.rounds.empty()) {
    throw InvalidInstanceError("cannot truncate an instance with no rounds");
  }
  if (static_cast<int>(instance.rounds.size()) <= k) return instance;

  EditInstance out = instance;
  out.rounds.resize(static_cast<std::size_t>(k));
  out.round_count = k;
  // The original continued past round k, so round k decided Refine; the
  // truncated instance terminates there with its edit intact.
  out.terminal = out.rounds.back().decision == Decision::Accept
                     ? Terminal::Accepted
                     : Terminal::BudgetExhausted;
  return out;
}

std::vector<QAPair> export_qa_pairs(const EditInstance &instance,
                                    TemplateVariant variant) {
  const EditInstance *source = &instance;
  EditInstance truncated;
  if (variant == TemplateVariant::Round1Trunc) {
    truncated = truncate_rounds(instance, 1);
    source = &truncated;
  } else if (variant == TemplateVariant::Round2Trunc) {
    truncated = truncate_rounds(instance, 2);
    source = &truncated;
  }

  int max_rounds = std::max(4, static_cast<int>(source->rounds.size()));
  auto violations = validate_instance(*source, max_rounds);
  if (!violations.empty()) {
    throw InvalidInstanceError(source->prompt.id + ": " +
                               violations.front().describe());
  }

  std::vector<QAPair> pairs;
  pairs.reserve(source->rounds.size());
  for (std::size_t i = 0; i < source->rounds.size(); ++i) {
    const EditRound &round = source->rounds[i];
    QAPair pair;
    pair.instance_id = source->prompt.id;
    pair.round_index = round.index;
    pair.variant = variant;
    pair.input_image =
        i == 0 ? source->initial_image : *source->rounds[i - 1].image;

    if (variant == TemplateVariant::PromptAware) {
      pair.input_text = i == 0 ? source->prompt.text
                               : source->rounds[i - 1].refined_prompt.value();
    } else if (i == 0) {
      pair.input_text = source->prompt.text;
    }

    ParsedResponse resp;
    resp.text_thought = round.text_thought;
    resp.decision = round.decision;
    resp.refined_prompt = round.refined_prompt;
    TemplateId grammar = parse_template_id(round.template_id);
    pair.output_text = variant == TemplateVariant::NoThought
                           ? format_response_without_thought(resp, grammar)
                           : format_response(resp, grammar);
    if (round.decision == Decision::Refine) {
      pair.output_image = round.image;
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

CorpusManifest export_corpus(const std::vector<EditInstance> &instances,
                             TemplateVariant variant,
                             const fs::path &out_path,
                             const CorpusOptions &options) {
  std::vector<const EditInstance *> ordered;
  ordered.reserve(instances.size());
  for (const EditInstance &inst : instances) ordered.push_back(&inst);
  std::sort(ordered.begin(), ordered.end(),
            [](const EditInstance *a, const EditInstance *b) {
              return a->prompt.id < b->prompt.id;
            });

  CorpusManifest manifest;
  manifest.variant = variant;

  fs::path tmp = out_path;
  tmp += ".tmp";
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    for (const EditInstance *inst : ordered) {
      if (inst->terminal == Terminal::Failed) {
        ++manifest.skipped_failed;
        continue;
      }
      std::vector<QAPair> pairs = export_qa_pairs(*inst, variant);
      if (inst->terminal == Terminal::BudgetExhausted) {
        manifest.budget_exhausted_instances.push_back(inst->prompt.id);
        if (options.drop_trailing_unsafe && !pairs.empty()) {
          pairs.pop_back();
          ++manifest.dropped_trailing_pairs;
        }
      }
      ++manifest.instance_count;
      for (const QAPair &pair : pairs) {
        out << json(pair).dump() << "\n";
        ++manifest.pair_count;
      }
    }
    out.flush();
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, out_path, ec);
  if (ec) throw Error("rename failed: " + ec.message());

  json mj{{"schema", kSchemaVersion},
          {"variant", to_string(variant)},
          {"pair_count", manifest.pair_count},
          {"instance_count", manifest.instance_count},
          {"skipped_failed", manifest.skipped_failed},
          {"dropped_trailing_pairs", manifest.dropped_trailing_pairs},
          {"budget_exhausted_instances", manifest.budget_exhausted_instances}};
  fs::path mpath = out_path;
  mpath += ".manifest.json";
  fs::path mtmp = mpath;
  mtmp += ".tmp";
  {
    std::ofstream out(mtmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + mtmp.string());
    out << mj.dump(2) << "\n";
  }
  fs::rename(mtmp, mpath, ec);
  if (ec) throw Error("rename failed: " + ec.message());
  return manifest;
}

std::vector<QAPair> load_corpus(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus " + path.string());
  std::vector<QAPair> pairs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    pairs.push_back(json::parse(line).get<QAPair>());
  }
  return pairs;
}

} // namespace safeedit
