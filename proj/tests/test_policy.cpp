#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "safeedit/errors.hpp"
#include "safeedit/policy.hpp"
#include "test_util.hpp"

#include <json.hpp>

#include <fstream>
#include <random>
#include <set>

using namespace safeedit;
using nlohmann::json;

namespace {

std::string minimal_policy_doc(bool include_hate = true) {
  json cats = json::object();
  auto add = [&](const char *name, std::vector<std::pair<const char *, const char *>> rules) {
    json list = json::array();
    for (auto [id, text] : rules) list.push_back({{"id", id}, {"text", text}});
    cats[name] = list;
  };
  add("sexual", {{"SX1", "no explicit nudity"}});
  add("violence", {{"VL1", "no gore"}, {"VL2", "no glorified harm"}});
  add("harassment", {{"HR1", "no bullying"}});
  add("shocking", {{"SH1", "no shock imagery"}});
  if (include_hate) add("hate", {{"HT1", "no hate symbols"}});
  add("illegal_activity", {{"IL1", "no crime instruction"}});
  return json{{"version", "test-1"}, {"categories", cats}}.dump();
}

PromptRecord make_prompt(Category c, const std::string &text) {
  PromptRecord p;
  p.id = "p1";
  p.text = text;
  p.category = c;
  return p;
}

} // namespace

TEST_CASE("policy file with one rule per unsafe category loads") {
  PolicySet set = parse_policies(minimal_policy_doc());
  CHECK(set.version() == "test-1");
  for (Category c : unsafe_categories()) {
    CHECK_FALSE(set.rules_for(c).empty());
  }
  CHECK(set.rules_for(Category::Safe).empty());
}

TEST_CASE("policy file missing hate section is rejected") {
  try {
    parse_policies(minimal_policy_doc(false));
    FAIL("expected MissingCategoryError");
  } catch (const MissingCategoryError &e) {
    CHECK(e.category == "hate");
  }
}

TEST_CASE("empty and malformed policy files are rejected") {
  CHECK_THROWS_AS(parse_policies(""), MalformedPolicyFileError);
  CHECK_THROWS_AS(parse_policies("{}"), MalformedPolicyFileError);
  CHECK_THROWS_AS(parse_policies("{\"version\":\"v\",\"categories\":3}"),
                  MalformedPolicyFileError);
  // safe category must stay empty
  json doc = json::parse(minimal_policy_doc());
  doc["categories"]["safe"] = json::array({{{"id", "S1"}, {"text", "x"}}});
  CHECK_THROWS_AS(parse_policies(doc.dump()), MalformedPolicyFileError);
  // duplicate ids
  doc = json::parse(minimal_policy_doc());
  doc["categories"]["violence"].push_back({{"id", "SX1"}, {"text", "dup"}});
  CHECK_THROWS_AS(parse_policies(doc.dump()), MalformedPolicyFileError);
  // unknown section
  doc = json::parse(minimal_policy_doc());
  doc["categories"]["weather"] = json::array({{{"id", "W1"}, {"text", "x"}}});
  CHECK_THROWS_AS(parse_policies(doc.dump()), MalformedPolicyFileError);
}

TEST_CASE("the shipped default policy file loads and covers every category") {
  PolicySet set = load_policies(std::filesystem::path(SAFEEDIT_SOURCE_DIR) /
                                "data/default_policies.json");
  for (Category c : unsafe_categories()) {
    auto rules = select_policy(set, c);
    CHECK(rules.size() >= 3);
    CHECK(rules.size() <= 6);
  }
}

TEST_CASE("select_policy returns the category's rules in file order") {
  PolicySet set = parse_policies(minimal_policy_doc());
  auto rules = select_policy(set, Category::Violence);
  REQUIRE(rules.size() == 2);
  CHECK(rules[0].id == "VL1");
  CHECK(rules[1].id == "VL2");
  CHECK_THROWS_AS(select_policy(set, Category::Safe),
                  SafeCategoryHasNoPolicyError);
}

TEST_CASE("select_policy agrees with an independent slice of the file") {
  // Oracle: walk the raw JSON directly, bypassing PolicySet entirely.
  std::string doc = minimal_policy_doc();
  json raw = json::parse(doc);
  std::vector<std::string> expected_ids;
  for (const auto &rule : raw["categories"]["violence"]) {
    expected_ids.push_back(rule["id"].get<std::string>());
  }

  PolicySet set = parse_policies(doc);
  auto rules = select_policy(set, Category::Violence);
  REQUIRE(rules.size() == expected_ids.size());
  for (std::size_t i = 0; i < rules.size(); ++i) {
    CHECK(rules[i].id == expected_ids[i]);
  }
}

TEST_CASE("safe template embeds accept/reject and no rules") {
  PolicySet set = parse_policies(minimal_policy_doc());
  auto req = render_judge_request(make_prompt(Category::Safe, "a quiet lake"),
                                  testutil::fake_image("img"), set,
                                  TemplateId::SafeV1);
  CHECK(req.user_text.find("accept") != std::string::npos);
  CHECK(req.user_text.find("reject") != std::string::npos);
  CHECK(req.user_text.find("SX1") == std::string::npos);
  CHECK(req.user_text.find("VL1") == std::string::npos);
  CHECK(req.user_text.find("a quiet lake") != std::string::npos);
}

TEST_CASE("unsafe template embeds every rule id for the category") {
  PolicySet set = parse_policies(minimal_policy_doc());
  auto req = render_judge_request(make_prompt(Category::Violence, "a duel"),
                                  testutil::fake_image("img"), set,
                                  TemplateId::UnsafeV1);
  CHECK(req.user_text.find("VL1") != std::string::npos);
  CHECK(req.user_text.find("VL2") != std::string::npos);
  CHECK(req.user_text.find("a duel") != std::string::npos);
  CHECK(req.user_text.find("SX1") == std::string::npos);
  // safe category is a precondition violation for the unsafe template
  CHECK_THROWS_AS(render_judge_request(make_prompt(Category::Safe, "x"),
                                       testutil::fake_image("img"), set,
                                       TemplateId::UnsafeV1),
                  SafeCategoryHasNoPolicyError);
}

TEST_CASE("rendering is deterministic") {
  PolicySet set = parse_policies(minimal_policy_doc());
  auto prompt = make_prompt(Category::Hate, "graffiti wall");
  auto a = render_judge_request(prompt, testutil::fake_image("i"), set,
                                TemplateId::UnsafeV1, 2);
  auto b = render_judge_request(prompt, testutil::fake_image("i"), set,
                                TemplateId::UnsafeV1, 2);
  CHECK(a.user_text == b.user_text);
  CHECK(a.system_text == b.system_text);
}

TEST_CASE("unsafe renders are injective over prompt/category/version") {
  PolicySet set = parse_policies(minimal_policy_doc());
  json other_version = json::parse(minimal_policy_doc());
  other_version["version"] = "test-2";
  PolicySet set_v2 = parse_policies(other_version.dump());

  std::mt19937_64 rng(99);
  std::set<std::string> renders;
  std::set<std::string> inputs;
  const char *texts[] = {"a fight", "a march", "a meeting", "an argument"};
  for (int i = 0; i < 200; ++i) {
    Category c = unsafe_categories()[rng() % 6];
    std::string text = std::string(texts[rng() % 4]) + " #" +
                       std::to_string(rng() % 30);
    const PolicySet &which = rng() % 2 == 0 ? set : set_v2;
    std::string key = std::string(to_string(c)) + "|" + text + "|" +
                      which.version();
    if (!inputs.insert(key).second) continue;
    auto req = render_judge_request(make_prompt(c, text),
                                    testutil::fake_image("i"), which,
                                    TemplateId::UnsafeV1);
    CHECK(renders.insert(req.user_text).second);
  }
}

TEST_CASE("minimal accept response parses") {
  auto parsed = parse_judge_response(
      "<thought>ok</thought><decision>Accept</decision>",
      TemplateId::UnsafeV1);
  CHECK(parsed.text_thought == "ok");
  CHECK(parsed.decision == Decision::Accept);
  CHECK_FALSE(parsed.refined_prompt.has_value());
}

TEST_CASE("refine response carries the refined prompt") {
  // Fixture authored against the grammar; hand-parsed expectation.
  auto parsed = parse_judge_response(
      "<thought>violates VL2</thought><decision>Refine</decision>"
      "<refined_prompt>a calm scene</refined_prompt>",
      TemplateId::UnsafeV1);
  CHECK(parsed.text_thought == "violates VL2");
  CHECK(parsed.decision == Decision::Refine);
  REQUIRE(parsed.refined_prompt.has_value());
  CHECK(*parsed.refined_prompt == "a calm scene");
}

TEST_CASE("structural parse errors carry the section name") {
  try {
    parse_judge_response("<decision>Refine</decision>", TemplateId::UnsafeV1);
    FAIL("expected MissingSectionError");
  } catch (const MissingSectionError &e) {
    CHECK(e.section == "thought");
  }
  try {
    parse_judge_response("<thought>t</thought>", TemplateId::UnsafeV1);
    FAIL("expected MissingSectionError");
  } catch (const MissingSectionError &e) {
    CHECK(e.section == "decision");
  }
  try {
    parse_judge_response("<thought>t</thought><decision>Refine</decision>",
                         TemplateId::UnsafeV1);
    FAIL("expected MissingSectionError");
  } catch (const MissingSectionError &e) {
    CHECK(e.section == "refined_prompt");
  }
}

TEST_CASE("ambiguous and dangling decisions are rejected") {
  CHECK_THROWS_AS(parse_judge_response(
                      "<thought>t</thought><decision>maybe</decision>",
                      TemplateId::UnsafeV1),
                  AmbiguousDecisionError);
  CHECK_THROWS_AS(parse_judge_response(
                      "<thought>t</thought><decision>Accept or Refine</decision>",
                      TemplateId::UnsafeV1),
                  AmbiguousDecisionError);
  CHECK_THROWS_AS(parse_judge_response(
                      "<thought>t</thought><decision>Accept</decision>"
                      "<refined_prompt>x</refined_prompt>",
                      TemplateId::UnsafeV1),
                  DanglingPromptError);
}

TEST_CASE("decision token matching is case-insensitive and takes the last tag") {
  auto parsed = parse_judge_response(
      "<thought>t</thought><decision>aCCePt</decision>", TemplateId::UnsafeV1);
  CHECK(parsed.decision == Decision::Accept);
  // Restated decision: the final tag is the conclusion.
  parsed = parse_judge_response(
      "<thought>t</thought><decision>Refine</decision>"
      "<refined_prompt>x</refined_prompt><decision>Refine</decision>",
      TemplateId::UnsafeV1);
  CHECK(parsed.decision == Decision::Refine);
}

TEST_CASE("safe template maps accept/reject and copies the prompt on reject") {
  auto parsed = parse_judge_response(
      "<thought>fine</thought><decision>Accept</decision>", TemplateId::SafeV1,
      std::string("a red kite"));
  CHECK(parsed.decision == Decision::Accept);
  CHECK_FALSE(parsed.refined_prompt.has_value());

  parsed = parse_judge_response(
      "<thought>mismatch</thought><decision>Reject</decision>",
      TemplateId::SafeV1, std::string("a red kite"));
  CHECK(parsed.decision == Decision::Refine);
  REQUIRE(parsed.refined_prompt.has_value());
  CHECK(*parsed.refined_prompt == "a red kite");

  CHECK_THROWS_AS(parse_judge_response(
                      "<thought>t</thought><decision>Refine</decision>",
                      TemplateId::SafeV1, std::string("p")),
                  AmbiguousDecisionError);
}

TEST_CASE("format/parse round-trip over 500 generated responses") {
  std::mt19937_64 rng(20260808);
  const char *fragments[] = {"the image shows a crowded street",
                             "tone is calm but the sign is hostile",
                             "colors suggest distress; soften them",
                             "subject fully clothed, scene neutral",
                             "replace the weapon with a banner"};
  for (int i = 0; i < 500; ++i) {
    ParsedResponse original;
    original.text_thought = std::string(fragments[rng() % 5]) + " (case " +
                            std::to_string(i) + ")";
    bool refine = rng() % 2 == 0;
    TemplateId tmpl = rng() % 3 == 0 ? TemplateId::SafeV1 : TemplateId::UnsafeV1;
    std::string current_prompt = "prompt " + std::to_string(rng() % 100);
    if (refine) {
      original.decision = Decision::Refine;
      original.refined_prompt = tmpl == TemplateId::SafeV1
                                    ? current_prompt
                                    : "softened " + std::to_string(rng() % 100);
    } else {
      original.decision = Decision::Accept;
    }
    std::string emitted = format_response(original, tmpl);
    ParsedResponse parsed = parse_judge_response(emitted, tmpl, current_prompt);
    CHECK(parsed == original);
  }
}

TEST_CASE("parse never returns Refine without a prompt for the unsafe template") {
  std::mt19937_64 rng(5);
  const char *bodies[] = {
      "<thought>t</thought><decision>Refine</decision><refined_prompt>p</refined_prompt>",
      "<thought>t</thought><decision>Refine</decision><refined_prompt>  </refined_prompt>",
      "<thought>t</thought><decision>Accept</decision>",
      "<thought>t</thought><decision>Refine</decision>",
  };
  int parsed_count = 0;
  for (int i = 0; i < 100; ++i) {
    try {
      auto parsed =
          parse_judge_response(bodies[rng() % 4], TemplateId::UnsafeV1);
      ++parsed_count;
      if (parsed.decision == Decision::Refine) {
        REQUIRE(parsed.refined_prompt.has_value());
        CHECK_FALSE(parsed.refined_prompt->empty());
      }
    } catch (const Error &) {
      // structural rejection is the other acceptable outcome
    }
  }
  CHECK(parsed_count > 0);
}

TEST_CASE("no-thought formatting is a suffix of the full grammar") {
  ParsedResponse resp;
  resp.text_thought = "reasoning";
  resp.decision = Decision::Refine;
  resp.refined_prompt = "softer";
  std::string full = format_response(resp);
  std::string bare = format_response_without_thought(resp);
  CHECK(full.size() > bare.size());
  CHECK(full.substr(full.size() - bare.size()) == bare);
  CHECK(bare.find("<thought>") == std::string::npos);
}

TEST_CASE("template ids round-trip") {
  for (TemplateId t : {TemplateId::UnsafeV1, TemplateId::SafeV1,
                       TemplateId::PromptAwareV1}) {
    CHECK(parse_template_id(to_string(t)) == t);
  }
  CHECK_THROWS_AS(parse_template_id("v3"), Error);
}

TEST_CASE("prompt-aware template renders for both safe and unsafe prompts") {
  PolicySet set = parse_policies(minimal_policy_doc());
  auto unsafe_req = render_judge_request(
      make_prompt(Category::Violence, "a clash"), testutil::fake_image("i"),
      set, TemplateId::PromptAwareV1, 3);
  CHECK(unsafe_req.user_text.find("VL1") != std::string::npos);
  CHECK(unsafe_req.round_index == 3);
  auto safe_req = render_judge_request(make_prompt(Category::Safe, "a lake"),
                                       testutil::fake_image("i"), set,
                                       TemplateId::PromptAwareV1);
  CHECK(safe_req.user_text.find("VL1") == std::string::npos);
  CHECK(safe_req.user_text.find("a lake") != std::string::npos);
}
