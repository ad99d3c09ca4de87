#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "safeedit/errors.hpp"
#include "safeedit/image_io.hpp"
#include "safeedit/types.hpp"
#include "test_util.hpp"

#include <random>
#include <set>

using namespace safeedit;
using testutil::make_instance;
using testutil::random_instance;

TEST_CASE("category parsing covers the seven canonical names") {
  CHECK(parse_category("sexual") == Category::Sexual);
  CHECK(parse_category("safe") == Category::Safe);
  CHECK(parse_category("SHOCKING") == Category::Shocking);
  CHECK(parse_category("Illegal Activity") == Category::IllegalActivity);
  CHECK(parse_category("illegal_activity") == Category::IllegalActivity);
  CHECK(all_categories().size() == 7);
  CHECK(unsafe_categories().size() == 6);
  for (Category c : unsafe_categories()) CHECK(is_unsafe(c));
  CHECK_FALSE(is_unsafe(Category::Safe));
}

TEST_CASE("category parsing rejects non-canonical labels") {
  CHECK_THROWS_AS(parse_category("politics"), UnknownCategoryError);
  CHECK_THROWS_AS(parse_category(""), UnknownCategoryError);
  // Remapped source labels only resolve when the remap table is supplied.
  CHECK_THROWS_AS(parse_category("humiliation"), UnknownCategoryError);
  CHECK(parse_category("humiliation", default_source_remap()) ==
        Category::Harassment);
  CHECK(parse_category("disturbing", default_source_remap()) ==
        Category::Shocking);
  CHECK_THROWS_AS(parse_category("politics", default_source_remap()),
                  UnknownCategoryError);
}

TEST_CASE("category round-trips through to_string") {
  for (Category c : all_categories()) {
    CHECK(parse_category(to_string(c)) == c);
  }
}

TEST_CASE("validate_instance accepts the canonical two-round shape") {
  EditInstance inst = make_instance("ok-1", 1, true); // Refine then Accept
  CHECK(validate_instance(inst).empty());
}

TEST_CASE("validate_instance flags Accept with a refined prompt") {
  EditInstance inst = make_instance("bad-1", 0, true);
  inst.rounds[0].refined_prompt = "x";
  auto violations = validate_instance(inst);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].code == ViolationCode::AcceptForbidsPrompt);
}

TEST_CASE("validate_instance flags non-contiguous round indices") {
  EditInstance inst = make_instance("bad-2", 1, true);
  inst.rounds[1].index = 3; // [1,3]
  auto violations = validate_instance(inst);
  bool found = false;
  for (const auto &v : violations) {
    if (v.code == ViolationCode::NonContiguousRounds) found = true;
  }
  CHECK(found);
}

TEST_CASE("validate_instance flags broken image lineage") {
  EditInstance inst = make_instance("bad-3", 2, true);
  inst.rounds[1].evaluated_image = testutil::fake_image("elsewhere");
  auto violations = validate_instance(inst);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].code == ViolationCode::LineageBroken);
}

TEST_CASE("validate_instance flags terminal/decision mismatch") {
  EditInstance inst = make_instance("bad-4", 1, true);
  inst.terminal = Terminal::BudgetExhausted;
  auto violations = validate_instance(inst);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].code == ViolationCode::TerminalMismatch);
}

TEST_CASE("validate_instance flags round_count drift and range") {
  EditInstance inst = make_instance("bad-5", 1, true);
  inst.round_count = 7;
  auto violations = validate_instance(inst, 4);
  std::set<ViolationCode> codes;
  for (const auto &v : violations) codes.insert(v.code);
  CHECK(codes.count(ViolationCode::RoundCountMismatch) == 1);
  CHECK(codes.count(ViolationCode::RoundCountOutOfRange) == 1);
}

TEST_CASE("validate_instance is sound and complete over generated mutations") {
  std::mt19937_64 rng(20260808);
  for (int i = 0; i < 200; ++i) {
    EditInstance inst = random_instance(rng, "gen-" + std::to_string(i));
    REQUIRE(validate_instance(inst).empty());

    // Each mutation breaks exactly one named rule; validate must notice.
    EditInstance broken = inst;
    switch (i % 5) {
    case 0:
      broken.rounds[0].text_thought.clear();
      break;
    case 1:
      broken.round_count += 1;
      break;
    case 2:
      broken.rounds.back().decision =
          broken.rounds.back().decision == Decision::Accept ? Decision::Refine
                                                            : Decision::Accept;
      break;
    case 3:
      broken.rounds[0].index = 5;
      break;
    case 4:
      broken.rounds[0].evaluated_image = testutil::fake_image("wrong");
      break;
    }
    CHECK_FALSE(validate_instance(broken).empty());
  }
}

TEST_CASE("instance records round-trip byte-for-byte") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    EditInstance inst = random_instance(rng, "rt-" + std::to_string(i));
    std::string line = encode_instance(inst);
    EditInstance decoded = decode_instance(line);
    CHECK(decoded == inst);
    CHECK(encode_instance(decoded) == line);
  }
}

TEST_CASE("decode_instance rejects foreign or missing schema") {
  EditInstance inst = make_instance("s-1", 0, true);
  std::string line = encode_instance(inst);
  CHECK_THROWS_AS(decode_instance("{\"x\":1}"), Error);
  CHECK_THROWS_AS(decode_instance("not json"), Error);
  std::string wrong = line;
  auto pos = wrong.find("safeedit/v1");
  wrong.replace(pos, 11, "safeedit/v9");
  CHECK_THROWS_AS(decode_instance(wrong), Error);
}

TEST_CASE("ImageRef equality follows the digest") {
  ImageRef a = testutil::fake_image("same");
  ImageRef b = testutil::fake_image("same");
  b.uri = "elsewhere";
  ImageRef c = testutil::fake_image("other");
  CHECK(a == b);
  CHECK_FALSE(a == c);
}

TEST_CASE("final_image falls back to the initial image") {
  EditInstance accepted_immediately = make_instance("f-1", 0, true);
  CHECK(accepted_immediately.final_image() ==
        accepted_immediately.initial_image);
  EditInstance edited = make_instance("f-2", 2, true);
  CHECK(edited.final_image() == *edited.rounds[1].image);
}

TEST_CASE("prompt source HPDv2 convention") {
  PromptRecord r;
  r.source = PromptSource::HPDv2;
  r.category = Category::Safe;
  CHECK(parse_prompt_source("hpdv2") == PromptSource::HPDv2);
  CHECK(parse_prompt_source("T2ISafety") == PromptSource::T2ISafety);
  CHECK_THROWS_AS(parse_prompt_source("imagenet"), Error);
}

TEST_CASE("manifest serialization round-trips") {
  RunManifest m;
  m.run_id = "run-1";
  m.config_snapshot = nlohmann::json{{"profile", "mock"}};
  m.seed = 42;
  m.max_rounds = 4;
  m.judge_identity = "mock:scripted-judge";
  m.generator_identity = "mock:stub-generator";
  PromptRecord p;
  p.id = "a";
  p.text = "a prompt";
  p.category = Category::Violence;
  m.dataset.emplace_back(p, testutil::fake_image("a-init"));
  m.statuses["a"] = InstanceStatus{Terminal::Accepted, 2, std::nullopt, std::nullopt};
  m.finished_at = 3;

  nlohmann::json j = m;
  RunManifest back = j.get<RunManifest>();
  CHECK(back.run_id == m.run_id);
  CHECK(back.seed == m.seed);
  CHECK(back.dataset.size() == 1);
  CHECK(back.dataset[0].first == p);
  CHECK(back.statuses.at("a") == m.statuses.at("a"));
  CHECK(nlohmann::json(back).dump() == j.dump());
}

TEST_CASE("ppm probe reads dimensions back") {
  std::vector<std::uint8_t> rgb(6 * 3 * 3, 0x40);
  auto bytes = encode_ppm(6, 3, rgb);
  auto size = probe_image_size(bytes);
  REQUIRE(size.has_value());
  CHECK(size->width == 6);
  CHECK(size->height == 3);
  std::vector<std::uint8_t> junk{1, 2, 3, 4};
  CHECK_FALSE(probe_image_size(junk).has_value());
}
