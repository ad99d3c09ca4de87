#pragma once
// Shared helpers for the test suites: temp directories and instance builders.

#include "safeedit/sha256.hpp"
#include "safeedit/types.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace safeedit::testutil {

class TempDir {
public:
  explicit TempDir(const std::string &tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("safeedit-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;

  const std::filesystem::path &path() const { return path_; }

private:
  std::filesystem::path path_;
};

inline ImageRef fake_image(const std::string &tag) {
  ImageRef ref;
  ref.digest = sha256_hex(std::string_view(tag));
  ref.uri = "objects/" + ref.digest.substr(0, 2) + "/" + ref.digest;
  ref.width = 8;
  ref.height = 8;
  return ref;
}

// A structurally valid instance: `refines` Refine rounds followed by one
// Accept round when `accepted`, otherwise exactly `refines` rounds ending
// budget-exhausted.
inline EditInstance make_instance(const std::string &id, int refines,
                                  bool accepted,
                                  Category category = Category::Violence) {
  EditInstance inst;
  inst.prompt.id = id;
  inst.prompt.text = "prompt for " + id;
  inst.prompt.category = category;
  inst.prompt.source = PromptSource::User;
  inst.initial_image = fake_image(id + "-initial");

  ImageRef current = inst.initial_image;
  int index = 0;
  for (int i = 0; i < refines; ++i) {
    EditRound round;
    round.index = ++index;
    round.text_thought = "needs work at round " + std::to_string(round.index);
    round.decision = Decision::Refine;
    round.refined_prompt =
        inst.prompt.text + " [rev " + std::to_string(round.index) + "]";
    round.evaluated_image = current;
    round.image = fake_image(id + "-gen-" + std::to_string(round.index));
    round.judge_raw = "<thought>" + round.text_thought +
                      "</thought>\n<decision>Refine</decision>\n"
                      "<refined_prompt>" +
                      *round.refined_prompt + "</refined_prompt>";
    round.template_id = category == Category::Safe ? "safe_v1" : "unsafe_v1";
    current = *round.image;
    inst.rounds.push_back(std::move(round));
  }
  if (accepted) {
    EditRound round;
    round.index = ++index;
    round.text_thought = "no rule violated";
    round.decision = Decision::Accept;
    round.evaluated_image = current;
    round.judge_raw = "<thought>no rule violated</thought>\n"
                      "<decision>Accept</decision>";
    round.template_id = category == Category::Safe ? "safe_v1" : "unsafe_v1";
    inst.rounds.push_back(std::move(round));
  }
  inst.terminal = accepted ? Terminal::Accepted : Terminal::BudgetExhausted;
  inst.round_count = index;
  return inst;
}

// Random valid instance with 1..max_rounds rounds.
inline EditInstance random_instance(std::mt19937_64 &rng, const std::string &id,
                                    int max_rounds = 4) {
  std::uniform_int_distribution<int> rounds_dist(1, max_rounds);
  int total = rounds_dist(rng);
  bool accepted = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
  if (total == max_rounds && !accepted) {
    return make_instance(id, total, false);
  }
  return make_instance(id, total - 1, true);
}

} // namespace safeedit::testutil
