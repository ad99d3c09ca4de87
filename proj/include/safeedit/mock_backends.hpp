#pragma once
// Deterministic test doubles. Every mock is a pure function of its inputs
// plus a fixed salt, which is what makes whole-pipeline runs bitwise
// reproducible and resumable-without-surprises.

#include "safeedit/backends.hpp"

#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

namespace safeedit {

// Replays a fixed script keyed by (prompt text, round index). Unmatched
// keys raise ScriptMissError.
class ScriptedJudge : public JudgeBackend {
public:
  using Key = std::pair<std::string, int>;
  using Script = std::map<Key, std::string>;

  explicit ScriptedJudge(Script script) : script_(std::move(script)) {}

  std::string evaluate(const JudgeRequest &request) override;
  std::string identity() const override { return "mock:scripted-judge"; }

  std::size_t call_count() const { return calls_.load(); }

private:
  Script script_;
  std::atomic<std::size_t> calls_{0};
};

// Builds a ScriptedJudge script that walks a decision sequence for one
// starting prompt: each Refine emits a synthetic thought plus a refined
// prompt derived from the current one, so the loop's round-k key is
// predictable. The final Accept (if any) closes the sequence.
ScriptedJudge::Script make_decision_script(const std::string &initial_prompt,
                                           const std::vector<Decision> &decisions,
                                           TemplateId template_id = TemplateId::UnsafeV1);

// The refined prompt the scripted judge emits at a given round.
std::string scripted_refined_prompt(const std::string &current_prompt,
                                    int round_index);

// Emits a small PPM whose pixels are a hash of (prompt, seed, salt).
class StubGenerator : public GeneratorBackend {
public:
  explicit StubGenerator(std::uint64_t seed_salt = 0, int width = 8,
                         int height = 8)
      : salt_(seed_salt), width_(width), height_(height) {}

  std::vector<std::uint8_t> generate(const std::string &prompt,
                                     std::uint64_t seed) override;
  std::string identity() const override { return "mock:stub-generator"; }

  std::size_t call_count() const { return calls_.load(); }
  std::vector<std::string> warnings() const;

private:
  std::uint64_t salt_;
  int width_;
  int height_;
  std::atomic<std::size_t> calls_{0};
  mutable std::mutex mu_;
  std::vector<std::string> warnings_;
};

// Drives decisions from a hash of the round-1 prompt: each prompt
// deterministically accepts after a fixed number of rounds (or never, to
// exercise the budget path). This is the self-contained judge behind the
// CLI mock profile.
class HashDecisionJudge : public JudgeBackend {
public:
  explicit HashDecisionJudge(std::uint64_t salt = 0, int max_rounds = 4)
      : salt_(salt), max_rounds_(max_rounds) {}

  std::string evaluate(const JudgeRequest &request) override;
  std::string identity() const override { return "mock:hash-judge"; }

  std::size_t call_count() const { return calls_.load(); }

private:
  std::uint64_t salt_;
  int max_rounds_;
  std::atomic<std::size_t> calls_{0};
};

// Unit vectors derived from content digests / text bytes.
class HashEmbedding : public EmbeddingBackend {
public:
  explicit HashEmbedding(std::size_t dimension = 16, std::uint64_t salt = 0)
      : dimension_(dimension), salt_(salt) {}

  std::vector<double> embed_image(const ImageRef &image) override;
  std::vector<double> embed_text(const std::string &text) override;
  std::size_t dimension() const override { return dimension_; }
  std::string identity() const override { return "mock:hash-embedding"; }

private:
  std::vector<double> vector_for(const std::string &key);
  std::size_t dimension_;
  std::uint64_t salt_;
};

// Labels images by digest hash; specific digests can be pinned for tests.
class HashClassifier : public SafetyClassifierBackend {
public:
  explicit HashClassifier(std::uint64_t salt = 0) : salt_(salt) {}

  std::string classify(const ImageRef &image) override;
  std::string identity() const override { return "mock:hash-classifier"; }

  void pin(const std::string &digest, std::string label);

private:
  std::uint64_t salt_;
  std::map<std::string, std::string> pinned_;
};

class HashScorer : public ScalarScorerBackend {
public:
  explicit HashScorer(ScorerKind kind, std::uint64_t salt = 0)
      : kind_(kind), salt_(salt) {}

  ScorerKind kind() const override { return kind_; }
  std::string identity() const override;
  double score_images(const ImageRef &a, const ImageRef &b) override;
  double score_prompt(const ImageRef &image, const std::string &prompt) override;

private:
  ScorerKind kind_;
  std::uint64_t salt_;
};

} // namespace safeedit
