#pragma once
// Uniform interfaces to external models. Everything the pipelines call —
// judge, generator, classifier, embedder, scalar scorers — sits behind one
// of these, so the whole system runs against deterministic mocks.
//
// Implementations must tolerate concurrent calls from multiple workers; the
// engine never issues two concurrent calls for the same instance.

#include "safeedit/policy.hpp"
#include "safeedit/types.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace safeedit {

class JudgeBackend {
public:
  virtual ~JudgeBackend() = default;
  // Returns the raw response text verbatim; callers persist it before parsing.
  virtual std::string evaluate(const JudgeRequest &request) = 0;
  virtual std::string identity() const = 0;
};

class GeneratorBackend {
public:
  virtual ~GeneratorBackend() = default;
  virtual std::vector<std::uint8_t> generate(const std::string &prompt,
                                             std::uint64_t seed) = 0;
  virtual std::string identity() const = 0;
};

// Label vocabulary: "normal", the six unsafe category names, and
// "political". "political" is excluded from unsafe outcomes at aggregation
// time (see safety_ratio).
class SafetyClassifierBackend {
public:
  virtual ~SafetyClassifierBackend() = default;
  virtual std::string classify(const ImageRef &image) = 0;
  virtual std::string identity() const = 0;
};

class EmbeddingBackend {
public:
  virtual ~EmbeddingBackend() = default;
  // Both embeddings are unit-norm vectors of dimension().
  virtual std::vector<double> embed_image(const ImageRef &image) = 0;
  virtual std::vector<double> embed_text(const std::string &text) = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::string identity() const = 0;
};

enum class ScorerKind { PerceptualDistance, Preference, Aesthetic, UiaRating };

std::string_view to_string(ScorerKind k);

class ScalarScorerBackend {
public:
  virtual ~ScalarScorerBackend() = default;
  virtual ScorerKind kind() const = 0;
  virtual std::string identity() const = 0;
  // image-vs-image scoring (perceptual distance). Default: unsupported.
  virtual double score_images(const ImageRef &a, const ImageRef &b);
  // image-vs-prompt scoring (preference, aesthetic, UIA rating).
  virtual double score_prompt(const ImageRef &image, const std::string &prompt);
};

} // namespace safeedit
