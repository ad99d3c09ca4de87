#include "safeedit/mock_backends.hpp"

#include "safeedit/errors.hpp"
#include "safeedit/image_io.hpp"
#include "safeedit/sha256.hpp"

#include <cmath>

namespace safeedit {

std::string_view to_string(ScorerKind k) {
  switch (k) {
  case ScorerKind::PerceptualDistance:
    return "perceptual_distance";
  case ScorerKind::Preference:
    return "preference";
  case ScorerKind::Aesthetic:
    return "aesthetic";
  case ScorerKind::UiaRating:
    return "uia_rating";
  }
  return "preference";
}

double ScalarScorerBackend::score_images(const ImageRef &, const ImageRef &) {
  throw Error("this scorer does not support image-vs-image scoring");
}

double ScalarScorerBackend::score_prompt(const ImageRef &, const std::string &) {
  throw Error("this scorer does not support image-vs-prompt scoring");
}

// -- ScriptedJudge ---------------------------------------------------------

std::string ScriptedJudge::evaluate(const JudgeRequest &request) {
  calls_.fetch_add(1);
  Key key{request.prompt_text, request.round_index};
  auto it = script_.find(key);
  if (it == script_.end()) {
    throw ScriptMissError("(\"" + request.prompt_text + "\", " +
                          std::to_string(request.round_index) + ")");
  }
  return it->second;
}

std::string scripted_refined_prompt(const std::string &current_prompt,
                                    int round_index) {
  return current_prompt + " [rev " + std::to_string(round_index) + "]";
}

ScriptedJudge::Script make_decision_script(const std::string &initial_prompt,
                                           const std::vector<Decision> &decisions,
                                           TemplateId template_id) {
  ScriptedJudge::Script script;
  std::string prompt = initial_prompt;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    int round = static_cast<int>(i) + 1;
    ParsedResponse resp;
    resp.decision = decisions[i];
    if (decisions[i] == Decision::Refine) {
      resp.text_thought = "round " + std::to_string(round) +
                          ": the image needs softening; adjust it at the "
                          "image level";
      if (template_id != TemplateId::SafeV1) {
        resp.refined_prompt = scripted_refined_prompt(prompt, round);
      }
    } else {
      resp.text_thought =
          "round " + std::to_string(round) + ": the image violates no rule";
    }
    script[{prompt, round}] = format_response(resp, template_id);
    if (decisions[i] == Decision::Refine && template_id != TemplateId::SafeV1) {
      prompt = scripted_refined_prompt(prompt, round);
    }
    // SafeV1 rejects carry the prompt forward unchanged, so the key text
    // stays the same on the next round.
  }
  return script;
}

// -- StubGenerator -----------------------------------------------------------

std::vector<std::uint8_t> StubGenerator::generate(const std::string &prompt,
                                                  std::uint64_t seed) {
  calls_.fetch_add(1);
  if (prompt.empty()) {
    std::lock_guard<std::mutex> lock(mu_);
    warnings_.push_back("generate called with an empty prompt");
  }
  std::size_t n = static_cast<std::size_t>(width_) * height_ * 3;
  std::vector<std::uint8_t> rgb;
  rgb.reserve(n);
  // Stream of sha256(prompt|seed|salt|counter) blocks.
  std::uint64_t counter = 0;
  while (rgb.size() < n) {
    Sha256 h;
    h.update(prompt);
    h.update("|");
    std::string tail = std::to_string(seed) + "|" + std::to_string(salt_) +
                       "|" + std::to_string(counter++);
    h.update(tail);
    auto block = h.finish();
    for (std::uint8_t byte : block) {
      if (rgb.size() == n) break;
      rgb.push_back(byte);
    }
  }
  return encode_ppm(width_, height_, rgb);
}

std::vector<std::string> StubGenerator::warnings() const {
  std::lock_guard<std::mutex> lock(mu_);
  return warnings_;
}

// -- HashDecisionJudge -------------------------------------------------------

namespace {

// Strips the " [rev N]" suffixes scripted_refined_prompt appends, recovering
// the round-1 prompt.
std::string strip_revision_suffixes(std::string prompt) {
  for (;;) {
    std::size_t open = prompt.rfind(" [rev ");
    if (open == std::string::npos || prompt.back() != ']') return prompt;
    std::size_t digits = open + 6;
    bool all_digits = digits < prompt.size() - 1;
    for (std::size_t i = digits; i + 1 < prompt.size(); ++i) {
      if (prompt[i] < '0' || prompt[i] > '9') {
        all_digits = false;
        break;
      }
    }
    if (!all_digits) return prompt;
    prompt.erase(open);
  }
}

} // namespace

std::string HashDecisionJudge::evaluate(const JudgeRequest &request) {
  calls_.fetch_add(1);
  // Rounds-to-accept is a pure function of the round-1 prompt, spread over
  // 1..max_rounds+1; the +1 bucket never accepts and exercises the
  // budget-exhausted path.
  std::string base = strip_revision_suffixes(request.prompt_text);
  std::uint64_t h =
      sha256_prefix64("hash-judge|" + std::to_string(salt_) + "|" + base);
  int rounds_to_accept =
      1 + static_cast<int>(h % static_cast<std::uint64_t>(max_rounds_ + 1));
  bool accept = request.round_index >= rounds_to_accept;

  ParsedResponse resp;
  if (accept) {
    resp.decision = Decision::Accept;
    resp.text_thought = "the image conforms to every applicable rule";
  } else {
    resp.decision = Decision::Refine;
    resp.text_thought = "the image still needs adjustment; soften the "
                        "flagged elements at the image level";
    if (request.template_id != TemplateId::SafeV1) {
      resp.refined_prompt =
          scripted_refined_prompt(request.prompt_text, request.round_index);
    }
  }
  return format_response(resp, request.template_id);
}

// -- HashEmbedding -------------------------------------------------------------

std::vector<double> HashEmbedding::vector_for(const std::string &key) {
  std::vector<double> v(dimension_);
  double norm_sq = 0.0;
  for (std::size_t i = 0; i < dimension_; ++i) {
    std::uint64_t h = sha256_prefix64("embed|" + std::to_string(salt_) + "|" +
                                      std::to_string(i) + "|" + key);
    // Map to [-1, 1).
    v[i] = static_cast<double>(h) / 9223372036854775808.0 - 1.0;
    norm_sq += v[i] * v[i];
  }
  double norm = std::sqrt(norm_sq);
  for (double &x : v) x /= norm;
  return v;
}

std::vector<double> HashEmbedding::embed_image(const ImageRef &image) {
  return vector_for("img|" + image.digest);
}

std::vector<double> HashEmbedding::embed_text(const std::string &text) {
  return vector_for("txt|" + text);
}

// -- HashClassifier --------------------------------------------------------------

void HashClassifier::pin(const std::string &digest, std::string label) {
  pinned_[digest] = std::move(label);
}

std::string HashClassifier::classify(const ImageRef &image) {
  auto it = pinned_.find(image.digest);
  if (it != pinned_.end()) return it->second;
  static const char *labels[] = {"normal",     "normal",  "normal",
                                 "sexual",     "violence", "harassment",
                                 "shocking",   "hate",     "illegal_activity",
                                 "political"};
  std::uint64_t h = sha256_prefix64("classify|" + std::to_string(salt_) + "|" +
                                    image.digest);
  return labels[h % 10];
}

// -- HashScorer --------------------------------------------------------------------

std::string HashScorer::identity() const {
  return "mock:hash-scorer:" + std::string(to_string(kind_));
}

double HashScorer::score_images(const ImageRef &a, const ImageRef &b) {
  if (kind_ != ScorerKind::PerceptualDistance) {
    return ScalarScorerBackend::score_images(a, b);
  }
  if (a.digest == b.digest) return 0.0;
  // Symmetric in the pair.
  const std::string &lo = a.digest < b.digest ? a.digest : b.digest;
  const std::string &hi = a.digest < b.digest ? b.digest : a.digest;
  std::uint64_t h =
      sha256_prefix64("lpips|" + std::to_string(salt_) + "|" + lo + "|" + hi);
  return static_cast<double>(h % 10000) / 10000.0;
}

double HashScorer::score_prompt(const ImageRef &image, const std::string &prompt) {
  std::uint64_t h = sha256_prefix64("score|" + std::string(to_string(kind_)) +
                                    "|" + std::to_string(salt_) + "|" +
                                    image.digest + "|" + prompt);
  switch (kind_) {
  case ScorerKind::UiaRating:
    return static_cast<double>(1 + h % 3);
  case ScorerKind::Preference:
  case ScorerKind::Aesthetic:
    return static_cast<double>(h % 10000) / 10000.0;
  case ScorerKind::PerceptualDistance:
    return ScalarScorerBackend::score_prompt(image, prompt);
  }
  return 0.0;
}

} // namespace safeedit
