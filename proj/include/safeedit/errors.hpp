#pragma once
// Error types shared across the safeedit library.
//
// Faults (bad files, unknown labels, upstream failures) are exceptions.
// Data-level findings (instance invariant violations) are returned as
// values, not thrown — see validate_instance in types.hpp.

#include <stdexcept>
#include <string>

namespace safeedit {

class Error : public std::runtime_error {
public:
  explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

// -- core-model ---------------------------------------------------------

class UnknownCategoryError : public Error {
public:
  explicit UnknownCategoryError(const std::string &label)
      : Error("unknown category: \"" + label + "\""), label(label) {}
  std::string label;
};

// -- policy-engine ------------------------------------------------------

class MalformedPolicyFileError : public Error {
public:
  explicit MalformedPolicyFileError(const std::string &detail)
      : Error("malformed policy file: " + detail), detail(detail) {}
  std::string detail;
};

class MissingCategoryError : public Error {
public:
  explicit MissingCategoryError(const std::string &category)
      : Error("policy file has no rules for category: " + category),
        category(category) {}
  std::string category;
};

class SafeCategoryHasNoPolicyError : public Error {
public:
  SafeCategoryHasNoPolicyError()
      : Error("the safe category has no content policy") {}
};

class MissingSectionError : public Error {
public:
  explicit MissingSectionError(const std::string &section)
      : Error("judge response is missing section: " + section),
        section(section) {}
  std::string section;
};

class AmbiguousDecisionError : public Error {
public:
  explicit AmbiguousDecisionError(const std::string &tokens)
      : Error("ambiguous decision tokens: " + tokens), tokens(tokens) {}
  std::string tokens;
};

class DanglingPromptError : public Error {
public:
  DanglingPromptError()
      : Error("refined prompt present with an Accept decision") {}
};

// -- backend-adapters ---------------------------------------------------

class ScriptMissError : public Error {
public:
  explicit ScriptMissError(const std::string &key)
      : Error("scripted judge has no entry for key: " + key), key(key) {}
  std::string key;
};

class TimeoutError : public Error {
public:
  explicit TimeoutError(const std::string &detail)
      : Error("upstream timeout: " + detail) {}
};

class RateLimitedError : public Error {
public:
  explicit RateLimitedError(const std::string &detail)
      : Error("rate limited beyond retry budget: " + detail) {}
};

class MalformedUpstreamError : public Error {
public:
  explicit MalformedUpstreamError(const std::string &detail)
      : Error("malformed upstream response: " + detail) {}
};

class UpstreamStatusError : public Error {
public:
  UpstreamStatusError(int status, const std::string &detail)
      : Error("upstream returned status " + std::to_string(status) + ": " +
              detail),
        status(status) {}
  int status;
};

// -- synthesis ----------------------------------------------------------

class UnreadableSourceError : public Error {
public:
  explicit UnreadableSourceError(const std::string &path)
      : Error("cannot read source file: " + path), path(path) {}
  std::string path;
};

// -- training-export ----------------------------------------------------

class InvalidInstanceError : public Error {
public:
  explicit InvalidInstanceError(const std::string &detail)
      : Error("invalid edit instance: " + detail) {}
};

// -- eval-harness -------------------------------------------------------

class EmptyNegativeClassError : public Error {
public:
  EmptyNegativeClassError() : Error("fp + tn is zero; FPR is undefined") {}
};

class EmptyRunError : public Error {
public:
  EmptyRunError() : Error("metric input is empty") {}
};

class OutOfRangeRatingError : public Error {
public:
  explicit OutOfRangeRatingError(double value)
      : Error("UIA rating outside {1,2,3}: " + std::to_string(value)),
        value(value) {}
  double value;
};

class DimensionMismatchError : public Error {
public:
  DimensionMismatchError(std::size_t a, std::size_t b)
      : Error("embedding dimensions differ: " + std::to_string(a) + " vs " +
              std::to_string(b)) {}
};

class NotNormalizedError : public Error {
public:
  explicit NotNormalizedError(double norm)
      : Error("vector is not unit-norm (|v| = " + std::to_string(norm) + ")") {
  }
};

class KeySetMismatchError : public Error {
public:
  explicit KeySetMismatchError(const std::string &detail)
      : Error("score series key sets differ: " + detail) {}
};

class MissingMetricError : public Error {
public:
  explicit MissingMetricError(const std::string &metric)
      : Error("run has no values for metric: " + metric), metric(metric) {}
  std::string metric;
};

// -- cli-store ----------------------------------------------------------

class StoreError : public Error {
public:
  explicit StoreError(const std::string &detail)
      : Error("run store failure: " + detail) {}
};

class UnknownRunError : public Error {
public:
  explicit UnknownRunError(const std::string &run_id)
      : Error("no such run: " + run_id), run_id(run_id) {}
  std::string run_id;
};

class ConfigMismatchError : public Error {
public:
  explicit ConfigMismatchError(const std::string &detail)
      : Error("config does not match the recorded run: " + detail) {}
};

class ConfigError : public Error {
public:
  explicit ConfigError(const std::string &detail)
      : Error("bad configuration: " + detail) {}
};

} // namespace safeedit
