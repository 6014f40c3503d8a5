#pragma once

#include <stdexcept>
#include <string>

namespace storypipe {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message) : std::runtime_error(message) {}
};

// Malformed document text. Carries the 1-based position of the byte that
// stopped the parser.
class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& message, int line, int column)
      : Error(message), line_(line), column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

// Well-formed text that violates the document schema or its invariants.
class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& message) : Error(message) {}
};

// Invalid run configuration or command-line usage.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error(message) {}
};

// A provider call failed. The kind distinguishes transport-level timeouts
// from responses we could not interpret and outright refusals.
class ProviderError : public Error {
 public:
  enum class Kind { timeout, malformed_response, refused, unavailable };

  ProviderError(Kind kind, const std::string& message)
      : Error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Strict-mode scenario lookup miss.
class MissingScenarioEntry : public Error {
 public:
  explicit MissingScenarioEntry(const std::string& message) : Error(message) {}
};

// A score aggregate was requested over an axis some feedback does not carry.
class MissingAxis : public Error {
 public:
  explicit MissingAxis(const std::string& message) : Error(message) {}
};

// Paired inputs of unequal length (e.g. images vs. captions).
class LengthMismatch : public Error {
 public:
  explicit LengthMismatch(const std::string& message) : Error(message) {}
};

// A loop ran out of iterations and the configuration forbids emitting the
// best candidate seen so far.
class BudgetExhausted : public Error {
 public:
  explicit BudgetExhausted(const std::string& message) : Error(message) {}
};

// Narration audio still exceeds the clip window after the last permitted
// refinement.
class FitFailure : public Error {
 public:
  explicit FitFailure(const std::string& message) : Error(message) {}
};

// On-disk artifacts do not match the hashes recorded in the run manifest.
class ManifestMismatch : public Error {
 public:
  explicit ManifestMismatch(const std::string& message) : Error(message) {}
};

// Resume attempted with a different configuration than the original run.
class ConfigDigestMismatch : public Error {
 public:
  explicit ConfigDigestMismatch(const std::string& message) : Error(message) {}
};

// An aggregate was requested over an empty collection.
class EmptyInput : public Error {
 public:
  explicit EmptyInput(const std::string& message) : Error(message) {}
};

// A prompt template was asked to render from a design with empty elements.
class IncompleteDesign : public Error {
 public:
  explicit IncompleteDesign(const std::string& message) : Error(message) {}
};

// An animation prompt was requested without a materialized keyframe.
class MissingKeyframe : public Error {
 public:
  explicit MissingKeyframe(const std::string& message) : Error(message) {}
};

// A pipeline stage failed; carries the stage name for reporting.
class StageFailure : public Error {
 public:
  StageFailure(const std::string& stage, const std::string& message)
      : Error("stage '" + stage + "' failed: " + message), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace storypipe
