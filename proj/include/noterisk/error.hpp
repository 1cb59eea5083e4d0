#pragma once

#include <stdexcept>
#include <string>

namespace noterisk {

// Every error thrown by the library derives from Error. The four branches map
// one-to-one onto the CLI exit codes (config 2, data 3, llm 4, model 5).
struct Error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : public Error {
  using Error::Error;
};

struct DataError : public Error {
  using Error::Error;
};

struct LlmError : public Error {
  using Error::Error;
};

struct ModelError : public Error {
  using Error::Error;
};

// Raised when an LLM reply cannot be turned into three answers. `raw` keeps
// the offending text for logging.
struct ResponseError : public LlmError {
  std::string raw;
  ResponseError(const std::string& message, std::string raw_text)
      : LlmError(message), raw(std::move(raw_text)) {}
};

// Wrong number of numbered values, or no numbered list at all.
struct FormatError : public ResponseError {
  using ResponseError::ResponseError;
};

// A value is non-integer or outside [1, 100].
struct RangeError : public ResponseError {
  using ResponseError::ResponseError;
};

// Network failure, timeout or non-2xx status that survived all retries.
struct TransportError : public LlmError {
  using LlmError::LlmError;
};

// The backend rejected the prompt as too long for the model context window.
struct ContextLengthError : public LlmError {
  using LlmError::LlmError;
};

// Every re-ask produced a reply that failed to parse.
struct UnparsableError : public LlmError {
  std::string last_raw;
  UnparsableError(const std::string& message, std::string raw_text)
      : LlmError(message), last_raw(std::move(raw_text)) {}
};

}  // namespace noterisk
