#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <semaphore>
#include <string>
#include <string_view>

#include "noterisk/cohort.hpp"
#include "noterisk/prompt.hpp"
#include "noterisk/prompt_cache.hpp"

namespace noterisk {

struct LlmClientConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model_name = "gpt-4o-mini";
  std::string api_key_env = "LLM_API_KEY";
  double temperature = 0.0;
  int max_output_tokens = 64;
  double timeout_seconds = 60.0;
  // Re-asks after a malformed reply, and resends after a transport failure.
  int max_retries = 3;
  int max_concurrent = 4;
  double backoff_base_seconds = 1.0;
  // featurize_cohort fails the batch above this fraction of failed patients.
  double max_failure_fraction = 0.05;

  void validate() const;
};

// One chat completion round trip: prompt in, reply text out.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  // Throws TransportError or ContextLengthError.
  virtual std::string complete(const std::string& prompt) = 0;
  // Model identity used in cache keys.
  virtual std::string model_name() const = 0;
};

// JSON body for POST {base_url}/chat/completions.
std::string chat_request_body(const LlmClientConfig& config, std::string_view prompt);
// `choices[0].message.content` of a chat-completions reply. Throws TransportError
// when the body does not have that shape.
std::string parse_chat_reply(std::string_view body);

// OpenAI-compatible chat-completions endpoint over HTTP(S). Non-2xx replies and
// connection failures are retried with exponential backoff (base, x2, jitter).
class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(LlmClientConfig config);
  std::string complete(const std::string& prompt) override;
  std::string model_name() const override { return config_.model_name; }

 private:
  LlmClientConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  std::string api_key_;
};

enum class MockMode {
  marker,  // risk_death = u, readmit = u + small offset, health = 101 - u
  paper,   // same, with u first snapped onto the eight observed risk values
};

std::string_view to_string(MockMode mode);
MockMode parse_mock_mode(std::string_view name);

// The eight risk-of-death values the real model was observed to emit.
inline constexpr std::array<int, 8> kPaperRiskValues = {10, 20, 30, 50, 60, 70, 75, 80};

// Nearest of kPaperRiskValues; ties go to the lower value.
int snap_to_paper_value(int u);

// The answers a mock backend gives for severity u.
GptAnswers mock_answers(int u, MockMode mode);

// Offline backend that reads the `SYNTH-SEVERITY: u` line embedded in
// synthetic notes. Prompts without the marker get a reply that does not parse.
class MockChatBackend : public ChatBackend {
 public:
  explicit MockChatBackend(MockMode mode) : mode_(mode) {}
  std::string complete(const std::string& prompt) override;
  std::string model_name() const override;
  std::uint64_t calls() const { return calls_.load(); }

 private:
  MockMode mode_;
  std::atomic<std::uint64_t> calls_{0};
};

// Prompt rendering, cache lookup, backend call, parsing and re-asking. Shareable
// across threads; at most max_concurrent backend calls are in flight.
class LlmClient {
 public:
  LlmClient(LlmClientConfig config, std::shared_ptr<ChatBackend> backend,
            std::shared_ptr<PromptCache> cache,
            PromptTemplate prompt_template = PromptTemplate::standard());

  // Throws TransportError, ContextLengthError or UnparsableError.
  GptAnswers fetch_answers(std::string_view note_text);

  std::string key_for(std::string_view note_text) const;

  const LlmClientConfig& config() const { return config_; }
  std::uint64_t cache_hits() const { return hits_.load(); }
  std::uint64_t cache_misses() const { return misses_.load(); }
  std::uint64_t backend_calls() const { return backend_calls_.load(); }

 private:
  LlmClientConfig config_;
  std::shared_ptr<ChatBackend> backend_;
  std::shared_ptr<PromptCache> cache_;
  PromptTemplate template_;
  std::counting_semaphore<> in_flight_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
  std::atomic<std::uint64_t> backend_calls_{0};
};

struct FeaturizationResult {
  std::map<std::string, GptAnswers> answers;   // patient_id -> answers
  std::map<std::string, std::string> failures;  // patient_id -> error message
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
};

// Answers for every patient. Identical notes share one request. Per-patient
// failures are collected; the batch throws only when the failed fraction
// exceeds max_failure_fraction (TransportError if any failure was transport).
FeaturizationResult featurize_cohort(LlmClient& client, const Cohort& cohort);

}  // namespace noterisk
