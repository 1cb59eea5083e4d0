#include "noterisk/llm_client.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "noterisk/error.hpp"

namespace noterisk {

using nlohmann::json;

void LlmClientConfig::validate() const {
  if (model_name.empty()) throw ConfigError("llm.model_name must not be empty");
  if (!(temperature >= 0.0)) throw ConfigError("llm.temperature must be >= 0");
  if (max_output_tokens < 1) throw ConfigError("llm.max_output_tokens must be >= 1");
  if (!(timeout_seconds > 0.0)) throw ConfigError("llm.timeout_seconds must be > 0");
  if (max_retries < 0) throw ConfigError("llm.max_retries must be >= 0");
  if (max_concurrent < 1) throw ConfigError("llm.max_concurrent must be >= 1");
  if (!(backoff_base_seconds >= 0.0)) throw ConfigError("llm.backoff_base_seconds must be >= 0");
  if (!(max_failure_fraction >= 0.0 && max_failure_fraction <= 1.0)) {
    throw ConfigError("llm.max_failure_fraction must lie in [0, 1]");
  }
}

std::string chat_request_body(const LlmClientConfig& config, std::string_view prompt) {
  json body = {{"model", config.model_name},
               {"temperature", config.temperature},
               {"max_tokens", config.max_output_tokens},
               {"messages", json::array({{{"role", "user"}, {"content", std::string(prompt)}}})}};
  return body.dump();
}

std::string parse_chat_reply(std::string_view body) {
  try {
    auto j = json::parse(body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed chat-completions reply: ") + e.what());
  }
}

HttpChatBackend::HttpChatBackend(LlmClientConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& url = config_.base_url;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("llm.base_url needs a scheme: " + url);
  auto path_begin = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_begin);
  path_prefix_ = path_begin == std::string::npos ? "" : url.substr(path_begin);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

std::string HttpChatBackend::complete(const std::string& prompt) {
  const std::string path = path_prefix_ + "/chat/completions";
  const std::string body = chat_request_body(config_, prompt);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  thread_local std::mt19937_64 jitter_rng(std::random_device{}());
  std::uniform_real_distribution<double> jitter(0.75, 1.25);

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      double delay = config_.backoff_base_seconds * std::pow(2.0, attempt - 1) * jitter(jitter_rng);
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    httplib::Client cli(scheme_host_port_);
    auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(config_.timeout_seconds));
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);

    auto res = cli.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) return parse_chat_reply(res->body);
    if (res->status == 400 && res->body.find("context_length_exceeded") != std::string::npos) {
      throw ContextLengthError("prompt exceeds the model context window");
    }
    last_error = "HTTP " + std::to_string(res->status);
  }
  throw TransportError(last_error + " after " + std::to_string(config_.max_retries + 1) +
                       " attempts to " + scheme_host_port_ + path);
}

std::string_view to_string(MockMode mode) {
  return mode == MockMode::marker ? "marker" : "paper";
}

MockMode parse_mock_mode(std::string_view name) {
  if (name == "marker") return MockMode::marker;
  if (name == "paper") return MockMode::paper;
  throw ConfigError("unknown mock mode '" + std::string(name) + "' (expected marker or paper)");
}

int snap_to_paper_value(int u) {
  int best = kPaperRiskValues.front();
  for (int v : kPaperRiskValues) {
    if (std::abs(v - u) < std::abs(best - u)) best = v;
  }
  return best;
}

GptAnswers mock_answers(int u, MockMode mode) {
  int base = mode == MockMode::paper ? snap_to_paper_value(u) : u;
  int offset = (base * 37) % 11 - 5;
  return {base, std::clamp(base + offset, 1, 100), 101 - base};
}

std::string MockChatBackend::complete(const std::string& prompt) {
  calls_.fetch_add(1);
  auto pos = prompt.find(kSeverityMarker);
  if (pos != std::string::npos) {
    pos += kSeverityMarker.size();
    while (pos < prompt.size() && prompt[pos] == ' ') ++pos;
    int u = 0;
    auto [ptr, ec] = std::from_chars(prompt.data() + pos, prompt.data() + prompt.size(), u);
    if (ec == std::errc() && u >= 1 && u <= 100) {
      return "Based on the discharge note:\n" + render_answers(mock_answers(u, mode_));
    }
  }
  return "I am unable to assess this note.";
}

std::string MockChatBackend::model_name() const {
  return "mock-" + std::string(to_string(mode_));
}

LlmClient::LlmClient(LlmClientConfig config, std::shared_ptr<ChatBackend> backend,
                     std::shared_ptr<PromptCache> cache, PromptTemplate prompt_template)
    : config_(std::move(config)),
      backend_(std::move(backend)),
      cache_(cache ? std::move(cache) : std::make_shared<PromptCache>()),
      template_(std::move(prompt_template)),
      in_flight_(std::max(config_.max_concurrent, 1)) {
  config_.validate();
  if (!backend_) throw ConfigError("LlmClient needs a backend");
}

std::string LlmClient::key_for(std::string_view note_text) const {
  return cache_key(backend_->model_name(), build_prompt(template_, note_text));
}

GptAnswers LlmClient::fetch_answers(std::string_view note_text) {
  const std::string prompt = build_prompt(template_, note_text);
  const std::string model = backend_->model_name();
  const std::string key = cache_key(model, prompt);
  if (auto hit = cache_->lookup(key)) {
    hits_.fetch_add(1);
    return hit->answers;
  }
  misses_.fetch_add(1);

  std::string last_raw;
  std::string last_problem;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    std::string raw;
    {
      in_flight_.acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{in_flight_};
      backend_calls_.fetch_add(1);
      raw = backend_->complete(prompt);
    }
    try {
      GptAnswers answers = parse_response(raw);
      cache_->store({key, model, raw, answers, utc_timestamp_now()});
      return answers;
    } catch (const ResponseError& e) {
      last_raw = raw;
      last_problem = e.what();
    }
  }
  throw UnparsableError("no parsable reply after " + std::to_string(config_.max_retries + 1) +
                            " attempts: " + last_problem,
                        last_raw);
}

FeaturizationResult featurize_cohort(LlmClient& client, const Cohort& cohort) {
  // Patients sharing a note share a request.
  std::map<std::string, std::size_t> key_slot;
  std::vector<std::size_t> first_record;  // slot -> representative record
  std::vector<std::size_t> slot_of(cohort.records.size());
  for (std::size_t i = 0; i < cohort.records.size(); ++i) {
    const auto& r = cohort.records[i];
    if (r.note_text.empty()) throw DataError("patient '" + r.patient_id + "' has an empty note");
    auto [it, inserted] = key_slot.try_emplace(client.key_for(r.note_text), first_record.size());
    if (inserted) first_record.push_back(i);
    slot_of[i] = it->second;
  }

  struct SlotResult {
    std::optional<GptAnswers> answers;
    std::string error;
    bool transport = false;
  };
  std::vector<SlotResult> outcomes(first_record.size());
  const auto hits_before = client.cache_hits();
  const auto misses_before = client.cache_misses();

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t s = next.fetch_add(1); s < first_record.size(); s = next.fetch_add(1)) {
      try {
        outcomes[s].answers = client.fetch_answers(cohort.records[first_record[s]].note_text);
      } catch (const TransportError& e) {
        outcomes[s].error = std::string("transport: ") + e.what();
        outcomes[s].transport = true;
      } catch (const ContextLengthError& e) {
        outcomes[s].error = std::string("context length: ") + e.what();
      } catch (const UnparsableError& e) {
        outcomes[s].error = std::string("unparsable: ") + e.what();
      }
    }
  };
  std::size_t n_workers =
      std::min<std::size_t>(static_cast<std::size_t>(client.config().max_concurrent),
                            first_record.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
  }

  FeaturizationResult result;
  bool any_transport = false;
  for (std::size_t i = 0; i < cohort.records.size(); ++i) {
    const auto& o = outcomes[slot_of[i]];
    const auto& id = cohort.records[i].patient_id;
    if (o.answers) {
      result.answers.emplace(id, *o.answers);
    } else {
      result.failures.emplace(id, o.error);
      any_transport = any_transport || o.transport;
    }
  }
  result.cache_hits = client.cache_hits() - hits_before;
  result.cache_misses = client.cache_misses() - misses_before;

  if (!cohort.records.empty()) {
    double failed = static_cast<double>(result.failures.size()) /
                    static_cast<double>(cohort.records.size());
    if (failed > client.config().max_failure_fraction) {
      std::string msg = "featurization failed for " + std::to_string(result.failures.size()) +
                        " of " + std::to_string(cohort.records.size()) + " patients; first: " +
                        result.failures.begin()->first + ": " + result.failures.begin()->second;
      if (any_transport) throw TransportError(msg);
      throw LlmError(msg);
    }
  }
  return result;
}

}  // namespace noterisk
