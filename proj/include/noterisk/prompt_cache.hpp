#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>

#include "noterisk/prompt.hpp"

namespace noterisk {

struct PromptCacheRecord {
  std::string key;  // SHA-256 hex of the model name and rendered prompt
  std::string model_name;
  std::string raw_response;
  GptAnswers answers;
  std::string created_at;  // UTC, ISO 8601
};

// SHA-256 of model_name, a NUL byte, then the prompt, as 64 lowercase hex chars.
std::string cache_key(std::string_view model_name, std::string_view prompt);

std::string sha256_hex(std::string_view data);

std::string utc_timestamp_now();

// Append-only JSON Lines store keyed by cache_key. On load, later lines for a
// key replace earlier ones and unreadable lines (a torn final write) are
// skipped. Lookups may run concurrently; appends go through one writer lock.
class PromptCache {
 public:
  // In-memory only.
  PromptCache() = default;
  // Loads `path` if it exists; subsequent stores are appended to it.
  explicit PromptCache(std::filesystem::path path);

  std::optional<PromptCacheRecord> lookup(const std::string& key) const;
  void store(const PromptCacheRecord& record);

  std::size_t size() const;
  std::size_t skipped_lines() const { return skipped_lines_; }
  const std::optional<std::filesystem::path>& path() const { return path_; }

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, PromptCacheRecord> records_;
  std::size_t skipped_lines_ = 0;
  bool needs_newline_ = false;  // file ends in a torn line
};

}  // namespace noterisk
