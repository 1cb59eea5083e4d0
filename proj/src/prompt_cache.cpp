#include "noterisk/prompt_cache.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"
#include "noterisk/error.hpp"

namespace noterisk {

using nlohmann::json;

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string cache_key(std::string_view model_name, std::string_view prompt) {
  std::string material;
  material.reserve(model_name.size() + 1 + prompt.size());
  material.append(model_name);
  material.push_back('\0');
  material.append(prompt);
  return sha256_hex(material);
}

std::string utc_timestamp_now() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

json to_json(const PromptCacheRecord& r) {
  return json{{"key", r.key},
              {"model_name", r.model_name},
              {"raw_response", r.raw_response},
              {"answers",
               {{"risk_death", r.answers.risk_death},
                {"risk_readmit", r.answers.risk_readmit},
                {"overall_health", r.answers.overall_health}}},
              {"created_at", r.created_at}};
}

PromptCacheRecord from_json(const json& j) {
  PromptCacheRecord r;
  r.key = j.at("key").get<std::string>();
  r.model_name = j.at("model_name").get<std::string>();
  r.raw_response = j.at("raw_response").get<std::string>();
  const auto& a = j.at("answers");
  r.answers.risk_death = a.at("risk_death").get<int>();
  r.answers.risk_readmit = a.at("risk_readmit").get<int>();
  r.answers.overall_health = a.at("overall_health").get<int>();
  r.created_at = j.at("created_at").get<std::string>();
  return r;
}

}  // namespace

PromptCache::PromptCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(*path_, std::ios::binary);
  if (!in) return;
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  needs_newline_ = !content.empty() && content.back() != '\n';
  std::istringstream lines(content);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    try {
      auto record = from_json(json::parse(line));
      if (record.key.size() != 64 || !record.answers.valid()) {
        ++skipped_lines_;
        continue;
      }
      records_.insert_or_assign(record.key, std::move(record));
    } catch (const json::exception&) {
      ++skipped_lines_;
    }
  }
}

std::optional<PromptCacheRecord> PromptCache::lookup(const std::string& key) const {
  std::shared_lock lock(mutex_);
  auto it = records_.find(key);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

void PromptCache::store(const PromptCacheRecord& record) {
  std::unique_lock lock(mutex_);
  if (path_) {
    if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
    std::ofstream out(*path_, std::ios::app | std::ios::binary);
    if (!out) throw DataError("cannot append to prompt cache " + path_->string());
    if (needs_newline_) {
      out << '\n';
      needs_newline_ = false;
    }
    out << to_json(record).dump() << '\n';
    out.flush();
    if (!out) throw DataError("write failed for prompt cache " + path_->string());
  }
  records_.insert_or_assign(record.key, record);
}

std::size_t PromptCache::size() const {
  std::shared_lock lock(mutex_);
  return records_.size();
}

}  // namespace noterisk
