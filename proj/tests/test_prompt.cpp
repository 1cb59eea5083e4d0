#include <fstream>
#include <random>
#include <set>
#include <thread>

#include "doctest.h"
#include "json.hpp"
#include "noterisk/csv.hpp"
#include "noterisk/error.hpp"
#include "noterisk/prompt.hpp"
#include "noterisk/prompt_cache.hpp"
#include "oracles.hpp"

using namespace noterisk;

TEST_CASE("build_prompt substitutes the note into the fixed template") {
  auto t = PromptTemplate::standard();
  std::string p = build_prompt(t, "ABC");
  CHECK(p.find("The note text is: ABC") != std::string::npos);
  CHECK(p.find("1. What is the patient's risk of death?") != std::string::npos);
  CHECK(p.find("2. What is the patient's risk of readmission? (Rate no risk = 1 to very high risk = 100)") !=
        std::string::npos);
  CHECK(p.find("3. How would you rate the patient's overall health? (Rate very ill = 1 to perfect = 100)") !=
        std::string::npos);
  CHECK(p.find("Provide your answers as a semicolon-delimited list in the same order as the questions.") !=
        std::string::npos);
  CHECK(p.find("Example: 1. #; 2. #; 3. #;") != std::string::npos);
  CHECK(p.rfind("Please read the following physician discharge note and answer the questions listed below.\n", 0) ==
        0);
  CHECK(build_prompt(t, "ABC") == p);
  CHECK(p.find(PromptTemplate::kPlaceholder) == std::string::npos);
  CHECK_THROWS_AS(build_prompt(t, ""), DataError);

  CHECK_THROWS_AS(PromptTemplate("no placeholder"), ConfigError);
  CHECK_THROWS_AS(PromptTemplate("{{NOTE}} twice {{NOTE}}"), ConfigError);
  // A note that itself contains the placeholder text is inserted verbatim.
  CHECK(build_prompt(PromptTemplate("<{{NOTE}}>"), "x{{NOTE}}y") == "<x{{NOTE}}y>");
}

TEST_CASE("parse_response accepts the canonical and tolerant forms") {
  CHECK(parse_response("1. 70; 2. 50; 3. 30;") == GptAnswers{70, 50, 30});
  CHECK(parse_response("Sure!\n1. 10;  2. 10;\n3. 100") == GptAnswers{10, 10, 100});
  CHECK(parse_response("  1.70;2.50;3.30  ") == GptAnswers{70, 50, 30});
  CHECK(parse_response("Here you go:\n1. 5\n2. 6\n3. 7\nThanks.") == GptAnswers{5, 6, 7});
  CHECK(parse_response("1. 40.0; 2. 50; 3. 30;") == GptAnswers{40, 50, 30});
}

TEST_CASE("parse_response errors carry the raw reply") {
  try {
    parse_response("1. 0; 2. 50; 3. 30;");
    FAIL("expected RangeError");
  } catch (const RangeError& e) {
    CHECK(e.raw == "1. 0; 2. 50; 3. 30;");
  }
  try {
    parse_response("no idea");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.raw == "no idea");
  }
}

TEST_CASE("malformed reply fixture") {
  auto cases = nlohmann::json::parse(read_file(std::filesystem::path(NOTERISK_TEST_DATA) /
                                               "malformed_responses.json"));
  REQUIRE(cases.size() == 10);
  for (const auto& c : cases) {
    const std::string raw = c.at("raw");
    const std::string kind = c.at("error");
    CAPTURE(raw);
    if (kind == "format") {
      CHECK_THROWS_AS(parse_response(raw), FormatError);
    } else {
      CHECK_THROWS_AS(parse_response(raw), RangeError);
    }
  }
}

TEST_CASE("render then parse is the identity") {
  for (int a : {1, 100})
    for (int b : {1, 100})
      for (int c : {1, 100}) CHECK(parse_response(render_answers({a, b, c})) == GptAnswers{a, b, c});
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> u(1, 100);
  for (int i = 0; i < 500; ++i) {
    GptAnswers g{u(rng), u(rng), u(rng)};
    CHECK(parse_response(render_answers(g)) == g);
  }
  CHECK(render_answers({70, 50, 30}) == "1. 70; 2. 50; 3. 30;");
}

TEST_CASE("cache keys") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  std::string k = cache_key("m", "prompt");
  CHECK(k.size() == 64);
  CHECK(k.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(cache_key("m", "prompt") == k);
  CHECK(cache_key("m", "prompT") != k);
  CHECK(cache_key("n", "prompt") != k);
  // The separator keeps (model, prompt) boundaries distinct.
  CHECK(cache_key("ab", "c") != cache_key("a", "bc"));
}

namespace {

PromptCacheRecord make_record(const std::string& model, const std::string& prompt, GptAnswers a) {
  return {cache_key(model, prompt), model, render_answers(a), a, utc_timestamp_now()};
}

}  // namespace

TEST_CASE("prompt cache persists, keeps the last record and skips torn lines") {
  oracle::TempDir tmp("cache");
  const auto path = tmp.path / "cache.jsonl";
  {
    PromptCache cache(path);
    CHECK(cache.size() == 0);
    cache.store(make_record("m", "p1", {1, 2, 3}));
    cache.store(make_record("m", "p2", {4, 5, 6}));
    cache.store(make_record("m", "p1", {7, 8, 9}));
    CHECK(cache.size() == 2);
    CHECK(cache.lookup(cache_key("m", "p1"))->answers == GptAnswers{7, 8, 9});
  }
  {
    PromptCache cache(path);
    CHECK(cache.size() == 2);
    CHECK(cache.lookup(cache_key("m", "p1"))->answers == GptAnswers{7, 8, 9});
    CHECK(cache.lookup(cache_key("m", "p2"))->raw_response == "1. 4; 2. 5; 3. 6;");
    CHECK_FALSE(cache.lookup(cache_key("m", "p3")).has_value());
  }

  // Every line has the documented fields.
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    for (const char* f : {"key", "model_name", "raw_response", "answers", "created_at"}) {
      CHECK(j.contains(f));
    }
    CHECK(j.at("created_at").get<std::string>().back() == 'Z');
  }

  // Simulate a crash mid-write, then keep appending.
  {
    std::ofstream out(path, std::ios::app);
    out << R"({"key": "abc", "model_na)";
  }
  {
    PromptCache cache(path);
    CHECK(cache.size() == 2);
    CHECK(cache.skipped_lines() == 1);
    cache.store(make_record("m", "p3", {10, 11, 12}));
  }
  PromptCache cache(path);
  CHECK(cache.size() == 3);
  CHECK(cache.lookup(cache_key("m", "p3"))->answers == GptAnswers{10, 11, 12});
}

TEST_CASE("prompt cache tolerates concurrent writers and readers") {
  oracle::TempDir tmp("cache-mt");
  PromptCache cache(tmp.path / "c.jsonl");
  std::vector<std::jthread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&cache, t] {
      for (int i = 0; i < 50; ++i) {
        std::string prompt = "p" + std::to_string(t) + "-" + std::to_string(i);
        cache.store(make_record("m", prompt, {t + 1, i + 1, 3}));
        CHECK(cache.lookup(cache_key("m", prompt)).has_value());
      }
    });
  }
  threads.clear();
  CHECK(cache.size() == 400);
  PromptCache reloaded(tmp.path / "c.jsonl");
  CHECK(reloaded.size() == 400);
  CHECK(reloaded.skipped_lines() == 0);
}
