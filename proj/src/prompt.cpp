#include "noterisk/prompt.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>
#include <vector>

#include "noterisk/error.hpp"

namespace noterisk {

bool GptAnswers::valid() const {
  auto ok = [](int v) { return v >= 1 && v <= 100; };
  return ok(risk_death) && ok(risk_readmit) && ok(overall_health);
}

PromptTemplate PromptTemplate::standard() {
  return PromptTemplate(
      "Please read the following physician discharge note and answer the questions listed "
      "below.\n"
      "The note text is: {{NOTE}}\n"
      "\n"
      "Questions:\n"
      "1. What is the patient's risk of death? (Rate no risk = 1 to very high risk = 100)\n"
      "2. What is the patient's risk of readmission? (Rate no risk = 1 to very high risk = 100)\n"
      "3. How would you rate the patient's overall health? (Rate very ill = 1 to perfect = 100)\n"
      "\n"
      "Instructions:\n"
      "Provide your answers as a semicolon-delimited list in the same order as the questions.\n"
      "Example: 1. #; 2. #; 3. #;");
}

PromptTemplate::PromptTemplate(std::string text) : text_(std::move(text)) {
  auto first = text_.find(kPlaceholder);
  if (first == std::string::npos ||
      text_.find(kPlaceholder, first + kPlaceholder.size()) != std::string::npos) {
    throw ConfigError("prompt template must contain the placeholder " +
                      std::string(kPlaceholder) + " exactly once");
  }
}

std::string build_prompt(const PromptTemplate& prompt_template, std::string_view note_text) {
  if (note_text.empty()) throw DataError("cannot build a prompt for an empty note");
  const auto& t = prompt_template.text();
  auto pos = t.find(PromptTemplate::kPlaceholder);
  std::string out;
  out.reserve(t.size() + note_text.size());
  out.append(t, 0, pos);
  out.append(note_text);
  out.append(t, pos + PromptTemplate::kPlaceholder.size());
  return out;
}

namespace {

// One "<ordinal>. <value>" occurrence.
struct NumberedItem {
  int ordinal;
  std::string value;
  std::size_t begin;
  std::size_t end;
};

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::vector<NumberedItem> scan_items(std::string_view s) {
  std::vector<NumberedItem> items;
  std::size_t i = 0;
  while (i < s.size()) {
    // An ordinal starts at a digit that is not glued to a preceding word,
    // number or decimal point.
    bool boundary = i == 0 || !(std::isalnum(static_cast<unsigned char>(s[i - 1])) ||
                                s[i - 1] == '.' || s[i - 1] == '-' || s[i - 1] == '+');
    if (!is_digit(s[i]) || !boundary) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && is_digit(s[j])) ++j;
    std::size_t k = j;
    while (k < s.size() && (s[k] == ' ' || s[k] == '\t')) ++k;
    if (k >= s.size() || s[k] != '.' || j - i > 2) {
      i = j;
      continue;
    }
    ++k;
    // The value: an optionally signed decimal number on the same line.
    while (k < s.size() && (s[k] == ' ' || s[k] == '\t')) ++k;
    std::size_t v = k;
    if (v < s.size() && (s[v] == '-' || s[v] == '+')) ++v;
    std::size_t digits_begin = v;
    while (v < s.size() && is_digit(s[v])) ++v;
    if (v == digits_begin) {
      i = j;
      continue;
    }
    if (v + 1 < s.size() && s[v] == '.' && is_digit(s[v + 1])) {
      ++v;
      while (v < s.size() && is_digit(s[v])) ++v;
    }
    int ordinal = 0;
    std::from_chars(s.data() + i, s.data() + j, ordinal);
    items.push_back({ordinal, std::string(s.substr(k, v - k)), i, v});
    i = v;
  }
  return items;
}

// Only whitespace and list punctuation may separate consecutive items.
bool only_separators(std::string_view s) {
  int semicolons = 0;
  for (char c : s) {
    if (c == ';' || c == ',') {
      if (++semicolons > 1) return false;
    } else if (!is_space(c)) {
      return false;
    }
  }
  return true;
}

int to_answer(const std::string& token, std::string_view raw) {
  double value = 0.0;
  const char* first = token.data();
  if (*first == '+') ++first;
  auto res = std::from_chars(first, token.data() + token.size(), value);
  if (res.ec != std::errc()) throw RangeError("answer '" + token + "' is not a number", std::string(raw));
  if (value != std::floor(value)) {
    throw RangeError("answer '" + token + "' is not an integer", std::string(raw));
  }
  if (value < 1.0 || value > 100.0) {
    throw RangeError("answer '" + token + "' is outside [1, 100]", std::string(raw));
  }
  return static_cast<int>(value);
}

}  // namespace

GptAnswers parse_response(std::string_view raw) {
  auto items = scan_items(raw);
  for (std::size_t a = 0; a + 2 < items.size(); ++a) {
    if (items[a].ordinal != 1 || items[a + 1].ordinal != 2 || items[a + 2].ordinal != 3) continue;
    bool linked = true;
    for (std::size_t b = a; b < a + 2; ++b) {
      if (!only_separators(raw.substr(items[b].end, items[b + 1].begin - items[b].end))) {
        linked = false;
      }
    }
    if (!linked) continue;
    if (a + 3 < items.size() && items[a + 3].ordinal == 4 &&
        only_separators(raw.substr(items[a + 2].end, items[a + 3].begin - items[a + 2].end))) {
      throw FormatError("expected three numbered answers, found a fourth", std::string(raw));
    }
    GptAnswers out;
    out.risk_death = to_answer(items[a].value, raw);
    out.risk_readmit = to_answer(items[a + 1].value, raw);
    out.overall_health = to_answer(items[a + 2].value, raw);
    return out;
  }
  throw FormatError("reply does not contain a '1. #; 2. #; 3. #' answer list", std::string(raw));
}

std::string render_answers(const GptAnswers& answers) {
  return "1. " + std::to_string(answers.risk_death) + "; 2. " +
         std::to_string(answers.risk_readmit) + "; 3. " + std::to_string(answers.overall_health) +
         ";";
}

}  // namespace noterisk
