#pragma once

#include <string>
#include <string_view>

namespace noterisk {

// The three answers to the fixed clinical questions, each an integer in 1..100.
struct GptAnswers {
  int risk_death = 0;
  int risk_readmit = 0;
  int overall_health = 0;

  bool valid() const;
  bool operator==(const GptAnswers&) const = default;
};

// Prompt text with exactly one note placeholder.
class PromptTemplate {
 public:
  static constexpr std::string_view kPlaceholder = "{{NOTE}}";

  // The discharge-note prompt: context line, note, three questions, format
  // instruction and the example answer line.
  static PromptTemplate standard();

  // Throws ConfigError unless `text` contains kPlaceholder exactly once.
  explicit PromptTemplate(std::string text);

  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

// Substitutes the note into the template. Throws DataError on an empty note.
std::string build_prompt(const PromptTemplate& prompt_template, std::string_view note_text);

// Extracts `1. a; 2. b; 3. c` from a model reply. Leading/trailing prose,
// newlines, extra whitespace and a missing final semicolon are tolerated.
// Throws FormatError when there are not exactly three numbered values and
// RangeError when a value is fractional or outside [1, 100].
GptAnswers parse_response(std::string_view raw);

// Canonical reply text for a triple: "1. a; 2. b; 3. c;".
std::string render_answers(const GptAnswers& answers);

}  // namespace noterisk
