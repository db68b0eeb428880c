#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "choicelab/error.hpp"
#include "choicelab/task_battery.hpp"

namespace choicelab::parsing {

using battery::LikertOrder;
using battery::ParseSchema;

struct RawResponse {
  std::string full_text;
  std::optional<std::string> thinking_trace;
  std::string answer_text;
};

struct Delimiters {
  std::string open = "<think>";
  std::string close = "</think>";
};

// First well-formed trace becomes thinking_trace; an unclosed trace leaves
// answer_text equal to the full text.
RawResponse split_thinking(std::string_view full_text, const Delimiters& delims = {});

enum class Confidence { Exact, Normalized, Failed };
std::string_view to_string(Confidence c);

struct ParsedOutcome {
  ParseSchema kind = ParseSchema::BinaryChoice;
  Confidence confidence = Confidence::Failed;
  // binary_choice / option_echo: displayed index (0 = first shown option).
  // resolve_canonical() rewrites it to the canonical option index.
  std::optional<int> option;
  bool indifferent = false;
  std::optional<bool> accept;
  std::optional<int> score;      // likert and assistance, 1..5
  std::optional<double> amount;  // price and give_amount
  std::optional<ErrorCode> error;  // PARSE_FAILED or OUT_OF_RANGE when failed

  bool ok() const { return confidence != Confidence::Failed; }
};

// Lowercase, punctuation to spaces, whitespace collapsed. '$', '%' and a '.'
// between digits survive so amounts stay comparable.
std::string normalize_text(std::string_view text);

// Variant table mapping free-form phrasings to canonical labels.
class LabelTable {
 public:
  LabelTable() = default;
  LabelTable(std::span<const std::string_view> labels, const assets::Table& variants);
  static const LabelTable& likert();      // from assets, loaded once
  static const LabelTable& assistance();

  // Canonical label index, or nullopt.
  std::optional<int> lookup(std::string_view text, bool* exact = nullptr) const;
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  std::vector<std::string> labels_;
  std::vector<std::pair<std::string, int>> variants_;  // normalized, longest first
};

struct BinaryChoiceSchema {
  std::vector<std::string> labels{"A", "B"};
  std::vector<std::string> option_texts;  // displayed order
  bool allow_indifferent = true;
};

ParsedOutcome parse_binary_choice(std::string_view answer, const BinaryChoiceSchema& schema);
ParsedOutcome parse_option_echo(std::string_view answer, std::span<const std::string> displayed_options);
ParsedOutcome parse_likert(std::string_view answer, LikertOrder order);
ParsedOutcome parse_price(std::string_view answer);
ParsedOutcome parse_accept_reject(std::string_view answer);
ParsedOutcome parse_give_amount(std::string_view answer, std::span<const int> allowed);
ParsedOutcome parse_assistance(std::string_view answer);

// Dispatch on the trial's schema; choice indices come back canonical.
ParsedOutcome parse_for_trial(const battery::TrialSpec& trial, std::string_view answer);

// Displayed index to canonical index through trial.option_order.
ParsedOutcome resolve_canonical(ParsedOutcome outcome, const battery::TrialSpec& trial);

// A canonical answer string that parses back to `outcome` (displayed indices).
std::string render_answer(const ParsedOutcome& outcome, std::span<const std::string> displayed_options = {});

}  // namespace choicelab::parsing
