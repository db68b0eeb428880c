#include "choicelab/response_parsing.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <regex>
#include <set>

namespace choicelab::parsing {
namespace {

// strtod never throws; overflow gives inf, which later range checks reject.
double to_number(const std::string& s) { return std::strtod(s.c_str(), nullptr); }

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && is_space(s[a])) ++a;
  while (b > a && is_space(s[b - 1])) --b;
  return std::string(s.substr(a, b - a));
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Drop markdown emphasis, wrapping quotes/brackets, an "Answer:" style lead-in
// and trailing punctuation.
std::string strip_answer(std::string_view text) {
  std::string s = trim(text);
  static const std::regex lead(R"(^(?:\*\*)?\s*(?:final\s+answer|answer|my\s+answer|response|choice)\s*(?:\*\*)?\s*[:\-]\s*(?:\*\*)?\s*)",
                               std::regex::icase);
  for (int pass = 0; pass < 3; ++pass) {
    const std::string before = s;
    s = std::regex_replace(s, lead, "", std::regex_constants::format_first_only);
    while (!s.empty() && std::string_view("*\"'`([").find(s.front()) != std::string_view::npos) s.erase(0, 1);
    while (!s.empty() && std::string_view("*\"'`)].!").find(s.back()) != std::string_view::npos) s.pop_back();
    s = trim(s);
    if (s == before) break;
  }
  return s;
}

std::vector<std::string> nonempty_lines(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = trim(text.substr(start, end - start));
    if (!line.empty()) out.push_back(std::move(line));
    start = end + 1;
  }
  return out;
}

// The whole answer first, then its last and first lines.
std::vector<std::string> candidates(std::string_view text) {
  std::vector<std::string> out{std::string(text)};
  const auto lines = nonempty_lines(text);
  if (lines.size() > 1) {
    out.push_back(lines.back());
    out.push_back(lines.front());
  }
  return out;
}

// Word-bounded substring search on normalized text.
std::vector<std::size_t> find_words(const std::string& hay, const std::string& needle) {
  std::vector<std::size_t> hits;
  if (needle.empty()) return hits;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) {
    const bool left = pos == 0 || hay[pos - 1] == ' ';
    const auto end = pos + needle.size();
    const bool right = end == hay.size() || hay[end] == ' ';
    if (left && right) hits.push_back(pos);
  }
  return hits;
}

ParsedOutcome failed(ParseSchema kind, ErrorCode code = ErrorCode::ParseFailed) {
  ParsedOutcome o;
  o.kind = kind;
  o.confidence = Confidence::Failed;
  o.error = code;
  return o;
}

ParsedOutcome success(ParseSchema kind, bool exact) {
  ParsedOutcome o;
  o.kind = kind;
  o.confidence = exact ? Confidence::Exact : Confidence::Normalized;
  return o;
}

std::optional<int> explicit_option_number(const std::string& norm, int n) {
  static const std::regex re(R"(^(?:option |choice |number )?([0-9]+)$)");
  std::smatch m;
  if (!std::regex_match(norm, m, re)) return std::nullopt;
  if (m[1].length() > 3) return std::nullopt;
  const int k = std::stoi(m[1].str());
  if (k < 1 || k > n) return std::nullopt;
  return k - 1;
}

std::optional<int> match_option_text(const std::string& text, std::span<const std::string> options, bool* exact) {
  const std::string stripped = strip_answer(text);
  const std::string nt = normalize_text(stripped);
  if (nt.empty()) return std::nullopt;
  std::vector<std::string> norm;
  for (const auto& o : options) norm.push_back(normalize_text(o));

  for (std::size_t i = 0; i < options.size(); ++i) {
    if (nt == norm[i]) {
      std::string bare = trim(options[i]);
      while (!bare.empty() && bare.back() == '.') bare.pop_back();
      *exact = trim(text) == trim(options[i]) || stripped == bare;
      return static_cast<int>(i);
    }
  }
  *exact = false;
  std::vector<int> contained;
  for (std::size_t i = 0; i < options.size(); ++i)
    if (!find_words(nt, norm[i]).empty()) contained.push_back(static_cast<int>(i));
  if (contained.size() == 1) return contained[0];
  if (contained.size() > 1) return std::nullopt;

  if (auto k = explicit_option_number(nt, static_cast<int>(options.size()))) return k;

  // Partial echo: tokens unique to one option.
  std::vector<std::set<std::string>> tokens(options.size());
  for (std::size_t i = 0; i < options.size(); ++i) {
    std::size_t a = 0;
    while (a < norm[i].size()) {
      auto b = norm[i].find(' ', a);
      if (b == std::string::npos) b = norm[i].size();
      tokens[i].insert(norm[i].substr(a, b - a));
      a = b + 1;
    }
  }
  std::vector<int> hits(options.size(), 0);
  for (std::size_t i = 0; i < options.size(); ++i)
    for (const auto& tok : tokens[i]) {
      bool unique = true;
      for (std::size_t j = 0; j < options.size(); ++j)
        if (j != i && tokens[j].count(tok)) unique = false;
      if (unique && (tok.size() > 2 || tok.front() == '$') && !find_words(nt, tok).empty()) ++hits[i];
    }
  int best = -1, nonzero = 0;
  for (std::size_t i = 0; i < hits.size(); ++i)
    if (hits[i] > 0) {
      ++nonzero;
      best = static_cast<int>(i);
    }
  if (nonzero == 1) return best;
  return std::nullopt;
}

std::optional<int> likert_position(std::string_view answer, int n) {
  static const std::regex re(R"(^option\s+([0-9]+)$)", std::regex::icase);
  std::cmatch m;
  const std::string s = strip_answer(answer);
  if (!std::regex_match(s.c_str(), m, re)) return std::nullopt;
  if (m[1].length() > 3) return std::nullopt;
  const int k = std::stoi(m[1].str());
  if (k < 1 || k > n) return std::nullopt;
  return k - 1;
}

std::string money_string(double v) {
  char buf[64];
  if (std::abs(v - std::round(v)) < 1e-9) {
    std::snprintf(buf, sizeof buf, "$%.0f", v);
  } else {
    std::snprintf(buf, sizeof buf, "$%.2f", v);
  }
  return buf;
}

}  // namespace

std::string_view to_string(Confidence c) {
  switch (c) {
    case Confidence::Exact: return "exact";
    case Confidence::Normalized: return "normalized";
    case Confidence::Failed: return "failed";
  }
  return "failed";
}

RawResponse split_thinking(std::string_view full_text, const Delimiters& d) {
  RawResponse r;
  r.full_text = std::string(full_text);
  r.answer_text = r.full_text;
  const auto open = full_text.find(d.open);
  if (open == std::string_view::npos) return r;
  const auto close = full_text.find(d.close, open + d.open.size());
  if (close == std::string_view::npos) return r;
  r.thinking_trace = std::string(full_text.substr(open + d.open.size(), close - open - d.open.size()));
  std::string rest = std::string(full_text.substr(0, open)) + std::string(full_text.substr(close + d.close.size()));
  // later well-formed blocks are deliberation too
  for (;;) {
    const auto o = rest.find(d.open);
    if (o == std::string::npos) break;
    const auto c = rest.find(d.close, o + d.open.size());
    if (c == std::string::npos) break;
    rest.erase(o, c + d.close.size() - o);
  }
  r.answer_text = trim(rest);
  return r;
}

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool space = true;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    const bool digit_dot = c == '.' && i > 0 && i + 1 < text.size() &&
                           std::isdigit(static_cast<unsigned char>(text[i - 1])) &&
                           std::isdigit(static_cast<unsigned char>(text[i + 1]));
    const bool digit_comma = c == ',' && i > 0 && i + 1 < text.size() &&
                             std::isdigit(static_cast<unsigned char>(text[i - 1])) &&
                             std::isdigit(static_cast<unsigned char>(text[i + 1]));
    if (digit_comma) continue;  // 1,200 -> 1200
    if (std::isalnum(c) || c == '$' || c == '%' || digit_dot || c >= 0x80) {
      out.push_back(static_cast<char>(std::tolower(c)));
      space = false;
    } else if (!space) {
      out.push_back(' ');
      space = true;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

// ---- label tables ----------------------------------------------------------

LabelTable::LabelTable(std::span<const std::string_view> labels, const assets::Table& variants) {
  for (auto l : labels) labels_.emplace_back(l);
  auto index_of = [&](const std::string& canon) {
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (normalize_text(labels_[i]) == normalize_text(canon)) return static_cast<int>(i);
    throw Error(ErrorCode::Validation, variants.name + ": unknown canonical label '" + canon + "'");
  };
  for (std::size_t i = 0; i < labels_.size(); ++i) variants_.emplace_back(normalize_text(labels_[i]), static_cast<int>(i));
  for (std::size_t r = 0; r < variants.size(); ++r)
    variants_.emplace_back(normalize_text(variants.at(r, "variant")), index_of(variants.at(r, "canonical")));
  std::stable_sort(variants_.begin(), variants_.end(),
                   [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
}

const LabelTable& LabelTable::likert() {
  static const LabelTable t(battery::kLikertLabels,
                            assets::load_table(assets::default_asset_dir() / "likert_normalization.tsv"));
  return t;
}

const LabelTable& LabelTable::assistance() {
  static const LabelTable t(battery::kAssistanceLabels,
                            assets::load_table(assets::default_asset_dir() / "assistance_normalization.tsv"));
  return t;
}

std::optional<int> LabelTable::lookup(std::string_view text, bool* exact) const {
  if (exact) *exact = false;
  const std::string stripped = strip_answer(text);
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (stripped == labels_[i]) {
      if (exact) *exact = true;
      return static_cast<int>(i);
    }
  const std::string whole = normalize_text(stripped);
  for (const auto& [v, idx] : variants_)
    if (whole == v) return idx;

  for (const auto& cand : candidates(text)) {
    std::string hay = normalize_text(cand);
    std::set<int> found;
    for (const auto& [v, idx] : variants_) {
      for (auto pos : find_words(hay, v)) {
        found.insert(idx);
        std::fill(hay.begin() + static_cast<std::ptrdiff_t>(pos),
                  hay.begin() + static_cast<std::ptrdiff_t>(pos + v.size()), '#');
      }
    }
    if (found.size() == 1) return *found.begin();
  }
  return std::nullopt;
}

// ---- parsers ---------------------------------------------------------------

ParsedOutcome parse_binary_choice(std::string_view answer, const BinaryChoiceSchema& schema) {
  const auto kind = ParseSchema::BinaryChoice;
  const std::string s = strip_answer(answer);
  const int n = static_cast<int>(schema.labels.size());
  for (int i = 0; i < n; ++i) {
    if (s == schema.labels[static_cast<std::size_t>(i)]) {
      auto o = success(kind, true);
      o.option = i;
      return o;
    }
  }
  if (schema.allow_indifferent && s == "Indifferent") {
    auto o = success(kind, true);
    o.indifferent = true;
    return o;
  }
  // bare label, possibly on its own line after some lead-in text
  for (const auto& cand : candidates(answer)) {
    const std::string ls = lower(strip_answer(cand));
    for (int i = 0; i < n; ++i) {
      const auto ll = lower(schema.labels[static_cast<std::size_t>(i)]);
      if (ls == ll || ls == "option " + ll) {
        auto o = success(kind, false);
        o.option = i;
        return o;
      }
    }
    if (schema.allow_indifferent && (ls == "indifferent" || ls == "i am indifferent" || ls == "i'm indifferent")) {
      auto o = success(kind, false);
      o.indifferent = true;
      return o;
    }
  }

  // keyword-led label mentions, e.g. "I choose Option B"
  static const std::regex lead(
      R"(\b(?:answer|option|choice|choose|chose|pick|picked|select|selected|prefer|go\s+with|take)\b[\s:*"'\-]*(?:is\s+|would\s+be\s+|=\s*)?(?:option\s+)?([A-Za-z]+)\b)",
      std::regex::icase);
  for (const auto& cand : candidates(answer)) {
    std::set<int> hits;
    bool indiff = false;
    for (std::sregex_iterator it(cand.begin(), cand.end(), lead), end; it != end; ++it) {
      const std::string tok = (*it)[1].str();
      for (int i = 0; i < n; ++i)
        if (tok == schema.labels[static_cast<std::size_t>(i)]) hits.insert(i);
    }
    const std::string nc = normalize_text(cand);
    if (schema.allow_indifferent && !find_words(nc, "indifferent").empty()) indiff = true;
    if (hits.size() == 1 && !indiff) {
      auto o = success(kind, false);
      o.option = *hits.begin();
      return o;
    }
    if (hits.empty() && indiff) {
      auto o = success(kind, false);
      o.indifferent = true;
      return o;
    }
  }

  if (!schema.option_texts.empty()) {
    for (const auto& cand : candidates(answer)) {
      bool exact = false;
      if (auto k = match_option_text(cand, schema.option_texts, &exact)) {
        auto o = success(kind, false);
        o.option = *k;
        return o;
      }
    }
  }
  return failed(kind);
}

ParsedOutcome parse_option_echo(std::string_view answer, std::span<const std::string> displayed_options) {
  const auto kind = ParseSchema::OptionEcho;
  for (const auto& cand : candidates(answer)) {
    bool exact = false;
    if (auto k = match_option_text(cand, displayed_options, &exact)) {
      auto o = success(kind, exact && cand == answer);
      o.option = *k;
      return o;
    }
  }
  return failed(kind);
}

ParsedOutcome parse_likert(std::string_view answer, LikertOrder order) {
  const auto kind = ParseSchema::Likert;
  const auto& table = LabelTable::likert();
  bool exact = false;
  auto idx = table.lookup(answer, &exact);
  if (!idx) {
    // "Option 2" counts positions in the displayed order
    if (auto pos = likert_position(answer, 5)) idx = order == LikertOrder::A2D ? *pos : 4 - *pos;
  }
  if (!idx) return failed(kind);
  auto o = success(kind, exact);
  o.score = 5 - *idx;
  return o;
}

ParsedOutcome parse_assistance(std::string_view answer) {
  const auto kind = ParseSchema::Assistance;
  bool exact = false;
  const auto idx = LabelTable::assistance().lookup(answer, &exact);
  if (!idx) return failed(kind);
  auto o = success(kind, exact);
  o.score = 5 - *idx;
  return o;
}

ParsedOutcome parse_price(std::string_view answer) {
  const auto kind = ParseSchema::Price;
  static const std::regex exact_re(R"(^Price: \$(\d+)(\.\d{2})?$)");
  static const std::regex loose_re(R"(price\W{0,4}(?:is\s+|of\s+)?(?:\$|usd\s*)?\s*(\d{1,3}(?:,\d{3})+|\d+)(\.\d{1,2})?(?!\d))",
                                   std::regex::icase);
  const std::string s = trim(answer);
  const std::string text(answer);
  std::smatch m;
  bool exact = false;
  if (std::regex_match(s, m, exact_re)) {
    exact = true;
  } else if (!std::regex_search(text, m, loose_re)) {
    return failed(kind);
  }
  std::string whole = m[1].str();
  whole.erase(std::remove(whole.begin(), whole.end(), ','), whole.end());
  double value = to_number(whole);
  if (m[2].matched) value += to_number("0" + m[2].str());
  auto o = success(kind, exact);
  o.amount = value;
  return o;
}

ParsedOutcome parse_accept_reject(std::string_view answer) {
  const auto kind = ParseSchema::AcceptReject;
  const std::string s = strip_answer(answer);
  if (s == "ACCEPT" || s == "REJECT") {
    auto o = success(kind, true);
    o.accept = s == "ACCEPT";
    return o;
  }
  static const std::regex word(
      R"(\b(not\s+|n't\s+|never\s+)?(accept|accepts|accepted|accepting|reject|rejects|rejected|rejecting|decline|declines|declined)\b)",
      std::regex::icase);
  for (const auto& cand : candidates(answer)) {
    std::string c = cand;
    // "don't accept" has no space before n't after tokenising
    for (std::size_t p = c.find("n't"); p != std::string::npos; p = c.find("n't", p + 4)) c.insert(p, " ");
    std::set<bool> verdicts;
    for (std::sregex_iterator it(c.begin(), c.end(), word), end; it != end; ++it) {
      const std::string w = lower((*it)[2].str());
      bool acc = w.rfind("accept", 0) == 0;
      if ((*it)[1].matched) acc = !acc;
      verdicts.insert(acc);
    }
    if (verdicts.size() == 1) {
      auto o = success(kind, false);
      o.accept = *verdicts.begin();
      return o;
    }
  }
  return failed(kind);
}

ParsedOutcome parse_give_amount(std::string_view answer, std::span<const int> allowed) {
  const auto kind = ParseSchema::GiveAmount;
  static const std::regex dollar(R"(\$\s*(\d+(?:\.\d+)?))");
  static const std::regex number(R"((?:^|[^\w.])(\d+(?:\.\d+)?)(?![\w.]))");
  std::string text(answer);
  std::smatch m;
  bool exact = false;
  double value = 0.0;
  if (std::regex_search(text, m, dollar)) {
    value = to_number(m[1].str());
    exact = strip_answer(answer) == "$" + m[1].str();
  } else {
    const std::string s = strip_answer(answer);
    std::vector<double> nums;
    for (std::sregex_iterator it(s.begin(), s.end(), number), end; it != end; ++it) nums.push_back(to_number((*it)[1].str()));
    if (nums.size() != 1) return failed(kind);
    value = nums.front();
  }
  const bool integral = std::abs(value - std::round(value)) < 1e-12;
  const bool in_set = integral && std::find(allowed.begin(), allowed.end(), static_cast<int>(std::lround(value))) != allowed.end();
  if (!in_set) {
    auto o = failed(kind, ErrorCode::OutOfRange);
    o.amount = value;
    return o;
  }
  auto o = success(kind, exact);
  o.amount = value;
  return o;
}

// ---- trial-level helpers ---------------------------------------------------

ParsedOutcome resolve_canonical(ParsedOutcome outcome, const battery::TrialSpec& trial) {
  if (outcome.option && !trial.option_order.empty()) {
    const auto i = static_cast<std::size_t>(*outcome.option);
    if (i < trial.option_order.size()) outcome.option = trial.option_order[i];
  }
  return outcome;
}

ParsedOutcome parse_for_trial(const battery::TrialSpec& trial, std::string_view answer) {
  switch (trial.parse_schema) {
    case ParseSchema::BinaryChoice: {
      BinaryChoiceSchema schema;
      schema.option_texts = battery::displayed_options(trial);
      return resolve_canonical(parse_binary_choice(answer, schema), trial);
    }
    case ParseSchema::OptionEcho: {
      const auto shown = battery::displayed_options(trial);
      return resolve_canonical(parse_option_echo(answer, shown), trial);
    }
    case ParseSchema::AcceptReject: return parse_accept_reject(answer);
    case ParseSchema::Likert: {
      const auto order = trial.payload.value("likert_order", std::string("A2D")) == "D2A" ? LikertOrder::D2A
                                                                                          : LikertOrder::A2D;
      return parse_likert(answer, order);
    }
    case ParseSchema::Price: return parse_price(answer);
    case ParseSchema::GiveAmount: {
      std::vector<int> allowed;
      if (trial.payload.contains("allowed")) {
        allowed = trial.payload.at("allowed").get<std::vector<int>>();
      } else if (trial.payload.contains("T")) {
        for (int g = 0; g <= trial.payload.at("T").get<int>(); ++g) allowed.push_back(g);
      }
      return parse_give_amount(answer, allowed);
    }
    case ParseSchema::Assistance: return parse_assistance(answer);
  }
  return failed(trial.parse_schema);
}

std::string render_answer(const ParsedOutcome& o, std::span<const std::string> displayed_options) {
  if (!o.ok()) return "";
  switch (o.kind) {
    case ParseSchema::BinaryChoice:
      if (o.indifferent) return "Indifferent";
      return std::string("Answer: ") + static_cast<char>('A' + o.option.value_or(0));
    case ParseSchema::OptionEcho: {
      const auto i = static_cast<std::size_t>(o.option.value_or(0));
      return i < displayed_options.size() ? displayed_options[i] : "";
    }
    case ParseSchema::AcceptReject: return o.accept.value_or(false) ? "ACCEPT" : "REJECT";
    case ParseSchema::Likert:
      return std::string(battery::kLikertLabels[static_cast<std::size_t>(5 - o.score.value_or(3))]);
    case ParseSchema::Assistance:
      return std::string(battery::kAssistanceLabels[static_cast<std::size_t>(5 - o.score.value_or(3))]);
    case ParseSchema::Price: return "Price: " + money_string(o.amount.value_or(0.0));
    case ParseSchema::GiveAmount: return money_string(o.amount.value_or(0.0));
  }
  return "";
}

}  // namespace choicelab::parsing
