#include <doctest.h>

#include <fstream>
#include <map>

#include "choicelab/response_parsing.hpp"
#include "choicelab/rng.hpp"

using namespace choicelab;
using namespace choicelab::parsing;

TEST_CASE("split_thinking") {
  auto r = split_thinking("<think>abc</think>\nAnswer: B");
  REQUIRE(r.thinking_trace);
  CHECK(*r.thinking_trace == "abc");
  CHECK(r.answer_text == "Answer: B");

  r = split_thinking("Answer: B");
  CHECK_FALSE(r.thinking_trace);
  CHECK(r.answer_text == "Answer: B");

  r = split_thinking("<think>abc");
  CHECK_FALSE(r.thinking_trace);
  CHECK(r.answer_text == "<think>abc");

  r = split_thinking("<think>one</think> A <think>two</think>");
  CHECK(*r.thinking_trace == "one");
  CHECK(r.answer_text == "A");

  r = split_thinking("[[r]]x[[/r]]y", Delimiters{"[[r]]", "[[/r]]"});
  CHECK(*r.thinking_trace == "x");
  CHECK(r.answer_text == "y");
}

TEST_CASE("binary choice") {
  BinaryChoiceSchema schema;
  schema.option_texts = {"Gamble: 40% chance to receive $53; otherwise $0", "Receive $20 for certain."};
  auto o = parse_binary_choice("Answer: B", schema);
  CHECK(o.confidence == Confidence::Exact);
  CHECK(o.option == 1);

  o = parse_binary_choice("Receive $20 for certain.", schema);
  CHECK(o.confidence == Confidence::Normalized);
  CHECK(o.option == 1);

  o = parse_binary_choice("I cannot decide between these", schema);
  CHECK(o.confidence == Confidence::Failed);
  CHECK(o.error == ErrorCode::ParseFailed);

  o = parse_binary_choice("Indifferent", schema);
  CHECK(o.indifferent);
  CHECK(o.ok());

  o = parse_binary_choice("I choose option A, not B.", schema);
  CHECK(o.option == 0);
}

TEST_CASE("option echo") {
  const std::vector<std::string> opts{"Receive $20 for certain.", "Gamble: 40% chance to receive $53; otherwise $0"};
  auto o = parse_option_echo("Receive $20 for certain.", opts);
  CHECK(o.confidence == Confidence::Exact);
  CHECK(o.option == 0);
  o = parse_option_echo("gamble: 40% chance to receive $53 otherwise $0", opts);
  CHECK(o.confidence == Confidence::Normalized);
  CHECK(o.option == 1);
  o = parse_option_echo("2", opts);
  CHECK(o.option == 1);
  o = parse_option_echo("Comparing $20 for certain with a $53 gamble is hard.", opts);
  CHECK_FALSE(o.ok());
}

TEST_CASE("likert labels map to canonical scores in either order") {
  for (auto order : {LikertOrder::A2D, LikertOrder::D2A}) {
    CHECK(parse_likert("Strongly Agree", order).score == 5);
    CHECK(parse_likert("Neither Agree nor Disagree", order).score == 3);
    CHECK(parse_likert("Strongly Disagree", order).score == 1);
    CHECK(parse_likert("Disagree", order).score == 2);
    auto o = parse_likert("Agree strongly", order);
    CHECK(o.score == 5);
    CHECK(o.confidence == Confidence::Normalized);
    CHECK_FALSE(parse_likert("banana", order).ok());
  }
  CHECK(parse_likert("Option 1", LikertOrder::A2D).score == 5);
  CHECK(parse_likert("Option 1", LikertOrder::D2A).score == 1);
}

TEST_CASE("price") {
  auto o = parse_price("Price: $12");
  CHECK(o.confidence == Confidence::Exact);
  CHECK(*o.amount == doctest::Approx(12.0));
  CHECK(*parse_price("Price: $12.50").amount == doctest::Approx(12.5));
  CHECK_FALSE(parse_price("about ten dollars").ok());
  CHECK_FALSE(parse_price("Price: $NN").ok());
  CHECK(*parse_price("I think the price is $1,200").amount == doctest::Approx(1200.0));
}

TEST_CASE("accept/reject, give amount, assistance") {
  auto o = parse_accept_reject("REJECT");
  CHECK(o.accept == false);
  CHECK(o.confidence == Confidence::Exact);
  CHECK(parse_accept_reject("I will accept.").accept == true);
  CHECK(parse_accept_reject("I don't accept that.").accept == false);
  CHECK_FALSE(parse_accept_reject("maybe").ok());

  std::vector<int> allowed;
  for (int g = 0; g <= 10; ++g) allowed.push_back(g);
  o = parse_give_amount("$7", allowed);
  CHECK(o.confidence == Confidence::Exact);
  CHECK(*o.amount == 7.0);
  o = parse_give_amount("$12", allowed);
  CHECK_FALSE(o.ok());
  CHECK(o.error == ErrorCode::OutOfRange);
  CHECK(parse_give_amount("$2.50", allowed).error == ErrorCode::OutOfRange);

  CHECK(parse_assistance("Slightly Decreased").score == 2);
  CHECK(parse_assistance("Significantly Increased").score == 5);
  CHECK(parse_assistance("unchanged").score == 3);
}

TEST_CASE("parsers are total on arbitrary input") {
  CounterRng rng(99, "fuzz");
  std::vector<int> allowed{0, 1, 2, 3};
  BinaryChoiceSchema schema;
  schema.option_texts = {"x", "y"};
  const std::vector<std::string> opts{"alpha $1", "beta $2"};
  for (int i = 0; i < 3000; ++i) {
    std::string s;
    const auto len = rng.below(40);
    for (std::uint64_t k = 0; k < len; ++k) s.push_back(static_cast<char>(rng.below(256)));
    CHECK_NOTHROW(parse_binary_choice(s, schema));
    CHECK_NOTHROW(parse_option_echo(s, opts));
    CHECK_NOTHROW(parse_likert(s, LikertOrder::A2D));
    CHECK_NOTHROW(parse_price(s));
    CHECK_NOTHROW(parse_accept_reject(s));
    CHECK_NOTHROW(parse_give_amount(s, allowed));
    CHECK_NOTHROW(parse_assistance(s));
    CHECK_NOTHROW(split_thinking(s));
  }
  CHECK_NOTHROW(parse_price("Price: $99999999999999999999999999999"));
  CHECK_NOTHROW(parse_give_amount("$99999999999999999999999", allowed));
}

TEST_CASE("rendered canonical answers parse back to the same outcome") {
  for (int s = 1; s <= 5; ++s) {
    ParsedOutcome o;
    o.kind = ParseSchema::Likert;
    o.confidence = Confidence::Exact;
    o.score = s;
    for (auto order : {LikertOrder::A2D, LikertOrder::D2A}) CHECK(parse_likert(render_answer(o), order).score == s);
    o.kind = ParseSchema::Assistance;
    CHECK(parse_assistance(render_answer(o)).score == s);
  }
  for (double v : {0.0, 3.0, 12.5, 99.99}) {
    ParsedOutcome o;
    o.kind = ParseSchema::Price;
    o.confidence = Confidence::Exact;
    o.amount = v;
    const auto back = parse_price(render_answer(o));
    CHECK(back.confidence == Confidence::Exact);
    CHECK(*back.amount == doctest::Approx(v));
  }
  const std::vector<std::string> opts{"Receive $20 for certain.", "Gamble: 40% chance to receive $53; otherwise $0"};
  for (int k = 0; k < 2; ++k) {
    ParsedOutcome o;
    o.kind = ParseSchema::OptionEcho;
    o.confidence = Confidence::Exact;
    o.option = k;
    CHECK(parse_option_echo(render_answer(o, opts), opts).option == k);
    o.kind = ParseSchema::BinaryChoice;
    CHECK(parse_binary_choice(render_answer(o), BinaryChoiceSchema{}).option == k);
  }
  for (bool a : {true, false}) {
    ParsedOutcome o;
    o.kind = ParseSchema::AcceptReject;
    o.confidence = Confidence::Exact;
    o.accept = a;
    CHECK(parse_accept_reject(render_answer(o)).accept == a);
  }
}

TEST_CASE("trial-level parsing resolves canonical options") {
  battery::BatteryConfig cfg;
  const auto trials = battery::gen_risk_block(cfg);
  int checked = 0;
  for (const auto& t : trials) {
    if (t.domain != battery::Domain::RiskChoice) continue;
    const auto canon = t.payload["options"].get<std::vector<std::string>>();
    for (int k = 0; k < 2; ++k) {
      const auto o = parse_for_trial(t, canon[static_cast<std::size_t>(k)]);
      REQUIRE(o.ok());
      CHECK(o.option == k);
    }
    if (++checked == 40) break;
  }
}

TEST_CASE("fixture corpus accuracy") {
  std::ifstream in(std::string(CHOICELAB_FIXTURE_DIR) + "/parse_fixtures.jsonl");
  REQUIRE(in.good());
  std::map<std::string, std::pair<int, int>> tally;  // schema -> (correct, total)
  std::string line;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    const auto schema = j["schema"].get<std::string>();
    const auto& ctx = j["context"];
    const auto raw = split_thinking(j["response"].get<std::string>());
    const auto& exp = j["expected"];
    ParsedOutcome o;
    bool ok = false;
    if (schema == "binary_choice") {
      BinaryChoiceSchema s;
      s.option_texts = ctx["options"].get<std::vector<std::string>>();
      o = parse_binary_choice(raw.answer_text, s);
      if (exp == "FAILED") ok = !o.ok();
      else if (exp == "Indifferent") ok = o.ok() && o.indifferent;
      else ok = o.ok() && !o.indifferent && o.option == (exp == "A" ? 0 : 1);
    } else if (schema == "option_echo") {
      const auto opts = ctx["options"].get<std::vector<std::string>>();
      o = parse_option_echo(raw.answer_text, opts);
      ok = exp == "FAILED" ? !o.ok() : (o.ok() && o.option == exp.get<int>());
    } else if (schema == "accept_reject") {
      o = parse_accept_reject(raw.answer_text);
      ok = exp == "FAILED" ? !o.ok() : (o.ok() && *o.accept == (exp == "ACCEPT"));
    } else if (schema == "likert" || schema == "assistance") {
      o = schema == "likert"
              ? parse_likert(raw.answer_text, ctx["order"] == "D2A" ? LikertOrder::D2A : LikertOrder::A2D)
              : parse_assistance(raw.answer_text);
      ok = exp == "FAILED" ? !o.ok() : (o.ok() && *o.score == exp.get<int>());
    } else if (schema == "price") {
      o = parse_price(raw.answer_text);
      ok = exp == "FAILED" ? !o.ok() : (o.ok() && std::abs(*o.amount - exp.get<double>()) < 1e-9);
    } else if (schema == "give_amount") {
      std::vector<int> allowed;
      for (int g = 0; g <= ctx["allowed_max"].get<int>(); ++g) allowed.push_back(g);
      o = parse_give_amount(raw.answer_text, allowed);
      if (exp == "FAILED") ok = !o.ok() && o.error == ErrorCode::ParseFailed;
      else if (exp == "OUT_OF_RANGE") ok = !o.ok() && o.error == ErrorCode::OutOfRange;
      else ok = o.ok() && *o.amount == exp.get<double>();
    }
    if (!ok) MESSAGE("fixture miss [" << schema << "]: " << j["response"].get<std::string>());
    auto& t = tally[schema];
    t.first += ok ? 1 : 0;
    t.second += 1;
  }
  CHECK(tally.size() == 7);
  for (const auto& [schema, t] : tally) {
    INFO(schema << ": " << t.first << "/" << t.second);
    CHECK(t.second == 200);
    CHECK(static_cast<double>(t.first) / t.second >= 0.99);
  }
}
