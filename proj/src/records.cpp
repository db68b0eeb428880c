#include "choicelab/records.hpp"

#include <array>
#include <cstdio>

namespace choicelab {
namespace {

using ordered_json = nlohmann::ordered_json;

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E v) {
  for (auto [e, n] : table)
    if (e == v) return n;
  return "unknown";
}

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view s) {
  for (auto [e, n] : table)
    if (n == s) return e;
  return std::nullopt;
}

constexpr std::array<std::pair<SteerMethod, std::string_view>, 3> kMethods{
    {{SteerMethod::None, "none"}, {SteerMethod::Icp, "icp"}, {SteerMethod::Rls, "rls"}}};
constexpr std::array<std::pair<Emotion, std::string_view>, 6> kEmotions{{{Emotion::None, "none"},
                                                                         {Emotion::Anger, "anger"},
                                                                         {Emotion::Fear, "fear"},
                                                                         {Emotion::Sadness, "sadness"},
                                                                         {Emotion::Joy, "joy"},
                                                                         {Emotion::Disgust, "disgust"}}};
constexpr std::array<std::pair<Intensity, std::string_view>, 5> kIntensities{{{Intensity::VeryLow, "very_low"},
                                                                              {Intensity::Low, "low"},
                                                                              {Intensity::Medium, "medium"},
                                                                              {Intensity::High, "high"},
                                                                              {Intensity::VeryHigh, "very_high"}}};
constexpr std::array<std::pair<SteerScope, std::string_view>, 2> kScopes{
    {{SteerScope::AllNew, "all_new"}, {SteerScope::ThinkingOnly, "thinking_only"}}};
constexpr std::array<std::pair<RecordStatus, std::string_view>, 3> kStatuses{
    {{RecordStatus::Parsed, "parsed"},
     {RecordStatus::ParseFailed, "parse_failed"},
     {RecordStatus::TransportFailed, "transport_failed"}}};

}  // namespace

std::string_view to_string(SteerMethod m) { return name_of(kMethods, m); }
std::string_view to_string(Emotion e) { return name_of(kEmotions, e); }
std::string_view to_string(Intensity i) { return name_of(kIntensities, i); }
std::string_view to_string(SteerScope s) { return name_of(kScopes, s); }
std::string_view to_string(RecordStatus s) { return name_of(kStatuses, s); }

SteerMethod steer_method_from_string(std::string_view s) {
  if (auto v = lookup(kMethods, s)) return *v;
  throw Error(ErrorCode::Validation, "steer: expected none|icp|rls, got '" + std::string(s) + "'");
}

Emotion emotion_from_string(std::string_view s) {
  if (auto v = lookup(kEmotions, s)) return *v;
  throw Error(ErrorCode::UnknownEmotion, "'" + std::string(s) + "'");
}

Intensity intensity_from_string(std::string_view s) {
  if (auto v = lookup(kIntensities, s)) return *v;
  throw Error(ErrorCode::Validation, "intensity: unknown level '" + std::string(s) + "'");
}

SteerScope scope_from_string(std::string_view s) {
  if (auto v = lookup(kScopes, s)) return *v;
  throw Error(ErrorCode::Validation, "scope: expected all_new|thinking_only, got '" + std::string(s) + "'");
}

SteeringCondition SteeringCondition::icp(Emotion e, Intensity i) {
  SteeringCondition c;
  c.method = SteerMethod::Icp;
  c.emotion = e;
  c.intensity = i;
  c.validate();
  return c;
}

SteeringCondition SteeringCondition::rls(Emotion e, double beta, SteerScope scope, std::vector<int> layers) {
  SteeringCondition c;
  c.method = SteerMethod::Rls;
  c.emotion = e;
  c.beta = beta;
  c.scope = scope;
  c.layers = std::move(layers);
  c.validate();
  return c;
}

void SteeringCondition::validate() const {
  auto bad = [](const std::string& msg) { throw Error(ErrorCode::Validation, "condition: " + msg); };
  switch (method) {
    case SteerMethod::None:
      if (emotion != Emotion::None || intensity || beta || scope || !layers.empty())
        bad("method none carries no emotion, intensity or steering fields");
      break;
    case SteerMethod::Icp:
      if (emotion == Emotion::None) throw Error(ErrorCode::UnknownEmotion, "icp needs an emotion");
      if (!intensity) bad("icp needs an intensity");
      if (beta || scope || !layers.empty()) bad("icp carries intensity, not beta/scope/layers");
      break;
    case SteerMethod::Rls:
      if (emotion == Emotion::None) throw Error(ErrorCode::UnknownEmotion, "rls needs an emotion");
      if (!beta || !(*beta >= 0.0)) bad("rls needs beta >= 0");
      if (intensity) bad("rls carries beta, not intensity");
      for (int l : layers)
        if (l < 0) bad("negative layer index");
      break;
  }
}

std::string SteeringCondition::label() const {
  switch (method) {
    case SteerMethod::None: return "none";
    case SteerMethod::Icp:
      return "icp:" + std::string(to_string(emotion)) + ":" + std::string(to_string(intensity.value_or(Intensity::Medium)));
    case SteerMethod::Rls: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%g", beta.value_or(0.0));
      return "rls:" + std::string(to_string(emotion)) + ":" + buf;
    }
  }
  return "none";
}

ordered_json to_json(const SteeringCondition& c) {
  ordered_json j;
  j["method"] = to_string(c.method);
  j["emotion"] = to_string(c.emotion);
  j["intensity"] = c.intensity ? ordered_json(to_string(*c.intensity)) : ordered_json(nullptr);
  j["beta"] = c.beta ? ordered_json(*c.beta) : ordered_json(nullptr);
  j["scope"] = c.scope ? ordered_json(to_string(*c.scope)) : ordered_json(nullptr);
  j["layers"] = c.layers;
  return j;
}

SteeringCondition condition_from_json(const ordered_json& j) {
  SteeringCondition c;
  c.method = steer_method_from_string(j.at("method").get<std::string>());
  c.emotion = emotion_from_string(j.at("emotion").get<std::string>());
  if (j.contains("intensity") && !j["intensity"].is_null()) c.intensity = intensity_from_string(j["intensity"].get<std::string>());
  if (j.contains("beta") && !j["beta"].is_null()) c.beta = j["beta"].get<double>();
  if (j.contains("scope") && !j["scope"].is_null()) c.scope = scope_from_string(j["scope"].get<std::string>());
  if (j.contains("layers")) c.layers = j["layers"].get<std::vector<int>>();
  c.validate();
  return c;
}

ordered_json to_json(const parsing::ParsedOutcome& o) {
  ordered_json j;
  j["kind"] = battery::to_string(o.kind);
  j["confidence"] = parsing::to_string(o.confidence);
  j["option"] = o.option ? ordered_json(*o.option) : ordered_json(nullptr);
  j["indifferent"] = o.indifferent;
  j["accept"] = o.accept ? ordered_json(*o.accept) : ordered_json(nullptr);
  j["score"] = o.score ? ordered_json(*o.score) : ordered_json(nullptr);
  j["amount"] = o.amount ? ordered_json(*o.amount) : ordered_json(nullptr);
  j["error"] = o.error ? ordered_json(to_string(*o.error)) : ordered_json(nullptr);
  return j;
}

parsing::ParsedOutcome outcome_from_json(const ordered_json& j) {
  parsing::ParsedOutcome o;
  const auto kind = battery::parse_schema_from_string(j.at("kind").get<std::string>());
  if (!kind) throw Error(ErrorCode::Validation, "outcome: unknown kind");
  o.kind = *kind;
  const auto conf = j.at("confidence").get<std::string>();
  o.confidence = conf == "exact" ? parsing::Confidence::Exact
                 : conf == "normalized" ? parsing::Confidence::Normalized
                                        : parsing::Confidence::Failed;
  if (!j.at("option").is_null()) o.option = j["option"].get<int>();
  o.indifferent = j.at("indifferent").get<bool>();
  if (!j.at("accept").is_null()) o.accept = j["accept"].get<bool>();
  if (!j.at("score").is_null()) o.score = j["score"].get<int>();
  if (!j.at("amount").is_null()) o.amount = j["amount"].get<double>();
  if (!j.at("error").is_null()) {
    o.error = j["error"] == "OUT_OF_RANGE" ? ErrorCode::OutOfRange : ErrorCode::ParseFailed;
  }
  return o;
}

ordered_json to_json(const TrialRecord& r) {
  ordered_json j;
  j["trial_id"] = r.trial.trial_id;
  j["status"] = to_string(r.status);
  j["condition"] = to_json(r.condition);
  j["outcome"] = to_json(r.outcome);
  j["raw_text"] = r.raw_text;
  j["thinking_trace"] = r.thinking_trace ? ordered_json(*r.thinking_trace) : ordered_json(nullptr);
  j["answer_text"] = r.answer_text;
  j["error"] = r.error;
  j["attempts"] = r.attempts;
  j["latency_ms"] = r.latency_ms;
  j["trial"] = battery::to_json(r.trial);
  return j;
}

TrialRecord record_from_json(const ordered_json& j) {
  try {
    TrialRecord r;
    r.trial = battery::trial_from_json(j.at("trial"));
    if (r.trial.trial_id != j.at("trial_id").get<std::string>())
      throw Error(ErrorCode::Validation, "record trial_id does not match its trial");
    const auto st = lookup(kStatuses, j.at("status").get<std::string>());
    if (!st) throw Error(ErrorCode::Validation, "record: unknown status");
    r.status = *st;
    r.condition = condition_from_json(j.at("condition"));
    r.outcome = outcome_from_json(j.at("outcome"));
    r.raw_text = j.at("raw_text").get<std::string>();
    if (!j.at("thinking_trace").is_null()) r.thinking_trace = j["thinking_trace"].get<std::string>();
    r.answer_text = j.at("answer_text").get<std::string>();
    r.error = j.at("error").get<std::string>();
    r.attempts = j.at("attempts").get<int>();
    r.latency_ms = j.at("latency_ms").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Validation, std::string("malformed record: ") + e.what());
  }
}

}  // namespace choicelab
