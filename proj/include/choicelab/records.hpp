#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "choicelab/response_parsing.hpp"
#include "choicelab/task_battery.hpp"

namespace choicelab {

enum class SteerMethod { None, Icp, Rls };
enum class Emotion { None, Anger, Fear, Sadness, Joy, Disgust };
enum class Intensity { VeryLow, Low, Medium, High, VeryHigh };
enum class SteerScope { AllNew, ThinkingOnly };

std::string_view to_string(SteerMethod m);
std::string_view to_string(Emotion e);
std::string_view to_string(Intensity i);
std::string_view to_string(SteerScope s);

SteerMethod steer_method_from_string(std::string_view s);  // VALIDATION
Emotion emotion_from_string(std::string_view s);           // UNKNOWN_EMOTION
Intensity intensity_from_string(std::string_view s);       // VALIDATION
SteerScope scope_from_string(std::string_view s);          // VALIDATION

struct SteeringCondition {
  SteerMethod method = SteerMethod::None;
  Emotion emotion = Emotion::None;
  std::optional<Intensity> intensity;  // ICP only
  std::optional<double> beta;          // RLS only
  std::optional<SteerScope> scope;     // RLS only
  std::vector<int> layers;             // RLS only

  static SteeringCondition none() { return {}; }
  static SteeringCondition icp(Emotion e, Intensity i);
  static SteeringCondition rls(Emotion e, double beta, SteerScope scope = SteerScope::AllNew,
                               std::vector<int> layers = {});

  // Field combinations allowed per method; throws VALIDATION.
  void validate() const;
  // "none", "icp:anger:high", "rls:fear:35"
  std::string label() const;
  bool operator==(const SteeringCondition&) const = default;
};

nlohmann::ordered_json to_json(const SteeringCondition& c);
SteeringCondition condition_from_json(const nlohmann::ordered_json& j);

enum class RecordStatus { Parsed, ParseFailed, TransportFailed };
std::string_view to_string(RecordStatus s);

struct TrialRecord {
  battery::TrialSpec trial;
  SteeringCondition condition;
  std::string raw_text;
  std::optional<std::string> thinking_trace;
  std::string answer_text;
  parsing::ParsedOutcome outcome;
  RecordStatus status = RecordStatus::ParseFailed;
  std::string error;  // transport/protocol message, or raw payload on PROTOCOL
  int attempts = 0;
  double latency_ms = 0.0;
};

nlohmann::ordered_json to_json(const parsing::ParsedOutcome& o);
parsing::ParsedOutcome outcome_from_json(const nlohmann::ordered_json& j);

nlohmann::ordered_json to_json(const TrialRecord& r);
TrialRecord record_from_json(const nlohmann::ordered_json& j);

}  // namespace choicelab
