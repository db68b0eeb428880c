#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "choicelab/assets.hpp"

namespace choicelab::battery {

using ordered_json = nlohmann::ordered_json;

enum class Domain {
  RationalityCompleteness,
  RationalityTransitivity,
  RationalityContinuity,
  RationalityIndependence,
  RiskChoice,
  RiskCeLadder,
  Ambiguity,
  Loss,
  Endowment,
  Temporal,
  Stereotype,
  Persuasion,
  Moral,
  Blame,
  Ultimatum,
  Dictator,
  Welfare,
};

inline constexpr std::array kAllDomains{
    Domain::RationalityCompleteness, Domain::RationalityTransitivity, Domain::RationalityContinuity,
    Domain::RationalityIndependence, Domain::RiskChoice, Domain::RiskCeLadder, Domain::Ambiguity,
    Domain::Loss, Domain::Endowment, Domain::Temporal, Domain::Stereotype, Domain::Persuasion,
    Domain::Moral, Domain::Blame, Domain::Ultimatum, Domain::Dictator, Domain::Welfare,
};

std::string_view to_string(Domain d);
std::optional<Domain> domain_from_string(std::string_view name);

// Closed set of answer formats; each has exactly one parser.
enum class ParseSchema { BinaryChoice, OptionEcho, AcceptReject, Likert, Price, GiveAmount, Assistance };

std::string_view to_string(ParseSchema s);
std::optional<ParseSchema> parse_schema_from_string(std::string_view name);

enum class LikertOrder { A2D, D2A };
std::string_view to_string(LikertOrder o);

// Labels from strongest agreement to strongest disagreement (A2D order).
inline constexpr std::array<std::string_view, 5> kLikertLabels{
    "Strongly Agree", "Agree", "Neither Agree nor Disagree", "Disagree", "Strongly Disagree"};
inline constexpr std::array<std::string_view, 5> kAssistanceLabels{
    "Significantly Increased", "Slightly Increased", "No Change", "Slightly Decreased",
    "Significantly Decreased"};

struct TrialSpec {
  std::string trial_id;
  Domain domain = Domain::RiskChoice;
  ordered_json payload = ordered_json::object();
  std::string prompt_text;
  std::string template_id;
  // Displayed position i shows canonical option option_order[i].
  std::vector<int> option_order;
  ParseSchema parse_schema = ParseSchema::OptionEcho;
  std::optional<int> cue;  // +1 / -1 for stereotype items
  std::string group_key;
};

struct BatteryConfig {
  std::uint64_t seed = 42;
  int repeats_per_cell = 1;
  std::vector<std::string> template_subset;  // empty: all templates
  std::string currency_symbol = "$";
  std::filesystem::path asset_dir = assets::default_asset_dir();
  std::vector<Domain> domains;  // empty: every domain
};

// Canonical option texts in displayed order (empty for free-response schemas).
std::vector<std::string> displayed_options(const TrialSpec& trial);

std::vector<TrialSpec> gen_rationality_battery(const BatteryConfig& cfg);
std::vector<TrialSpec> gen_risk_block(const BatteryConfig& cfg);
std::vector<TrialSpec> gen_ambiguity_block(const BatteryConfig& cfg);
std::vector<TrialSpec> gen_loss_block(const BatteryConfig& cfg);
std::vector<TrialSpec> gen_endowment_block(const BatteryConfig& cfg);
std::vector<TrialSpec> gen_temporal_block(const BatteryConfig& cfg);
// domain must be one of Stereotype, Persuasion, Moral, Blame, Welfare.
std::vector<TrialSpec> gen_vignette_block(Domain domain, const BatteryConfig& cfg);
std::vector<TrialSpec> gen_social_blocks(const BatteryConfig& cfg);

// Every block selected by cfg.domains, validated.
std::vector<TrialSpec> generate_battery(const BatteryConfig& cfg);

// Group sizes per domain and unique trial ids; throws VALIDATION.
void validate_battery(std::span<const TrialSpec> trials);
std::size_t expected_group_size(Domain d);  // 0 when unconstrained

// Grid constants shared with analysis code.
inline constexpr std::array<int, 4> kRiskSure{10, 20, 50, 100};
inline constexpr std::array<int, 8> kRiskProbPct{30, 35, 40, 45, 55, 60, 65, 70};
inline constexpr std::array<int, 10> kRiskDeltaPermille{-150, -125, -100, -75, -50, 50, 75, 100, 125, 150};
inline constexpr std::array<int, 2> kLadderGain{50, 100};
inline constexpr std::array<int, 8> kLadderProbPct{25, 35, 45, 55, 65, 75, 85, 95};
inline constexpr int kLadderRungs = 9;
inline constexpr std::array<int, 5> kAmbiguityStakes{10, 20, 30, 50, 100};
inline constexpr int kContinuitySteps = 21;

// G = S(1 + delta)/p rounded half-up, computed exactly in integers.
int risk_gain(int sure, int prob_pct, int delta_permille);
// Whole-dollar rungs geometrically spaced over [0.2 G, 0.95 G].
std::vector<int> ladder_rungs(int gain);
std::string format_delay(int days);
std::string format_money(double amount, std::string_view symbol = "$");

ordered_json to_json(const TrialSpec& trial);
TrialSpec trial_from_json(const ordered_json& j);
std::string to_jsonl(std::span<const TrialSpec> trials);

}  // namespace choicelab::battery
