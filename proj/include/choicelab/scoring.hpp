#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "choicelab/records.hpp"

namespace choicelab::scoring {

// Canonical preference read from one binary record: First is canonical
// option 0 (for continuity the lottery, for independence the A side).
enum class Pref { First, Second, Indifferent, Failed };
Pref pref_of(const TrialRecord& r);

// ---- axiom predicates on raw preference patterns --------------------------

bool completeness_compliant(Pref order1, Pref order2);
// Responses to the pairs (x,y), (y,z), (x,z); First means the earlier item.
// Violation: the transitive closure of strict preference contradicts a stated
// relation. Indifference is not chained.
bool transitivity_compliant(const std::array<Pref, 3>& responses);
// Sequence ordered by increasing p. At most one switch, indifference only at
// the switch.
bool continuity_compliant(std::span<const Pref> sweep);
bool independence_compliant(Pref base, Pref mixed);

struct AxiomRate {
  double rate = std::numeric_limits<double>::quiet_NaN();
  std::size_t compliant = 0;
  std::size_t groups = 0;
};

struct AxiomScores {
  AxiomRate completeness;
  AxiomRate transitivity;
  AxiomRate continuity;
  AxiomRate independence;
  double overall = std::numeric_limits<double>::quiet_NaN();  // equal-weight mean of scored axioms
};

AxiomRate score_completeness(std::span<const TrialRecord> records);
AxiomRate score_transitivity(std::span<const TrialRecord> records);
AxiomRate score_continuity(std::span<const TrialRecord> records);
AxiomRate score_independence(std::span<const TrialRecord> records);
AxiomScores score_axioms(std::span<const TrialRecord> records);

// ---- behavioral indices ---------------------------------------------------

struct Rate {
  double value = std::numeric_limits<double>::quiet_NaN();
  std::size_t k = 0;
  std::size_t n = 0;
  std::size_t excluded = 0;  // unparsed records left out
};

struct Mean {
  double value = std::numeric_limits<double>::quiet_NaN();
  std::size_t n = 0;
  std::size_t excluded = 0;
};

double sai_value(int score, int cue);
struct SaiSummary {
  Mean sai;
  Mean sai_norm;
};
SaiSummary compute_sai(std::span<const TrialRecord> records);

struct MatchIndex {
  Mean mi;
  std::vector<double> diffs;  // one per (pair, Likert order, repeat)
};
// Sadness and anger sign the difference toward their matching frame; any other
// induction reports sad minus anger.
MatchIndex compute_match_index(std::span<const TrialRecord> records, Emotion induced);

struct MoralComposite {
  std::string item;
  std::string moral_domain;
  int harm_level = 0;
  std::string likert_order;
  double condemnation = 0.0;
  double harm_consequences = 0.0;
  double intention = 0.0;
  double restraint = 0.0;
};
std::vector<MoralComposite> compute_moral_composites(std::span<const TrialRecord> records);

struct MoralSummary {
  Mean condemnation;
  Mean harm_consequences;
  Mean intention;
};
MoralSummary summarize_moral(std::span<const MoralComposite> composites, std::size_t excluded);

inline constexpr double kDefaultPriceClip = 100.0;

struct EndowmentSummary {
  Mean wta;
  Mean wtp;
  Mean wta_unload;
  Mean wta_gift;
  double delta_e = std::numeric_limits<double>::quiet_NaN();
};
EndowmentSummary compute_endowment(std::span<const TrialRecord> records, double clip = kDefaultPriceClip);

struct RateIndices {
  Rate risky;
  Rate aai;  // P(choose known)
  Rate ug_rejection;
  Mean dg_give;
  Mean dg_share;
  Mean assistance;
  Rate later;  // temporal: P(choose later)
  Rate loss_accept;
  std::map<int, Rate> aai_by_stake;
  std::map<double, Rate> ug_rejection_by_share;
};
RateIndices compute_rate_indices(std::span<const TrialRecord> records);

struct DomainIndices {
  RateIndices rates;
  SaiSummary sai;
  MatchIndex match_index;
  Emotion induced = Emotion::None;
  MoralSummary moral;
  Mean blame;
  EndowmentSummary endowment;
};
DomainIndices compute_domain_indices(std::span<const TrialRecord> records, double price_clip = kDefaultPriceClip);

// Per-trial index values used as the unit of analysis for effect sizes,
// keyed by domain name.
// `induced` fixes the persuasion sign convention, so a neutral baseline can be
// signed like the steered set it is compared against.
std::map<std::string, std::vector<double>> per_trial_index_values(std::span<const TrialRecord> records,
                                                                  double price_clip = kDefaultPriceClip,
                                                                  std::optional<Emotion> induced = std::nullopt);

}  // namespace choicelab::scoring
