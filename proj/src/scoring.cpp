#include "choicelab/scoring.hpp"

#include <algorithm>
#include <cmath>

namespace choicelab::scoring {
namespace {

using battery::Domain;

// Stable iteration order: by trial_id, whatever order the caller used.
std::vector<const TrialRecord*> sorted(std::span<const TrialRecord> records, Domain d) {
  std::vector<const TrialRecord*> out;
  for (const auto& r : records)
    if (r.trial.domain == d) out.push_back(&r);
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->trial.trial_id < b->trial.trial_id; });
  return out;
}

std::map<std::string, std::vector<const TrialRecord*>> grouped(std::span<const TrialRecord> records, Domain d) {
  std::map<std::string, std::vector<const TrialRecord*>> g;
  for (auto* r : sorted(records, d)) g[r->trial.group_key].push_back(r);
  return g;
}

bool parsed(const TrialRecord& r) { return r.status == RecordStatus::Parsed && r.outcome.ok(); }

AxiomRate finish(std::size_t compliant, std::size_t groups) {
  AxiomRate a;
  a.compliant = compliant;
  a.groups = groups;
  if (groups) a.rate = static_cast<double>(compliant) / static_cast<double>(groups);
  return a;
}

struct MeanAcc {
  double sum = 0.0;
  std::size_t n = 0;
  std::size_t excluded = 0;
  void add(double v) {
    sum += v;
    ++n;
  }
  Mean get() const {
    Mean m;
    m.n = n;
    m.excluded = excluded;
    if (n) m.value = sum / static_cast<double>(n);
    return m;
  }
};

struct RateAcc {
  std::size_t k = 0, n = 0, excluded = 0;
  void add(bool hit) {
    k += hit ? 1 : 0;
    ++n;
  }
  Rate get() const {
    Rate r;
    r.k = k;
    r.n = n;
    r.excluded = excluded;
    if (n) r.value = static_cast<double>(k) / static_cast<double>(n);
    return r;
  }
};

std::string order_of(const TrialRecord& r) { return r.trial.payload.value("likert_order", std::string("A2D")); }

}  // namespace

Pref pref_of(const TrialRecord& r) {
  if (!parsed(r)) return Pref::Failed;
  if (r.outcome.indifferent) return Pref::Indifferent;
  if (!r.outcome.option) return Pref::Failed;
  return *r.outcome.option == 0 ? Pref::First : Pref::Second;
}

bool completeness_compliant(Pref a, Pref b) {
  if (a == Pref::Failed || b == Pref::Failed) return false;
  return a == b;
}

bool transitivity_compliant(const std::array<Pref, 3>& resp) {
  constexpr std::array<std::array<int, 2>, 3> pairs{{{0, 1}, {1, 2}, {0, 2}}};
  bool strict[3][3] = {};
  bool weak[3][3] = {};  // stated x >= y
  for (std::size_t k = 0; k < 3; ++k) {
    const int x = pairs[k][0], y = pairs[k][1];
    switch (resp[k]) {
      case Pref::Failed: return false;
      case Pref::First:
        strict[x][y] = true;
        weak[x][y] = true;
        break;
      case Pref::Second:
        strict[y][x] = true;
        weak[y][x] = true;
        break;
      case Pref::Indifferent:
        weak[x][y] = weak[y][x] = true;
        break;
    }
  }
  for (int m = 0; m < 3; ++m)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (strict[i][m] && strict[m][j]) strict[i][j] = true;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (strict[i][j] && (i == j || weak[j][i])) return false;
  return true;
}

bool continuity_compliant(std::span<const Pref> sweep) {
  // shape X* I* Y* with X != Y (either run may be empty)
  std::size_t i = 0;
  const std::size_t n = sweep.size();
  for (auto p : sweep)
    if (p == Pref::Failed) return false;
  while (i < n && sweep[i] == Pref::Indifferent) ++i;
  if (i > 0) {
    // leading indifference: the rest must be a single run
    const Pref first = i < n ? sweep[i] : Pref::Indifferent;
    for (std::size_t j = i; j < n; ++j)
      if (sweep[j] != first) return false;
    return true;
  }
  const Pref x = sweep.empty() ? Pref::Indifferent : sweep[0];
  while (i < n && sweep[i] == x) ++i;
  while (i < n && sweep[i] == Pref::Indifferent) ++i;
  if (i == n) return true;
  const Pref y = sweep[i];
  if (y == x) return false;
  while (i < n && sweep[i] == y) ++i;
  return i == n;
}

bool independence_compliant(Pref base, Pref mixed) {
  if (base == Pref::Failed || mixed == Pref::Failed) return false;
  return base == mixed;
}

AxiomRate score_completeness(std::span<const TrialRecord> records) {
  std::size_t ok = 0, total = 0;
  for (const auto& [key, g] : grouped(records, Domain::RationalityCompleteness)) {
    ++total;
    if (g.size() == 2 && completeness_compliant(pref_of(*g[0]), pref_of(*g[1]))) ++ok;
  }
  return finish(ok, total);
}

AxiomRate score_transitivity(std::span<const TrialRecord> records) {
  std::size_t ok = 0, total = 0;
  for (const auto& [key, g] : grouped(records, Domain::RationalityTransitivity)) {
    ++total;
    if (g.size() != 3) continue;
    std::array<Pref, 3> resp{Pref::Failed, Pref::Failed, Pref::Failed};
    bool shape = true;
    for (auto* r : g) {
      const auto pair = r->trial.payload.at("pair").get<std::array<int, 2>>();
      int slot = -1;
      if (pair == std::array<int, 2>{0, 1}) slot = 0;
      else if (pair == std::array<int, 2>{1, 2}) slot = 1;
      else if (pair == std::array<int, 2>{0, 2}) slot = 2;
      if (slot < 0) shape = false;
      else resp[static_cast<std::size_t>(slot)] = pref_of(*r);
    }
    if (shape && transitivity_compliant(resp)) ++ok;
  }
  return finish(ok, total);
}

AxiomRate score_continuity(std::span<const TrialRecord> records) {
  std::size_t ok = 0, total = 0;
  for (auto& [key, g] : grouped(records, Domain::RationalityContinuity)) {
    ++total;
    auto sweep = g;
    std::sort(sweep.begin(), sweep.end(),
              [](const TrialRecord* a, const TrialRecord* b) { return a->trial.payload.at("p").get<int>() < b->trial.payload.at("p").get<int>(); });
    std::vector<Pref> seq;
    for (auto* r : sweep) seq.push_back(pref_of(*r));
    if (continuity_compliant(seq)) ++ok;
  }
  return finish(ok, total);
}

AxiomRate score_independence(std::span<const TrialRecord> records) {
  std::size_t ok = 0, total = 0;
  for (const auto& [key, g] : grouped(records, Domain::RationalityIndependence)) {
    ++total;
    const TrialRecord* base = nullptr;
    const TrialRecord* mixed = nullptr;
    for (auto* r : g) (r->trial.payload.at("variant") == "base" ? base : mixed) = r;
    if (base && mixed && independence_compliant(pref_of(*base), pref_of(*mixed))) ++ok;
  }
  return finish(ok, total);
}

AxiomScores score_axioms(std::span<const TrialRecord> records) {
  AxiomScores s;
  s.completeness = score_completeness(records);
  s.transitivity = score_transitivity(records);
  s.continuity = score_continuity(records);
  s.independence = score_independence(records);
  double sum = 0.0;
  int k = 0;
  for (const auto* a : {&s.completeness, &s.transitivity, &s.continuity, &s.independence}) {
    if (a->groups) {
      sum += a->rate;
      ++k;
    }
  }
  if (k) s.overall = sum / k;
  return s;
}

// ---- indices ---------------------------------------------------------------

double sai_value(int score, int cue) { return cue > 0 ? score : 6 - score; }

SaiSummary compute_sai(std::span<const TrialRecord> records) {
  MeanAcc raw, norm;
  for (auto* r : sorted(records, Domain::Stereotype)) {
    if (!parsed(*r) || !r->outcome.score || !r->trial.cue) {
      ++raw.excluded;
      ++norm.excluded;
      continue;
    }
    const double v = sai_value(*r->outcome.score, *r->trial.cue);
    raw.add(v);
    norm.add((v - 1.0) / 4.0);
  }
  return {raw.get(), norm.get()};
}

MatchIndex compute_match_index(std::span<const TrialRecord> records, Emotion induced) {
  std::map<std::string, std::map<std::string, const TrialRecord*>> cells;  // group|order -> frame -> rec
  for (auto* r : sorted(records, Domain::Persuasion))
    cells[r->trial.group_key + "|" + order_of(*r)][r->trial.payload.at("frame").get<std::string>()] = r;
  MatchIndex out;
  MeanAcc acc;
  for (const auto& [key, frames] : cells) {
    const auto sad = frames.find("sad");
    const auto anger = frames.find("anger");
    if (sad == frames.end() || anger == frames.end() || !parsed(*sad->second) || !parsed(*anger->second)) {
      ++acc.excluded;
      continue;
    }
    const double s_sad = *sad->second->outcome.score;
    const double s_anger = *anger->second->outcome.score;
    const double d = induced == Emotion::Anger ? s_anger - s_sad : s_sad - s_anger;
    out.diffs.push_back(d);
    acc.add(d);
  }
  out.mi = acc.get();
  return out;
}

std::vector<MoralComposite> compute_moral_composites(std::span<const TrialRecord> records) {
  std::map<std::string, std::map<std::string, const TrialRecord*>> cells;
  for (auto* r : sorted(records, Domain::Moral))
    cells[r->trial.group_key + "|" + order_of(*r)][r->trial.payload.at("statement").get<std::string>()] = r;
  std::vector<MoralComposite> out;
  for (const auto& [key, st] : cells) {
    bool complete = true;
    for (const char* name : {"wrongness", "punishment", "harm", "consequences", "intention"}) {
      const auto it = st.find(name);
      if (it == st.end() || !parsed(*it->second) || !it->second->outcome.score) complete = false;
    }
    if (!complete) continue;
    auto s = [&](const char* name) { return static_cast<double>(*st.at(name)->outcome.score); };
    const auto& p = st.begin()->second->trial.payload;
    MoralComposite c;
    c.item = p.at("item").get<std::string>();
    c.moral_domain = p.value("moral_domain", std::string());
    c.harm_level = p.value("harm_level", 0);
    c.likert_order = p.value("likert_order", std::string("A2D"));
    c.condemnation = (s("wrongness") + s("punishment")) / 2.0;
    c.harm_consequences = (s("harm") + s("consequences")) / 2.0;
    c.intention = s("intention");
    c.restraint = 6.0 - c.intention;
    out.push_back(std::move(c));
  }
  return out;
}

MoralSummary summarize_moral(std::span<const MoralComposite> composites, std::size_t excluded) {
  MeanAcc c, h, i;
  for (const auto& m : composites) {
    c.add(m.condemnation);
    h.add(m.harm_consequences);
    i.add(m.intention);
  }
  c.excluded = h.excluded = i.excluded = excluded;
  return {c.get(), h.get(), i.get()};
}

EndowmentSummary compute_endowment(std::span<const TrialRecord> records, double clip) {
  // prices are cent-resolution; summing whole cents keeps the arithmetic exact
  struct Cents {
    long long sum = 0;
    std::size_t n = 0, excluded = 0;
    Mean get() const {
      Mean m;
      m.n = n;
      m.excluded = excluded;
      if (n) m.value = static_cast<double>(sum) / static_cast<double>(n) / 100.0;
      return m;
    }
  };
  std::map<std::string, Cents> frames;
  for (auto* r : sorted(records, Domain::Endowment)) {
    auto& acc = frames[r->trial.payload.at("frame").get<std::string>()];
    if (!parsed(*r) || !r->outcome.amount) {
      ++acc.excluded;
      continue;
    }
    const double p = std::clamp(*r->outcome.amount, 0.0, clip);
    acc.sum += std::llround(p * 100.0);
    ++acc.n;
  }
  EndowmentSummary s;
  s.wta = frames["sell"].get();
  s.wtp = frames["buy"].get();
  s.wta_unload = frames["unload"].get();
  s.wta_gift = frames["gift_buyer"].get();
  if (s.wta.n && s.wtp.n) {
    const auto& a = frames["sell"];
    const auto& b = frames["buy"];
    // exact when both means land on whole cents
    const double ma = static_cast<double>(a.sum) / static_cast<double>(a.n);
    const double mb = static_cast<double>(b.sum) / static_cast<double>(b.n);
    s.delta_e = (ma - mb) / 100.0;
  }
  return s;
}

RateIndices compute_rate_indices(std::span<const TrialRecord> records) {
  RateIndices out;
  RateAcc risky, aai, ug, later, loss;
  MeanAcc give, share, assist;
  std::map<int, RateAcc> by_stake;
  std::map<double, RateAcc> by_share;

  for (auto* r : sorted(records, Domain::RiskChoice)) {
    if (parsed(*r) && r->outcome.option) risky.add(*r->outcome.option == 0);
    else ++risky.excluded;
  }
  for (auto* r : sorted(records, Domain::Ambiguity)) {
    const int g = r->trial.payload.at("G").get<int>();
    if (parsed(*r) && r->outcome.option) {
      aai.add(*r->outcome.option == 0);
      by_stake[g].add(*r->outcome.option == 0);
    } else {
      ++aai.excluded;
      ++by_stake[g].excluded;
    }
  }
  for (auto* r : sorted(records, Domain::Temporal)) {
    if (parsed(*r) && r->outcome.option) later.add(*r->outcome.option == 1);
    else ++later.excluded;
  }
  for (auto* r : sorted(records, Domain::Loss)) {
    if (parsed(*r) && r->outcome.accept) loss.add(*r->outcome.accept);
    else ++loss.excluded;
  }
  for (auto* r : sorted(records, Domain::Ultimatum)) {
    const double sh = r->trial.payload.at("share").get<double>();
    if (parsed(*r) && r->outcome.accept) {
      ug.add(!*r->outcome.accept);
      by_share[sh].add(!*r->outcome.accept);
    } else {
      ++ug.excluded;
      ++by_share[sh].excluded;
    }
  }
  for (auto* r : sorted(records, Domain::Dictator)) {
    if (parsed(*r) && r->outcome.amount) {
      give.add(*r->outcome.amount);
      share.add(*r->outcome.amount / r->trial.payload.at("T").get<double>());
    } else {
      ++give.excluded;
      ++share.excluded;
    }
  }
  for (auto* r : sorted(records, Domain::Welfare)) {
    if (parsed(*r) && r->outcome.score) assist.add(*r->outcome.score);
    else ++assist.excluded;
  }
  out.risky = risky.get();
  out.aai = aai.get();
  out.ug_rejection = ug.get();
  out.later = later.get();
  out.loss_accept = loss.get();
  out.dg_give = give.get();
  out.dg_share = share.get();
  out.assistance = assist.get();
  for (const auto& [g, acc] : by_stake) out.aai_by_stake[g] = acc.get();
  for (const auto& [s, acc] : by_share) out.ug_rejection_by_share[s] = acc.get();
  return out;
}

DomainIndices compute_domain_indices(std::span<const TrialRecord> records, double price_clip) {
  DomainIndices d;
  d.rates = compute_rate_indices(records);
  d.sai = compute_sai(records);
  for (const auto& r : records)
    if (r.trial.domain == Domain::Persuasion) {
      d.induced = r.condition.emotion;
      break;
    }
  d.match_index = compute_match_index(records, d.induced);
  const auto composites = compute_moral_composites(records);
  const auto moral_cells = sorted(records, Domain::Moral).size() / 5;
  d.moral = summarize_moral(composites, moral_cells >= composites.size() ? moral_cells - composites.size() : 0);
  MeanAcc blame;
  for (auto* r : sorted(records, Domain::Blame)) {
    if (parsed(*r) && r->outcome.score) blame.add(*r->outcome.score);
    else ++blame.excluded;
  }
  d.blame = blame.get();
  d.endowment = compute_endowment(records, price_clip);
  return d;
}

std::map<std::string, std::vector<double>> per_trial_index_values(std::span<const TrialRecord> records,
                                                                  double price_clip,
                                                                  std::optional<Emotion> induced_override) {
  std::map<std::string, std::vector<double>> out;
  auto push = [&](Domain d, double v) { out[std::string(battery::to_string(d))].push_back(v); };
  Emotion induced = induced_override.value_or(Emotion::None);
  for (const auto& r : records) {
    if (induced_override) break;
    if (r.trial.domain == Domain::Persuasion) {
      induced = r.condition.emotion;
      break;
    }
  }
  for (Domain d : {Domain::RiskChoice, Domain::Ambiguity, Domain::Loss, Domain::Temporal, Domain::Ultimatum,
                   Domain::Dictator, Domain::Welfare, Domain::Stereotype, Domain::Blame}) {
    for (auto* r : sorted(records, d)) {
      if (!parsed(*r)) continue;
      const auto& o = r->outcome;
      switch (d) {
        case Domain::RiskChoice:
        case Domain::Ambiguity:
          if (o.option) push(d, *o.option == 0 ? 1.0 : 0.0);
          break;
        case Domain::Temporal:
          if (o.option) push(d, *o.option == 1 ? 1.0 : 0.0);
          break;
        case Domain::Loss:
          if (o.accept) push(d, *o.accept ? 1.0 : 0.0);
          break;
        case Domain::Ultimatum:
          if (o.accept) push(d, *o.accept ? 0.0 : 1.0);
          break;
        case Domain::Dictator:
          if (o.amount) push(d, *o.amount / r->trial.payload.at("T").get<double>());
          break;
        case Domain::Stereotype:
          if (o.score && r->trial.cue) push(d, sai_value(*o.score, *r->trial.cue));
          break;
        default:
          if (o.score) push(d, *o.score);
      }
    }
  }
  for (double v : compute_match_index(records, induced).diffs) push(Domain::Persuasion, v);
  for (const auto& c : compute_moral_composites(records)) push(Domain::Moral, c.condemnation);

  // endowment: per item and repeat, clipped sell minus buy
  std::map<std::string, std::map<std::string, double>> items;
  for (auto* r : sorted(records, Domain::Endowment))
    if (parsed(*r) && r->outcome.amount)
      items[r->trial.group_key][r->trial.payload.at("frame").get<std::string>()] =
          std::clamp(*r->outcome.amount, 0.0, price_clip);
  for (const auto& [key, f] : items)
    if (f.count("sell") && f.count("buy")) push(Domain::Endowment, f.at("sell") - f.at("buy"));
  for (auto it = out.begin(); it != out.end();) it = it->second.empty() ? out.erase(it) : std::next(it);
  return out;
}

}  // namespace choicelab::scoring
