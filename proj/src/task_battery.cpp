#include "choicelab/task_battery.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "choicelab/error.hpp"
#include "choicelab/rng.hpp"

namespace choicelab::battery {
namespace {

using Vars = std::map<std::string, std::string, std::less<>>;

constexpr std::array<std::pair<Domain, std::string_view>, 17> kDomainNames{{
    {Domain::RationalityCompleteness, "rationality_completeness"},
    {Domain::RationalityTransitivity, "rationality_transitivity"},
    {Domain::RationalityContinuity, "rationality_continuity"},
    {Domain::RationalityIndependence, "rationality_independence"},
    {Domain::RiskChoice, "risk_choice"},
    {Domain::RiskCeLadder, "risk_ce_ladder"},
    {Domain::Ambiguity, "ambiguity"},
    {Domain::Loss, "loss"},
    {Domain::Endowment, "endowment"},
    {Domain::Temporal, "temporal"},
    {Domain::Stereotype, "stereotype"},
    {Domain::Persuasion, "persuasion"},
    {Domain::Moral, "moral"},
    {Domain::Blame, "blame"},
    {Domain::Ultimatum, "ultimatum"},
    {Domain::Dictator, "dictator"},
    {Domain::Welfare, "welfare"},
}};

constexpr std::array<std::pair<ParseSchema, std::string_view>, 7> kSchemaNames{{
    {ParseSchema::BinaryChoice, "binary_choice"},
    {ParseSchema::OptionEcho, "option_echo"},
    {ParseSchema::AcceptReject, "accept_reject"},
    {ParseSchema::Likert, "likert"},
    {ParseSchema::Price, "price"},
    {ParseSchema::GiveAmount, "give_amount"},
    {ParseSchema::Assistance, "assistance"},
}};

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string format_pct(double prob) {
  const double pct = std::round(prob * 100.0 * 1e4) / 1e4;
  std::ostringstream os;
  os.precision(10);
  os << pct;
  return os.str();
}

// Generation context for one battery call.
class Builder {
 public:
  explicit Builder(const BatteryConfig& cfg)
      : cfg_(cfg), book_(assets::TemplateBook::load(cfg.asset_dir)) {
    if (cfg.repeats_per_cell < 1) throw Error(ErrorCode::Validation, "repeats_per_cell must be >= 1");
  }

  const BatteryConfig& cfg() const { return cfg_; }
  const assets::TemplateBook& book() const { return book_; }
  assets::Table table(const char* file) const { return assets::load_table(cfg_.asset_dir / file); }
  std::string money(double amount) const { return format_money(amount, cfg_.currency_symbol); }

  // Templates cycle through the (filtered) list from a seed-dependent offset.
  std::string next_template(std::string_view template_domain) {
    auto ids = book_.ids(template_domain);
    if (!cfg_.template_subset.empty()) {
      std::erase_if(ids, [&](const std::string& id) {
        return std::find(cfg_.template_subset.begin(), cfg_.template_subset.end(), id) ==
               cfg_.template_subset.end();
      });
      if (ids.empty()) {
        throw Error(ErrorCode::Validation,
                    "template_subset leaves no template for " + std::string(template_domain));
      }
    }
    auto& counter = cycle_[std::string(template_domain)];
    const auto offset = hash_bytes(template_domain, cfg_.seed) % ids.size();
    return ids[(counter++ + offset) % ids.size()];
  }

  // Permutation keyed by everything that defines the trial except the order itself.
  std::vector<int> seeded_order(Domain d, const ordered_json& payload, const std::string& template_id,
                                int n) const {
    CounterRng rng(hash_bytes(std::string(to_string(d)) + "|" + payload.dump() + "|" + template_id, cfg_.seed));
    return random_permutation(n, rng);
  }

  TrialSpec& add(Domain d, ordered_json payload, std::string template_id, std::vector<int> order,
                 ParseSchema schema, std::string group_key, std::string prompt) {
    TrialSpec t;
    t.domain = d;
    t.payload = std::move(payload);
    t.template_id = std::move(template_id);
    t.option_order = std::move(order);
    t.parse_schema = schema;
    t.group_key = std::move(group_key);
    t.prompt_text = std::move(prompt);
    std::string key(to_string(d));
    key += "|" + t.payload.dump() + "|" + t.template_id + "|";
    for (int o : t.option_order) key += std::to_string(o) + ",";
    t.trial_id = std::string(to_string(d)) + "-" + hex16(hash_bytes(key, cfg_.seed));
    out_.push_back(std::move(t));
    return out_.back();
  }

  std::vector<TrialSpec> take() { return std::move(out_); }

  Vars base_vars() const { return {{"zero", money(0)}}; }

 private:
  const BatteryConfig& cfg_;
  assets::TemplateBook book_;
  std::map<std::string, std::size_t> cycle_;
  std::vector<TrialSpec> out_;
};

std::vector<std::string> permute(const std::vector<std::string>& options, const std::vector<int>& order) {
  std::vector<std::string> shown;
  for (int o : order) shown.push_back(options.at(static_cast<std::size_t>(o)));
  return shown;
}

std::string ab_prompt(const std::string& preamble, const std::vector<std::string>& shown,
                      const std::string& question) {
  return preamble + "\n\nOption A: " + shown.at(0) + "\n\nOption B: " + shown.at(1) + "\n\n" + question;
}

std::string numbered_prompt(const std::string& pattern, const std::vector<std::string>& shown, Vars vars) {
  vars["option1"] = shown.at(0);
  vars["option2"] = shown.at(1);
  return assets::render(pattern, vars);
}

std::string likert_block(LikertOrder order) {
  std::string out;
  for (int i = 0; i < 5; ++i) {
    const auto idx = static_cast<std::size_t>(order == LikertOrder::A2D ? i : 4 - i);
    if (i) out += "\n\n";
    out += kLikertLabels[idx];
  }
  return out;
}

std::vector<int> likert_order_vector(LikertOrder order) {
  return order == LikertOrder::A2D ? std::vector<int>{0, 1, 2, 3, 4} : std::vector<int>{4, 3, 2, 1, 0};
}

int to_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::Validation, what + ": not an integer: '" + s + "'");
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::Validation, what + ": not a number: '" + s + "'");
}

// "prob:amount,prob:amount"
using Lottery = std::vector<std::pair<double, double>>;

Lottery parse_lottery(const std::string& text) {
  Lottery lot;
  std::stringstream ss(text);
  std::string part;
  double total = 0.0;
  while (std::getline(ss, part, ',')) {
    const auto colon = part.find(':');
    if (colon == std::string::npos) throw Error(ErrorCode::Validation, "bad lottery '" + text + "'");
    const double p = to_double(part.substr(0, colon), "lottery probability");
    lot.emplace_back(p, to_double(part.substr(colon + 1), "lottery amount"));
    total += p;
  }
  if (lot.empty() || std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::Validation, "lottery probabilities must sum to 1: '" + text + "'");
  }
  return lot;
}

Lottery mix(const Lottery& a, double alpha, const Lottery& n) {
  std::map<double, double> mass;
  for (auto [p, x] : a) mass[x] += alpha * p;
  for (auto [p, x] : n) mass[x] += (1.0 - alpha) * p;
  Lottery out;
  for (auto it = mass.rbegin(); it != mass.rend(); ++it) out.emplace_back(it->second, it->first);
  return out;
}

std::string render_lottery(const Lottery& lot, const Builder& b) {
  if (lot.size() == 1) return "you receive " + b.money(lot[0].second) + ".";
  std::string out;
  for (std::size_t i = 0; i < lot.size(); ++i) {
    if (i) out += "; ";
    out += "with " + format_pct(lot[i].first) + "% chance, you receive " + b.money(lot[i].second);
  }
  return out + ".";
}

ordered_json lottery_json(const Lottery& lot) {
  ordered_json arr = ordered_json::array();
  for (auto [p, x] : lot) arr.push_back(ordered_json::array({p, x}));
  return arr;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(Domain d) {
  for (auto [dom, name] : kDomainNames)
    if (dom == d) return name;
  return "unknown";
}

std::optional<Domain> domain_from_string(std::string_view name) {
  for (auto [dom, n] : kDomainNames)
    if (n == name) return dom;
  return std::nullopt;
}

std::string_view to_string(ParseSchema s) {
  for (auto [sch, name] : kSchemaNames)
    if (sch == s) return name;
  return "unknown";
}

std::optional<ParseSchema> parse_schema_from_string(std::string_view name) {
  for (auto [sch, n] : kSchemaNames)
    if (n == name) return sch;
  return std::nullopt;
}

std::string_view to_string(LikertOrder o) { return o == LikertOrder::A2D ? "A2D" : "D2A"; }

int risk_gain(int sure, int prob_pct, int delta_permille) {
  const long num = static_cast<long>(sure) * (1000 + delta_permille);
  const long den = 10L * prob_pct;
  return static_cast<int>((2 * num + den) / (2 * den));
}

std::vector<int> ladder_rungs(int gain) {
  std::vector<int> rungs;
  const double lo = 0.2 * gain, hi = 0.95 * gain;
  for (int k = 0; k < kLadderRungs; ++k) {
    const double v = lo * std::pow(hi / lo, static_cast<double>(k) / (kLadderRungs - 1));
    rungs.push_back(static_cast<int>(std::floor(v + 0.5)));
  }
  return rungs;
}

std::string format_delay(int days) {
  if (days == 14 || days == 28 || days == 42) return std::to_string(days / 7) + " weeks";
  return std::to_string(days) + (days == 1 ? " day" : " days");
}

std::string format_money(double amount, std::string_view symbol) {
  std::string out(symbol);
  const double rounded = std::round(amount);
  char buf[64];
  if (std::abs(amount - rounded) < 1e-9) {
    std::snprintf(buf, sizeof buf, "%.0f", rounded);
  } else {
    std::snprintf(buf, sizeof buf, "%.2f", amount);
  }
  return out + buf;
}

std::vector<std::string> displayed_options(const TrialSpec& trial) {
  std::vector<std::string> canonical;
  switch (trial.parse_schema) {
    case ParseSchema::Likert:
      for (auto l : kLikertLabels) canonical.emplace_back(l);
      break;
    case ParseSchema::Assistance:
      for (auto l : kAssistanceLabels) canonical.emplace_back(l);
      break;
    default:
      if (!trial.payload.contains("options")) return {};
      canonical = trial.payload.at("options").get<std::vector<std::string>>();
  }
  if (trial.option_order.empty()) return canonical;
  return permute(canonical, trial.option_order);
}

// ---- rationality -----------------------------------------------------------

std::vector<TrialSpec> gen_rationality_battery(const BatteryConfig& cfg) {
  Builder b(cfg);
  const int reps = cfg.repeats_per_cell;

  const auto comp = b.table("completeness.tsv");
  for (std::size_t i = 0; i < comp.size(); ++i) {
    const std::vector<std::string> options{comp.at(i, "option_x"), comp.at(i, "option_y")};
    for (int r = 0; r < reps; ++r) {
      const std::string group = "completeness|" + comp.at(i, "item_id") + "|" + std::to_string(r);
      for (const std::vector<int>& order : {std::vector<int>{0, 1}, std::vector<int>{1, 0}}) {
        ordered_json payload{{"item", comp.at(i, "item_id")}, {"options", options}, {"repeat", r},
                             {"repeats", reps}};
        b.add(Domain::RationalityCompleteness, std::move(payload), "completeness-1", order,
              ParseSchema::BinaryChoice, group,
              ab_prompt(comp.at(i, "preamble"), permute(options, order), comp.at(i, "question")));
      }
    }
  }

  const auto tri = b.table("transitivity.tsv");
  constexpr std::array<std::array<int, 2>, 3> pairs{{{0, 1}, {1, 2}, {0, 2}}};
  for (std::size_t i = 0; i < tri.size(); ++i) {
    const std::array<std::string, 3> items{tri.at(i, "option_x"), tri.at(i, "option_y"), tri.at(i, "option_z")};
    for (int r = 0; r < reps; ++r) {
      const std::string group = "transitivity|" + tri.at(i, "item_id") + "|" + std::to_string(r);
      for (const auto& pr : pairs) {
        const std::vector<std::string> options{items[static_cast<std::size_t>(pr[0])],
                                               items[static_cast<std::size_t>(pr[1])]};
        ordered_json payload{{"item", tri.at(i, "item_id")}, {"pair", {pr[0], pr[1]}}, {"options", options},
                             {"repeat", r}, {"repeats", reps}};
        b.add(Domain::RationalityTransitivity, std::move(payload), "transitivity-1", {0, 1},
              ParseSchema::BinaryChoice, group, ab_prompt(tri.at(i, "preamble"), options, tri.at(i, "question")));
      }
    }
  }

  const auto cont = b.table("continuity.tsv");
  const std::string ctid = "continuity-1";
  const auto& cbook = b.book();
  for (std::size_t i = 0; i < cont.size(); ++i) {
    const int high = to_int(cont.at(i, "high"), "continuity high");
    const int low = to_int(cont.at(i, "low"), "continuity low");
    const int sure = to_int(cont.at(i, "sure"), "continuity sure");
    for (int r = 0; r < reps; ++r) {
      const std::string group = "continuity|" + cont.at(i, "item_id") + "|" + std::to_string(r);
      for (int step = 0; step < kContinuitySteps; ++step) {
        const int p = 5 * step;
        Vars v{{"p", std::to_string(p)}, {"q", std::to_string(100 - p)}, {"high", b.money(high)},
               {"low", b.money(low)}, {"sure", b.money(sure)}};
        const std::vector<std::string> options{
            assets::render(cbook.field("rationality_continuity", ctid, "lottery"), v),
            assets::render(cbook.field("rationality_continuity", ctid, "sure"), v)};
        ordered_json payload{{"item", cont.at(i, "item_id")}, {"p", p}, {"high", high}, {"low", low},
                             {"sure", sure}, {"options", options}, {"repeat", r}, {"repeats", reps}};
        b.add(Domain::RationalityContinuity, std::move(payload), ctid, {0, 1}, ParseSchema::BinaryChoice, group,
              ab_prompt(cbook.field("rationality_continuity", ctid, "preamble"), options,
                        cbook.field("rationality_continuity", ctid, "question")));
      }
    }
  }

  const auto ind = b.table("independence.tsv");
  const std::string itid = "independence-1";
  for (std::size_t i = 0; i < ind.size(); ++i) {
    const auto l = parse_lottery(ind.at(i, "lottery_l"));
    const auto m = parse_lottery(ind.at(i, "lottery_m"));
    const auto n = parse_lottery(ind.at(i, "lottery_n"));
    const double alpha = to_double(ind.at(i, "alpha"), "independence alpha");
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::Validation, "independence alpha outside (0,1)");
    for (int r = 0; r < reps; ++r) {
      const std::string group = "independence|" + ind.at(i, "item_id") + "|" + std::to_string(r);
      for (const char* variant : {"base", "mixed"}) {
        const bool mixed = std::string_view(variant) == "mixed";
        const auto a = mixed ? mix(l, alpha, n) : l;
        const auto c = mixed ? mix(m, alpha, n) : m;
        const std::vector<std::string> options{render_lottery(a, b), render_lottery(c, b)};
        ordered_json payload{{"item", ind.at(i, "item_id")}, {"variant", variant}, {"alpha", alpha},
                             {"lottery_a", lottery_json(a)}, {"lottery_b", lottery_json(c)},
                             {"options", options}, {"repeat", r}, {"repeats", reps}};
        b.add(Domain::RationalityIndependence, std::move(payload), itid, {0, 1}, ParseSchema::BinaryChoice, group,
              ab_prompt(cbook.field("rationality_independence", itid, "preamble"), options,
                        cbook.field("rationality_independence", itid, "question")));
      }
    }
  }
  return b.take();
}

// ---- economic blocks ------------------------------------------------------

std::vector<TrialSpec> gen_risk_block(const BatteryConfig& cfg) {
  Builder b(cfg);
  const int reps = cfg.repeats_per_cell;
  auto lottery_options = [&](const std::string& tid, int p_pct, int gain, int sure) {
    Vars v = b.base_vars();
    v["p"] = std::to_string(p_pct);
    v["G"] = b.money(gain);
    v["S"] = b.money(sure);
    return std::vector<std::string>{assets::render(b.book().field("risk_choice", tid, "gamble"), v),
                                    assets::render(b.book().field("risk_choice", tid, "sure"), v)};
  };

  for (int s : kRiskSure)
    for (int p : kRiskProbPct)
      for (int d : kRiskDeltaPermille) {
        const int g = risk_gain(s, p, d);
        for (int r = 0; r < reps; ++r) {
          const auto tid = b.next_template("risk_choice");
          const auto options = lottery_options(tid, p, g, s);
          ordered_json payload{{"S", s}, {"p", p / 100.0}, {"delta", d / 1000.0}, {"G", g},
                               {"delta_ev", p * g / 100.0 - s}, {"options", options}, {"repeat", r},
                               {"repeats", reps}};
          auto order = b.seeded_order(Domain::RiskChoice, payload, tid, 2);
          auto prompt = numbered_prompt(b.book().field("risk_choice", tid, "prompt"), permute(options, order),
                                        b.base_vars());
          b.add(Domain::RiskChoice, std::move(payload), tid, std::move(order), ParseSchema::OptionEcho, "",
                std::move(prompt));
        }
      }

  for (int g : kLadderGain)
    for (int p : kLadderProbPct) {
      const auto rungs = ladder_rungs(g);
      for (int r = 0; r < reps; ++r) {
        const std::string group =
            "ladder|" + std::to_string(g) + "|" + std::to_string(p) + "|" + std::to_string(r);
        for (int k = 0; k < kLadderRungs; ++k) {
          const int s = rungs[static_cast<std::size_t>(k)];
          const auto tid = b.next_template("risk_choice");
          const auto options = lottery_options(tid, p, g, s);
          ordered_json payload{{"G", g}, {"p", p / 100.0}, {"rung", k}, {"S", s}, {"options", options},
                               {"repeat", r}, {"repeats", reps}};
          auto order = b.seeded_order(Domain::RiskCeLadder, payload, tid, 2);
          auto prompt = numbered_prompt(b.book().field("risk_choice", tid, "prompt"), permute(options, order),
                                        b.base_vars());
          b.add(Domain::RiskCeLadder, std::move(payload), tid, std::move(order), ParseSchema::OptionEcho, group,
                std::move(prompt));
        }
      }
    }
  return b.take();
}

std::vector<TrialSpec> gen_ambiguity_block(const BatteryConfig& cfg) {
  Builder b(cfg);
  const int reps = cfg.repeats_per_cell;
  for (int g : kAmbiguityStakes)
    for (int r = 0; r < reps; ++r) {
      const auto tid = b.next_template("ambiguity");
      Vars v = b.base_vars();
      v["G"] = b.money(g);
      const auto payoff = assets::render(b.book().field("ambiguity", tid, "payoff"), v);
      const std::vector<std::string> options{b.book().field("ambiguity", tid, "known_info") + " " + payoff,
                                             b.book().field("ambiguity", tid, "unknown_info") + " " + payoff};
      ordered_json payload{{"G", g}, {"p_known", 0.5}, {"options", options}, {"repeat", r}, {"repeats", reps}};
      auto order = b.seeded_order(Domain::Ambiguity, payload, tid, 2);
      auto prompt =
          numbered_prompt(b.book().field("ambiguity", tid, "prompt"), permute(options, order), b.base_vars());
      b.add(Domain::Ambiguity, std::move(payload), tid, std::move(order), ParseSchema::OptionEcho, "",
            std::move(prompt));
    }
  return b.take();
}

std::vector<TrialSpec> gen_loss_block(const BatteryConfig& cfg) {
  Builder b(cfg);
  const int reps = cfg.repeats_per_cell;
  for (int g = 5; g <= 14; ++g)
    for (int l = 5; l <= 14; ++l)
      for (const auto& tid : b.book().ids("loss")) {
        if (!cfg.template_subset.empty() &&
            std::find(cfg.template_subset.begin(), cfg.template_subset.end(), tid) == cfg.template_subset.end()) {
          continue;
        }
        for (int r = 0; r < reps; ++r) {
          Vars v = b.base_vars();
          v["G"] = b.money(g);
          v["L"] = b.money(l);
          const std::vector<std::string> options{assets::render(b.book().field("loss", tid, "accept"), v),
                                                 assets::render(b.book().field("loss", tid, "reject"), v)};
          ordered_json payload{{"G", g}, {"L", l}, {"reject_payoff", 0}, {"options", options}, {"repeat", r},
                               {"repeats", reps}};
          auto order = b.seeded_order(Domain::Loss, payload, tid, 2);
          auto prompt =
              numbered_prompt(b.book().field("loss", tid, "prompt"), permute(options, order), b.base_vars());
          b.add(Domain::Loss, std::move(payload), tid, std::move(order), ParseSchema::AcceptReject, "",
                std::move(prompt));
        }
      }
  return b.take();
}

std::vector<TrialSpec> gen_endowment_block(const BatteryConfig& cfg) {
  Builder b(cfg);
  const int reps = cfg.repeats_per_cell;
  const auto items = b.table("endowment_items.tsv");
  for (std::size_t i = 0; i < items.size(); ++i)
    for (int r = 0; r < reps; ++r) {
      const auto tid = b.next_template("endowment");
      const auto& book = b.book();
      const std::string item_block =
          "Item: " + items.at(i, "name") + "\n\nDescription: " + items.at(i, "description");
      const std::string group = "endowment|" + items.at(i, "item_id") + "|" + std::to_string(r);
      for (const char* frame : {"sell", "buy", "unload", "gift_buyer"}) {
        ordered_json payload{{"item", items.at(i, "item_id")}, {"name", items.at(i, "name")},
                             {"frame", frame}, {"repeat", r}, {"repeats", reps}};
        std::string prompt = book.field("endowment", tid, "header") + "\n\n" + item_block + "\n\n" +
                             book.field("endowment", tid, frame) + "\n\n" + book.field("endowment", tid, "footer");
        b.add(Domain::Endowment, std::move(payload), tid, {}, ParseSchema::Price, group, std::move(prompt));
      }
    }
  return b.take();
}

std::vector<TrialSpec> gen_temporal_block(const BatteryConfig& cfg) {
  Builder b(cfg);
  const int reps = cfg.repeats_per_cell;
  const auto& book = b.book();
  auto sooner_text = [&](int amount, int delay) {
    return b.money(amount) + (delay == 0 ? std::string(" today") : " in " + std::to_string(delay) + " days");
  };
  auto later_text = [&](int amount, int delay) { return b.money(amount) + " in " + format_delay(delay); };
  auto payload_for = [&](const char* set, int as, int ts, int al, int tl, int r) {
    const std::vector<std::string> options{sooner_text(as, ts), later_text(al, tl)};
    return ordered_json{{"set", set}, {"A_s", as}, {"t_s", ts}, {"A_l", al}, {"t_l", tl}, {"d", tl - ts},
                        {"r", static_cast<double>(al) / as - 1.0}, {"options", options}, {"repeat", r},
                        {"repeats", reps}};
  };

  struct Band {
    const char* name;
    int later;
    std::vector<int> sooner;
  };
  const std::array<Band, 3> bands{{
      {"small", 25, {11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24}},
      {"medium", 55, {25, 27, 30, 32, 35, 37, 40, 42, 45, 47, 50, 52, 53, 54}},
      {"large", 85, {35, 37, 40, 42, 45, 50, 52, 55, 60, 62, 65, 70, 75, 80}},
  }};
  constexpr std::array<int, 7> set1_delays{7, 14, 30, 60, 90, 120, 180};
  for (const auto& band : bands)
    for (std::size_t k = 0; k < band.sooner.size(); ++k) {
      const int tl = set1_delays[k % set1_delays.size()];
      for (int r = 0; r < reps; ++r) {
        const std::string group = "temporal|set1|" + std::to_string(band.sooner[k]) + "|" +
                                  std::to_string(band.later) + "|" + std::to_string(tl) + "|" + std::to_string(r);
        for (const std::vector<int>& order : {std::vector<int>{0, 1}, std::vector<int>{1, 0}}) {
          const auto tid = b.next_template("temporal");
          auto payload = payload_for("set1", band.sooner[k], 0, band.later, tl, r);
          payload["band"] = band.name;
          const auto options = payload["options"].get<std::vector<std::string>>();
          b.add(Domain::Temporal, std::move(payload), tid, order, ParseSchema::OptionEcho, group,
                numbered_prompt(book.field("temporal", tid, "prompt"), permute(options, order), b.base_vars()));
        }
      }
    }

  constexpr std::array<std::array<int, 2>, 7> amounts{{{6, 7}, {10, 12}, {14, 17}, {20, 25}, {28, 35}, {34, 45}, {40, 57}}};
  constexpr std::array<std::array<int, 2>, 6> delays{{{0, 14}, {0, 28}, {0, 42}, {14, 28}, {14, 42}, {28, 42}}};
  for (const auto& a : amounts)
    for (const auto& d : delays)
      for (int r = 0; r < reps; ++r) {
        const auto tid = b.next_template("temporal");
        auto payload = payload_for("set2", a[0], d[0], a[1], d[1], r);
        const auto options = payload["options"].get<std::vector<std::string>>();
        auto order = b.seeded_order(Domain::Temporal, payload, tid, 2);
        auto prompt = numbered_prompt(book.field("temporal", tid, "prompt"), permute(options, order), b.base_vars());
        b.add(Domain::Temporal, std::move(payload), tid, std::move(order), ParseSchema::OptionEcho, "",
              std::move(prompt));
      }
  return b.take();
}

// ---- vignettes -------------------------------------------------------------

std::vector<TrialSpec> gen_vignette_block(Domain domain, const BatteryConfig& cfg) {
  Builder b(cfg);
  const int reps = cfg.repeats_per_cell;
  const auto& book = b.book();
  const std::string dname(to_string(domain));
  constexpr std::array<LikertOrder, 2> orders{LikertOrder::A2D, LikertOrder::D2A};

  switch (domain) {
    case Domain::Stereotype: {
      const auto t = b.table("stereotype.tsv");
      for (std::size_t i = 0; i < t.size(); ++i)
        for (int r = 0; r < reps; ++r) {
          const std::string group = "stereotype|" + t.at(i, "item_id") + "|" + std::to_string(r);
          for (int c : {+1, -1}) {
            const auto tid = b.next_template(dname);
            std::string facts;
            for (const char* f : {"fact1", "fact2", "fact3", "fact4"}) {
              if (!facts.empty()) facts += "\n\n";
              facts += "- " + t.at(i, f);
            }
            Vars v{{"preface", t.at(i, "preface")},
                   {"cue", t.at(i, c > 0 ? "cue_suspicion" : "cue_benevolence")},
                   {"facts", facts},
                   {"statement", t.at(i, "statement")},
                   {"likert", likert_block(LikertOrder::A2D)}};
            ordered_json payload{{"item", t.at(i, "item_id")}, {"actor", t.at(i, "actor")}, {"cue_direction", c},
                                 {"likert_order", "A2D"}, {"repeat", r}, {"repeats", reps}};
            auto& trial = b.add(domain, std::move(payload), tid, likert_order_vector(LikertOrder::A2D),
                                ParseSchema::Likert, group, assets::render(book.field(dname, tid, "prompt"), v));
            trial.cue = c;
          }
        }
      break;
    }
    case Domain::Persuasion: {
      const auto t = b.table("persuasion.tsv");
      for (std::size_t i = 0; i < t.size(); ++i)
        for (int r = 0; r < reps; ++r) {
          const std::string group = "persuasion|" + t.at(i, "pair_id") + "|" + std::to_string(r);
          for (const char* frame : {"sad", "anger"}) {
            const std::string prefix = std::string_view(frame) == "sad" ? "sad" : "anger";
            std::string bullets;
            for (int k = 1; k <= 3; ++k) {
              if (k > 1) bullets += "\n\n";
              bullets += "- " + t.at(i, prefix + std::to_string(k));
            }
            for (auto order : orders) {
              const auto tid = b.next_template(dname);
              Vars v{{"title", t.at(i, "title")}, {"action", t.at(i, "action")}, {"bullets", bullets},
                     {"likert", likert_block(order)}};
              ordered_json payload{{"pair", t.at(i, "pair_id")}, {"frame", frame}, {"likert_order", to_string(order)},
                                   {"repeat", r}, {"repeats", reps}};
              b.add(domain, std::move(payload), tid, likert_order_vector(order), ParseSchema::Likert, group,
                    assets::render(book.field(dname, tid, "prompt"), v));
            }
          }
        }
      break;
    }
    case Domain::Moral:
    case Domain::Blame: {
      const bool moral = domain == Domain::Moral;
      const auto t = b.table(moral ? "moral.tsv" : "blame.tsv");
      const std::vector<std::string> statements =
          moral ? std::vector<std::string>{"wrongness", "punishment", "harm", "consequences", "intention"}
                : std::vector<std::string>{"blame", "punishment"};
      for (std::size_t i = 0; i < t.size(); ++i) {
        const int harm = to_int(t.at(i, "harm_level"), "harm_level");
        for (int r = 0; r < reps; ++r) {
          const std::string group = dname + "|" + t.at(i, "item_id") + "|" + std::to_string(r);
          for (const auto& st : statements)
            for (auto order : orders) {
              const auto tid = b.next_template(dname);
              Vars v{{"vignette", t.at(i, "vignette")}, {"statement", book.field(dname, tid, st)},
                     {"likert", likert_block(order)}};
              ordered_json payload{{"item", t.at(i, "item_id")}};
              if (moral) payload["moral_domain"] = t.at(i, "moral_domain");
              payload["harm_level"] = harm;
              payload["statement"] = st;
              payload["likert_order"] = to_string(order);
              payload["repeat"] = r;
              payload["repeats"] = reps;
              b.add(domain, std::move(payload), tid, likert_order_vector(order), ParseSchema::Likert, group,
                    assets::render(book.field(dname, tid, "prompt"), v));
            }
        }
      }
      break;
    }
    case Domain::Welfare: {
      const auto t = b.table("welfare.tsv");
      std::string labels;
      for (auto l : kAssistanceLabels) {
        if (!labels.empty()) labels += "\n\n";
        labels += l;
      }
      for (std::size_t i = 0; i < t.size(); ++i)
        for (int r = 0; r < reps; ++r) {
          const auto tid = b.next_template(dname);
          Vars v{{"case", t.at(i, "case")}, {"labels", labels}};
          ordered_json payload{{"item", t.at(i, "item_id")},
                               {"need_level", to_int(t.at(i, "need_level"), "need_level")},
                               {"repeat", r},
                               {"repeats", reps}};
          b.add(domain, std::move(payload), tid, {0, 1, 2, 3, 4}, ParseSchema::Assistance, "",
                assets::render(book.field(dname, tid, "prompt"), v));
        }
      break;
    }
    default:
      throw Error(ErrorCode::Validation, "not a vignette domain: " + dname);
  }
  return b.take();
}

// ---- social games ----------------------------------------------------------

std::vector<TrialSpec> gen_social_blocks(const BatteryConfig& cfg) {
  Builder b(cfg);
  const int reps = cfg.repeats_per_cell;
  for (int total = 5; total <= 15; ++total)
    for (int y = 1; 2 * y < total; ++y)
      for (int r = 0; r < reps; ++r) {
        const auto tid = b.next_template("ultimatum");
        Vars v = b.base_vars();
        v["T"] = b.money(total);
        v["y"] = b.money(y);
        v["rest"] = b.money(total - y);
        ordered_json payload{{"T", total}, {"y", y}, {"share", static_cast<double>(y) / total}, {"repeat", r},
                             {"repeats", reps}};
        b.add(Domain::Ultimatum, std::move(payload), tid, {}, ParseSchema::AcceptReject, "",
              assets::render(b.book().field("ultimatum", tid, "prompt"), v));
      }

  for (int total = 5; total <= 15; ++total)
    for (int r = 0; r < reps; ++r) {
      const auto tid = b.next_template("dictator");
      std::vector<int> allowed;
      std::string choices;
      for (int g = 0; g <= total; ++g) {
        allowed.push_back(g);
        if (g) choices += ", ";
        choices += b.money(g);
      }
      Vars v{{"T", b.money(total)}, {"choices", choices}};
      ordered_json payload{{"T", total}, {"allowed", allowed}, {"repeat", r}, {"repeats", reps}};
      b.add(Domain::Dictator, std::move(payload), tid, {}, ParseSchema::GiveAmount, "",
            assets::render(b.book().field("dictator", tid, "prompt"), v));
    }
  return b.take();
}

// ---- whole battery ---------------------------------------------------------

std::size_t expected_group_size(Domain d) {
  switch (d) {
    case Domain::RationalityCompleteness: return 2;
    case Domain::RationalityTransitivity: return 3;
    case Domain::RationalityContinuity: return kContinuitySteps;
    case Domain::RationalityIndependence: return 2;
    case Domain::RiskCeLadder: return kLadderRungs;
    case Domain::Endowment: return 4;
    case Domain::Temporal: return 2;  // set-1 order pairs
    case Domain::Stereotype: return 2;
    case Domain::Persuasion: return 4;
    case Domain::Moral: return 10;
    case Domain::Blame: return 4;
    default: return 0;
  }
}

void validate_battery(std::span<const TrialSpec> trials) {
  std::set<std::string> ids;
  std::map<std::pair<Domain, std::string>, std::size_t> groups;
  for (const auto& t : trials) {
    if (!ids.insert(t.trial_id).second) throw Error(ErrorCode::Validation, "duplicate trial_id " + t.trial_id);
    if (!parse_schema_from_string(to_string(t.parse_schema))) {
      throw Error(ErrorCode::Validation, t.trial_id + ": parse_schema has no parser");
    }
    if (!t.group_key.empty()) ++groups[{t.domain, t.group_key}];
  }
  for (const auto& [key, count] : groups) {
    const auto want = expected_group_size(key.first);
    if (want != 0 && count != want) {
      throw Error(ErrorCode::Validation, "group " + key.second + " has " + std::to_string(count) +
                                             " trials, expected " + std::to_string(want));
    }
  }
}

std::vector<TrialSpec> generate_battery(const BatteryConfig& cfg) {
  auto wanted = [&](Domain d) {
    return cfg.domains.empty() || std::find(cfg.domains.begin(), cfg.domains.end(), d) != cfg.domains.end();
  };
  auto any_of = [&](std::initializer_list<Domain> ds) {
    return std::any_of(ds.begin(), ds.end(), wanted);
  };
  std::vector<TrialSpec> all;
  auto append = [&](std::vector<TrialSpec> block) {
    for (auto& t : block)
      if (wanted(t.domain)) all.push_back(std::move(t));
  };
  if (any_of({Domain::RationalityCompleteness, Domain::RationalityTransitivity, Domain::RationalityContinuity,
              Domain::RationalityIndependence})) {
    append(gen_rationality_battery(cfg));
  }
  if (any_of({Domain::RiskChoice, Domain::RiskCeLadder})) append(gen_risk_block(cfg));
  if (wanted(Domain::Ambiguity)) append(gen_ambiguity_block(cfg));
  if (wanted(Domain::Loss)) append(gen_loss_block(cfg));
  if (wanted(Domain::Endowment)) append(gen_endowment_block(cfg));
  if (wanted(Domain::Temporal)) append(gen_temporal_block(cfg));
  for (Domain d : {Domain::Stereotype, Domain::Persuasion, Domain::Moral, Domain::Blame, Domain::Welfare}) {
    if (wanted(d)) append(gen_vignette_block(d, cfg));
  }
  if (any_of({Domain::Ultimatum, Domain::Dictator})) append(gen_social_blocks(cfg));
  validate_battery(all);
  return all;
}

// ---- serialization ---------------------------------------------------------

ordered_json to_json(const TrialSpec& t) {
  ordered_json j;
  j["trial_id"] = t.trial_id;
  j["domain"] = to_string(t.domain);
  j["template_id"] = t.template_id;
  j["group_key"] = t.group_key;
  j["parse_schema"] = to_string(t.parse_schema);
  j["option_order"] = t.option_order;
  j["cue"] = t.cue ? ordered_json(*t.cue) : ordered_json(nullptr);
  j["payload"] = t.payload;
  j["prompt_text"] = t.prompt_text;
  return j;
}

TrialSpec trial_from_json(const ordered_json& j) {
  try {
    TrialSpec t;
    t.trial_id = j.at("trial_id").get<std::string>();
    const auto dom = domain_from_string(j.at("domain").get<std::string>());
    if (!dom) throw Error(ErrorCode::Validation, "unknown domain '" + j.at("domain").get<std::string>() + "'");
    t.domain = *dom;
    t.template_id = j.at("template_id").get<std::string>();
    t.group_key = j.at("group_key").get<std::string>();
    const auto schema = parse_schema_from_string(j.at("parse_schema").get<std::string>());
    if (!schema) throw Error(ErrorCode::Validation, "unknown parse_schema in " + t.trial_id);
    t.parse_schema = *schema;
    t.option_order = j.at("option_order").get<std::vector<int>>();
    if (!j.at("cue").is_null()) t.cue = j.at("cue").get<int>();
    t.payload = j.at("payload");
    t.prompt_text = j.at("prompt_text").get<std::string>();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Validation, std::string("malformed trial: ") + e.what());
  }
}

std::string to_jsonl(std::span<const TrialSpec> trials) {
  std::string out;
  for (const auto& t : trials) {
    out += to_json(t).dump();
    out += '\n';
  }
  return out;
}

}  // namespace choicelab::battery
