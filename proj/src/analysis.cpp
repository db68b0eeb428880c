#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "choicelab/choice_models.hpp"
#include "choicelab/harness.hpp"
#include "choicelab/scoring.hpp"
#include "choicelab/stats.hpp"

namespace choicelab::harness {

using battery::Domain;
namespace models = choicelab::models;

namespace {

ordered_json num(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

ordered_json to_j(const scoring::Rate& r) {
  return {{"value", num(r.value)}, {"k", r.k}, {"n", r.n}, {"excluded", r.excluded}};
}
ordered_json to_j(const scoring::Mean& m) { return {{"value", num(m.value)}, {"n", m.n}, {"excluded", m.excluded}}; }
ordered_json to_j(const scoring::AxiomRate& a) {
  return {{"rate", num(a.rate)}, {"compliant", a.compliant}, {"groups", a.groups}};
}

ordered_json to_j(const models::FitDiagnostics& d) {
  return {{"log_likelihood", num(d.log_likelihood)},
          {"gradient_norm", num(d.gradient_norm)},
          {"iterations", d.iterations},
          {"converged", d.converged},
          {"n", d.n},
          {"warnings", d.warnings}};
}

ordered_json failed(const Error& e) { return {{"status", to_string(e.code())}, {"message", e.what()}}; }

template <typename F>
ordered_json guarded(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    return failed(e);
  }
}

bool usable(const TrialRecord& r) { return r.status == RecordStatus::Parsed && r.outcome.ok(); }

std::vector<const TrialRecord*> by_domain(const std::vector<TrialRecord>& recs, Domain d) {
  std::vector<const TrialRecord*> out;
  for (const auto& r : recs)
    if (r.trial.domain == d && usable(r)) out.push_back(&r);
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->trial.trial_id < b->trial.trial_id; });
  return out;
}

double pd(const TrialRecord* r, const char* key) { return r->trial.payload.at(key).get<double>(); }

// Equal-count bins over the sorted x values.
ordered_json decile_bins(std::vector<std::pair<double, double>> xy) {
  std::stable_sort(xy.begin(), xy.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  ordered_json out = ordered_json::array();
  const std::size_t n = xy.size();
  const std::size_t bins = std::min<std::size_t>(10, n);
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t lo = b * n / bins, hi = (b + 1) * n / bins;
    double sx = 0, sy = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      sx += xy[i].first;
      sy += xy[i].second;
    }
    const double m = static_cast<double>(hi - lo);
    out.push_back({{"bin", b}, {"x", sx / m}, {"y", sy / m}, {"n", hi - lo}});
  }
  return out;
}

ordered_json condition_report(const std::vector<TrialRecord>& recs, double clip) {
  ordered_json c;
  c["label"] = recs.front().condition.label();
  c["condition"] = to_json(recs.front().condition);
  const auto counts = count_records(recs);
  c["counts"] = {{"trials", counts.trials},
                 {"parsed", counts.parsed},
                 {"parse_failed", counts.parse_failed},
                 {"transport_failed", counts.transport_failed}};
  std::vector<std::string> ids;
  for (const auto& r : recs) ids.push_back(r.trial.trial_id);
  std::sort(ids.begin(), ids.end());
  std::string joined;
  for (const auto& id : ids) joined += id + "\n";
  c["record_ids_sha256"] = sha256_hex(joined);

  const auto ax = scoring::score_axioms(recs);
  c["axioms"] = {{"completeness", to_j(ax.completeness)},
                 {"transitivity", to_j(ax.transitivity)},
                 {"continuity", to_j(ax.continuity)},
                 {"independence", to_j(ax.independence)},
                 {"overall", num(ax.overall)}};

  const auto idx = scoring::compute_domain_indices(recs, clip);
  ordered_json aai_by_stake = ordered_json::array();
  for (const auto& [g, r] : idx.rates.aai_by_stake) aai_by_stake.push_back({{"stake", g}, {"rate", to_j(r)}});
  ordered_json ug_by_share = ordered_json::array();
  for (const auto& [s, r] : idx.rates.ug_rejection_by_share) ug_by_share.push_back({{"share", s}, {"rate", to_j(r)}});
  c["indices"] = {{"risky", to_j(idx.rates.risky)},
                  {"aai", to_j(idx.rates.aai)},
                  {"loss_accept", to_j(idx.rates.loss_accept)},
                  {"later", to_j(idx.rates.later)},
                  {"ug_rejection", to_j(idx.rates.ug_rejection)},
                  {"dg_give", to_j(idx.rates.dg_give)},
                  {"dg_share", to_j(idx.rates.dg_share)},
                  {"assistance", to_j(idx.rates.assistance)},
                  {"sai", to_j(idx.sai.sai)},
                  {"sai_norm", to_j(idx.sai.sai_norm)},
                  {"match_index", to_j(idx.match_index.mi)},
                  {"moral_condemnation", to_j(idx.moral.condemnation)},
                  {"moral_harm_consequences", to_j(idx.moral.harm_consequences)},
                  {"moral_intention", to_j(idx.moral.intention)},
                  {"blame", to_j(idx.blame)},
                  {"wta", to_j(idx.endowment.wta)},
                  {"wtp", to_j(idx.endowment.wtp)},
                  {"wta_unload", to_j(idx.endowment.wta_unload)},
                  {"wta_gift", to_j(idx.endowment.wta_gift)},
                  {"delta_e", num(idx.endowment.delta_e)},
                  {"aai_by_stake", aai_by_stake},
                  {"ug_rejection_by_share", ug_by_share}};

  // ---- fits
  ordered_json fits, plots;
  const auto risk = by_domain(recs, Domain::RiskChoice);
  std::vector<models::RiskObservation> risk_obs;
  std::vector<models::LotteryObservation> lot_obs;
  std::vector<std::pair<double, double>> risk_xy;
  for (auto* r : risk) {
    if (!r->outcome.option) continue;
    const bool risky = *r->outcome.option == 0;
    risk_obs.push_back({pd(r, "delta_ev"), risky});
    lot_obs.push_back({{pd(r, "p"), pd(r, "G"), pd(r, "S")}, risky});
    risk_xy.emplace_back(pd(r, "delta_ev"), risky ? 1.0 : 0.0);
  }
  std::optional<models::RiskLogitFit> risk_fit;
  fits["risk_logit"] = guarded([&]() -> ordered_json {
    if (risk_obs.empty()) throw Error(ErrorCode::Empty, "no risk records");
    risk_fit = models::fit_risk_logit(risk_obs);
    return {{"status", "ok"},
            {"tau", risk_fit->tau},
            {"b", risk_fit->b},
            {"se_tau", num(risk_fit->se_tau)},
            {"se_b", num(risk_fit->se_b)},
            {"diagnostics", to_j(risk_fit->diag)}};
  });
  {
    ordered_json rc{{"status", fits["risk_logit"]["status"]}, {"binning", "decile"}};
    rc["empirical"] = decile_bins(risk_xy);
    rc["fitted"] = ordered_json::array();
    if (risk_fit && !risk_xy.empty()) {
      double lo = risk_xy.front().first, hi = lo;
      for (const auto& [x, _] : risk_xy) lo = std::min(lo, x), hi = std::max(hi, x);
      for (int i = 0; i <= 100; ++i) {
        const double x = lo + (hi - lo) * i / 100.0;
        rc["fitted"].push_back({{"x", x}, {"y", models::logistic(risk_fit->tau * x + risk_fit->b)}});
      }
    }
    plots["risk_curve"] = rc;
  }

  std::optional<models::CurvatureFit> curv;
  fits["curvature"] = guarded([&]() -> ordered_json {
    if (lot_obs.empty()) throw Error(ErrorCode::Empty, "no risk records");
    curv = models::fit_utility_curvature(lot_obs);
    return {{"status", "ok"},          {"rho", curv->rho},
            {"tau", curv->tau},        {"b", curv->b},
            {"at_boundary", curv->at_boundary}, {"unidentified", curv->unidentified},
            {"diagnostics", to_j(curv->diag)}};
  });
  {
    ordered_json uc{{"status", fits["curvature"]["status"]}, {"points", ordered_json::array()}};
    if (curv)
      for (int x = 0; x <= 100; x += 5)
        uc["points"].push_back({{"x", x}, {"u", std::pow(x / 100.0, curv->rho)}});
    plots["utility_curve"] = uc;
  }

  // certainty equivalents from the ladders, then Prelec
  std::map<std::pair<int, int>, std::map<double, models::LadderRung>> ladders;
  for (auto* r : by_domain(recs, Domain::RiskCeLadder)) {
    if (!r->outcome.option) continue;
    const int g = static_cast<int>(std::lround(pd(r, "G")));
    const int ppm = static_cast<int>(std::lround(pd(r, "p") * 1000));
    auto& rung = ladders[{g, ppm}][pd(r, "S")];
    rung.sure = pd(r, "S");
    rung.total += 1;
    rung.chose_sure += *r->outcome.option == 1;
  }
  std::vector<models::CePoint> ce_points;
  ordered_json ce_json = ordered_json::array();
  for (const auto& [key, rungs] : ladders) {
    std::vector<models::LadderRung> v;
    for (const auto& [s, rung] : rungs) v.push_back(rung);
    const double g = key.first, p = key.second / 1000.0;
    try {
      const auto est = models::extract_certainty_equivalent(v);
      ce_points.push_back({p, est.ce, g});
      ce_json.push_back({{"G", g},
                         {"p", p},
                         {"ce", est.ce},
                         {"method", est.method == models::CeMethod::Midpoint ? "midpoint" : "logistic_crossing"}});
    } catch (const Error& e) {
      ce_json.push_back({{"G", g}, {"p", p}, {"ce", nullptr}, {"status", to_string(e.code())}});
    }
  }
  const double rho = curv ? curv->rho : 1.0;
  std::optional<models::PrelecFit> prelec;
  fits["prelec"] = guarded([&]() -> ordered_json {
    if (ce_points.empty()) throw Error(ErrorCode::Empty, "no certainty equivalents");
    prelec = models::fit_prelec_from_ce(ce_points, rho);
    return {{"status", "ok"},
            {"alpha", prelec->alpha},
            {"beta_w", prelec->beta_w},
            {"rho_used", rho},
            {"points_used", prelec->points_used},
            {"outliers", prelec->outliers},
            {"residual_ss", prelec->residual_ss},
            {"diagnostics", to_j(prelec->diag)}};
  });
  fits["prelec"]["ce_points"] = ce_json;
  {
    ordered_json pc{{"status", fits["prelec"]["status"]}, {"empirical", ordered_json::array()},
                    {"fitted", ordered_json::array()}};
    for (const auto& pt : ce_points)
      if (pt.ce > 0) pc["empirical"].push_back({{"p", pt.p}, {"w", std::pow(pt.ce / pt.gain, rho)}, {"G", pt.gain}});
    if (prelec)
      for (int i = 1; i < 100; ++i) {
        const double p = i / 100.0;
        pc["fitted"].push_back({{"p", p}, {"w", models::prelec_weight(p, prelec->alpha, prelec->beta_w)}});
      }
    plots["prelec_curve"] = pc;
  }

  std::vector<models::GambleObservation> gambles;
  std::set<double> losses;
  for (auto* r : by_domain(recs, Domain::Loss))
    if (r->outcome.accept) {
      gambles.push_back({{pd(r, "G"), pd(r, "L")}, *r->outcome.accept});
      losses.insert(pd(r, "L"));
    }
  std::optional<models::LossLogitFit> loss;
  fits["loss"] = guarded([&]() -> ordered_json {
    if (gambles.empty()) throw Error(ErrorCode::Empty, "no loss records");
    loss = models::fit_loss_logit(gambles);
    const auto& p = loss->params;
    auto opt = [](const std::optional<double>& v) { return v ? num(*v) : ordered_json(nullptr); };
    return {{"status", p.lambda_is_proxy ? "PROXY" : (loss->separated ? "SEPARATED" : "ok")},
            {"lambda", p.lambda},
            {"lambda_is_proxy", p.lambda_is_proxy},
            {"separated", loss->separated},
            {"beta0", p.lambda_is_proxy ? ordered_json(nullptr) : num(p.beta0)},
            {"beta_gain", opt(p.beta_gain)},
            {"beta_loss", opt(p.beta_loss)},
            {"diagnostics", to_j(loss->diag)}};
  });
  {
    ordered_json lf{{"status", fits["loss"]["status"]}, {"points", ordered_json::array()}};
    if (loss)
      for (double l : losses)
        if (const auto g = loss->params.frontier_gain(l)) lf["points"].push_back({{"L", l}, {"G", *g}});
    plots["loss_frontier"] = lf;
  }

  std::vector<models::TemporalObservation> tobs;
  for (auto* r : by_domain(recs, Domain::Temporal))
    if (r->outcome.option)
      tobs.push_back({{pd(r, "A_s"), pd(r, "t_s"), pd(r, "A_l"), pd(r, "t_l")}, *r->outcome.option == 1});
  std::optional<models::TemporalFit> tfit;
  fits["temporal"] = guarded([&]() -> ordered_json {
    if (tobs.empty()) throw Error(ErrorCode::Empty, "no temporal records");
    tfit = models::fit_temporal_surface(tobs);
    return {{"status", "ok"},
            {"b0", tfit->params.b0},
            {"bd", tfit->params.bd},
            {"bp", tfit->params.bp},
            {"diagnostics", to_j(tfit->diag)}};
  });
  {
    ordered_json tc{{"status", fits["temporal"]["status"]}, {"lines", ordered_json::array()}};
    if (tfit)
      for (const auto& line : tfit->contours) {
        ordered_json pts = ordered_json::array();
        for (std::size_t i = 0; i < line.delay.size(); ++i)
          pts.push_back({{"delay", line.delay[i]}, {"premium", num(line.premium[i])}});
        tc["lines"].push_back({{"level", line.level}, {"points", pts}});
      }
    plots["temporal_contours"] = tc;
  }

  {
    ordered_json av{{"status", idx.rates.aai_by_stake.empty() ? "EMPTY" : "ok"}, {"points", ordered_json::array()}};
    for (const auto& [g, r] : idx.rates.aai_by_stake)
      av["points"].push_back({{"stake", g}, {"rate", num(r.value)}, {"k", r.k}, {"n", r.n}});
    plots["aai_vs_stake"] = av;
  }

  c["fits"] = fits;
  c["plots"] = plots;
  return c;
}

std::string fmt(const ordered_json& v, int digits = 4) {
  if (v.is_null()) return "";
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v.get<double>());
  return buf;
}

std::string csv_num(const ordered_json& v) {
  if (v.is_null()) return "";
  if (!v.is_number_float()) return fmt(v);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v.get<double>());
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return out + "\"";
}

}  // namespace

// ---- analyze ---------------------------------------------------------------

ordered_json analyze(const std::vector<std::vector<TrialRecord>>& sets, const std::vector<std::string>& digests,
                     double price_clip) {
  std::map<std::string, std::vector<TrialRecord>> by_condition;
  std::map<std::string, SteeringCondition> conditions;
  ordered_json inputs = ordered_json::array();
  for (std::size_t i = 0; i < sets.size(); ++i) {
    std::set<std::string> labels;
    for (const auto& r : sets[i]) {
      const auto label = r.condition.label();
      labels.insert(label);
      by_condition[label].push_back(r);
      conditions.emplace(label, r.condition);
    }
    inputs.push_back({{"sha256", i < digests.size() ? digests[i] : std::string()},
                      {"records", sets[i].size()},
                      {"conditions", std::vector<std::string>(labels.begin(), labels.end())}});
  }
  if (by_condition.empty()) throw Error(ErrorCode::Empty, "no records to analyze");
  const bool has_neutral = by_condition.count("none") > 0;
  if (!has_neutral && by_condition.size() > 0)
    throw Error(ErrorCode::Validation, "steered records need a neutral (none) baseline");

  ordered_json report;
  report["schema"] = kReportSchema;
  report["provenance"] = {{"tool_version", tool_version()},
                          {"inputs", inputs},
                          {"price_clip", price_clip},
                          {"effect_unit", "per-trial index values, steered minus neutral"},
                          {"risk_curve_binning", "decile"}};

  std::vector<std::string> order{"none"};
  for (const auto& [label, _] : by_condition)
    if (label != "none") order.push_back(label);

  report["conditions"] = ordered_json::array();
  for (const auto& label : order) report["conditions"].push_back(condition_report(by_condition[label], price_clip));

  // effects: Hedges' g of each steered condition against the neutral set
  ordered_json effects = ordered_json::array();
  std::vector<stats::EffectSize> ok_effects;
  const auto& neutral = by_condition["none"];
  for (const auto& label : order) {
    if (label == "none") continue;
    const auto& cond = conditions.at(label);
    const auto steered_vals = scoring::per_trial_index_values(by_condition[label], price_clip, cond.emotion);
    const auto neutral_vals = scoring::per_trial_index_values(neutral, price_clip, cond.emotion);
    for (const auto& [domain, sv] : steered_vals) {
      const auto nv = neutral_vals.find(domain);
      ordered_json row{{"domain", domain},
                       {"emotion", to_string(cond.emotion)},
                       {"method", to_string(cond.method)},
                       {"condition", label}};
      if (nv == neutral_vals.end()) {
        row["status"] = "NO_BASELINE";
        effects.push_back(row);
        continue;
      }
      try {
        auto e = stats::hedges_g(sv, nv->second);
        e.label = {domain, std::string(to_string(cond.emotion)), std::string(to_string(cond.method))};
        row["status"] = "ok";
        row["g"] = e.g;
        row["se"] = e.se;
        row["ci_low"] = e.ci_low;
        row["ci_high"] = e.ci_high;
        row["n_steered"] = e.n1;
        row["n_neutral"] = e.n2;
        ok_effects.push_back(e);
      } catch (const Error& err) {
        row["status"] = to_string(err.code());
        row["n_steered"] = sv.size();
        row["n_neutral"] = nv->second.size();
      }
      effects.push_back(row);
    }
  }
  report["effects"] = effects;

  ordered_json meta;
  try {
    const auto m = stats::random_effects_meta(ok_effects);
    meta = {{"status", "ok"},       {"pooled_g", m.pooled_g}, {"pooled_se", m.pooled_se}, {"ci_low", m.ci_low},
            {"ci_high", m.ci_high}, {"tau2", m.tau2},         {"q", m.q},                 {"k", m.k}};
    std::size_t w = 0;
    for (auto& row : report["effects"])
      if (row["status"] == "ok") row["weight"] = m.weights[w++];
  } catch (const Error& e) {
    meta = {{"status", to_string(e.code())}, {"k", ok_effects.size()}};
  }
  report["meta"] = meta;

  ordered_json forest = ordered_json::array();
  for (const auto& row : report["effects"]) {
    forest.push_back({{"kind", "effect"},
                      {"label", row["domain"].get<std::string>() + " / " + row["emotion"].get<std::string>() + " / " +
                                    row["method"].get<std::string>()},
                      {"status", row["status"]},
                      {"g", row.value("g", ordered_json(nullptr))},
                      {"ci_low", row.value("ci_low", ordered_json(nullptr))},
                      {"ci_high", row.value("ci_high", ordered_json(nullptr))},
                      {"weight", row.value("weight", ordered_json(nullptr))}});
  }
  forest.push_back({{"kind", "diamond"},
                    {"label", "random-effects pooled"},
                    {"status", meta["status"]},
                    {"g", meta.value("pooled_g", ordered_json(nullptr))},
                    {"ci_low", meta.value("ci_low", ordered_json(nullptr))},
                    {"ci_high", meta.value("ci_high", ordered_json(nullptr))},
                    {"weight", meta["status"] == "ok" ? ordered_json(1.0) : ordered_json(nullptr)}});
  report["forest"] = forest;
  return report;
}

ordered_json cmd_analyze(const std::vector<fs::path>& records, const fs::path& out, double price_clip) {
  if (records.empty()) throw Error(ErrorCode::Validation, "analyze needs at least one records file");
  std::vector<std::vector<TrialRecord>> sets;
  std::vector<std::string> digests;
  for (const auto& p : records) {
    sets.push_back(read_records(p));
    digests.push_back(file_sha256(p));
  }
  auto report = analyze(sets, digests, price_clip);
  if (!out.empty()) {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::Validation, "cannot write " + out.string());
    f << report.dump(2) << "\n";
  }
  return report;
}

// ---- report ----------------------------------------------------------------

std::string render_markdown(const ordered_json& rep) {
  std::string md = "# Choice audit report\n\n";
  md += "Schema `" + rep.at("schema").get<std::string>() + "`, tool " +
        rep["provenance"]["tool_version"].get<std::string>() + ".\n\n";
  md += "| input sha256 | records | conditions |\n|---|---|---|\n";
  for (const auto& in : rep["provenance"]["inputs"]) {
    std::string conds;
    for (const auto& c : in["conditions"]) conds += (conds.empty() ? "" : ", ") + c.get<std::string>();
    md += "| `" + in["sha256"].get<std::string>().substr(0, 16) + "` | " + fmt(in["records"]) + " | " + conds + " |\n";
  }

  for (const auto& c : rep["conditions"]) {
    md += "\n## Condition `" + c["label"].get<std::string>() + "`\n\n";
    const auto& n = c["counts"];
    md += "Records: " + fmt(n["trials"]) + " (parsed " + fmt(n["parsed"]) + ", parse failures " +
          fmt(n["parse_failed"]) + ", transport failures " + fmt(n["transport_failed"]) + ").\n\n";

    md += "### Axioms\n\n| axiom | rate | compliant | groups |\n|---|---|---|---|\n";
    for (const char* a : {"completeness", "transitivity", "continuity", "independence"}) {
      const auto& x = c["axioms"][a];
      md += std::string("| ") + a + " | " + fmt(x["rate"]) + " | " + fmt(x["compliant"]) + " | " + fmt(x["groups"]) +
            " |\n";
    }
    md += "| overall | " + fmt(c["axioms"]["overall"]) + " | | |\n";

    md += "\n### Indices\n\n| index | value | n | excluded |\n|---|---|---|---|\n";
    for (const auto& [k, v] : c["indices"].items()) {
      if (v.is_array()) continue;
      if (v.is_object())
        md += "| " + k + " | " + fmt(v["value"]) + " | " + fmt(v["n"]) + " | " + fmt(v["excluded"]) + " |\n";
      else
        md += "| " + k + " | " + fmt(v) + " | | |\n";
    }

    md += "\n### Fits\n\n| model | status | parameters |\n|---|---|---|\n";
    for (const auto& [name, f] : c["fits"].items()) {
      std::string params;
      for (const auto& [k, v] : f.items()) {
        if (k == "status" || k == "diagnostics" || k == "ce_points" || k == "message" || v.is_array() ||
            v.is_boolean())
          continue;
        params += (params.empty() ? "" : ", ") + k + " = " + fmt(v);
      }
      if (f.contains("message")) params = f["message"].get<std::string>();
      md += "| " + name + " | " + f["status"].get<std::string>() + " | " + params + " |\n";
    }
  }

  md += "\n## Emotion effects (Hedges' g, steered vs neutral)\n\n";
  if (rep["effects"].empty()) {
    md += "No steered record sets were supplied.\n";
  } else {
    md += "| domain | emotion | method | status | g | 95% CI | n steered | n neutral |\n|---|---|---|---|---|---|---|---|\n";
    for (const auto& e : rep["effects"]) {
      const bool ok = e["status"] == "ok";
      md += "| " + e["domain"].get<std::string>() + " | " + e["emotion"].get<std::string>() + " | " +
            e["method"].get<std::string>() + " | " + e["status"].get<std::string>() + " | " +
            (ok ? fmt(e["g"]) : "") + " | " + (ok ? "[" + fmt(e["ci_low"]) + ", " + fmt(e["ci_high"]) + "]" : "") +
            " | " + fmt(e.value("n_steered", ordered_json(nullptr))) + " | " +
            fmt(e.value("n_neutral", ordered_json(nullptr))) + " |\n";
    }
  }
  const auto& m = rep["meta"];
  md += "\nRandom-effects pool: ";
  if (m["status"] == "ok")
    md += "g = " + fmt(m["pooled_g"]) + " [" + fmt(m["ci_low"]) + ", " + fmt(m["ci_high"]) + "], tau^2 = " +
          fmt(m["tau2"]) + ", Q = " + fmt(m["q"]) + ", k = " + fmt(m["k"]) + ".\n";
  else
    md += m["status"].get<std::string>() + " (k = " + fmt(m["k"]) + ").\n";
  return md;
}

std::map<std::string, std::string> render_csv(const ordered_json& rep) {
  std::map<std::string, std::string> files;
  auto line = [](std::initializer_list<std::string> cells) {
    std::string s;
    bool first = true;
    for (const auto& c : cells) {
      if (!first) s += ",";
      s += csv_field(c);
      first = false;
    }
    return s + "\n";
  };

  std::string risk = "condition,status,kind,x,y,n\n", prelec = "condition,status,kind,p,w,G\n",
              util = "condition,status,x,u\n", loss = "condition,status,L,G\n",
              aai = "condition,status,stake,rate,k,n\n", temporal = "condition,status,level,delay,premium\n";
  for (const auto& c : rep["conditions"]) {
    const auto label = c["label"].get<std::string>();
    const auto& p = c["plots"];
    auto st = [&](const char* key) { return p[key]["status"].get<std::string>(); };

    const auto& rc = p["risk_curve"];
    for (const auto& b : rc["empirical"])
      risk += line({label, st("risk_curve"), "empirical", csv_num(b["x"]), csv_num(b["y"]), csv_num(b["n"])});
    for (const auto& b : rc["fitted"])
      risk += line({label, st("risk_curve"), "fitted", csv_num(b["x"]), csv_num(b["y"]), ""});
    if (rc["fitted"].empty()) risk += line({label, st("risk_curve"), "fitted", "", "", ""});

    const auto& pc = p["prelec_curve"];
    for (const auto& b : pc["empirical"])
      prelec += line({label, st("prelec_curve"), "empirical", csv_num(b["p"]), csv_num(b["w"]), csv_num(b["G"])});
    for (const auto& b : pc["fitted"])
      prelec += line({label, st("prelec_curve"), "fitted", csv_num(b["p"]), csv_num(b["w"]), ""});
    if (pc["fitted"].empty()) prelec += line({label, st("prelec_curve"), "fitted", "", "", ""});

    if (p["utility_curve"]["points"].empty()) util += line({label, st("utility_curve"), "", ""});
    for (const auto& b : p["utility_curve"]["points"])
      util += line({label, st("utility_curve"), csv_num(b["x"]), csv_num(b["u"])});

    if (p["loss_frontier"]["points"].empty()) loss += line({label, st("loss_frontier"), "", ""});
    for (const auto& b : p["loss_frontier"]["points"])
      loss += line({label, st("loss_frontier"), csv_num(b["L"]), csv_num(b["G"])});

    if (p["aai_vs_stake"]["points"].empty()) aai += line({label, st("aai_vs_stake"), "", "", "", ""});
    for (const auto& b : p["aai_vs_stake"]["points"])
      aai += line({label, st("aai_vs_stake"), csv_num(b["stake"]), csv_num(b["rate"]), csv_num(b["k"]),
                   csv_num(b["n"])});

    if (p["temporal_contours"]["lines"].empty()) temporal += line({label, st("temporal_contours"), "", "", ""});
    for (const auto& l : p["temporal_contours"]["lines"])
      for (const auto& b : l["points"])
        temporal += line({label, st("temporal_contours"), csv_num(l["level"]), csv_num(b["delay"]),
                          csv_num(b["premium"])});
  }
  files["risk_curve.csv"] = risk;
  files["prelec_curve.csv"] = prelec;
  files["utility_curve.csv"] = util;
  files["loss_frontier.csv"] = loss;
  files["aai_vs_stake.csv"] = aai;
  files["temporal_contours.csv"] = temporal;

  std::string forest = "kind,label,status,g,ci_low,ci_high,weight\n";
  for (const auto& r : rep["forest"])
    forest += line({r["kind"].get<std::string>(), r["label"].get<std::string>(), r["status"].get<std::string>(),
                    csv_num(r["g"]), csv_num(r["ci_low"]), csv_num(r["ci_high"]), csv_num(r["weight"])});
  files["forest.csv"] = forest;
  return files;
}

std::vector<fs::path> cmd_report(const fs::path& report, const fs::path& out_dir, std::string_view format) {
  if (format != "markdown" && format != "csv" && format != "all")
    throw Error(ErrorCode::Validation, "--format: expected markdown, csv or all");
  std::ifstream in(report);
  if (!in) throw Error(ErrorCode::Validation, "cannot read report " + report.string());
  const auto rep = ordered_json::parse(in, nullptr, false);
  if (rep.is_discarded() || !rep.is_object() || rep.value("schema", std::string()) != kReportSchema)
    throw Error(ErrorCode::Validation, report.string() + ": not a " + std::string(kReportSchema) + " document");

  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  auto emit = [&](const std::string& name, const std::string& content) {
    const auto path = out_dir / name;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::Validation, "cannot write " + path.string());
    f << content;
    written.push_back(path);
  };
  if (format != "csv") emit("summary.md", render_markdown(rep));
  if (format != "markdown")
    for (const auto& [name, content] : render_csv(rep)) emit(name, content);
  return written;
}

}  // namespace choicelab::harness
