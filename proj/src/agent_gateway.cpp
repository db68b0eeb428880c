#include "choicelab/agent_gateway.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "choicelab/rng.hpp"

namespace choicelab::gateway {

using battery::Domain;
using battery::TrialSpec;
using nlohmann::ordered_json;
using parsing::ParsedOutcome;
using parsing::RawResponse;

namespace {

constexpr std::string_view kExemplarHeader = "Things you might say right now:";

struct IcpAssets {
  std::map<Emotion, std::string> preambles;
  std::map<Intensity, std::string> modifiers;
  std::map<Emotion, std::vector<std::string>> exemplars;
  bool has_exemplars = false;
};

const IcpAssets& icp_assets(const std::filesystem::path& dir) {
  static std::mutex mu;
  static std::map<std::string, IcpAssets> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(dir.string());
  if (it != cache.end()) return it->second;

  IcpAssets a;
  const auto pre = assets::load_table(dir / "icp_preambles.tsv");
  for (std::size_t i = 0; i < pre.size(); ++i) a.preambles[emotion_from_string(pre.at(i, "emotion"))] = pre.at(i, "preamble");
  const auto mods = assets::load_table(dir / "icp_intensity.tsv");
  for (std::size_t i = 0; i < mods.size(); ++i) a.modifiers[intensity_from_string(mods.at(i, "level"))] = mods.at(i, "modifier");
  if (std::filesystem::exists(dir / "icp_exemplars.tsv")) {
    const auto ex = assets::load_table(dir / "icp_exemplars.tsv");
    for (std::size_t i = 0; i < ex.size(); ++i)
      a.exemplars[emotion_from_string(ex.at(i, "emotion"))].push_back(ex.at(i, "text"));
    a.has_exemplars = true;
  }
  return cache.emplace(dir.string(), std::move(a)).first->second;
}

std::string render_preamble(const IcpAssets& a, Emotion emotion, Intensity intensity) {
  const auto p = a.preambles.find(emotion);
  if (p == a.preambles.end())
    throw Error(ErrorCode::UnknownEmotion, "no persona preamble for '" + std::string(to_string(emotion)) + "'");
  const auto m = a.modifiers.find(intensity);
  if (m == a.modifiers.end())
    throw Error(ErrorCode::MissingAsset, "no modifier for intensity " + std::string(to_string(intensity)));
  return assets::render(p->second, {{"modifier", m->second.empty() ? "" : m->second + " "}});
}

double intensity_scale(Intensity i) {
  switch (i) {
    case Intensity::VeryLow: return 0.25;
    case Intensity::Low: return 0.5;
    case Intensity::Medium: return 1.0;
    case Intensity::High: return 1.5;
    case Intensity::VeryHigh: return 2.0;
  }
  return 1.0;
}

int clamp_likert(double v) { return std::clamp(static_cast<int>(std::lround(v)), 1, 5); }

double lottery_ev(const ordered_json& lot) {
  double ev = 0.0;
  for (const auto& px : lot) ev += px.at(0).get<double>() * px.at(1).get<double>();
  return ev;
}

// Uniform for one trial. With stratification the repeats of a cell share a
// seeded permutation of strata, so R repeats cover [0,1) evenly.
double trial_uniform(const SyntheticAgentSpec& spec, const TrialSpec& trial) {
  CounterRng rng(spec.rng_seed, trial.trial_id);
  const double v = rng.uniform();
  const auto& p = trial.payload;
  const int reps = p.is_object() ? p.value("repeats", 1) : 1;
  if (!spec.stratify || reps <= 1 || !p.contains("repeat")) return v;
  ordered_json cell = p;
  cell.erase("repeat");
  cell.erase("repeats");
  cell.erase("options");
  const std::string key = std::string(battery::to_string(trial.domain)) + "|" + cell.dump();
  CounterRng prng(hash_bytes(key, spec.rng_seed));
  const auto perm = random_permutation(reps, prng);
  const int k = std::clamp(p.at("repeat").get<int>(), 0, reps - 1);
  return (perm[static_cast<std::size_t>(k)] + v) / reps;
}

// Rational preference between two option texts: a fixed pseudo-utility.
double text_utility(const std::string& text, std::uint64_t seed) {
  return static_cast<double>(hash_bytes(text, seed ^ 0x7a11) >> 11);
}

ParsedOutcome choice_outcome(battery::ParseSchema kind, int canonical) {
  ParsedOutcome o;
  o.kind = kind;
  o.confidence = parsing::Confidence::Exact;
  o.option = canonical;
  return o;
}

ParsedOutcome indifferent_outcome(battery::ParseSchema kind) {
  ParsedOutcome o;
  o.kind = kind;
  o.confidence = parsing::Confidence::Exact;
  o.indifferent = true;
  return o;
}

ParsedOutcome rational_outcome(const SyntheticAgentSpec& spec, const TrialSpec& trial) {
  const auto& p = trial.payload;
  const auto kind = trial.parse_schema;
  double first = 0.0, second = 0.0;
  switch (trial.domain) {
    case Domain::RationalityCompleteness:
    case Domain::RationalityTransitivity: {
      const auto opts = p.at("options").get<std::vector<std::string>>();
      first = text_utility(opts.at(0), spec.rng_seed);
      second = text_utility(opts.at(1), spec.rng_seed);
      break;
    }
    case Domain::RationalityContinuity: {
      const double q = p.at("p").get<double>() / 100.0;
      first = q * p.at("high").get<double>() + (1.0 - q) * p.at("low").get<double>();
      second = p.at("sure").get<double>();
      break;
    }
    case Domain::RationalityIndependence:
      first = lottery_ev(p.at("lottery_a"));
      second = lottery_ev(p.at("lottery_b"));
      break;
    default:
      throw Error(ErrorCode::UnsupportedDomain, "not a rationality domain");
  }
  if (std::abs(first - second) <= 1e-9 * std::max(1.0, std::abs(first))) return indifferent_outcome(kind);
  return choice_outcome(kind, first > second ? 0 : 1);
}

ParsedOutcome likert_outcome(int score, battery::ParseSchema kind = battery::ParseSchema::Likert) {
  ParsedOutcome o;
  o.kind = kind;
  o.confidence = parsing::Confidence::Exact;
  o.score = score;
  return o;
}

// Canonical outcome for the trial; option indices are canonical.
ParsedOutcome synthetic_outcome(const SyntheticAgentSpec& spec, const TrialSpec& trial) {
  const auto& p = trial.payload;
  const auto kind = trial.parse_schema;
  switch (trial.domain) {
    case Domain::RationalityCompleteness:
    case Domain::RationalityTransitivity:
    case Domain::RationalityContinuity:
    case Domain::RationalityIndependence: {
      if (spec.rationality_noise > 0.0) {
        CounterRng rng(spec.rng_seed, trial.trial_id + "|noise");
        if (rng.uniform() < spec.rationality_noise) {
          const auto pick = rng.below(3);
          return pick == 2 ? indifferent_outcome(kind) : choice_outcome(kind, static_cast<int>(pick));
        }
      }
      return rational_outcome(spec, trial);
    }
    case Domain::RiskChoice:
    case Domain::RiskCeLadder:
    case Domain::Ambiguity:
    case Domain::Temporal:
      return choice_outcome(kind, trial_uniform(spec, trial) < synthetic_choice_probability(spec, trial) ? 0 : 1);
    case Domain::Loss:
    case Domain::Ultimatum: {
      ParsedOutcome o;
      o.kind = kind;
      o.confidence = parsing::Confidence::Exact;
      o.accept = trial_uniform(spec, trial) < synthetic_choice_probability(spec, trial);
      return o;
    }
    case Domain::Endowment: {
      const auto frame = p.at("frame").get<std::string>();
      double price = spec.wta;
      if (frame == "buy") price = spec.wtp;
      else if (frame == "unload") price = spec.wta_unload;
      else if (frame == "gift_buyer") price = spec.wta_gift;
      ParsedOutcome o;
      o.kind = kind;
      o.confidence = parsing::Confidence::Exact;
      o.amount = std::round(price * 100.0) / 100.0;
      return o;
    }
    case Domain::Dictator: {
      const auto allowed = p.at("allowed").get<std::vector<int>>();
      if (allowed.empty()) throw Error(ErrorCode::Validation, "dictator trial without allowed amounts");
      const double target = spec.dg_share * p.at("T").get<double>();
      int best = allowed.front();
      for (int a : allowed)
        if (std::abs(a - target) < std::abs(best - target)) best = a;
      ParsedOutcome o;
      o.kind = kind;
      o.confidence = parsing::Confidence::Exact;
      o.amount = best;
      return o;
    }
    case Domain::Stereotype: {
      const int s = clamp_likert(spec.vignette.sai_target);
      return likert_outcome(trial.cue.value_or(1) > 0 ? s : 6 - s);
    }
    case Domain::Persuasion:
      return likert_outcome(std::clamp(
          p.at("frame").get<std::string>() == "sad" ? spec.vignette.persuasion_sad : spec.vignette.persuasion_anger,
          1, 5));
    case Domain::Moral: {
      const double harm = p.at("harm_level").get<double>();
      if (p.at("statement").get<std::string>() == "intention") return likert_outcome(std::clamp(spec.vignette.intention, 1, 5));
      return likert_outcome(clamp_likert(spec.vignette.moral_base + spec.vignette.moral_slope * harm));
    }
    case Domain::Blame:
      return likert_outcome(
          clamp_likert(spec.vignette.blame_base + spec.vignette.blame_slope * p.at("harm_level").get<double>()));
    case Domain::Welfare:
      return likert_outcome(clamp_likert(spec.vignette.assistance_base +
                                         spec.vignette.assistance_slope * p.at("need_level").get<double>()),
                            battery::ParseSchema::Assistance);
  }
  throw Error(ErrorCode::UnsupportedDomain, std::string(battery::to_string(trial.domain)));
}

// Splits an http(s) base url into "scheme://host:port" and a path prefix.
std::pair<std::string, std::string> split_url(const std::string& base) {
  const auto scheme = base.find("://");
  if (scheme == std::string::npos) throw Error(ErrorCode::Validation, "base_url lacks a scheme: " + base);
  const auto slash = base.find('/', scheme + 3);
  std::string origin = slash == std::string::npos ? base : base.substr(0, slash);
  std::string prefix = slash == std::string::npos ? "" : base.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {origin, prefix};
}

}  // namespace

// ---- ICP -------------------------------------------------------------------

std::string icp_preamble(Emotion emotion, Intensity intensity, const std::filesystem::path& asset_dir) {
  if (emotion == Emotion::None) throw Error(ErrorCode::UnknownEmotion, "ICP requires an emotion");
  return render_preamble(icp_assets(asset_dir), emotion, intensity);
}

std::optional<IcpMatch> detect_icp(std::string_view text, const std::filesystem::path& asset_dir) {
  const auto& a = icp_assets(asset_dir);
  for (const auto& [emotion, _] : a.preambles)
    for (const auto& [intensity, _m] : a.modifiers) {
      const std::string head = render_preamble(a, emotion, intensity) + "\n\n";
      if (!text.starts_with(head)) continue;
      std::size_t len = head.size();
      const auto rest = text.substr(len);
      if (rest.starts_with(kExemplarHeader)) {
        const auto end = rest.find("\n\n");
        len += end == std::string_view::npos ? rest.size() : end + 2;
      }
      return IcpMatch{emotion, intensity, len};
    }
  return std::nullopt;
}

std::string wrap_icp(const std::string& prompt, Emotion emotion, Intensity intensity, int exemplars,
                     const std::filesystem::path& asset_dir) {
  if (emotion == Emotion::None) throw Error(ErrorCode::UnknownEmotion, "ICP requires an emotion");
  if (detect_icp(prompt, asset_dir))
    throw Error(ErrorCode::Validation, "prompt already starts with a persona preamble");
  const auto& a = icp_assets(asset_dir);
  std::string out = render_preamble(a, emotion, intensity) + "\n\n";
  if (exemplars > 0) {
    if (!a.has_exemplars) throw Error(ErrorCode::MissingAsset, "icp_exemplars.tsv not found");
    const auto it = a.exemplars.find(emotion);
    const std::size_t have = it == a.exemplars.end() ? 0 : it->second.size();
    if (static_cast<std::size_t>(exemplars) > have)
      throw Error(ErrorCode::Validation, "asked for " + std::to_string(exemplars) + " exemplars, pool has " +
                                             std::to_string(have));
    out += kExemplarHeader;
    for (int i = 0; i < exemplars; ++i) out += "\n- " + it->second[static_cast<std::size_t>(i)];
    out += "\n\n";
  }
  return out + prompt;
}

// ---- transport -------------------------------------------------------------

std::vector<double> backoff_schedule(const RetryPolicy& policy, std::string_view request_key) {
  std::vector<double> waits;
  CounterRng rng(hash_bytes(request_key, policy.jitter_seed));
  for (int k = 0; k + 1 < policy.attempts; ++k) {
    const double base = std::min(policy.max_delay_ms, policy.base_delay_ms * std::ldexp(1.0, k));
    waits.push_back(base * (0.5 + rng.uniform()));
  }
  return waits;
}

ordered_json build_chat_request(const EndpointConfig& endpoint, const std::string& prompt,
                                const SteeringCondition& condition) {
  ordered_json body{{"model", endpoint.model_name},
                    {"messages", ordered_json::array({ordered_json{{"role", "user"}, {"content", prompt}}})}};
  if (endpoint.greedy) {
    body["temperature"] = 0.0;
    body["top_p"] = 1.0;
  }
  body["max_tokens"] = endpoint.max_tokens;
  if (condition.method == SteerMethod::Rls) {
    ordered_json steer{{"emotion", to_string(condition.emotion)}, {"beta", condition.beta.value_or(0.0)}};
    if (!condition.layers.empty()) steer["layers"] = condition.layers;
    steer["scope"] = to_string(condition.scope.value_or(SteerScope::AllNew));
    body["steering"] = std::move(steer);
  }
  return body;
}

QueryResult query_agent(const EndpointConfig& endpoint, const std::string& prompt, const SteeringCondition& condition,
                        const Sleeper& sleep) {
  condition.validate();
  const std::string text = condition.method == SteerMethod::Icp
                               ? wrap_icp(prompt, condition.emotion, condition.intensity.value_or(Intensity::Medium))
                               : prompt;
  const std::string body = build_chat_request(endpoint, text, condition).dump();

  const auto [origin, prefix] = split_url(endpoint.base_url);
  httplib::Client cli(origin);
  if (!cli.is_valid()) throw Error(ErrorCode::Validation, "unsupported base_url: " + endpoint.base_url);
  auto to_duration = [](double s) { return std::chrono::microseconds(static_cast<long long>(s * 1e6)); };
  cli.set_connection_timeout(to_duration(endpoint.connect_timeout_s));
  cli.set_read_timeout(to_duration(endpoint.timeout_s));
  cli.set_write_timeout(to_duration(endpoint.timeout_s));

  httplib::Headers headers;
  if (!endpoint.auth_env.empty()) {
    const char* token = std::getenv(endpoint.auth_env.c_str());
    if (!token || !*token) throw Error(ErrorCode::Validation, "auth variable " + endpoint.auth_env + " is not set");
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  const auto waits = backoff_schedule(endpoint.retry, body);
  const int attempts = std::max(1, endpoint.retry.attempts);
  ErrorCode last_code = ErrorCode::Transport;
  std::string last_msg;
  std::string last_payload;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    if (attempt > 1) {
      const double ms = waits[static_cast<std::size_t>(attempt - 2)];
      if (sleep) sleep(ms);
      else std::this_thread::sleep_for(std::chrono::microseconds(static_cast<long long>(ms * 1000)));
    }
    const auto t0 = std::chrono::steady_clock::now();
    auto res = cli.Post(prefix + "/chat/completions", headers, body, "application/json");
    if (!res) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const auto err = res.error();
      const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                             (err == httplib::Error::Read && secs >= 0.95 * endpoint.timeout_s);
      last_code = timed_out ? ErrorCode::Timeout : ErrorCode::Transport;
      last_msg = httplib::to_string(err);
      last_payload.clear();
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_code = ErrorCode::Transport;
      last_msg = "HTTP " + std::to_string(res->status);
      last_payload = res->body;
      continue;
    }
    if (res->status < 200 || res->status >= 300)
      throw GatewayError(ErrorCode::Protocol, "HTTP " + std::to_string(res->status), res->body, attempt);

    const auto reply = ordered_json::parse(res->body, nullptr, false);
    const ordered_json* message = nullptr;
    if (reply.is_object() && reply.contains("choices") && reply["choices"].is_array() && !reply["choices"].empty()) {
      const auto& c0 = reply["choices"][0];
      if (c0.is_object() && c0.contains("message") && c0["message"].is_object()) message = &c0["message"];
    }
    if (!message || !message->contains("content") || !(*message)["content"].is_string())
      throw GatewayError(ErrorCode::Protocol, "reply lacks choices[0].message.content", res->body, attempt);

    std::string full = (*message)["content"].get<std::string>();
    if (message->contains("reasoning_content") && (*message)["reasoning_content"].is_string())
      full = "<think>" + (*message)["reasoning_content"].get<std::string>() + "</think>\n" + full;
    return {parsing::split_thinking(full), attempt};
  }
  throw GatewayError(last_code, last_msg + " after " + std::to_string(attempts) + " attempts", last_payload, attempts);
}

AgentReply RemoteAgent::respond(const TrialSpec& trial, const SteeringCondition& condition) {
  auto r = query_agent(endpoint_, trial.prompt_text, condition, sleep_);
  return {std::move(r.response), r.attempts};
}

// ---- synthetic agent -------------------------------------------------------

SyntheticAgentSpec SyntheticAgentSpec::preset(std::string_view name) {
  SyntheticAgentSpec s;
  if (name == "prospect" || name.empty()) return s;
  if (name == "rational") {
    s.prospect.tau = 50.0;
    s.loss = {0.0, 1.0, -1.0, 1.0, false};
    s.ambiguity_a0 = 0.0;
    s.wta = s.wtp = s.wta_unload = s.wta_gift = 5.0;
    return s;
  }
  if (name == "loss-threshold") {
    s.loss_threshold = 1.5;
    return s;
  }
  if (name == "noisy") {
    s.rationality_noise = 0.2;
    return s;
  }
  throw Error(ErrorCode::Validation, "unknown synthetic preset '" + std::string(name) + "'");
}

double synthetic_choice_probability(const SyntheticAgentSpec& spec, const TrialSpec& trial) {
  const auto& p = trial.payload;
  switch (trial.domain) {
    case Domain::RiskChoice:
    case Domain::RiskCeLadder:
      return models::risky_choice_prob(
          models::GainLottery<double>{p.at("p").get<double>(), p.at("G").get<double>(), p.at("S").get<double>()},
          spec.prospect);
    case Domain::Ambiguity:
      return models::logistic(spec.ambiguity_a0 + spec.ambiguity_aG * p.at("G").get<double>());
    case Domain::Loss: {
      const models::MixedGamble g{p.at("G").get<double>(), p.at("L").get<double>()};
      if (spec.loss_threshold) return g.gain > *spec.loss_threshold * g.loss ? 1.0 : 0.0;
      return models::accept_prob(g, spec.loss);
    }
    case Domain::Temporal: {
      const models::IntertemporalPair pair{p.at("A_s").get<double>(), p.at("t_s").get<double>(),
                                           p.at("A_l").get<double>(), p.at("t_l").get<double>()};
      return 1.0 - models::later_prob(pair, spec.temporal);
    }
    case Domain::Ultimatum:
      return 1.0 - models::logistic(spec.ug_c0 + spec.ug_c_share * p.at("share").get<double>());
    default:
      throw Error(ErrorCode::UnsupportedDomain,
                  "no binary choice probability for " + std::string(battery::to_string(trial.domain)));
  }
}

RawResponse synthetic_answer(const SyntheticAgentSpec& spec, const TrialSpec& trial) {
  if (!spec.domains.empty() && std::find(spec.domains.begin(), spec.domains.end(), trial.domain) == spec.domains.end())
    throw Error(ErrorCode::UnsupportedDomain, std::string(battery::to_string(trial.domain)));
  ParsedOutcome o = synthetic_outcome(spec, trial);
  if (o.option && !trial.option_order.empty()) {
    const auto it = std::find(trial.option_order.begin(), trial.option_order.end(), *o.option);
    if (it == trial.option_order.end()) throw Error(ErrorCode::Validation, "option_order lacks canonical option");
    o.option = static_cast<int>(it - trial.option_order.begin());
  }
  const auto shown = battery::displayed_options(trial);
  std::string text = parsing::render_answer(o, shown);
  return {text, std::nullopt, text};
}

SyntheticAgentSpec apply_condition(SyntheticAgentSpec spec, const SteeringCondition& condition) {
  double s = 0.0;
  if (condition.method == SteerMethod::Rls) s = condition.beta.value_or(0.0) / 35.0;
  else if (condition.method == SteerMethod::Icp) s = intensity_scale(condition.intensity.value_or(Intensity::Medium));
  if (s == 0.0) return spec;
  auto& v = spec.vignette;
  switch (condition.emotion) {
    case Emotion::Anger:
      spec.ug_c0 += 1.0 * s;
      spec.loss.beta0 -= 0.3 * s;
      v.persuasion_anger = std::clamp(v.persuasion_anger + static_cast<int>(std::lround(s)), 1, 5);
      v.blame_base += 0.5 * s;
      v.sai_target += 0.5 * s;
      break;
    case Emotion::Fear:
      spec.prospect.b -= 0.4 * s;
      spec.ambiguity_a0 += 0.5 * s;
      spec.loss.beta0 -= 0.5 * s;
      if (spec.loss_threshold) *spec.loss_threshold *= 1.0 + 0.1 * s;
      spec.temporal.b0 -= 0.3 * s;
      break;
    case Emotion::Sadness:
      spec.dg_share = std::min(0.5, spec.dg_share + 0.05 * s);
      spec.wtp -= 0.5 * s;
      spec.temporal.b0 -= 0.3 * s;
      v.persuasion_sad = std::clamp(v.persuasion_sad + static_cast<int>(std::lround(s)), 1, 5);
      v.assistance_base += 0.5 * s;
      break;
    case Emotion::Joy:
      spec.prospect.b += 0.3 * s;
      spec.loss.beta0 += 0.3 * s;
      spec.ug_c0 -= 0.5 * s;
      break;
    case Emotion::Disgust:
      v.moral_base += 0.5 * s;
      v.blame_base += 0.3 * s;
      break;
    case Emotion::None:
      break;
  }
  return spec;
}

std::string SyntheticAgent::identity() const {
  return "synthetic:" + name_ + ":seed=" + std::to_string(spec_.rng_seed);
}

AgentReply SyntheticAgent::respond(const TrialSpec& trial, const SteeringCondition& condition) {
  if (condition.method == SteerMethod::None) return {synthetic_answer(spec_, trial), 1};
  return {synthetic_answer(apply_condition(spec_, condition), trial), 1};
}

// ---- batch -----------------------------------------------------------------

TrialRecord run_trial(Agent& agent, const TrialSpec& trial, const SteeringCondition& condition) {
  TrialRecord rec;
  rec.trial = trial;
  rec.condition = condition;
  const bool timed = !agent.deterministic();
  const auto t0 = std::chrono::steady_clock::now();
  try {
    auto reply = agent.respond(trial, condition);
    rec.raw_text = std::move(reply.response.full_text);
    rec.thinking_trace = std::move(reply.response.thinking_trace);
    rec.answer_text = std::move(reply.response.answer_text);
    rec.attempts = reply.attempts;
    rec.outcome = parsing::parse_for_trial(trial, rec.answer_text);
    rec.status = rec.outcome.ok() ? RecordStatus::Parsed : RecordStatus::ParseFailed;
  } catch (const GatewayError& e) {
    rec.status = RecordStatus::TransportFailed;
    rec.error = e.what();
    rec.raw_text = e.payload();
    rec.attempts = e.attempts();
    rec.outcome.kind = trial.parse_schema;
  }
  if (timed) rec.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

std::vector<TrialRecord> run_batch(std::span<const TrialSpec> trials, Agent& agent, const SteeringCondition& condition,
                                   const BatchOptions& options) {
  if (options.parallelism < 1) throw Error(ErrorCode::Validation, "parallelism must be at least 1");
  condition.validate();
  const std::size_t n = trials.size();
  std::vector<TrialRecord> out(n);
  if (n == 0) return out;
  const std::size_t limit = static_cast<std::size_t>(std::floor(options.failure_threshold * static_cast<double>(n)));

  std::atomic<std::size_t> next{0};
  std::atomic<bool> aborted{false};
  std::mutex mu;
  std::size_t done = 0, failed = 0;
  std::exception_ptr fatal;

  auto worker = [&] {
    for (;;) {
      if (aborted.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      TrialRecord rec;
      try {
        rec = run_trial(agent, trials[i], condition);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!fatal) fatal = std::current_exception();
        aborted = true;
        return;
      }
      std::lock_guard lock(mu);
      out[i] = std::move(rec);
      ++done;
      if (out[i].status == RecordStatus::TransportFailed && ++failed > limit) aborted = true;
      if (options.on_progress) options.on_progress({done, n, failed, &out[i]});
    }
  };

  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(options.parallelism), n);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);
  if (failed > limit)
    throw Error(ErrorCode::BatchAborted, std::to_string(failed) + " transport failures exceed threshold " +
                                             std::to_string(options.failure_threshold) + " of " + std::to_string(n));
  return out;
}

// ---- oracle server ---------------------------------------------------------

struct OracleServer::Impl {
  std::vector<TrialSpec> trials;
  std::map<std::string, std::size_t, std::less<>> by_prompt;
  SyntheticAgent agent;
  httplib::Server server;
  std::thread thread;
  std::atomic<std::size_t> requests{0};

  Impl(std::vector<TrialSpec> t, SyntheticAgentSpec spec) : trials(std::move(t)), agent(std::move(spec), "oracle") {
    for (std::size_t i = 0; i < trials.size(); ++i) by_prompt.emplace(trials[i].prompt_text, i);
    server.Post(R"(.*/chat/completions)", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res);
    });
  }

  static void fail(httplib::Response& res, int status, const std::string& msg) {
    res.status = status;
    res.set_content(ordered_json{{"error", {{"message", msg}}}}.dump(), "application/json");
  }

  void handle(const httplib::Request& req, httplib::Response& res) {
    ++requests;
    const auto body = ordered_json::parse(req.body, nullptr, false);
    if (!body.is_object() || !body.contains("messages") || !body["messages"].is_array() || body["messages"].empty())
      return fail(res, 400, "messages missing");
    const auto& last = body["messages"].back();
    if (!last.is_object() || !last.contains("content") || !last["content"].is_string())
      return fail(res, 400, "message content missing");
    std::string_view prompt = last["content"].get_ref<const std::string&>();

    SteeringCondition cond;
    try {
      if (const auto icp = detect_icp(prompt)) {
        cond = SteeringCondition::icp(icp->emotion, icp->intensity);
        prompt.remove_prefix(icp->prefix_length);
      }
      if (body.contains("steering") && body["steering"].is_object()) {
        const auto& s = body["steering"];
        cond = SteeringCondition::rls(emotion_from_string(s.at("emotion").get<std::string>()),
                                      s.at("beta").get<double>(),
                                      scope_from_string(s.value("scope", std::string("all_new"))),
                                      s.value("layers", std::vector<int>{}));
      }
    } catch (const std::exception& e) {
      return fail(res, 400, e.what());
    }
    const auto it = by_prompt.find(prompt);
    if (it == by_prompt.end()) return fail(res, 404, "prompt does not match any known trial");
    AgentReply reply;
    try {
      reply = agent.respond(trials[it->second], cond);
    } catch (const std::exception& e) {
      return fail(res, 422, e.what());
    }
    ordered_json message{{"role", "assistant"}, {"content", reply.response.answer_text}};
    if (reply.response.thinking_trace) message["reasoning_content"] = *reply.response.thinking_trace;
    const ordered_json out{{"id", "oracle-" + std::to_string(requests.load())},
                           {"object", "chat.completion"},
                           {"model", body.value("model", std::string("oracle"))},
                           {"choices", ordered_json::array({ordered_json{
                                           {"index", 0}, {"message", message}, {"finish_reason", "stop"}}})}};
    res.set_content(out.dump(), "application/json");
  }
};

OracleServer::OracleServer(std::vector<TrialSpec> trials, SyntheticAgentSpec spec)
    : impl_(std::make_unique<Impl>(std::move(trials), std::move(spec))) {}

OracleServer::~OracleServer() { stop(); }

int OracleServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound <= 0) throw Error(ErrorCode::Transport, "cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void OracleServer::serve(const std::string& host, int port) {
  if (!impl_->server.listen(host, port))
    throw Error(ErrorCode::Transport, "cannot listen on " + host + ":" + std::to_string(port));
}

void OracleServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::size_t OracleServer::requests() const { return impl_->requests.load(); }

}  // namespace choicelab::gateway
