#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <mutex>
#include <regex>
#include <thread>

#include "choicelab/agent_gateway.hpp"
#include "choicelab/rng.hpp"
#include "choicelab/scoring.hpp"

// after Eigen: resolv.h defines a _res macro
#include <httplib.h>

using namespace choicelab;
using namespace choicelab::gateway;
using battery::Domain;
using nlohmann::ordered_json;

namespace {

const std::string kBody =
    "Option A: receive $20 for certain.\nOption B: 45% chance of $48.89, otherwise $0.\n\nAnswer with A or B.";

// Scripted chat endpoint: pops one (status, body) per request and keeps the
// request bodies it saw.
struct ScriptedServer {
  httplib::Server server;
  std::thread thread;
  std::mutex mu;
  std::vector<std::pair<int, std::string>> script;
  std::vector<std::string> bodies;
  std::vector<std::string> auth;
  int delay_ms = 0;
  int port = 0;

  explicit ScriptedServer(std::vector<std::pair<int, std::string>> s) : script(std::move(s)) {
    server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      std::pair<int, std::string> next{200, reply("ok")};
      {
        std::lock_guard lock(mu);
        bodies.push_back(req.body);
        auth.push_back(req.get_header_value("Authorization"));
        if (!script.empty()) {
          next = script.front();
          script.erase(script.begin());
        }
      }
      if (delay_ms) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
      res.status = next.first;
      res.set_content(next.second, "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~ScriptedServer() {
    server.stop();
    thread.join();
  }

  EndpointConfig endpoint() const {
    EndpointConfig e;
    e.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    e.model_name = "test-model";
    e.timeout_s = 5.0;
    e.retry.base_delay_ms = 1.0;
    return e;
  }

  static std::string reply(const std::string& content, const std::string& reasoning = {}) {
    ordered_json msg{{"role", "assistant"}, {"content", content}};
    if (!reasoning.empty()) msg["reasoning_content"] = reasoning;
    return ordered_json{{"choices", ordered_json::array({ordered_json{{"index", 0}, {"message", msg}}})}}.dump();
  }
};

std::vector<battery::TrialSpec> battery_for(std::vector<Domain> domains, int repeats = 1, std::uint64_t seed = 42) {
  battery::BatteryConfig cfg;
  cfg.seed = seed;
  cfg.repeats_per_cell = repeats;
  cfg.domains = std::move(domains);
  return battery::generate_battery(cfg);
}

battery::TrialSpec loss_trial(int gain, int loss) {
  battery::TrialSpec t;
  t.trial_id = "loss-manual-" + std::to_string(gain) + "-" + std::to_string(loss);
  t.domain = Domain::Loss;
  t.parse_schema = battery::ParseSchema::AcceptReject;
  t.payload = {{"G", gain}, {"L", loss}, {"reject_payoff", 0}, {"repeat", 0}, {"repeats", 1}};
  return t;
}

// Agent for executor tests: fails chosen indices, records concurrency.
class ScriptedAgent : public Agent {
 public:
  std::vector<std::string> fail_ids;
  std::atomic<int> in_flight{0};
  std::atomic<int> peak{0};
  std::mutex mu;
  std::vector<std::string> started;

  std::string identity() const override { return "scripted"; }
  AgentReply respond(const battery::TrialSpec& trial, const SteeringCondition&) override {
    const int now = ++in_flight;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
    {
      std::lock_guard lock(mu);
      started.push_back(trial.trial_id);
    }
    // later trials finish first
    std::this_thread::sleep_for(std::chrono::microseconds(200 + (hash_bytes(trial.trial_id) % 800)));
    --in_flight;
    if (std::find(fail_ids.begin(), fail_ids.end(), trial.trial_id) != fail_ids.end())
      throw GatewayError(ErrorCode::Transport, "connection refused", "", 3);
    auto r = synthetic_answer(SyntheticAgentSpec{}, trial);
    return {r, 1};
  }
};

}  // namespace

TEST_CASE("persona wrapping keeps the body and carries the modifier") {
  const auto high = wrap_icp(kBody, Emotion::Anger, Intensity::High);
  CHECK(high.find("highly feeling anger") != std::string::npos);
  REQUIRE(high.size() > kBody.size());
  CHECK(high.substr(high.size() - kBody.size()) == kBody);

  const auto medium = wrap_icp(kBody, Emotion::Fear, Intensity::Medium);
  CHECK(medium.starts_with("You are feeling fear."));
  CHECK(medium.find("feeling fear") == medium.rfind("feeling fear"));

  CHECK(wrap_icp(kBody, Emotion::Sadness, Intensity::VeryLow).find("barely feeling sadness") != std::string::npos);
  CHECK(wrap_icp(kBody, Emotion::Joy, Intensity::VeryHigh).find("extremely feeling joy") != std::string::npos);
  CHECK(wrap_icp(kBody, Emotion::Disgust, Intensity::Low).find("slightly feeling disgust") != std::string::npos);

  try {
    wrap_icp(high, Emotion::Anger, Intensity::High);
    FAIL("second wrap accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Validation);
  }
  try {
    wrap_icp(kBody, Emotion::None, Intensity::High);
    FAIL("emotion none accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownEmotion);
  }
}

TEST_CASE("persona detection round-trips every emotion and intensity") {
  for (auto e : {Emotion::Anger, Emotion::Fear, Emotion::Sadness, Emotion::Joy, Emotion::Disgust})
    for (auto i : {Intensity::VeryLow, Intensity::Low, Intensity::Medium, Intensity::High, Intensity::VeryHigh})
      for (int ex : {0, 2}) {
        const auto w = wrap_icp(kBody, e, i, ex);
        const auto m = detect_icp(w);
        REQUIRE(m);
        CHECK(m->emotion == e);
        CHECK(m->intensity == i);
        CHECK(w.substr(m->prefix_length) == kBody);
      }
  CHECK_FALSE(detect_icp(kBody));
  CHECK_THROWS_AS(wrap_icp(kBody, Emotion::Joy, Intensity::High, 50), Error);
}

TEST_CASE("wrapping leaves amounts, probabilities and labels byte-identical") {
  const std::regex token(R"(\$[0-9][0-9,]*(\.[0-9]+)?|[0-9]+%|Option [A-Z]|\b[A-D]\b)");
  auto tokens = [&](const std::string& s) {
    std::vector<std::string> out;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), token); it != std::sregex_iterator(); ++it)
      out.push_back(it->str());
    return out;
  };
  const auto trials = battery_for({Domain::RiskChoice, Domain::Loss, Domain::Ultimatum, Domain::Temporal});
  for (std::size_t k = 0; k < trials.size(); k += 37) {
    const auto& q = trials[k].prompt_text;
    const auto w = wrap_icp(q, Emotion::Anger, Intensity::VeryHigh, 1);
    const auto m = detect_icp(w);
    REQUIRE(m);
    CHECK(w.substr(m->prefix_length) == q);
    const auto before = tokens(q);
    auto after = tokens(w.substr(m->prefix_length));
    CHECK(before == after);
  }
}

TEST_CASE("request body carries steering only for representation steering") {
  EndpointConfig ep;
  const auto none = build_chat_request(ep, "q", SteeringCondition::none());
  CHECK_FALSE(none.contains("steering"));
  CHECK(none["temperature"] == 0.0);
  CHECK(none["messages"].size() == 1);
  CHECK(none["messages"][0]["role"] == "user");

  const auto icp = build_chat_request(ep, "q", SteeringCondition::icp(Emotion::Anger, Intensity::High));
  CHECK_FALSE(icp.contains("steering"));

  const auto rls = build_chat_request(ep, "q", SteeringCondition::rls(Emotion::Fear, 35.0, SteerScope::AllNew));
  REQUIRE(rls.contains("steering"));
  CHECK(rls["steering"].dump() == R"({"emotion":"fear","beta":35.0,"scope":"all_new"})");

  const auto layered =
      build_chat_request(ep, "q", SteeringCondition::rls(Emotion::Sadness, 8.0, SteerScope::ThinkingOnly, {12, 16}));
  CHECK(layered["steering"].dump() == R"({"emotion":"sadness","beta":8.0,"layers":[12,16],"scope":"thinking_only"})");
}

TEST_CASE("backoff schedule is seeded and bounded") {
  RetryPolicy p;
  const auto a = backoff_schedule(p, "key");
  const auto b = backoff_schedule(p, "key");
  REQUIRE(a.size() == 2);
  CHECK(a == b);
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double base = p.base_delay_ms * (1 << k);
    CHECK(a[k] >= 0.5 * base);
    CHECK(a[k] < 1.5 * base);
  }
  p.jitter_seed = 7;
  CHECK(backoff_schedule(p, "key") != a);
}

TEST_CASE("query_agent over HTTP") {
  SUBCASE("plain request and reply") {
    ScriptedServer srv({{200, ScriptedServer::reply("Answer: B")}});
    const auto r = query_agent(srv.endpoint(), kBody, SteeringCondition::none());
    CHECK(r.attempts == 1);
    CHECK(r.response.answer_text == "Answer: B");
    CHECK_FALSE(r.response.thinking_trace);
    REQUIRE(srv.bodies.size() == 1);
    const auto sent = ordered_json::parse(srv.bodies[0]);
    CHECK(sent["model"] == "test-model");
    CHECK(sent["messages"][0]["content"] == kBody);
    CHECK_FALSE(sent.contains("steering"));
  }
  SUBCASE("ICP wraps, RLS adds the extension object") {
    ScriptedServer srv({});
    query_agent(srv.endpoint(), kBody, SteeringCondition::icp(Emotion::Anger, Intensity::High));
    query_agent(srv.endpoint(), kBody, SteeringCondition::rls(Emotion::Fear, 35.0));
    REQUIRE(srv.bodies.size() == 2);
    const auto icp = ordered_json::parse(srv.bodies[0]);
    CHECK(icp["messages"][0]["content"] == wrap_icp(kBody, Emotion::Anger, Intensity::High));
    CHECK_FALSE(icp.contains("steering"));
    const auto rls = ordered_json::parse(srv.bodies[1]);
    CHECK(rls["messages"][0]["content"] == kBody);
    CHECK(rls["steering"]["emotion"] == "fear");
    CHECK(rls["steering"]["beta"] == 35.0);
    CHECK(rls["steering"]["scope"] == "all_new");
  }
  SUBCASE("reasoning field becomes the thinking trace") {
    ScriptedServer srv({{200, ScriptedServer::reply("Answer: A", "Compare expected values.")}});
    const auto r = query_agent(srv.endpoint(), kBody, SteeringCondition::none());
    REQUIRE(r.response.thinking_trace);
    CHECK(*r.response.thinking_trace == "Compare expected values.");
    CHECK(r.response.answer_text == "Answer: A");
  }
  SUBCASE("malformed body is a protocol error that keeps the payload") {
    ScriptedServer srv({{200, "{\"choices\": []}"}});
    try {
      query_agent(srv.endpoint(), kBody, SteeringCondition::none());
      FAIL("no error");
    } catch (const GatewayError& e) {
      CHECK(e.code() == ErrorCode::Protocol);
      CHECK(e.payload() == "{\"choices\": []}");
    }
    CHECK(srv.bodies.size() == 1);
  }
  SUBCASE("client error is not retried") {
    ScriptedServer srv({{400, "bad request"}});
    CHECK_THROWS_AS(query_agent(srv.endpoint(), kBody, SteeringCondition::none()), GatewayError);
    CHECK(srv.bodies.size() == 1);
  }
  SUBCASE("transient failures are retried on the seeded schedule") {
    ScriptedServer srv({{503, "busy"}, {429, "slow down"}, {200, ScriptedServer::reply("Answer: A")}});
    std::vector<double> waits;
    const auto ep = srv.endpoint();
    const auto r = query_agent(ep, kBody, SteeringCondition::none(), [&](double ms) { waits.push_back(ms); });
    CHECK(r.attempts == 3);
    CHECK(r.response.answer_text == "Answer: A");
    const auto body = build_chat_request(ep, kBody, SteeringCondition::none()).dump();
    CHECK(waits == backoff_schedule(ep.retry, body));
  }
  SUBCASE("retries exhausted") {
    ScriptedServer srv({{503, "a"}, {502, "b"}, {500, "c"}, {200, ScriptedServer::reply("late")}});
    try {
      query_agent(srv.endpoint(), kBody, SteeringCondition::none(), [](double) {});
      FAIL("no error");
    } catch (const GatewayError& e) {
      CHECK(e.code() == ErrorCode::Transport);
      CHECK(e.attempts() == 3);
    }
    CHECK(srv.bodies.size() == 3);
  }
  SUBCASE("unreachable endpoint") {
    EndpointConfig ep;
    ep.base_url = "http://127.0.0.1:1/v1";
    ep.connect_timeout_s = 1.0;
    try {
      query_agent(ep, kBody, SteeringCondition::none(), [](double) {});
      FAIL("no error");
    } catch (const GatewayError& e) {
      CHECK((e.code() == ErrorCode::Transport || e.code() == ErrorCode::Timeout));
      CHECK(e.attempts() == 3);
    }
  }
  SUBCASE("slow reply times out") {
    ScriptedServer srv({});
    srv.delay_ms = 1200;
    auto ep = srv.endpoint();
    ep.timeout_s = 0.3;
    ep.retry.attempts = 1;
    try {
      query_agent(ep, kBody, SteeringCondition::none());
      FAIL("no error");
    } catch (const GatewayError& e) {
      CHECK(e.code() == ErrorCode::Timeout);
    }
  }
  SUBCASE("bearer token from the named variable") {
    ScriptedServer srv({});
    auto ep = srv.endpoint();
    ep.auth_env = "CHOICELAB_TEST_TOKEN";
    ::unsetenv("CHOICELAB_TEST_TOKEN");
    CHECK_THROWS_AS(query_agent(ep, kBody, SteeringCondition::none()), Error);
    ::setenv("CHOICELAB_TEST_TOKEN", "abc123", 1);
    query_agent(ep, kBody, SteeringCondition::none());
    REQUIRE(srv.auth.size() == 1);
    CHECK(srv.auth[0] == "Bearer abc123");
  }
}

TEST_CASE("protocol failure is recorded with its payload") {
  ScriptedServer srv({{200, "not json at all"}});
  RemoteAgent agent(srv.endpoint(), [](double) {});
  const auto trials = battery_for({Domain::Loss});
  const auto rec = run_trial(agent, trials.front(), SteeringCondition::none());
  CHECK(rec.status == RecordStatus::TransportFailed);
  CHECK(rec.raw_text == "not json at all");
  CHECK(rec.error.starts_with("PROTOCOL"));
  CHECK(rec.trial.trial_id == trials.front().trial_id);
}

TEST_CASE("synthetic agent: limits and rules") {
  SyntheticAgentSpec spec;
  spec.prospect.tau = 1e6;
  for (const auto& t : battery_for({Domain::RiskChoice})) {
    const double dev = t.payload["delta_ev"].get<double>();
    if (std::abs(dev - 5.0) > 1e-9) continue;
    const auto o = parsing::parse_for_trial(t, synthetic_answer(spec, t).answer_text);
    REQUIRE(o.option);
    CHECK(*o.option == 0);
  }

  SyntheticAgentSpec rule;
  rule.loss_threshold = 1.5;
  const auto accept = parsing::parse_accept_reject(synthetic_answer(rule, loss_trial(9, 5)).answer_text);
  const auto reject = parsing::parse_accept_reject(synthetic_answer(rule, loss_trial(7, 5)).answer_text);
  REQUIRE(accept.accept);
  REQUIRE(reject.accept);
  CHECK(*accept.accept);
  CHECK_FALSE(*reject.accept);
  CHECK(synthetic_answer(rule, loss_trial(9, 5)).answer_text == "ACCEPT");
}

TEST_CASE("synthetic agent: determinism and unsupported domains") {
  const auto trials = battery_for({Domain::RiskChoice, Domain::Temporal});
  SyntheticAgentSpec spec;
  for (std::size_t k = 0; k < trials.size(); k += 11)
    CHECK(synthetic_answer(spec, trials[k]).full_text == synthetic_answer(spec, trials[k]).full_text);

  spec.domains = {Domain::RiskChoice};
  const auto temporal =
      std::find_if(trials.begin(), trials.end(), [](const auto& t) { return t.domain == Domain::Temporal; });
  REQUIRE(temporal != trials.end());
  try {
    synthetic_answer(spec, *temporal);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnsupportedDomain);
  }
}

TEST_CASE("synthetic frequencies converge to the analytic probability") {
  const auto trials = battery_for({Domain::RiskChoice});
  const auto it = std::find_if(trials.begin(), trials.end(), [](const battery::TrialSpec& t) {
    return std::abs(t.payload["delta_ev"].get<double>() - 2.5) < 1e-9;
  });
  REQUIRE(it != trials.end());
  SyntheticAgentSpec spec;
  const double p = synthetic_choice_probability(spec, *it);
  CHECK(p == doctest::Approx(models::logistic(0.5 * 2.5)).epsilon(1e-12));
  int risky = 0;
  const int n = 10000;
  for (int s = 0; s < n; ++s) {
    spec.rng_seed = static_cast<std::uint64_t>(s) * 7919 + 1;
    const auto o = parsing::parse_for_trial(*it, synthetic_answer(spec, *it).answer_text);
    REQUIRE(o.option);
    risky += *o.option == 0;
  }
  CHECK(std::abs(static_cast<double>(risky) / n - p) < 0.02);
}

TEST_CASE("stratified repeats land within one of the expected count") {
  const auto trials = battery_for({Domain::RiskChoice}, 20);
  SyntheticAgentSpec spec;
  std::map<std::string, std::pair<int, double>> cells;
  for (const auto& t : trials) {
    auto cell = t.payload;
    cell.erase("repeat");
    cell.erase("options");
    auto& c = cells[cell.dump()];
    c.second = synthetic_choice_probability(spec, t);
    c.first += *parsing::parse_for_trial(t, synthetic_answer(spec, t).answer_text).option == 0;
  }
  CHECK(cells.size() == 320);
  for (const auto& [key, c] : cells) CHECK(std::abs(c.first - 20.0 * c.second) <= 1.0);
}

TEST_CASE("synthetic answers parse back on every domain") {
  const auto trials = battery_for({});
  const auto spec = SyntheticAgentSpec::preset("rational");
  SyntheticAgent agent(spec, "rational");
  std::size_t failures = 0;
  std::vector<TrialRecord> records;
  for (const auto& t : trials) {
    records.push_back(run_trial(agent, t, SteeringCondition::none()));
    if (records.back().status != RecordStatus::Parsed) ++failures;
  }
  CHECK(failures == 0);
  CHECK(records.size() == trials.size());

  const auto axioms = scoring::score_axioms(records);
  CHECK(axioms.completeness.rate == 1.0);
  CHECK(axioms.transitivity.rate == 1.0);
  CHECK(axioms.continuity.rate == 1.0);
  CHECK(axioms.independence.rate == 1.0);

  // vignette policies surface unchanged through parsing and scoring
  const auto idx = scoring::compute_domain_indices(records);
  CHECK(idx.sai.sai.value == doctest::Approx(3.0));
  const auto composites = scoring::compute_moral_composites(records);
  REQUIRE_FALSE(composites.empty());
  for (const auto& c : composites) {
    const int expect = std::clamp(static_cast<int>(std::lround(2.0 + 0.6 * c.harm_level)), 1, 5);
    CHECK(c.condemnation == expect);
  }
  CHECK(idx.endowment.delta_e == doctest::Approx(0.0));
}

TEST_CASE("noisy preset breaks some axioms") {
  const auto trials = battery_for({Domain::RationalityCompleteness, Domain::RationalityTransitivity,
                                   Domain::RationalityContinuity, Domain::RationalityIndependence});
  SyntheticAgent agent(SyntheticAgentSpec::preset("noisy"), "noisy");
  std::vector<TrialRecord> records;
  for (const auto& t : trials) records.push_back(run_trial(agent, t, SteeringCondition::none()));
  CHECK(scoring::score_axioms(records).overall < 1.0);
}

TEST_CASE("steering perturbations are zero at zero strength") {
  const auto trials = battery_for({Domain::RiskChoice, Domain::Ultimatum, Domain::Persuasion});
  SyntheticAgent agent(SyntheticAgentSpec{});
  const auto zero = SteeringCondition::rls(Emotion::Anger, 0.0);
  const auto strong = SteeringCondition::rls(Emotion::Anger, 70.0);
  std::size_t changed = 0;
  for (const auto& t : trials) {
    CHECK(agent.respond(t, zero).response.full_text == agent.respond(t, SteeringCondition::none()).response.full_text);
    changed += agent.respond(t, strong).response.full_text != agent.respond(t, zero).response.full_text;
  }
  CHECK(changed > 0);
}

TEST_CASE("batch: order, failures, bound and abort") {
  auto trials = battery_for({Domain::Ultimatum});
  trials.resize(10);
  ScriptedAgent agent;
  agent.fail_ids = {trials[2].trial_id, trials[7].trial_id};

  std::size_t events = 0;
  BatchOptions opt;
  opt.parallelism = 4;
  opt.failure_threshold = 0.5;
  opt.on_progress = [&](const ProgressEvent& e) {
    ++events;
    CHECK(e.total == 10);
  };
  const auto recs = run_batch(trials, agent, SteeringCondition::none(), opt);
  REQUIRE(recs.size() == 10);
  CHECK(events == 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(recs[i].trial.trial_id == trials[i].trial_id);
  CHECK(std::count_if(recs.begin(), recs.end(),
                      [](const auto& r) { return r.status == RecordStatus::TransportFailed; }) == 2);
  CHECK(recs[2].status == RecordStatus::TransportFailed);
  CHECK(recs[2].attempts == 3);
  CHECK(agent.peak.load() <= 4);

  ScriptedAgent seq;
  opt.parallelism = 1;
  run_batch(trials, seq, SteeringCondition::none(), opt);
  CHECK(seq.peak.load() == 1);
  for (std::size_t i = 0; i < 10; ++i) CHECK(seq.started[i] == trials[i].trial_id);

  ScriptedAgent bad;
  for (int i = 0; i < 6; ++i) bad.fail_ids.push_back(trials[static_cast<std::size_t>(i)].trial_id);
  opt.parallelism = 3;
  try {
    run_batch(trials, bad, SteeringCondition::none(), opt);
    FAIL("no abort");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BatchAborted);
  }

  opt.parallelism = 0;
  CHECK_THROWS_AS(run_batch(trials, agent, SteeringCondition::none(), opt), Error);
}

TEST_CASE("synthetic batch is bit-identical across parallelism") {
  const auto trials = battery_for({Domain::RiskChoice, Domain::Loss, Domain::Moral, Domain::Endowment});
  SyntheticAgent agent(SyntheticAgentSpec{});
  auto dump = [&](int par) {
    BatchOptions opt;
    opt.parallelism = par;
    std::string s;
    for (const auto& r : run_batch(trials, agent, SteeringCondition::rls(Emotion::Fear, 35.0), opt))
      s += to_json(r).dump() + "\n";
    return s;
  };
  const auto one = dump(1);
  CHECK(one == dump(3));
  CHECK(one == dump(8));
}

TEST_CASE("oracle endpoint answers like the in-process agent") {
  const auto trials = battery_for({Domain::RiskChoice, Domain::Loss, Domain::Persuasion});
  SyntheticAgentSpec spec;
  spec.rng_seed = 7;
  OracleServer oracle(trials, spec);
  const int port = oracle.start();
  EndpointConfig ep;
  ep.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  RemoteAgent remote(ep);
  SyntheticAgent local(spec);

  for (const auto& cond : {SteeringCondition::none(), SteeringCondition::icp(Emotion::Anger, Intensity::High),
                           SteeringCondition::rls(Emotion::Fear, 35.0)}) {
    for (std::size_t k = 0; k < trials.size(); k += 29) {
      const auto& t = trials[k];
      // repeated prompts resolve to the first trial with that text
      if (std::find_if(trials.begin(), trials.end(), [&](const auto& u) { return u.prompt_text == t.prompt_text; })
              ->trial_id != t.trial_id)
        continue;
      CHECK(remote.respond(t, cond).response.full_text == local.respond(t, cond).response.full_text);
    }
  }
  CHECK(oracle.requests() > 0);

  battery::TrialSpec stranger = trials.front();
  stranger.prompt_text = "Which is heavier, a kilogram of feathers or a kilogram of lead?";
  try {
    remote.respond(stranger, SteeringCondition::none());
    FAIL("no error");
  } catch (const GatewayError& e) {
    CHECK(e.code() == ErrorCode::Protocol);
  }
  oracle.stop();
}
