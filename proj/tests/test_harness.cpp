#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "choicelab/harness.hpp"

using namespace choicelab;
using namespace choicelab::harness;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("choicelab-harness-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& name) const { return path / name; }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) ++n;
  return n;
}

HarnessConfig small_config(std::vector<std::string> domains = {"risk_choice", "loss", "ambiguity"}) {
  ordered_json j{{"battery", {{"domains", domains}}}, {"run", {{"parallelism", 2}, {"chunk_size", 16}}}};
  return config_from_json(j);
}

std::string validation_message(const ordered_json& j) {
  try {
    config_from_json(j);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Validation);
    return e.what();
  }
  FAIL("config accepted");
  return {};
}

}  // namespace

TEST_CASE("config errors name the offending field") {
  auto msg = validation_message({{"battery", {{"domains", {"risk_choice", "bogus"}}}}});
  CHECK(msg.find("battery.domains[1]") != std::string::npos);

  msg = validation_message({{"batery", ordered_json::object()}});
  CHECK(msg.find("batery") != std::string::npos);

  msg = validation_message({{"agent", {{"params", {{"prospect", {{"tua", 1.0}}}}}}}});
  CHECK(msg.find("agent.params.prospect") != std::string::npos);

  msg = validation_message({{"run", {{"parallelism", 0}}}});
  CHECK(msg.find("run.parallelism") != std::string::npos);

  msg = validation_message({{"steering", {{"method", "rls"}, {"emotion", "fear"}}}});
  CHECK(msg.find("steering") != std::string::npos);
}

TEST_CASE("base url expands environment variables") {
  ::setenv("CHOICELAB_TEST_HOST", "10.1.2.3", 1);
  auto cfg = config_from_json({{"agent", {{"kind", "remote"}, {"base_url", "http://${CHOICELAB_TEST_HOST}:9/v1"}}}});
  CHECK(cfg.agent.endpoint.base_url == "http://10.1.2.3:9/v1");
}

TEST_CASE("agent flag forms") {
  AgentConfig a;
  apply_agent_flag(a, "synthetic:rational");
  CHECK(a.kind == "synthetic");
  CHECK(a.preset == "rational");
  apply_agent_flag(a, "https://example.invalid/v1");
  CHECK(a.kind == "remote");
  CHECK(a.endpoint.base_url == "https://example.invalid/v1");
  CHECK_THROWS_AS(apply_agent_flag(a, "ftp://nope"), Error);
  CHECK_THROWS_AS(apply_agent_flag(a, "synthetic:unheard-of"), Error);
}

TEST_CASE("generate is byte-identical across runs and directories") {
  TempDir a, b;
  const auto cfg = small_config();
  const auto ra = cmd_generate(cfg, a / "t.jsonl");
  const auto rb = cmd_generate(cfg, b / "t.jsonl");
  CHECK(ra.trials == rb.trials);
  CHECK(ra.config_digest == rb.config_digest);
  CHECK(slurp(a / "t.jsonl") == slurp(b / "t.jsonl"));
  CHECK(line_count(a / "t.jsonl") == ra.trials);

  const auto m = ordered_json::parse(slurp(manifest_path(a / "t.jsonl")));
  CHECK(m["schema"] == kManifestSchema);
  CHECK(m["kind"] == "generate");
  CHECK(m["trials_sha256"] == file_sha256(a / "t.jsonl"));
  std::size_t total = 0;
  for (const auto& [k, v] : m["per_domain"].items()) total += v.get<std::size_t>();
  CHECK(total == ra.trials);

  auto other = cfg;
  other.battery.seed = 43;
  CHECK(cmd_generate(other, b / "u.jsonl").config_digest != ra.config_digest);
}

TEST_CASE("run writes one record per trial with the condition attached") {
  TempDir d;
  auto cfg = small_config();
  cfg.condition = SteeringCondition::icp(Emotion::Anger, Intensity::High);
  cmd_generate(cfg, d / "t.jsonl");
  const auto res = cmd_run(cfg, d / "t.jsonl", d / "r.jsonl");

  const auto trials = read_trials(d / "t.jsonl");
  const auto records = read_records(d / "r.jsonl");
  REQUIRE(records.size() == trials.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(records[i].trial.trial_id == trials[i].trial_id);
    CHECK(records[i].condition == cfg.condition);
  }

  const auto& c = res.manifest["counts"];
  CHECK(c["trials"].get<std::size_t>() == trials.size());
  CHECK(c["trials"] == c["parsed"].get<std::size_t>() + c["parse_failed"].get<std::size_t>() +
                           c["transport_failed"].get<std::size_t>());
  CHECK(res.manifest["status"] == "complete");
  CHECK(res.manifest["condition"] == to_json(cfg.condition));

  // existing output without --resume is refused
  CHECK_THROWS_AS(cmd_run(cfg, d / "t.jsonl", d / "r.jsonl"), Error);
}

TEST_CASE("resume completes a limited run without duplicates") {
  TempDir d;
  const auto cfg = small_config();
  cmd_generate(cfg, d / "t.jsonl");
  const auto n = read_trials(d / "t.jsonl").size();

  auto first = cmd_run(cfg, d / "t.jsonl", d / "part.jsonl", {.limit = 10});
  CHECK(first.manifest["status"] == "partial");
  CHECK(first.pending == n - 10);
  CHECK(line_count(d / "part.jsonl") == 10);

  // simulate a crash mid-write
  {
    std::ofstream out(d / "part.jsonl", std::ios::app);
    out << "{\"trial_id\":\"torn";
  }
  auto second = cmd_run(cfg, d / "t.jsonl", d / "part.jsonl", {.resume = true});
  CHECK(second.skipped == 10);
  CHECK(second.manifest["status"] == "complete");

  const auto records = read_records(d / "part.jsonl");
  CHECK(records.size() == n);
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.trial.trial_id);
  CHECK(ids.size() == n);

  cmd_run(cfg, d / "t.jsonl", d / "whole.jsonl");
  CHECK(slurp(d / "whole.jsonl") == slurp(d / "part.jsonl"));

  auto steered = cfg;
  steered.condition = SteeringCondition::rls(Emotion::Fear, 35.0);
  CHECK_THROWS_AS(cmd_run(steered, d / "t.jsonl", d / "part.jsonl", {.resume = true}), Error);
}

TEST_CASE("record set output does not depend on parallelism") {
  TempDir d;
  auto cfg = small_config();
  cmd_generate(cfg, d / "t.jsonl");
  cfg.run.parallelism = 1;
  const auto a = cmd_run(cfg, d / "t.jsonl", d / "a.jsonl");
  cfg.run.parallelism = 5;
  const auto b = cmd_run(cfg, d / "t.jsonl", d / "b.jsonl");
  CHECK(slurp(d / "a.jsonl") == slurp(d / "b.jsonl"));
  CHECK(a.manifest["config_digest"] == b.manifest["config_digest"]);
}

TEST_CASE("neutral-only analysis has no effects") {
  TempDir d;
  const auto cfg = small_config();
  cmd_generate(cfg, d / "t.jsonl");
  cmd_run(cfg, d / "t.jsonl", d / "n.jsonl");
  const auto rep = cmd_analyze({d / "n.jsonl"}, d / "report.json");
  CHECK(rep["schema"] == kReportSchema);
  CHECK(rep["conditions"].size() == 1);
  CHECK(rep["effects"].empty());
  CHECK(rep["forest"].size() == 1);

  auto steered = cfg;
  steered.condition = SteeringCondition::rls(Emotion::Joy, 20.0);
  cmd_run(steered, d / "t.jsonl", d / "j.jsonl");
  CHECK_THROWS_AS(cmd_analyze({d / "j.jsonl"}, d / "x.json"), Error);
}

TEST_CASE("self contrast gives zero effects and a forest with a diamond") {
  TempDir d;
  const auto cfg = small_config({"risk_choice", "loss", "ambiguity", "endowment", "ultimatum"});
  cmd_generate(cfg, d / "t.jsonl");
  cmd_run(cfg, d / "t.jsonl", d / "n.jsonl");

  // identical agent behaviour under a steering label: relabel neutral records
  auto neutral = read_records(d / "n.jsonl");
  auto same = neutral;
  for (auto& r : same) r.condition = SteeringCondition::rls(Emotion::Fear, 10.0);
  const auto rep = analyze({neutral, same}, {"a", "b"});

  REQUIRE_FALSE(rep["effects"].empty());
  for (const auto& e : rep["effects"]) {
    if (e["status"] != "ok") {
      CHECK_FALSE(e.contains("g"));
      continue;
    }
    CHECK(e["g"].get<double>() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(e["ci_low"].get<double>() <= 0.0);
    CHECK(e["ci_high"].get<double>() >= 0.0);
  }
  CHECK(rep["forest"].size() == rep["effects"].size() + 1);
  CHECK(rep["forest"].back()["kind"] == "diamond");

  const auto files = render_csv(rep);
  const auto& forest = files.at("forest.csv");
  CHECK(std::count(forest.begin(), forest.end(), '\n') == static_cast<long>(rep["forest"].size() + 1));
  const auto& risk = files.at("risk_curve.csv");
  CHECK(risk.find(",empirical,") != std::string::npos);
  CHECK(risk.find(",fitted,") != std::string::npos);
}

TEST_CASE("a failed fit renders a status row without numbers") {
  TempDir d;
  auto j = ordered_json{{"battery", {{"domains", {"risk_choice"}}}},
                        {"agent", {{"params", {{"prospect", {{"b", 200.0}}}}}}}};
  const auto cfg = config_from_json(j);
  cmd_generate(cfg, d / "t.jsonl");
  cmd_run(cfg, d / "t.jsonl", d / "r.jsonl");
  const auto rep = cmd_analyze({d / "r.jsonl"}, d / "report.json");

  const auto& fit = rep["conditions"][0]["fits"]["risk_logit"];
  CHECK(fit["status"] == "SEPARATION");
  CHECK_FALSE(fit.contains("tau"));

  const auto risk = render_csv(rep).at("risk_curve.csv");
  CHECK(risk.find("none,SEPARATION,fitted,,,\n") != std::string::npos);
  CHECK(render_markdown(rep).find("SEPARATION") != std::string::npos);
}

TEST_CASE("report writes every artefact and refuses foreign json") {
  TempDir d;
  const auto cfg = small_config();
  cmd_generate(cfg, d / "t.jsonl");
  cmd_run(cfg, d / "t.jsonl", d / "n.jsonl");
  cmd_analyze({d / "n.jsonl"}, d / "report.json");

  const auto written = cmd_report(d / "report.json", d / "out", "all");
  std::set<std::string> names;
  for (const auto& p : written) names.insert(p.filename().string());
  for (const char* want : {"summary.md", "risk_curve.csv", "prelec_curve.csv", "utility_curve.csv",
                           "loss_frontier.csv", "aai_vs_stake.csv", "temporal_contours.csv", "forest.csv"})
    CHECK(names.count(want) == 1);

  std::ofstream(d / "other.json") << R"({"schema":"something/2"})";
  CHECK_THROWS_AS(cmd_report(d / "other.json", d / "out2"), Error);
  CHECK_THROWS_AS(cmd_report(d / "report.json", d / "out3", "pdf"), Error);
}

TEST_CASE("pipeline reports are byte-identical across working directories") {
  auto pipeline = [](const TempDir& d) {
    auto cfg = small_config({"risk_choice", "loss", "temporal", "endowment"});
    cmd_generate(cfg, d / "t.jsonl");
    cmd_run(cfg, d / "t.jsonl", d / "n.jsonl");
    cfg.condition = SteeringCondition::icp(Emotion::Sadness, Intensity::Medium);
    cfg.run.parallelism = 3;
    cmd_run(cfg, d / "t.jsonl", d / "s.jsonl");
    cmd_analyze({d / "n.jsonl", d / "s.jsonl"}, d / "report.json");
    cmd_report(d / "report.json", d / "out");
  };
  TempDir a, b;
  pipeline(a);
  pipeline(b);
  CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
  for (const auto& entry : fs::directory_iterator(a / "out"))
    CHECK(slurp(entry.path()) == slurp(b / ("out/" + entry.path().filename().string())));
}
