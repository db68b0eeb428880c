#include <chrono>
#include <csignal>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "choicelab/harness.hpp"

using namespace choicelab;
namespace fs = std::filesystem;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitTransport = 3;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
};

struct SteerFlags {
  std::optional<std::string> steer, emotion, intensity, scope;
  std::optional<double> beta;
  std::vector<int> layers;
};

void add_steer_flags(CLI::App* cmd, SteerFlags& f) {
  cmd->add_option("--steer", f.steer, "none | icp | rls");
  cmd->add_option("--emotion", f.emotion, "anger | fear | sadness | joy | disgust");
  cmd->add_option("--intensity", f.intensity, "very_low .. very_high (icp)");
  cmd->add_option("--beta", f.beta, "steering strength (rls)");
  cmd->add_option("--scope", f.scope, "all_new | thinking_only (rls)");
  cmd->add_option("--layers", f.layers, "layer indices (rls)")->delimiter(',');
}

// Flags replace the configured condition as a whole when --steer is given.
void apply_steer_flags(harness::HarnessConfig& cfg, const SteerFlags& f) {
  if (!f.steer) {
    if (f.emotion || f.intensity || f.beta || f.scope || !f.layers.empty())
      throw Error(ErrorCode::Validation, "--steer: condition flags given without --steer");
    return;
  }
  const auto method = steer_method_from_string(*f.steer);
  const auto emotion = f.emotion ? emotion_from_string(*f.emotion) : Emotion::None;
  switch (method) {
    case SteerMethod::None:
      if (f.emotion || f.intensity || f.beta || f.scope || !f.layers.empty())
        throw Error(ErrorCode::Validation, "--steer none takes no emotion, intensity, beta, scope or layers");
      cfg.condition = SteeringCondition::none();
      break;
    case SteerMethod::Icp:
      if (f.beta || f.scope || !f.layers.empty())
        throw Error(ErrorCode::Validation, "--steer icp takes --intensity, not --beta/--scope/--layers");
      cfg.condition =
          SteeringCondition::icp(emotion, f.intensity ? intensity_from_string(*f.intensity) : Intensity::Medium);
      break;
    case SteerMethod::Rls:
      if (f.intensity) throw Error(ErrorCode::Validation, "--steer rls takes --beta, not --intensity");
      if (!f.beta) throw Error(ErrorCode::Validation, "--steer rls needs --beta");
      cfg.condition = SteeringCondition::rls(emotion, *f.beta,
                                             f.scope ? scope_from_string(*f.scope) : SteerScope::AllNew, f.layers);
      break;
  }
  cfg.condition.validate();
}

harness::HarnessConfig base_config(const CommonFlags& c) {
  return c.config.empty() ? harness::HarnessConfig{} : harness::load_config(c.config);
}

std::sig_atomic_t volatile g_stop = 0;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rational-choice and emotion-steering audit harness for chat agents"};
  app.set_version_flag("--version", std::string(harness::tool_version()));
  app.require_subcommand(1);

  CommonFlags common;
  SteerFlags steer;
  std::string out, in, trials_path, agent_flag, format = "all";
  std::vector<std::string> records;
  std::optional<int> parallelism, port;
  std::optional<std::size_t> limit;
  bool resume = false, quiet = false;
  std::string host = "127.0.0.1";

  auto* gen = app.add_subcommand("generate", "write a trial battery as JSON lines");
  gen->add_option("--config", common.config, "JSON config file");
  gen->add_option("--seed", common.seed, "battery seed");
  gen->add_option("--out", out, "trial file")->required();

  auto* run = app.add_subcommand("run", "query an agent on every trial and append records");
  run->add_option("--config", common.config, "JSON config file");
  run->add_option("--trials", trials_path, "trial file from generate")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "records file (JSON lines)")->required();
  run->add_option("--agent", agent_flag, "synthetic[:preset] | remote | <base url>");
  run->add_option("--seed", common.seed, "synthetic agent seed");
  run->add_option("--parallelism", parallelism, "requests in flight");
  run->add_flag("--resume", resume, "skip trials already in --out");
  run->add_option("--limit", limit, "stop after this many new records");
  run->add_flag("--quiet", quiet, "no progress lines");
  add_steer_flags(run, steer);

  auto* ana = app.add_subcommand("analyze", "score, fit and contrast record sets");
  ana->add_option("records", records, "records files; condition none is the baseline")
      ->required()
      ->check(CLI::ExistingFile);
  ana->add_option("--config", common.config, "JSON config file (analysis.price_clip)");
  ana->add_option("--out", out, "report JSON")->required();

  auto* rep = app.add_subcommand("report", "render a report as markdown and plot CSVs");
  rep->add_option("--in", in, "report JSON from analyze")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", out, "output directory")->required();
  rep->add_option("--format", format, "markdown | csv | all");

  auto* orc = app.add_subcommand("oracle", "serve a synthetic agent over the chat protocol");
  orc->add_option("--config", common.config, "JSON config file");
  orc->add_option("--trials", trials_path, "trial file the prompts come from")->required()->check(CLI::ExistingFile);
  orc->add_option("--agent", agent_flag, "synthetic[:preset]");
  orc->add_option("--seed", common.seed, "synthetic agent seed");
  orc->add_option("--host", host, "bind address");
  orc->add_option("--port", port, "port (0 picks one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (gen->parsed()) {
      auto cfg = base_config(common);
      if (common.seed) cfg.battery.seed = *common.seed;
      const auto res = harness::cmd_generate(cfg, out);
      for (const auto& [d, n] : res.per_domain) std::cout << d << "\t" << n << "\n";
      std::cout << "total\t" << res.trials << "\n";
      return 0;
    }
    if (run->parsed()) {
      auto cfg = base_config(common);
      if (!agent_flag.empty()) harness::apply_agent_flag(cfg.agent, agent_flag);
      if (common.seed) cfg.agent.seed = *common.seed;
      if (parallelism) {
        if (*parallelism < 1) throw Error(ErrorCode::Validation, "--parallelism must be at least 1");
        cfg.run.parallelism = *parallelism;
      }
      apply_steer_flags(cfg, steer);
      harness::RunOptions opt;
      opt.resume = resume;
      opt.limit = limit;
      if (!quiet) opt.log = [](const std::string& s) { std::cerr << s << "\n"; };
      try {
        const auto res = harness::cmd_run(cfg, trials_path, out, opt);
        std::cout << "records\t" << res.counts.trials << "\nparsed\t" << res.counts.parsed << "\nparse_failed\t"
                  << res.counts.parse_failed << "\ntransport_failed\t" << res.counts.transport_failed << "\n";
      } catch (const Error& e) {
        if (e.code() == ErrorCode::BatchAborted) {
          std::cerr << "run aborted: " << e.what() << "\n";
          return kExitTransport;
        }
        throw;
      }
      return 0;
    }
    if (ana->parsed()) {
      const auto cfg = base_config(common);
      std::vector<fs::path> paths(records.begin(), records.end());
      const auto report = harness::cmd_analyze(paths, out, cfg.price_clip);
      std::cout << "conditions\t" << report["conditions"].size() << "\neffects\t" << report["effects"].size()
                << "\n";
      return 0;
    }
    if (rep->parsed()) {
      for (const auto& p : harness::cmd_report(in, out, format)) std::cout << p.string() << "\n";
      return 0;
    }
    if (orc->parsed()) {
      auto cfg = base_config(common);
      if (!agent_flag.empty()) harness::apply_agent_flag(cfg.agent, agent_flag);
      if (cfg.agent.kind != "synthetic") throw Error(ErrorCode::Validation, "--agent: oracle serves synthetic agents");
      if (common.seed) cfg.agent.seed = *common.seed;
      gateway::OracleServer server(harness::read_trials(trials_path), harness::synthetic_spec(cfg.agent));
      std::signal(SIGINT, [](int) { g_stop = 1; });
      std::signal(SIGTERM, [](int) { g_stop = 1; });
      const int bound = server.start(host, port.value_or(0));
      std::cout << "listening\thttp://" << host << ":" << bound << "/v1" << std::endl;
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
      std::cerr << "served " << server.requests() << " requests\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::BatchAborted ? kExitTransport : kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
