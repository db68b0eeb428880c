#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "choicelab/agent_gateway.hpp"
#include "choicelab/records.hpp"
#include "choicelab/task_battery.hpp"

namespace choicelab::harness {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

inline constexpr std::string_view kReportSchema = "choicelab.report/1";
inline constexpr std::string_view kManifestSchema = "choicelab.manifest/1";

std::string_view tool_version();

// ---- configuration ---------------------------------------------------------

struct AgentConfig {
  std::string kind = "synthetic";  // synthetic | remote
  std::string preset = "prospect";
  std::uint64_t seed = 42;
  ordered_json params = ordered_json::object();  // overrides on the preset
  gateway::EndpointConfig endpoint;
};

struct RunSettings {
  int parallelism = 4;
  double failure_threshold = 0.5;  // per chunk
  std::size_t chunk_size = 256;
};

struct HarnessConfig {
  battery::BatteryConfig battery;
  AgentConfig agent;
  SteeringCondition condition;
  RunSettings run;
  double price_clip = 100.0;
};

// Unknown keys and bad values throw VALIDATION naming the field. `${NAME}`
// in agent.base_url and agent.model expands from the environment.
HarnessConfig config_from_json(const ordered_json& j);
HarnessConfig load_config(const fs::path& path);

// Agent spec from "synthetic[:preset]", "remote", or an http(s) base url.
void apply_agent_flag(AgentConfig& agent, const std::string& flag);

gateway::SyntheticAgentSpec synthetic_spec(const AgentConfig& agent);
ordered_json to_json(const gateway::SyntheticAgentSpec& spec);
std::unique_ptr<gateway::Agent> make_agent(const AgentConfig& agent);

// Canonical form of everything that changes generated trials or records.
ordered_json battery_inputs(const HarnessConfig& cfg);
ordered_json agent_inputs(const HarnessConfig& cfg);

std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const fs::path& path);
// Names and digests of every asset file, in name order.
ordered_json asset_digests(const fs::path& asset_dir);

// ---- files -----------------------------------------------------------------

std::vector<battery::TrialSpec> read_trials(const fs::path& path);
std::vector<TrialRecord> read_records(const fs::path& path);
fs::path manifest_path(const fs::path& data_file);

struct Counts {
  std::size_t trials = 0;
  std::size_t parsed = 0;
  std::size_t parse_failed = 0;
  std::size_t transport_failed = 0;
};
Counts count_records(std::span<const TrialRecord> records);

// ---- commands --------------------------------------------------------------

struct GenerateResult {
  std::size_t trials = 0;
  std::map<std::string, std::size_t> per_domain;
  std::string config_digest;
};
// Writes the trial file and its manifest stub.
GenerateResult cmd_generate(const HarnessConfig& cfg, const fs::path& out);

struct RunOptions {
  bool resume = false;
  std::optional<std::size_t> limit;  // stop after this many new records
  std::function<void(const std::string&)> log;
};

struct RunResult {
  ordered_json manifest;
  Counts counts;
  std::size_t skipped = 0;  // already present on resume
  std::size_t pending = 0;  // left for a later resume
};
// Appends records in input order, one line per write, chunk by chunk.
// BATCH_ABORTED propagates after the manifest records the partial state.
RunResult cmd_run(const HarnessConfig& cfg, const fs::path& trials_path, const fs::path& out,
                  const RunOptions& options = {});

// Scores, fits, effects and meta-analysis over record sets grouped by condition.
ordered_json analyze(const std::vector<std::vector<TrialRecord>>& sets, const std::vector<std::string>& digests,
                     double price_clip = 100.0);
ordered_json cmd_analyze(const std::vector<fs::path>& records, const fs::path& out, double price_clip = 100.0);

std::string render_markdown(const ordered_json& report);
// File name to CSV content.
std::map<std::string, std::string> render_csv(const ordered_json& report);
// format: markdown | csv | all
std::vector<fs::path> cmd_report(const fs::path& report, const fs::path& out_dir, std::string_view format = "all");

}  // namespace choicelab::harness
