#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "choicelab/choice_models.hpp"
#include "choicelab/records.hpp"

namespace choicelab::gateway {

// ---- in-context priming ----------------------------------------------------

// Prepends the emotion persona preamble (and optional exemplars from the
// positive-class pool) to `prompt`; the prompt itself is appended untouched.
// A prompt that already starts with a persona preamble is rejected.
std::string wrap_icp(const std::string& prompt, Emotion emotion, Intensity intensity, int exemplars = 0,
                     const std::filesystem::path& asset_dir = assets::default_asset_dir());
// The preamble text wrap_icp would add, without the trailing blank line.
std::string icp_preamble(Emotion emotion, Intensity intensity,
                         const std::filesystem::path& asset_dir = assets::default_asset_dir());
struct IcpMatch {
  Emotion emotion = Emotion::None;
  Intensity intensity = Intensity::Medium;
  std::size_t prefix_length = 0;  // preamble, exemplars and separator
};
// Recognizes a leading persona preamble produced by wrap_icp.
std::optional<IcpMatch> detect_icp(std::string_view text,
                                   const std::filesystem::path& asset_dir = assets::default_asset_dir());

// ---- transport -------------------------------------------------------------

struct RetryPolicy {
  int attempts = 3;
  double base_delay_ms = 250.0;
  double max_delay_ms = 8000.0;
  std::uint64_t jitter_seed = 0x9e11;
};

// Waits before attempts 2..n: base * 2^k scaled by a seeded jitter in [0.5, 1.5).
std::vector<double> backoff_schedule(const RetryPolicy& policy, std::string_view request_key);

struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";  // POSTs to <base_url>/chat/completions
  std::string model_name = "default";
  std::string auth_env;  // environment variable holding a bearer token; empty for none
  bool greedy = true;
  int max_tokens = 1024;
  double timeout_s = 120.0;
  double connect_timeout_s = 10.0;
  RetryPolicy retry;
};

// Carries the raw reply body for PROTOCOL failures.
class GatewayError : public Error {
 public:
  GatewayError(ErrorCode code, const std::string& what, std::string payload = {}, int attempts = 0)
      : Error(code, what), payload_(std::move(payload)), attempts_(attempts) {}
  const std::string& payload() const { return payload_; }
  int attempts() const { return attempts_; }

 private:
  std::string payload_;
  int attempts_;
};

// Request body for one single-turn chat call. The `steering` object appears
// only for RLS conditions.
nlohmann::ordered_json build_chat_request(const EndpointConfig& endpoint, const std::string& prompt,
                                          const SteeringCondition& condition);

struct QueryResult {
  parsing::RawResponse response;
  int attempts = 0;
};

using Sleeper = std::function<void(double ms)>;

// ICP conditions wrap the prompt; RLS conditions add the steering extension.
QueryResult query_agent(const EndpointConfig& endpoint, const std::string& prompt, const SteeringCondition& condition,
                        const Sleeper& sleep = {});

// ---- agents ----------------------------------------------------------------

struct AgentReply {
  parsing::RawResponse response;
  int attempts = 1;
};

class Agent {
 public:
  virtual ~Agent() = default;
  virtual std::string identity() const = 0;
  // Pure agents get no wall-clock timing in their records.
  virtual bool deterministic() const { return false; }
  virtual AgentReply respond(const battery::TrialSpec& trial, const SteeringCondition& condition) = 0;
};

class RemoteAgent : public Agent {
 public:
  explicit RemoteAgent(EndpointConfig endpoint, Sleeper sleep = {})
      : endpoint_(std::move(endpoint)), sleep_(std::move(sleep)) {}
  std::string identity() const override { return "remote:" + endpoint_.model_name + "@" + endpoint_.base_url; }
  AgentReply respond(const battery::TrialSpec& trial, const SteeringCondition& condition) override;

 private:
  EndpointConfig endpoint_;
  Sleeper sleep_;
};

// Fixed response policies for the non-economic domains (harness constructs).
struct VignettePolicy {
  double sai_target = 3.0;        // stereotype agreement in the cue direction
  int persuasion_sad = 3;
  int persuasion_anger = 3;
  double moral_base = 2.0;        // condemnation = clamp(round(base + slope * harm))
  double moral_slope = 0.6;
  int intention = 2;
  double blame_base = 1.5;
  double blame_slope = 0.8;
  double assistance_base = 1.0;   // assistance = clamp(round(base + slope * need))
  double assistance_slope = 0.8;
};

struct SyntheticAgentSpec {
  models::ProspectParams<double> prospect{1.0, 1.0, 1.0, 0.5, 0.0};
  models::LossLogitParams loss{0.0, 1.0, -1.5, 1.5, false};
  std::optional<double> loss_threshold;  // accept iff G > threshold * L, no noise
  models::TemporalParams temporal{-1.0, -0.02, 8.0};
  double ambiguity_a0 = 0.8;             // logit P(known) = a0 + aG * G
  double ambiguity_aG = 0.0;
  double ug_c0 = 2.0;                    // logit P(reject) = c0 + c_share * y/T
  double ug_c_share = -8.0;
  double dg_share = 0.3;
  double wta = 6.0, wtp = 4.0, wta_unload = 5.0, wta_gift = 6.5;
  double rationality_noise = 0.0;        // chance of a uniformly random axiom answer
  VignettePolicy vignette;
  std::uint64_t rng_seed = 42;
  // Spread the uniforms of a cell's repeats over equal strata.
  bool stratify = true;
  std::vector<battery::Domain> domains;  // empty: all

  // Preset by name: "prospect" (default), "rational", "loss-threshold".
  static SyntheticAgentSpec preset(std::string_view name);
};

// Probability-of-first-canonical-option or equivalent for binary domains.
double synthetic_choice_probability(const SyntheticAgentSpec& spec, const battery::TrialSpec& trial);

// Canonical answer text for the trial; UNSUPPORTED_DOMAIN outside spec.domains.
parsing::RawResponse synthetic_answer(const SyntheticAgentSpec& spec, const battery::TrialSpec& trial);

// Documented parameter shifts for steered synthetic runs, scaled by beta/35
// (RLS) or intensity (ICP). Harness construct for exercising contrasts.
SyntheticAgentSpec apply_condition(SyntheticAgentSpec spec, const SteeringCondition& condition);

class SyntheticAgent : public Agent {
 public:
  explicit SyntheticAgent(SyntheticAgentSpec spec, std::string name = "prospect")
      : spec_(std::move(spec)), name_(std::move(name)) {}
  std::string identity() const override;
  bool deterministic() const override { return true; }
  AgentReply respond(const battery::TrialSpec& trial, const SteeringCondition& condition) override;
  const SyntheticAgentSpec& spec() const { return spec_; }

 private:
  SyntheticAgentSpec spec_;
  std::string name_;
};

// ---- batch execution -------------------------------------------------------

struct ProgressEvent {
  std::size_t done = 0;
  std::size_t total = 0;
  std::size_t failed = 0;
  const TrialRecord* record = nullptr;
};

struct BatchOptions {
  int parallelism = 4;
  double failure_threshold = 0.5;  // fraction of transport failures that aborts
  std::function<void(const ProgressEvent&)> on_progress;
};

// Record for one trial: query, split, parse. Transport failures are recorded,
// not thrown.
TrialRecord run_trial(Agent& agent, const battery::TrialSpec& trial, const SteeringCondition& condition);

// Output order equals input order. Throws BATCH_ABORTED once transport
// failures exceed the threshold fraction of the batch.
std::vector<TrialRecord> run_batch(std::span<const battery::TrialSpec> trials, Agent& agent,
                                   const SteeringCondition& condition, const BatchOptions& options = {});

// ---- local oracle endpoint ------------------------------------------------

// Chat-protocol server answering with a synthetic agent. Prompts are matched
// to trials by text (after removing a persona preamble); an ICP preamble or a
// `steering` object in the request becomes the agent's condition.
class OracleServer {
 public:
  OracleServer(std::vector<battery::TrialSpec> trials, SyntheticAgentSpec spec);
  ~OracleServer();
  OracleServer(const OracleServer&) = delete;
  OracleServer& operator=(const OracleServer&) = delete;

  // Binds and serves on a background thread; port 0 picks a free port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Blocks until stop() is called from elsewhere.
  void serve(const std::string& host, int port);
  void stop();
  std::size_t requests() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace choicelab::gateway
