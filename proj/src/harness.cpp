#include "choicelab/harness.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#ifndef CHOICELAB_VERSION
#define CHOICELAB_VERSION "0.0.0"
#endif

namespace choicelab::harness {

using battery::Domain;
using battery::TrialSpec;

std::string_view tool_version() { return CHOICELAB_VERSION; }

namespace {

[[noreturn]] void invalid(const std::string& field, const std::string& msg) {
  throw Error(ErrorCode::Validation, field + ": " + msg);
}

void check_keys(const ordered_json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) invalid(where, "expected an object");
  for (const auto& [k, _] : j.items())
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) invalid(where + "." + k, "unknown key");
}

template <typename T>
T get_as(const ordered_json& j, const std::string& field) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    invalid(field, "wrong type (" + std::string(j.type_name()) + ")");
  }
}

template <typename T>
void read_opt(const ordered_json& obj, const char* key, T& dst, const std::string& where) {
  if (obj.contains(key)) dst = get_as<T>(obj.at(key), where + "." + key);
}

std::string expand_env(const std::string& s, const std::string& field) {
  static const std::regex var(R"(\$\{([A-Za-z_][A-Za-z0-9_]*)\})");
  std::string out;
  auto begin = s.cbegin();
  for (std::sregex_iterator it(s.begin(), s.end(), var), end; it != end; ++it) {
    out.append(begin, s.cbegin() + it->position());
    const auto name = (*it)[1].str();
    const char* v = std::getenv(name.c_str());
    if (!v) invalid(field, "environment variable " + name + " is not set");
    out += v;
    begin = s.cbegin() + it->position() + it->length();
  }
  out.append(begin, s.cend());
  return out;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Validation, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Validation, "cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::Validation, "short write to " + path.string());
  }
  fs::rename(tmp, path);
}

// Append-only JSON-lines writer; each line goes out in a single write().
class LineAppender {
 public:
  explicit LineAppender(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fd_ = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error(ErrorCode::Validation, "cannot open " + path.string() + ": " + std::strerror(errno));
  }
  ~LineAppender() {
    if (fd_ >= 0) ::close(fd_);
  }
  LineAppender(const LineAppender&) = delete;
  LineAppender& operator=(const LineAppender&) = delete;

  void append(std::string line) {
    line.push_back('\n');
    const char* p = line.data();
    std::size_t left = line.size();
    while (left > 0) {
      const auto n = ::write(fd_, p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorCode::Validation, std::string("append failed: ") + std::strerror(errno));
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
  }
  void sync() { ::fsync(fd_); }

 private:
  int fd_ = -1;
};

// Drops a torn final line left by an interrupted append.
void repair_tail(const fs::path& path) {
  if (!fs::exists(path)) return;
  const auto text = read_file(path);
  if (text.empty() || text.back() == '\n') return;
  const auto cut = text.rfind('\n');
  fs::resize_file(path, cut == std::string::npos ? 0 : cut + 1);
}

ordered_json manifest_json(const std::string& kind, const std::string& digest, std::uint64_t battery_seed,
                           const std::string& agent, const std::optional<SteeringCondition>& cond,
                           const std::string& started, const std::string& finished, const Counts& counts,
                           const ordered_json& extra) {
  ordered_json m;
  m["schema"] = kManifestSchema;
  m["kind"] = kind;
  m["run_id"] = kind + "-" + digest.substr(0, 16);
  m["config_digest"] = digest;
  m["battery_seed"] = battery_seed;
  m["agent"] = agent.empty() ? ordered_json(nullptr) : ordered_json(agent);
  m["condition"] = cond ? to_json(*cond) : ordered_json(nullptr);
  m["started_at"] = started;
  m["finished_at"] = finished;
  m["tool_version"] = tool_version();
  m["counts"] = {{"trials", counts.trials},
                 {"parsed", counts.parsed},
                 {"parse_failed", counts.parse_failed},
                 {"transport_failed", counts.transport_failed}};
  for (const auto& [k, v] : extra.items()) m[k] = v;
  return m;
}

}  // namespace

// ---- configuration ---------------------------------------------------------

HarnessConfig config_from_json(const ordered_json& j) {
  HarnessConfig cfg;
  check_keys(j, {"battery", "agent", "steering", "run", "analysis"}, "config");

  if (j.contains("battery")) {
    const auto& b = j["battery"];
    check_keys(b, {"seed", "repeats_per_cell", "domains", "template_subset", "currency_symbol", "asset_dir"},
               "battery");
    read_opt(b, "seed", cfg.battery.seed, "battery");
    read_opt(b, "repeats_per_cell", cfg.battery.repeats_per_cell, "battery");
    if (cfg.battery.repeats_per_cell < 1) invalid("battery.repeats_per_cell", "must be at least 1");
    read_opt(b, "template_subset", cfg.battery.template_subset, "battery");
    read_opt(b, "currency_symbol", cfg.battery.currency_symbol, "battery");
    if (b.contains("asset_dir")) cfg.battery.asset_dir = get_as<std::string>(b["asset_dir"], "battery.asset_dir");
    if (b.contains("domains")) {
      const auto& ds = b["domains"];
      if (!ds.is_array()) invalid("battery.domains", "expected a list");
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto field = "battery.domains[" + std::to_string(i) + "]";
        const auto name = get_as<std::string>(ds[i], field);
        const auto d = battery::domain_from_string(name);
        if (!d) invalid(field, "unknown domain '" + name + "'");
        cfg.battery.domains.push_back(*d);
      }
    }
  }

  if (j.contains("agent")) {
    const auto& a = j["agent"];
    check_keys(a, {"kind", "preset", "seed", "params", "base_url", "model", "auth_env", "greedy", "max_tokens",
                   "timeout_s", "connect_timeout_s", "retry"},
               "agent");
    auto& ag = cfg.agent;
    read_opt(a, "kind", ag.kind, "agent");
    if (ag.kind != "synthetic" && ag.kind != "remote") invalid("agent.kind", "expected synthetic or remote");
    read_opt(a, "preset", ag.preset, "agent");
    read_opt(a, "seed", ag.seed, "agent");
    if (a.contains("params")) {
      if (!a["params"].is_object()) invalid("agent.params", "expected an object");
      ag.params = a["params"];
    }
    auto& ep = ag.endpoint;
    if (a.contains("base_url")) ep.base_url = expand_env(get_as<std::string>(a["base_url"], "agent.base_url"), "agent.base_url");
    if (a.contains("model")) ep.model_name = expand_env(get_as<std::string>(a["model"], "agent.model"), "agent.model");
    read_opt(a, "auth_env", ep.auth_env, "agent");
    read_opt(a, "greedy", ep.greedy, "agent");
    read_opt(a, "max_tokens", ep.max_tokens, "agent");
    read_opt(a, "timeout_s", ep.timeout_s, "agent");
    read_opt(a, "connect_timeout_s", ep.connect_timeout_s, "agent");
    if (a.contains("retry")) {
      const auto& r = a["retry"];
      check_keys(r, {"attempts", "base_delay_ms", "max_delay_ms", "jitter_seed"}, "agent.retry");
      read_opt(r, "attempts", ep.retry.attempts, "agent.retry");
      read_opt(r, "base_delay_ms", ep.retry.base_delay_ms, "agent.retry");
      read_opt(r, "max_delay_ms", ep.retry.max_delay_ms, "agent.retry");
      read_opt(r, "jitter_seed", ep.retry.jitter_seed, "agent.retry");
      if (ep.retry.attempts < 1) invalid("agent.retry.attempts", "must be at least 1");
    }
    // fail early on bad synthetic parameters
    if (ag.kind == "synthetic") synthetic_spec(ag);
  }

  if (j.contains("steering")) {
    const auto& s = j["steering"];
    check_keys(s, {"method", "emotion", "intensity", "beta", "scope", "layers"}, "steering");
    ordered_json full{{"method", "none"}, {"emotion", "none"}};
    for (const auto& [k, v] : s.items()) full[k] = v;
    try {
      cfg.condition = condition_from_json(full);
    } catch (const Error& e) {
      invalid("steering", e.what());
    } catch (const nlohmann::json::exception& e) {
      invalid("steering", e.what());
    }
  }

  if (j.contains("run")) {
    const auto& r = j["run"];
    check_keys(r, {"parallelism", "failure_threshold", "chunk_size"}, "run");
    read_opt(r, "parallelism", cfg.run.parallelism, "run");
    read_opt(r, "failure_threshold", cfg.run.failure_threshold, "run");
    read_opt(r, "chunk_size", cfg.run.chunk_size, "run");
    if (cfg.run.parallelism < 1) invalid("run.parallelism", "must be at least 1");
    if (cfg.run.chunk_size < 1) invalid("run.chunk_size", "must be at least 1");
    if (!(cfg.run.failure_threshold >= 0.0 && cfg.run.failure_threshold <= 1.0))
      invalid("run.failure_threshold", "must lie in [0, 1]");
  }

  if (j.contains("analysis")) {
    const auto& a = j["analysis"];
    check_keys(a, {"price_clip"}, "analysis");
    read_opt(a, "price_clip", cfg.price_clip, "analysis");
    if (!(cfg.price_clip > 0.0)) invalid("analysis.price_clip", "must be positive");
  }
  return cfg;
}

HarnessConfig load_config(const fs::path& path) {
  const auto text = read_file(path);
  const auto j = ordered_json::parse(text, nullptr, false, true);
  if (j.is_discarded()) throw Error(ErrorCode::Validation, path.string() + ": not valid JSON");
  return config_from_json(j);
}

void apply_agent_flag(AgentConfig& agent, const std::string& flag) {
  if (flag.starts_with("synthetic")) {
    if (agent.kind != "synthetic") agent.params = ordered_json::object();
    agent.kind = "synthetic";
    if (flag.size() > 9) {
      if (flag[9] != ':') invalid("--agent", "expected synthetic[:preset]");
      agent.preset = flag.substr(10);
    }
    synthetic_spec(agent);
  } else if (flag == "remote") {
    agent.kind = "remote";
  } else if (flag.starts_with("http://") || flag.starts_with("https://")) {
    agent.kind = "remote";
    agent.endpoint.base_url = flag;
  } else {
    invalid("--agent", "expected synthetic[:preset], remote, or a base url; got '" + flag + "'");
  }
}

gateway::SyntheticAgentSpec synthetic_spec(const AgentConfig& agent) {
  auto s = gateway::SyntheticAgentSpec::preset(agent.preset);
  s.rng_seed = agent.seed;
  const auto& p = agent.params;
  const std::string w = "agent.params";
  check_keys(p, {"prospect", "loss", "loss_threshold", "temporal", "ambiguity", "ultimatum", "dg_share", "endowment",
                 "rationality_noise", "vignette", "stratify", "domains"},
             w);
  if (p.contains("prospect")) {
    const auto& q = p["prospect"];
    check_keys(q, {"rho", "alpha", "beta_w", "tau", "b"}, w + ".prospect");
    read_opt(q, "rho", s.prospect.rho, w + ".prospect");
    read_opt(q, "alpha", s.prospect.alpha, w + ".prospect");
    read_opt(q, "beta_w", s.prospect.beta_w, w + ".prospect");
    read_opt(q, "tau", s.prospect.tau, w + ".prospect");
    read_opt(q, "b", s.prospect.b, w + ".prospect");
    if (!(s.prospect.rho > 0 && s.prospect.alpha > 0 && s.prospect.beta_w > 0))
      invalid(w + ".prospect", "rho, alpha and beta_w must be positive");
  }
  if (p.contains("loss")) {
    const auto& q = p["loss"];
    check_keys(q, {"beta0", "beta_gain", "beta_loss"}, w + ".loss");
    read_opt(q, "beta0", s.loss.beta0, w + ".loss");
    if (q.contains("beta_gain")) s.loss.beta_gain = get_as<double>(q["beta_gain"], w + ".loss.beta_gain");
    if (q.contains("beta_loss")) s.loss.beta_loss = get_as<double>(q["beta_loss"], w + ".loss.beta_loss");
  }
  if (p.contains("loss_threshold")) {
    if (p["loss_threshold"].is_null()) s.loss_threshold.reset();
    else s.loss_threshold = get_as<double>(p["loss_threshold"], w + ".loss_threshold");
  }
  if (p.contains("temporal")) {
    const auto& q = p["temporal"];
    check_keys(q, {"b0", "bd", "bp"}, w + ".temporal");
    read_opt(q, "b0", s.temporal.b0, w + ".temporal");
    read_opt(q, "bd", s.temporal.bd, w + ".temporal");
    read_opt(q, "bp", s.temporal.bp, w + ".temporal");
  }
  if (p.contains("ambiguity")) {
    const auto& q = p["ambiguity"];
    check_keys(q, {"a0", "aG"}, w + ".ambiguity");
    read_opt(q, "a0", s.ambiguity_a0, w + ".ambiguity");
    read_opt(q, "aG", s.ambiguity_aG, w + ".ambiguity");
  }
  if (p.contains("ultimatum")) {
    const auto& q = p["ultimatum"];
    check_keys(q, {"c0", "c_share"}, w + ".ultimatum");
    read_opt(q, "c0", s.ug_c0, w + ".ultimatum");
    read_opt(q, "c_share", s.ug_c_share, w + ".ultimatum");
  }
  read_opt(p, "dg_share", s.dg_share, w);
  if (p.contains("endowment")) {
    const auto& q = p["endowment"];
    check_keys(q, {"wta", "wtp", "wta_unload", "wta_gift"}, w + ".endowment");
    read_opt(q, "wta", s.wta, w + ".endowment");
    read_opt(q, "wtp", s.wtp, w + ".endowment");
    read_opt(q, "wta_unload", s.wta_unload, w + ".endowment");
    read_opt(q, "wta_gift", s.wta_gift, w + ".endowment");
  }
  read_opt(p, "rationality_noise", s.rationality_noise, w);
  if (p.contains("vignette")) {
    const auto& q = p["vignette"];
    const auto vw = w + ".vignette";
    check_keys(q, {"sai_target", "persuasion_sad", "persuasion_anger", "moral_base", "moral_slope", "intention",
                   "blame_base", "blame_slope", "assistance_base", "assistance_slope"},
               vw);
    auto& v = s.vignette;
    read_opt(q, "sai_target", v.sai_target, vw);
    read_opt(q, "persuasion_sad", v.persuasion_sad, vw);
    read_opt(q, "persuasion_anger", v.persuasion_anger, vw);
    read_opt(q, "moral_base", v.moral_base, vw);
    read_opt(q, "moral_slope", v.moral_slope, vw);
    read_opt(q, "intention", v.intention, vw);
    read_opt(q, "blame_base", v.blame_base, vw);
    read_opt(q, "blame_slope", v.blame_slope, vw);
    read_opt(q, "assistance_base", v.assistance_base, vw);
    read_opt(q, "assistance_slope", v.assistance_slope, vw);
  }
  read_opt(p, "stratify", s.stratify, w);
  if (p.contains("domains")) {
    s.domains.clear();
    for (std::size_t i = 0; i < p["domains"].size(); ++i) {
      const auto field = w + ".domains[" + std::to_string(i) + "]";
      const auto name = get_as<std::string>(p["domains"][i], field);
      const auto d = battery::domain_from_string(name);
      if (!d) invalid(field, "unknown domain '" + name + "'");
      s.domains.push_back(*d);
    }
  }
  return s;
}

ordered_json to_json(const gateway::SyntheticAgentSpec& s) {
  auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
  ordered_json domains = ordered_json::array();
  for (auto d : s.domains) domains.push_back(battery::to_string(d));
  const auto& v = s.vignette;
  return {{"prospect",
           {{"rho", s.prospect.rho},
            {"alpha", s.prospect.alpha},
            {"beta_w", s.prospect.beta_w},
            {"tau", s.prospect.tau},
            {"b", s.prospect.b}}},
          {"loss", {{"beta0", s.loss.beta0}, {"beta_gain", opt(s.loss.beta_gain)}, {"beta_loss", opt(s.loss.beta_loss)}}},
          {"loss_threshold", opt(s.loss_threshold)},
          {"temporal", {{"b0", s.temporal.b0}, {"bd", s.temporal.bd}, {"bp", s.temporal.bp}}},
          {"ambiguity", {{"a0", s.ambiguity_a0}, {"aG", s.ambiguity_aG}}},
          {"ultimatum", {{"c0", s.ug_c0}, {"c_share", s.ug_c_share}}},
          {"dg_share", s.dg_share},
          {"endowment", {{"wta", s.wta}, {"wtp", s.wtp}, {"wta_unload", s.wta_unload}, {"wta_gift", s.wta_gift}}},
          {"rationality_noise", s.rationality_noise},
          {"vignette",
           {{"sai_target", v.sai_target},
            {"persuasion_sad", v.persuasion_sad},
            {"persuasion_anger", v.persuasion_anger},
            {"moral_base", v.moral_base},
            {"moral_slope", v.moral_slope},
            {"intention", v.intention},
            {"blame_base", v.blame_base},
            {"blame_slope", v.blame_slope},
            {"assistance_base", v.assistance_base},
            {"assistance_slope", v.assistance_slope}}},
          {"stratify", s.stratify},
          {"domains", domains},
          {"rng_seed", s.rng_seed}};
}

std::unique_ptr<gateway::Agent> make_agent(const AgentConfig& agent) {
  if (agent.kind == "synthetic") return std::make_unique<gateway::SyntheticAgent>(synthetic_spec(agent), agent.preset);
  return std::make_unique<gateway::RemoteAgent>(agent.endpoint);
}

ordered_json battery_inputs(const HarnessConfig& cfg) {
  ordered_json domains = ordered_json::array();
  for (auto d : cfg.battery.domains) domains.push_back(battery::to_string(d));
  return {{"seed", cfg.battery.seed},
          {"repeats_per_cell", cfg.battery.repeats_per_cell},
          {"domains", domains},
          {"template_subset", cfg.battery.template_subset},
          {"currency_symbol", cfg.battery.currency_symbol},
          {"assets", asset_digests(cfg.battery.asset_dir)}};
}

ordered_json agent_inputs(const HarnessConfig& cfg) {
  ordered_json a{{"kind", cfg.agent.kind}};
  if (cfg.agent.kind == "synthetic") {
    a["preset"] = cfg.agent.preset;
    a["spec"] = to_json(synthetic_spec(cfg.agent));
  } else {
    const auto& ep = cfg.agent.endpoint;
    a["base_url"] = ep.base_url;
    a["model"] = ep.model_name;
    a["greedy"] = ep.greedy;
    a["max_tokens"] = ep.max_tokens;
  }
  return {{"agent", a}, {"condition", to_json(cfg.condition)}};
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::Validation, "sha256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string file_sha256(const fs::path& path) { return sha256_hex(read_file(path)); }

ordered_json asset_digests(const fs::path& asset_dir) {
  if (!fs::is_directory(asset_dir)) throw Error(ErrorCode::MissingAsset, "asset directory " + asset_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(asset_dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  ordered_json out = ordered_json::object();
  for (const auto& f : files) out[f.filename().string()] = file_sha256(f);
  return out;
}

// ---- files -----------------------------------------------------------------

std::vector<TrialSpec> read_trials(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Validation, "cannot read trials " + path.string());
  std::vector<TrialSpec> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::Validation, path.string() + ":" + std::to_string(n) + ": bad JSON");
    out.push_back(battery::trial_from_json(j));
  }
  return out;
}

std::vector<TrialRecord> read_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Validation, "cannot read records " + path.string());
  std::vector<TrialRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto j = ordered_json::parse(line, nullptr, false);
    // a torn last line from an interrupted run is not a record
    if (j.is_discarded()) {
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw Error(ErrorCode::Validation, path.string() + ":" + std::to_string(n) + ": bad JSON");
    }
    out.push_back(record_from_json(j));
  }
  return out;
}

fs::path manifest_path(const fs::path& data_file) { return fs::path(data_file.string() + ".manifest.json"); }

Counts count_records(std::span<const TrialRecord> records) {
  Counts c;
  c.trials = records.size();
  for (const auto& r : records) {
    switch (r.status) {
      case RecordStatus::Parsed: ++c.parsed; break;
      case RecordStatus::ParseFailed: ++c.parse_failed; break;
      case RecordStatus::TransportFailed: ++c.transport_failed; break;
    }
  }
  return c;
}

// ---- generate --------------------------------------------------------------

GenerateResult cmd_generate(const HarnessConfig& cfg, const fs::path& out) {
  const auto started = utc_now();
  const auto trials = battery::generate_battery(cfg.battery);
  GenerateResult res;
  res.trials = trials.size();
  for (const auto& t : trials) ++res.per_domain[std::string(battery::to_string(t.domain))];
  const auto content = battery::to_jsonl(trials);
  write_file(out, content);

  res.config_digest = sha256_hex(battery_inputs(cfg).dump());
  Counts counts;
  counts.trials = trials.size();
  ordered_json per_domain = ordered_json::object();
  for (const auto& [d, n] : res.per_domain) per_domain[d] = n;
  const auto m = manifest_json("generate", res.config_digest, cfg.battery.seed, "", std::nullopt, started, utc_now(),
                               counts,
                               {{"inputs", battery_inputs(cfg)},
                                {"trials_sha256", sha256_hex(content)},
                                {"per_domain", per_domain}});
  write_file(manifest_path(out), m.dump(2) + "\n");
  return res;
}

// ---- run -------------------------------------------------------------------

RunResult cmd_run(const HarnessConfig& cfg, const fs::path& trials_path, const fs::path& out,
                  const RunOptions& options) {
  const auto started = utc_now();
  auto log = [&](const std::string& s) {
    if (options.log) options.log(s);
  };
  cfg.condition.validate();
  const auto trials = read_trials(trials_path);
  {
    std::set<std::string> ids;
    for (const auto& t : trials)
      if (!ids.insert(t.trial_id).second) invalid(trials_path.string(), "duplicate trial_id " + t.trial_id);
  }
  const auto trials_digest = file_sha256(trials_path);
  std::uint64_t battery_seed = cfg.battery.seed;
  if (fs::exists(manifest_path(trials_path))) {
    const auto stub = ordered_json::parse(read_file(manifest_path(trials_path)), nullptr, false);
    if (stub.is_object() && stub.contains("battery_seed")) battery_seed = stub["battery_seed"].get<std::uint64_t>();
  }

  const auto inputs = agent_inputs(cfg);
  const auto digest = sha256_hex(inputs.dump() + "\n" + trials_digest);

  // resume bookkeeping
  std::set<std::string> done;
  if (fs::exists(out) && fs::file_size(out) > 0) {
    if (!options.resume) invalid("--out", out.string() + " already has records; pass --resume to continue it");
    repair_tail(out);
    for (const auto& r : read_records(out)) {
      if (!(r.condition == cfg.condition))
        invalid("--resume", "existing records use condition " + r.condition.label() + ", not " +
                                cfg.condition.label());
      done.insert(r.trial.trial_id);
    }
  }
  std::vector<TrialSpec> pending;
  for (const auto& t : trials)
    if (!done.count(t.trial_id)) pending.push_back(t);
  RunResult res;
  res.skipped = trials.size() - pending.size();
  if (options.limit && pending.size() > *options.limit) {
    res.pending = pending.size() - *options.limit;
    pending.resize(*options.limit);
  }
  if (res.skipped) log("resume: " + std::to_string(res.skipped) + " records already present");

  auto agent = make_agent(cfg.agent);
  const auto identity = agent->identity();
  auto write_manifest = [&](const std::string& status) {
    const auto all = read_records(out);
    res.counts = count_records(all);
    res.manifest = manifest_json("run", digest, battery_seed, identity, cfg.condition, started, utc_now(), res.counts,
                                 {{"status", status},
                                  {"inputs", inputs},
                                  {"trials_file_sha256", trials_digest},
                                  {"trials_in_file", trials.size()},
                                  {"pending", trials.size() - std::min(trials.size(), all.size())}});
    write_file(manifest_path(out), res.manifest.dump(2) + "\n");
  };

  LineAppender writer(out);
  gateway::BatchOptions bopt;
  bopt.parallelism = cfg.run.parallelism;
  bopt.failure_threshold = cfg.run.failure_threshold;
  std::size_t written = 0;
  for (std::size_t start = 0; start < pending.size(); start += cfg.run.chunk_size) {
    const auto n = std::min(cfg.run.chunk_size, pending.size() - start);
    std::vector<TrialRecord> recs;
    try {
      recs = gateway::run_batch(std::span<const TrialSpec>(pending).subspan(start, n), *agent, cfg.condition, bopt);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::BatchAborted) {
        writer.sync();
        write_manifest("aborted");
      }
      throw;
    }
    for (const auto& r : recs) writer.append(to_json(r).dump());
    writer.sync();
    written += n;
    log("run: " + std::to_string(res.skipped + written) + "/" + std::to_string(trials.size()));
  }
  write_manifest(res.pending ? "partial" : "complete");
  return res;
}

}  // namespace choicelab::harness
