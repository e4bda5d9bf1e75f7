#include "apcsim/scenario.h"

#include <algorithm>
#include <fstream>

namespace apcsim {
namespace {

using nlohmann::json;

// nlohmann keeps integers built in code as signed, parsed ones as unsigned
bool is_count(const json& v) {
  return v.is_number_unsigned() ||
         (v.is_number_integer() && v.get<int64_t>() >= 0);
}

class Reader {
 public:
  Reader(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) {
      throw ConfigError(path_.empty() ? "<root>" : path_, "must be an object");
    }
  }

  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) const { return doc_.contains(key); }

  const json& raw(const std::string& key) const { return doc_.at(key); }

  Reader object(const std::string& key) const {
    if (!has(key)) {
      throw ConfigError(field(key), "is required");
    }
    return Reader(doc_.at(key), field(key));
  }

  uint64_t count(const std::string& key, uint64_t fallback, uint64_t min) const {
    if (!has(key)) {
      return fallback;
    }
    const json& v = doc_.at(key);
    if (!is_count(v)) {
      throw ConfigError(field(key), "must be a non-negative integer");
    }
    const uint64_t x = v.get<uint64_t>();
    if (x < min) {
      throw ConfigError(field(key), "must be >= " + std::to_string(min));
    }
    return x;
  }

  uint64_t required_count(const std::string& key, uint64_t min) const {
    if (!has(key)) {
      throw ConfigError(field(key), "is required");
    }
    return count(key, 0, min);
  }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) {
      return fallback;
    }
    const json& v = doc_.at(key);
    if (!v.is_number()) {
      throw ConfigError(field(key), "must be a number");
    }
    return v.get<double>();
  }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) {
      return fallback;
    }
    if (!doc_.at(key).is_boolean()) {
      throw ConfigError(field(key), "must be a boolean");
    }
    return doc_.at(key).get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    if (!has(key)) {
      return fallback;
    }
    if (!doc_.at(key).is_string()) {
      throw ConfigError(field(key), "must be a string");
    }
    return doc_.at(key).get<std::string>();
  }

  std::vector<TokenId> tokens(const std::string& key) const {
    const json& v = doc_.at(key);
    if (!v.is_array()) {
      throw ConfigError(field(key), "must be an array of token ids");
    }
    std::vector<TokenId> out;
    for (const json& t : v) {
      if (!is_count(t)) {
        throw ConfigError(field(key), "token ids must be non-negative integers");
      }
      out.push_back(t.get<TokenId>());
    }
    return out;
  }

 private:
  const json& doc_;
  std::string path_;
};

template <typename F>
void rethrow_as_config(const std::string& field, F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(field, e.what());
  }
}

ActivatorConfig parse_activator(const Reader& r) {
  ActivatorConfig cfg;
  cfg.theta = r.number("theta", cfg.theta);
  cfg.window_len = r.count("window_len", cfg.window_len, 2);
  cfg.min_samples = r.count("min_samples", cfg.min_samples, 2);
  cfg.hit_fraction_hi = r.number("hit_fraction_hi", cfg.hit_fraction_hi);
  cfg.hit_fraction_lo = r.number("hit_fraction_lo", cfg.hit_fraction_lo);
  cfg.grid_points = r.count("grid_points", cfg.grid_points, 3);
  rethrow_as_config(r.field("activator"), [&] { validate(cfg); });
  return cfg;
}

ModelProfile parse_profile(const json& doc) {
  if (doc.is_string()) {
    const ModelProfile* p = find_builtin_profile(doc.get<std::string>());
    if (p == nullptr) {
      throw ConfigError("profile", "unknown profile '" + doc.get<std::string>() +
                                       "' (known: small, mid, large)");
    }
    return *p;
  }
  const Reader r(doc, "profile");
  ModelProfile p;
  p.name = r.text("name", "");
  p.base_ms = r.number("base_ms", 0.0);
  p.per_token_ms = r.number("per_token_ms", 0.0);
  p.quad_ms_per_token2 = r.number("quad_ms_per_token2", 0.0);
  p.noise_sigma_ms = r.number("noise_sigma_ms", 0.0);
  p.batch_token_budget = r.count("batch_token_budget", 4096, 1);
  p.step_overhead_ms = r.number("step_overhead_ms", 0.0);
  rethrow_as_config("profile", [&] { validate(p); });
  return p;
}

WorkloadSpec parse_workload(const Reader& r) {
  WorkloadSpec spec;
  if (r.has("preset")) {
    const uint64_t n = r.count("preset", 0, 1);
    if (n > 5) {
      throw ConfigError(r.field("preset"), "must be 1..5");
    }
    spec = preset_workload(static_cast<int>(n));
  }
  spec.users = r.count("users", spec.users, 1);
  spec.requests_per_user = r.count("requests_per_user", spec.requests_per_user, 1);
  spec.arrival_rps = r.number("arrival_rps", spec.arrival_rps);
  if (!(spec.arrival_rps > 0.0)) {
    throw ConfigError(r.field("arrival_rps"), "must be > 0");
  }
  if (r.has("intra_reuse")) {
    auto l = parse_reuse_level(r.text("intra_reuse", ""));
    if (!l) {
      throw ConfigError(r.field("intra_reuse"), "must be zero|low|moderate|high");
    }
    spec.intra_reuse = *l;
  }
  if (r.has("inter_reuse")) {
    auto l = parse_reuse_level(r.text("inter_reuse", ""));
    if (!l) {
      throw ConfigError(r.field("inter_reuse"), "must be zero|low|moderate|high");
    }
    spec.inter_reuse = *l;
  }
  spec.prompt_blocks = r.count("prompt_blocks", spec.prompt_blocks, 1);
  if (r.has("secret_position")) {
    auto p = parse_secret_position(r.text("secret_position", ""));
    if (!p) {
      throw ConfigError(r.field("secret_position"), "must be head|middle|tail");
    }
    spec.secret_position = *p;
  }
  spec.vocabulary_size = r.count("vocabulary_size", spec.vocabulary_size, 2);
  return spec;
}

TimingSpec parse_timing(const Reader& r) {
  TimingSpec spec;
  spec.prompt_tokens = r.count("prompt_tokens", spec.prompt_tokens, 1);
  spec.requests = r.count("requests", spec.requests, 1);
  spec.arrival_rps = r.number("arrival_rps", spec.arrival_rps);
  if (!(spec.arrival_rps > 0.0)) {
    throw ConfigError(r.field("arrival_rps"), "must be > 0");
  }
  spec.hit_probability = r.number("hit_probability", spec.hit_probability);
  if (!(spec.hit_probability >= 0.0 && spec.hit_probability <= 1.0)) {
    throw ConfigError(r.field("hit_probability"), "must lie in [0, 1]");
  }
  spec.users = r.count("users", spec.users, 1);
  spec.vocabulary_size = r.count("vocabulary_size", spec.vocabulary_size, 2);
  return spec;
}

AttackConfig parse_attack(const Reader& r, size_t block_size,
                          size_t vocabulary_size) {
  AttackConfig attack;
  attack.start_ms = r.number("start_ms", attack.start_ms);
  attack.gap_ms = r.number("gap_ms", attack.gap_ms);
  if (!(attack.gap_ms > 0.0)) {
    throw ConfigError(r.field("gap_ms"), "must be > 0");
  }
  attack.embedded = r.flag("embedded", false);
  if (r.has("pre")) {
    ProbeSpec probe;
    probe.pre = r.tokens("pre");
    probe.suffix = r.has("suffix") ? r.tokens("suffix") : std::vector<TokenId>{};
    if (!r.has("candidates") || !r.raw("candidates").is_array()) {
      throw ConfigError(r.field("candidates"), "must be an array of blocks");
    }
    for (size_t i = 0; i < r.raw("candidates").size(); ++i) {
      const json wrapper = {{"c", r.raw("candidates")[i]}};
      probe.candidates.push_back(Reader(wrapper, r.field("candidates")).tokens("c"));
    }
    probe.correct_index = r.required_count("correct_index", 1);
    probe.attacker_id = r.count("attacker_id", 1, 0);
    probe.victim_id = r.count("victim_id", 0, 0);
    rethrow_as_config(r.field("probe"), [&] { validate(probe, block_size); });
    attack.probe = std::move(probe);
    return attack;
  }
  ProbeParams params;
  params.pre_blocks = r.count("pre_blocks", params.pre_blocks, 1);
  params.suffix_blocks = r.count("suffix_blocks", params.suffix_blocks, 0);
  params.num_candidates = r.count("num_candidates", params.num_candidates, 1);
  params.correct_index = r.count("correct_index", params.correct_index, 1);
  if (params.correct_index > params.num_candidates) {
    throw ConfigError(r.field("correct_index"),
                      "must not exceed num_candidates");
  }
  params.attacker_id = r.count("attacker_id", params.attacker_id, 0);
  params.victim_id = r.count("victim_id", params.victim_id, 0);
  params.seed = r.count("seed", params.seed, 0);
  params.block_size = block_size;
  params.vocabulary_size = vocabulary_size;
  rethrow_as_config(r.field("probe"),
                    [&] { attack.probe = make_probe_spec(params); });
  return attack;
}

}  // namespace

ScenarioConfig parse_config(const nlohmann::json& doc,
                            const std::filesystem::path& base_dir) {
  const Reader root(doc, "");
  const uint64_t version = root.required_count("schema_version", 1);
  if (version != kConfigSchemaVersion) {
    throw ConfigError("schema_version",
                      "unsupported version " + std::to_string(version));
  }

  ScenarioConfig config;
  const Reader policy = root.object("policy");
  const std::string kind = policy.text("kind", "");
  const auto parsed_kind = parse_policy_kind(kind);
  if (!parsed_kind) {
    throw ConfigError(policy.field("kind"),
                      "must be prefix_caching|user_isolation|selective_isolation");
  }
  config.policy.kind = *parsed_kind;
  config.policy.always_on = policy.flag("always_on", false);
  if (policy.has("activator")) {
    config.policy.activator = parse_activator(policy.object("activator"));
  }

  if (!root.has("profile")) {
    throw ConfigError("profile", "is required");
  }
  config.profile = parse_profile(root.raw("profile"));
  config.cache_capacity_blocks = root.required_count("cache_capacity_blocks", 1);
  config.block_size = root.count("block_size", 16, 1);

  const Reader seeds = root.object("seeds");
  config.seeds.workload = seeds.required_count("workload", 0);
  config.seeds.arrivals = seeds.required_count("arrivals", 0);
  config.seeds.jitter = seeds.required_count("jitter", 0);

  size_t vocabulary = 32000;
  if (root.has("workload")) {
    config.workload = parse_workload(root.object("workload"));
    vocabulary = config.workload->vocabulary_size;
  }
  if (root.has("workload_file")) {
    const std::filesystem::path p = root.text("workload_file", "");
    config.workload_file = (p.is_absolute() ? p : base_dir / p).string();
  }
  if (root.has("timing")) {
    config.timing = parse_timing(root.object("timing"));
    vocabulary = config.timing->vocabulary_size;
  }
  if (root.has("attack")) {
    config.attack =
        parse_attack(root.object("attack"), config.block_size, vocabulary);
  }
  if (root.has("exclude_users")) {
    const json& ex = root.raw("exclude_users");
    if (!ex.is_array()) {
      throw ConfigError("exclude_users", "must be an array of user ids");
    }
    for (const json& u : ex) {
      if (!is_count(u)) {
        throw ConfigError("exclude_users", "user ids must be non-negative");
      }
      config.exclude_users.push_back(u.get<UserId>());
    }
  }
  config.output_dir = root.text("output_dir", config.output_dir);
  config.dump_cache = root.flag("dump_cache", false);
  validate(config);
  return config;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("<file>", "cannot open " + path.string());
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", std::string("not valid JSON: ") + e.what());
  }
  return parse_config(doc, path.parent_path());
}

void apply_seed_override(ScenarioConfig& config, uint64_t seed) {
  config.seeds = Seeds{.workload = seed, .arrivals = seed + 1, .jitter = seed + 2};
}

void validate(const ScenarioConfig& config) {
  const int sources = static_cast<int>(config.workload.has_value()) +
                      static_cast<int>(config.workload_file.has_value()) +
                      static_cast<int>(config.timing.has_value());
  if (sources > 1) {
    throw ConfigError("workload",
                      "give at most one of workload, workload_file, timing");
  }
  if (sources == 0 && !config.attack) {
    throw ConfigError("workload", "no request source (workload, "
                                  "workload_file, timing or attack)");
  }
  if (config.cache_capacity_blocks < 1) {
    throw ConfigError("cache_capacity_blocks", "must be >= 1");
  }
  if (config.block_size < 1) {
    throw ConfigError("block_size", "must be >= 1");
  }
  if (config.attack && config.attack->embedded && sources == 0) {
    throw ConfigError("attack.embedded", "requires a workload to embed into");
  }
  if (config.attack && config.workload && config.attack->embedded &&
      config.attack->probe.attacker_id < config.workload->users) {
    throw ConfigError("attack.attacker_id",
                      "collides with a workload user id");
  }
  rethrow_as_config("policy.activator", [&] { validate(config.policy.activator); });
  rethrow_as_config("profile", [&] { validate(config.profile); });
}

std::vector<UserId> effective_exclusions(const ScenarioConfig& config) {
  if (!config.exclude_users.empty()) {
    return config.exclude_users;
  }
  if (config.attack) {
    return {config.attack->probe.attacker_id};
  }
  return {};
}

std::vector<Request> build_requests(const ScenarioConfig& config) {
  std::vector<Request> requests;
  if (config.workload) {
    WorkloadSpec spec = *config.workload;
    spec.block_size = config.block_size;
    spec.seed = config.seeds.workload;
    spec.arrival_seed = config.seeds.arrivals;
    requests = generate_workload(spec);
  } else if (config.workload_file) {
    std::ifstream in(*config.workload_file);
    if (!in) {
      throw ConfigError("workload_file", "cannot open " + *config.workload_file);
    }
    try {
      requests = read_requests_jsonl(in);
    } catch (const std::runtime_error& e) {
      throw ConfigError("workload_file", e.what());
    }
  } else if (config.timing) {
    TimingSpec spec = *config.timing;
    spec.seed = config.seeds.workload;
    spec.arrival_seed = config.seeds.arrivals;
    requests = generate_timing_workload(spec);
  }

  if (config.attack) {
    const AttackConfig& a = *config.attack;
    RequestId next = 0;
    for (const Request& r : requests) {
      next = std::max(next, r.id + 1);
    }
    requests.push_back(victim_request(a.probe, next, a.start_ms));
    for (Request& r : generate_attack_sequence(a.probe, a.start_ms, a.gap_ms,
                                               next + 1)) {
      requests.push_back(std::move(r));
    }
  }
  std::stable_sort(requests.begin(), requests.end(),
                   [](const Request& a, const Request& b) {
                     return a.arrival_ms < b.arrival_ms;
                   });
  return requests;
}

SimOptions sim_options(const ScenarioConfig& config) {
  return SimOptions{.policy = config.policy,
                    .profile = config.profile,
                    .cache_capacity_blocks = config.cache_capacity_blocks,
                    .block_size = config.block_size,
                    .jitter_seed = config.seeds.jitter,
                    .keep_final_cache = config.dump_cache};
}

ScenarioResult run_scenario(const ScenarioConfig& config) {
  validate(config);
  const std::vector<Request> requests = build_requests(config);
  return simulate(sim_options(config), requests);
}

std::vector<ThetaPoint> run_theta_sweep(const ScenarioConfig& config,
                                        const std::vector<double>& thetas) {
  for (const double t : thetas) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw ConfigError("theta", "sweep values must lie in [0, 1]");
    }
  }
  validate(config);
  const std::vector<Request> requests = build_requests(config);
  const std::vector<UserId> excluded = effective_exclusions(config);
  std::vector<ThetaPoint> out;
  for (const double t : thetas) {
    SimOptions opts = sim_options(config);
    opts.policy.kind = PolicyKind::kSelectiveIsolation;
    opts.policy.always_on = false;
    opts.policy.activator.theta = t;
    const ScenarioResult r = simulate(opts, requests);
    const Summary s = compute_summary(r.outcomes, excluded);
    ThetaPoint point{.theta = t, .summary = s.excluding.value_or(s.all)};
    for (const RequestOutcome& o : r.outcomes) {
      point.reused_blocks.push_back(o.reused_blocks);
    }
    out.push_back(std::move(point));
  }
  return out;
}

nlohmann::json summary_json(const ScenarioConfig& config,
                            const ScenarioResult& result) {
  const Summary s = compute_summary(result.outcomes, effective_exclusions(config));
  json j = to_json(s);
  j["schema_version"] = kSchemaVersion;
  j["policy"] = to_string(config.policy.kind);
  if (config.policy.kind == PolicyKind::kSelectiveIsolation) {
    j["always_on"] = config.policy.always_on;
    j["theta"] = config.policy.activator.theta;
  }
  j["profile"] = config.profile.name;
  j["block_size"] = config.block_size;
  j["cache_capacity_blocks"] = config.cache_capacity_blocks;
  j["cache"] = {{"entries", result.cache.entries},
                {"evictions", result.cache.evictions},
                {"flagged_entries", result.cache.flagged_entries},
                {"metadata_bytes_per_entry", result.cache.metadata_bytes_per_entry}};
  return j;
}

nlohmann::json overhead_json(const ScenarioResult& result) {
  return {{"schema_version", kSchemaVersion},
          {"detector", to_json(overhead_stats(result.overhead.detector_us))},
          {"activator", to_json(overhead_stats(result.overhead.activator_us))},
          {"metadata_bytes_per_entry", sizeof(EntryMetadata)},
          {"metadata_words_per_entry", sizeof(EntryMetadata) / sizeof(void*)},
          {"window_bytes_per_sample", sizeof(double)}};
}

std::vector<std::filesystem::path> write_outputs(
    const ScenarioConfig& config,
    const ScenarioResult& result,
    const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto open = [&](const std::string& name) {
    written.push_back(dir / name);
    std::ofstream out(written.back(), std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot write " + written.back().string());
    }
    return out;
  };
  {
    auto out = open("outcomes.jsonl");
    write_jsonl(out, result.outcomes);
  }
  {
    auto out = open("decisions.jsonl");
    write_jsonl(out, result.decisions);
  }
  {
    auto out = open("activator.jsonl");
    write_jsonl(out, result.activator);
  }
  {
    auto out = open("summary.json");
    out << summary_json(config, result).dump(2) << '\n';
  }
  {
    auto out = open("overhead.json");
    out << overhead_json(result).dump(2) << '\n';
  }
  if (config.dump_cache) {
    auto out = open("cache_dump.jsonl");
    write_jsonl(out, result.final_cache);
  }
  return written;
}

}  // namespace apcsim
