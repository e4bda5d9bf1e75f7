#include "apcsim/experiments.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <ostream>
#include <stdexcept>

namespace apcsim {
namespace {

constexpr uint64_t kPresetSeed = 20240601;

Seeds preset_seeds(std::optional<uint64_t> override_seed) {
  const uint64_t s = override_seed.value_or(kPresetSeed);
  return Seeds{.workload = s, .arrivals = s + 1, .jitter = s + 2};
}

// Runs independent scenarios concurrently; results keep input order.
std::vector<ScenarioResult> run_all(const std::vector<ScenarioConfig>& configs) {
  std::vector<std::future<ScenarioResult>> futures;
  futures.reserve(configs.size());
  for (const ScenarioConfig& c : configs) {
    futures.push_back(std::async(std::launch::async, [&c] { return run_scenario(c); }));
  }
  std::vector<ScenarioResult> out;
  out.reserve(configs.size());
  for (auto& f : futures) {
    out.push_back(f.get());
  }
  return out;
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out.precision(17);
  return out;
}

GroupSummary benign_summary(const ScenarioConfig& config,
                            const ScenarioResult& result) {
  const Summary s = compute_summary(result.outcomes, effective_exclusions(config));
  return s.excluding.value_or(s.all);
}

size_t capacity_for(const std::string& profile) {
  // larger models leave less memory for the cache
  if (profile == "small") {
    return 8192;
  }
  if (profile == "large") {
    return 1536;
  }
  return 4096;
}

std::vector<std::filesystem::path> preset_fig8(const std::filesystem::path& dir,
                                               std::optional<uint64_t> seed) {
  const std::vector<PolicyKind> policies = {PolicyKind::kPrefixCaching,
                                            PolicyKind::kUserIsolation,
                                            PolicyKind::kSelectiveIsolation};
  std::vector<ScenarioConfig> configs;
  for (int w = 1; w <= 5; ++w) {
    for (const PolicyKind p : policies) {
      ScenarioConfig c = workload_scenario(w, p);
      c.seeds = preset_seeds(seed);
      configs.push_back(std::move(c));
    }
  }
  const std::vector<ScenarioResult> results = run_all(configs);
  const auto path = dir / "fig8_workloads.csv";
  auto out = open_csv(path);
  out << "workload,policy,hit_rate,ttft_mean_ms,ttft_p50_ms,ttft_p99_ms\n";
  for (size_t i = 0; i < configs.size(); ++i) {
    const GroupSummary g = benign_summary(configs[i], results[i]);
    out << (i / policies.size() + 1) << ',' << to_string(configs[i].policy.kind)
        << ',' << g.hit_rate << ',' << g.ttft.mean_ms << ',' << g.ttft.p50_ms
        << ',' << g.ttft.p99_ms << '\n';
  }
  return {path};
}

std::vector<std::filesystem::path> preset_fig9(const std::filesystem::path& dir,
                                               std::optional<uint64_t> seed) {
  const std::vector<PolicyKind> policies = {PolicyKind::kPrefixCaching,
                                            PolicyKind::kUserIsolation,
                                            PolicyKind::kSelectiveIsolation};
  const auto path = dir / "fig9_models.csv";
  auto out = open_csv(path);
  out << "profile,policy,hit_rate,ttft_mean_ms\n";
  for (const ModelProfile& profile : builtin_profiles()) {
    for (const PolicyKind p : policies) {
      std::vector<ScenarioConfig> configs;
      for (int w = 1; w <= 5; ++w) {
        ScenarioConfig c = workload_scenario(w, p, profile.name);
        c.seeds = preset_seeds(seed);
        configs.push_back(std::move(c));
      }
      const std::vector<ScenarioResult> results = run_all(configs);
      double hit = 0.0;
      double ttft = 0.0;
      for (size_t i = 0; i < configs.size(); ++i) {
        const GroupSummary g = benign_summary(configs[i], results[i]);
        hit += g.hit_rate;
        ttft += g.ttft.mean_ms;
      }
      const double n = static_cast<double>(configs.size());
      out << profile.name << ',' << to_string(p) << ',' << hit / n << ','
          << ttft / n << '\n';
    }
  }
  return {path};
}

std::vector<std::filesystem::path> preset_fig11(const std::filesystem::path& dir,
                                                std::optional<uint64_t> seed) {
  ScenarioConfig c = attack_scenario();
  c.seeds = preset_seeds(seed);
  const AttackReport report = run_attack(c);
  const auto csv = dir / "fig11_attack.csv";
  {
    auto out = open_csv(csv);
    write_attack_csv(out, report);
  }
  const auto json_path = dir / "attack_report.json";
  {
    std::ofstream out(json_path, std::ios::binary | std::ios::trunc);
    out << to_json(report).dump(2) << '\n';
  }
  return {csv, json_path};
}

std::vector<std::filesystem::path> preset_fig12(const std::filesystem::path& dir,
                                                std::optional<uint64_t> seed) {
  ScenarioConfig base = workload_scenario(4, PolicyKind::kSelectiveIsolation, "large");
  base.seeds = preset_seeds(seed);

  std::vector<double> thetas;
  for (int i = 0; i <= 10; ++i) {
    thetas.push_back(static_cast<double>(i) / 10.0);
  }
  const std::vector<ThetaPoint> sweep = run_theta_sweep(base, thetas);

  ScenarioConfig pc = base;
  pc.policy.kind = PolicyKind::kPrefixCaching;
  ScenarioConfig ui = base;
  ui.policy.kind = PolicyKind::kUserIsolation;
  ScenarioConfig always = base;
  always.policy.always_on = true;
  const std::vector<ScenarioConfig> baselines = {pc, ui, always};
  const std::vector<ScenarioResult> results = run_all(baselines);

  const auto path = dir / "fig12_sweep.csv";
  auto out = open_csv(path);
  out << "config,theta,hit_rate,ttft_mean_ms\n";
  const char* labels[] = {"prefix_caching", "user_isolation", "always_on"};
  for (size_t i = 0; i < baselines.size(); ++i) {
    const GroupSummary g = benign_summary(baselines[i], results[i]);
    out << labels[i] << ",," << g.hit_rate << ',' << g.ttft.mean_ms << '\n';
  }
  for (const ThetaPoint& p : sweep) {
    out << "theta," << p.theta << ',' << p.summary.hit_rate << ','
        << p.summary.ttft.mean_ms << '\n';
  }
  return {path};
}

std::vector<std::filesystem::path> preset_fig4(const std::filesystem::path& dir,
                                               std::optional<uint64_t> seed) {
  const std::vector<size_t> prefixes = {300, 500};
  const std::vector<double> rates = {1, 2, 5, 10, 20, 50, 100, 200};
  std::vector<ScenarioConfig> configs;
  for (const ModelProfile& profile : builtin_profiles()) {
    for (const size_t prefix : prefixes) {
      for (const double rps : rates) {
        ScenarioConfig c = timing_scenario(profile.name, prefix, rps);
        c.seeds = preset_seeds(seed);
        configs.push_back(std::move(c));
      }
    }
  }
  const std::vector<ScenarioResult> results = run_all(configs);
  const auto path = dir / "fig4_rps.csv";
  auto out = open_csv(path);
  out << "profile,prefix_tokens,rps,hits,misses,hit_ttft_mean_ms,"
         "miss_ttft_mean_ms,overlap\n";
  for (size_t i = 0; i < configs.size(); ++i) {
    const HitMissMeasurement m = measure_hit_miss(results[i].outcomes);
    out << configs[i].profile.name << ',' << configs[i].timing->prompt_tokens
        << ',' << configs[i].timing->arrival_rps << ',' << m.hits << ','
        << m.misses << ',' << m.hit_ttft_mean_ms << ',' << m.miss_ttft_mean_ms
        << ',';
    if (m.overlap) {
      out << *m.overlap;
    }
    out << '\n';
  }
  return {path};
}

}  // namespace

std::optional<size_t> detect_spike(std::span<const ProbeObservation> probes) {
  std::optional<size_t> candidate;
  for (size_t i = 0; i < probes.size(); ++i) {
    if (probes[i].reuse_fraction == 1.0) {
      if (candidate) {
        return std::nullopt;
      }
      candidate = i;
    }
  }
  if (!candidate) {
    return std::nullopt;
  }
  double sum = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < probes.size(); ++i) {
    if (i != *candidate) {
      sum += probes[i].ttft_ms;
      ++n;
    }
  }
  if (n == 0) {
    return std::nullopt;
  }
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (size_t i = 0; i < probes.size(); ++i) {
    if (i != *candidate) {
      ss += (probes[i].ttft_ms - mean) * (probes[i].ttft_ms - mean);
    }
  }
  const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  if (probes[*candidate].ttft_ms < mean - 3.0 * sd) {
    return probes[*candidate].index;
  }
  return std::nullopt;
}

AttackReport run_attack(const ScenarioConfig& config) {
  if (!config.attack) {
    throw ConfigError("attack", "is required for the attack command");
  }
  validate(config);
  const std::vector<Request> requests = build_requests(config);
  const ProbeSpec& probe = config.attack->probe;

  // probes are the attacker's requests carrying the probe prompts, in order
  RequestId victim_id = 0;
  for (const Request& r : requests) {
    if (r.user == probe.victim_id && r.arrival_ms == config.attack->start_ms &&
        r.tokens == victim_request(probe, 0, 0.0).tokens) {
      victim_id = r.id;
    }
  }
  const RequestId first_probe = victim_id + 1;
  const size_t n = probe.candidates.size();

  AttackReport report{.correct_index = probe.correct_index, .num_candidates = n};
  for (const PolicyKind kind :
       {PolicyKind::kPrefixCaching, PolicyKind::kSelectiveIsolation}) {
    SimOptions opts = sim_options(config);
    opts.policy.kind = kind;
    const ScenarioResult result = simulate(opts, requests);

    AttackRun run{.policy = kind};
    for (const RequestOutcome& o : result.outcomes) {
      if (o.id >= first_probe && o.id < first_probe + n) {
        run.probes.push_back(ProbeObservation{.index = o.id - first_probe + 1,
                                              .id = o.id,
                                              .reused_blocks = o.reused_blocks,
                                              .reuse_fraction = o.reuse_fraction,
                                              .ttft_ms = o.ttft_ms});
      }
    }
    run.spike_index = detect_spike(run.probes);
    run.verdict = run.spike_index
                      ? "spike detected at index " + std::to_string(*run.spike_index)
                      : "no spike";
    if (kind == PolicyKind::kSelectiveIsolation && run.spike_index == 1u) {
      run.note = "documented exclusion: first-attempt guess";
    }
    report.runs.push_back(std::move(run));
  }
  return report;
}

nlohmann::json to_json(const AttackReport& report) {
  nlohmann::json runs = nlohmann::json::array();
  for (const AttackRun& run : report.runs) {
    nlohmann::json probes = nlohmann::json::array();
    for (const ProbeObservation& p : run.probes) {
      probes.push_back({{"index", p.index},
                        {"id", p.id},
                        {"reused_blocks", p.reused_blocks},
                        {"reuse_fraction", p.reuse_fraction},
                        {"ttft_ms", p.ttft_ms}});
    }
    runs.push_back(
        {{"policy", to_string(run.policy)},
         {"probes", std::move(probes)},
         {"spike_index", run.spike_index ? nlohmann::json(*run.spike_index)
                                         : nlohmann::json(nullptr)},
         {"verdict", run.verdict},
         {"note", run.note ? nlohmann::json(*run.note) : nlohmann::json(nullptr)}});
  }
  return {{"schema_version", kSchemaVersion},
          {"correct_index", report.correct_index},
          {"num_candidates", report.num_candidates},
          {"runs", std::move(runs)}};
}

void write_attack_csv(std::ostream& out, const AttackReport& report) {
  out << "policy,probe_index,reused_blocks,reuse_fraction,ttft_ms,spike\n";
  for (const AttackRun& run : report.runs) {
    for (const ProbeObservation& p : run.probes) {
      out << to_string(run.policy) << ',' << p.index << ',' << p.reused_blocks
          << ',' << p.reuse_fraction << ',' << p.ttft_ms << ','
          << (run.spike_index == p.index ? 1 : 0) << '\n';
    }
  }
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {
      "fig8-workloads", "fig9-models", "fig11-attack", "fig12-sweep", "fig4-rps"};
  return names;
}

std::vector<std::filesystem::path> run_preset(
    const std::string& name,
    const std::filesystem::path& output_dir,
    std::optional<uint64_t> seed_override) {
  std::filesystem::create_directories(output_dir);
  if (name == "fig8-workloads") {
    return preset_fig8(output_dir, seed_override);
  }
  if (name == "fig9-models") {
    return preset_fig9(output_dir, seed_override);
  }
  if (name == "fig11-attack") {
    return preset_fig11(output_dir, seed_override);
  }
  if (name == "fig12-sweep") {
    return preset_fig12(output_dir, seed_override);
  }
  if (name == "fig4-rps") {
    return preset_fig4(output_dir, seed_override);
  }
  throw ConfigError("preset", "unknown preset '" + name + "'");
}

ScenarioConfig workload_scenario(int workload,
                                 PolicyKind policy,
                                 const std::string& profile) {
  ScenarioConfig c;
  c.policy.kind = policy;
  c.profile = *find_builtin_profile(profile);
  c.cache_capacity_blocks = capacity_for(profile);
  c.workload = preset_workload(workload);
  c.seeds = preset_seeds(std::nullopt);
  return c;
}

ScenarioConfig attack_scenario(size_t correct_index) {
  ScenarioConfig c;
  c.policy.kind = PolicyKind::kSelectiveIsolation;
  c.profile = *find_builtin_profile("large");
  c.cache_capacity_blocks = 8192;
  ProbeParams params;
  params.pre_blocks = 4;
  params.suffix_blocks = 16;
  params.num_candidates = 20;
  params.correct_index = correct_index;
  params.attacker_id = 1;
  params.victim_id = 0;
  params.block_size = c.block_size;
  c.attack = AttackConfig{.probe = make_probe_spec(params),
                          .start_ms = 0.0,
                          .gap_ms = 2000.0,
                          .embedded = false};
  c.seeds = preset_seeds(std::nullopt);
  return c;
}

ScenarioConfig timing_scenario(const std::string& profile,
                               size_t prefix_tokens,
                               double rps) {
  ScenarioConfig c;
  c.policy.kind = PolicyKind::kPrefixCaching;
  c.profile = *find_builtin_profile(profile);
  c.cache_capacity_blocks = 16384;
  TimingSpec t;
  t.prompt_tokens = prefix_tokens;
  t.arrival_rps = rps;
  c.timing = t;
  c.seeds = preset_seeds(std::nullopt);
  return c;
}

}  // namespace apcsim
