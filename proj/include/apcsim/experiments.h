#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "apcsim/scenario.h"

namespace apcsim {

struct ProbeObservation {
  // 1-based position in the probing sequence
  size_t index = 0;
  RequestId id = 0;
  size_t reused_blocks = 0;
  double reuse_fraction = 0.0;
  double ttft_ms = 0.0;
};

// A spike is exactly one probe with reuse_fraction == 1 whose TTFT lies more
// than 3 sample standard deviations below the mean of the other probes.
// Returns its 1-based index.
std::optional<size_t> detect_spike(std::span<const ProbeObservation> probes);

struct AttackRun {
  PolicyKind policy = PolicyKind::kPrefixCaching;
  std::vector<ProbeObservation> probes;
  std::optional<size_t> spike_index;
  std::string verdict;
  // set when the spike is a case selective isolation does not cover
  std::optional<std::string> note;
};

struct AttackReport {
  size_t correct_index = 0;
  size_t num_candidates = 0;
  // unprotected prefix caching, then selective isolation
  std::vector<AttackRun> runs;
};

// Replays the victim request and the probing sequence under prefix caching
// and under the config's selective-isolation settings, with identical seeds.
AttackReport run_attack(const ScenarioConfig& config);

nlohmann::json to_json(const AttackReport& report);
void write_attack_csv(std::ostream& out, const AttackReport& report);

// Canned experiments. Each writes one CSV (plus, for the attack, its JSON
// report) into output_dir and returns the written paths.
//   fig8-workloads  workload,policy,hit_rate,ttft_mean_ms,ttft_p50_ms,ttft_p99_ms
//   fig9-models     profile,policy,hit_rate,ttft_mean_ms
//   fig11-attack    policy,probe_index,reused_blocks,reuse_fraction,ttft_ms,spike
//   fig12-sweep     config,theta,hit_rate,ttft_mean_ms
//   fig4-rps        profile,prefix_tokens,rps,hits,misses,hit_ttft_mean_ms,
//                   miss_ttft_mean_ms,overlap
const std::vector<std::string>& preset_names();

std::vector<std::filesystem::path> run_preset(
    const std::string& name,
    const std::filesystem::path& output_dir,
    std::optional<uint64_t> seed_override = std::nullopt);

// Base scenarios used by the presets; exposed for tests.
ScenarioConfig workload_scenario(int workload, PolicyKind policy,
                                 const std::string& profile = "mid");
ScenarioConfig attack_scenario(size_t correct_index = 9);
ScenarioConfig timing_scenario(const std::string& profile,
                               size_t prefix_tokens,
                               double rps);

}  // namespace apcsim
