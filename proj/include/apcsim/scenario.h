#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "apcsim/metrics.h"
#include "apcsim/sim_engine.h"
#include "apcsim/workload.h"

namespace apcsim {

inline constexpr int kConfigSchemaVersion = 1;

// A config file (or override) that does not satisfy the schema.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct Seeds {
  uint64_t workload = 1;
  uint64_t arrivals = 2;
  uint64_t jitter = 3;
};

struct AttackConfig {
  ProbeSpec probe;
  // victim request time; probe i arrives at start_ms + i * gap_ms
  double start_ms = 0.0;
  double gap_ms = 2000.0;
  // place the victim and probes on top of the scenario's workload
  bool embedded = false;
};

struct ScenarioConfig {
  Policy policy;
  ModelProfile profile;
  size_t cache_capacity_blocks = 8192;
  size_t block_size = 16;
  // at most one request source; none is allowed only with an attack
  std::optional<WorkloadSpec> workload;
  std::optional<std::string> workload_file;
  std::optional<TimingSpec> timing;
  std::optional<AttackConfig> attack;
  Seeds seeds;
  std::vector<UserId> exclude_users;
  std::string output_dir = "out";
  bool dump_cache = false;
};

// Parses a schema-v1 config document. `base_dir` resolves a relative
// workload_file. Throws ConfigError naming the offending field.
ScenarioConfig parse_config(const nlohmann::json& doc,
                            const std::filesystem::path& base_dir = ".");
ScenarioConfig load_config(const std::filesystem::path& path);

// Replaces all three seeds with seed, seed + 1, seed + 2.
void apply_seed_override(ScenarioConfig& config, uint64_t seed);

// Checks cross-field constraints; throws ConfigError.
void validate(const ScenarioConfig& config);

// Users excluded from summaries: the explicit list, or the attacker when an
// attack is configured and no list was given.
std::vector<UserId> effective_exclusions(const ScenarioConfig& config);

std::vector<Request> build_requests(const ScenarioConfig& config);
SimOptions sim_options(const ScenarioConfig& config);

ScenarioResult run_scenario(const ScenarioConfig& config);

struct ThetaPoint {
  double theta = 0.0;
  GroupSummary summary;
  std::vector<size_t> reused_blocks;  // per request, in id order
};

// One run per theta, all with the config's seeds. The policy is forced to
// activator-driven selective isolation.
std::vector<ThetaPoint> run_theta_sweep(const ScenarioConfig& config,
                                        const std::vector<double>& thetas);

nlohmann::json summary_json(const ScenarioConfig& config,
                            const ScenarioResult& result);
nlohmann::json overhead_json(const ScenarioResult& result);

// outcomes.jsonl, decisions.jsonl, activator.jsonl, summary.json,
// overhead.json and, with dump_cache, cache_dump.jsonl. Returns the paths.
std::vector<std::filesystem::path> write_outputs(
    const ScenarioConfig& config,
    const ScenarioResult& result,
    const std::filesystem::path& dir);

}  // namespace apcsim
