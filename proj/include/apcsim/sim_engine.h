#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "apcsim/activator.h"
#include "apcsim/detector.h"
#include "apcsim/latency_model.h"
#include "apcsim/prefix_cache.h"
#include "apcsim/workload.h"

namespace apcsim {

enum class PolicyKind { kPrefixCaching, kUserIsolation, kSelectiveIsolation };

const char* to_string(PolicyKind kind);
std::optional<PolicyKind> parse_policy_kind(const std::string& s);

struct Policy {
  PolicyKind kind = PolicyKind::kSelectiveIsolation;
  // only meaningful for kSelectiveIsolation
  ActivatorConfig activator;
  // bypass the activator and enforce on every request
  bool always_on = false;
};

struct SimOptions {
  Policy policy;
  ModelProfile profile;
  size_t cache_capacity_blocks = 8192;
  size_t block_size = 16;
  uint64_t jitter_seed = 3;
  bool keep_final_cache = false;
};

struct RequestOutcome {
  RequestId id = 0;
  UserId user = 0;
  double arrival_ms = 0.0;
  size_t prompt_tokens = 0;
  size_t reused_blocks = 0;
  size_t total_blocks = 0;
  double reuse_fraction = 0.0;
  double ttft_ms = 0.0;
  bool truncated = false;
  bool isolation_was_active = false;
};

struct DecisionTrace {
  RequestId id = 0;
  UserId user = 0;
  size_t chain_length = 0;
  // served from the hit chain, before isolated-namespace continuation
  size_t detector_reused_blocks = 0;
  size_t reused_blocks = 0;
  bool truncated = false;
  std::vector<uint64_t> flags_set;
  std::string ns;
};

struct ActivatorTrace {
  RequestId id = 0;
  double at_ms = 0.0;
  size_t hit_samples = 0;
  size_t miss_samples = 0;
  std::optional<double> overlap;
  bool active = true;
};

struct CacheStats {
  size_t entries = 0;
  size_t capacity_blocks = 0;
  uint64_t evictions = 0;
  size_t flagged_entries = 0;
  size_t metadata_bytes_per_entry = sizeof(EntryMetadata);
};

// Wall-clock timings in microseconds; not part of any deterministic output.
struct OverheadSamples {
  std::vector<double> detector_us;
  std::vector<double> activator_us;
};

struct ScenarioResult {
  PolicyKind policy = PolicyKind::kPrefixCaching;
  // ordered by request id
  std::vector<RequestOutcome> outcomes;
  std::vector<DecisionTrace> decisions;
  std::vector<ActivatorTrace> activator;
  CacheStats cache;
  OverheadSamples overhead;
  std::vector<CacheEntry> final_cache;
};

// A cache or capacity contract broke during a run.
class InvariantBreach : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Cache-side outcome of admitting one request.
struct Admission {
  // hit-chain length before any enforcement
  size_t chain_length = 0;
  // blocks served from the cache, including the requester's own isolated
  // continuation
  size_t reused_blocks = 0;
  // present under selective isolation
  std::optional<ReuseDecision> decision;
};

// Looks up, decides, flags, inserts and re-stamps one request's blocks under
// the policy. `enforce` is the activator's verdict and only matters for
// selective isolation.
Admission admit_to_cache(PrefixCache& cache,
                         PolicyKind kind,
                         UserId user,
                         std::span<const TokenId> tokens,
                         size_t block_size,
                         bool enforce);

// Runs the requests (any order; processed by arrival time, then id) through
// the cache, the policy's reuse decision and the latency model.
//
// Reuse is decided when a request arrives; its TTFT is known when its batch
// completes, and that completion feeds the activator window before any later
// arrival is decided.
ScenarioResult simulate(const SimOptions& options,
                        const std::vector<Request>& requests);

}  // namespace apcsim
