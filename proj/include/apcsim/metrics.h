#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "apcsim/activator.h"
#include "apcsim/sim_engine.h"

namespace apcsim {

inline constexpr int kSchemaVersion = 1;

struct TtftStats {
  double mean_ms = 0.0;
  // nearest-rank percentiles
  double p50_ms = 0.0;
  double p99_ms = 0.0;
};

struct GroupSummary {
  size_t requests = 0;
  uint64_t reused_blocks = 0;
  uint64_t total_blocks = 0;
  // block-weighted: sum of reused blocks over sum of full blocks
  double hit_rate = 0.0;
  TtftStats ttft;
};

struct Summary {
  GroupSummary all;
  std::vector<UserId> excluded_users;
  // present iff excluded_users is non-empty
  std::optional<GroupSummary> excluding;
  std::map<UserId, GroupSummary> per_user;
};

GroupSummary summarize_group(std::span<const RequestOutcome> outcomes);

Summary compute_summary(std::span<const RequestOutcome> outcomes,
                        std::span<const UserId> exclude_users);

// KDE overlap of per-token TTFT between hit and miss requests across a whole
// run, classified with the activator's cutoffs. nullopt with < 2 per class.
struct HitMissMeasurement {
  size_t hits = 0;
  size_t misses = 0;
  double hit_ttft_mean_ms = 0.0;
  double miss_ttft_mean_ms = 0.0;
  std::optional<double> overlap;
};

HitMissMeasurement measure_hit_miss(std::span<const RequestOutcome> outcomes,
                                    const ActivatorConfig& cfg = {});

struct OverheadStats {
  size_t count = 0;
  double median_us = 0.0;
  double mean_us = 0.0;
  double p99_us = 0.0;
};

OverheadStats overhead_stats(std::span<const double> samples_us);

// JSON encodings of the trace rows and summaries.
nlohmann::json to_json(const RequestOutcome& o);
nlohmann::json to_json(const DecisionTrace& d);
nlohmann::json to_json(const ActivatorTrace& a);
nlohmann::json to_json(const CacheEntry& e);
nlohmann::json to_json(const GroupSummary& g);
nlohmann::json to_json(const Summary& s);
nlohmann::json to_json(const OverheadStats& s);

RequestOutcome outcome_from_json(const nlohmann::json& j);

// One JSON document per line.
template <typename Rows>
void write_jsonl(std::ostream& out, const Rows& rows) {
  for (const auto& row : rows) {
    out << to_json(row).dump() << '\n';
  }
}

}  // namespace apcsim
