#include "apcsim/metrics.h"

#include <algorithm>
#include <set>

namespace apcsim {
namespace {

// element of rank ceil(num/den * n), 1-based, on sorted values
double nearest_rank(const std::vector<double>& sorted, size_t num, size_t den) {
  const size_t n = sorted.size();
  size_t rank = (num * n + den - 1) / den;
  rank = std::clamp<size_t>(rank, 1, n);
  return sorted[rank - 1];
}

}  // namespace

GroupSummary summarize_group(std::span<const RequestOutcome> outcomes) {
  GroupSummary g;
  g.requests = outcomes.size();
  if (outcomes.empty()) {
    return g;
  }
  double ttft_sum = 0.0;
  std::vector<double> ttfts;
  ttfts.reserve(outcomes.size());
  for (const RequestOutcome& o : outcomes) {
    g.reused_blocks += o.reused_blocks;
    g.total_blocks += o.total_blocks;
    ttft_sum += o.ttft_ms;
    ttfts.push_back(o.ttft_ms);
  }
  g.hit_rate = g.total_blocks == 0
                   ? 0.0
                   : static_cast<double>(g.reused_blocks) /
                         static_cast<double>(g.total_blocks);
  g.ttft.mean_ms = ttft_sum / static_cast<double>(outcomes.size());
  std::sort(ttfts.begin(), ttfts.end());
  g.ttft.p50_ms = nearest_rank(ttfts, 50, 100);
  g.ttft.p99_ms = nearest_rank(ttfts, 99, 100);
  return g;
}

Summary compute_summary(std::span<const RequestOutcome> outcomes,
                        std::span<const UserId> exclude_users) {
  Summary s;
  s.all = summarize_group(outcomes);

  std::map<UserId, std::vector<RequestOutcome>> by_user;
  for (const RequestOutcome& o : outcomes) {
    by_user[o.user].push_back(o);
  }
  for (const auto& [user, rows] : by_user) {
    s.per_user[user] = summarize_group(rows);
  }

  const std::set<UserId> excluded(exclude_users.begin(), exclude_users.end());
  s.excluded_users.assign(excluded.begin(), excluded.end());
  if (!excluded.empty()) {
    std::vector<RequestOutcome> kept;
    for (const RequestOutcome& o : outcomes) {
      if (!excluded.contains(o.user)) {
        kept.push_back(o);
      }
    }
    s.excluding = summarize_group(kept);
  }
  return s;
}

HitMissMeasurement measure_hit_miss(std::span<const RequestOutcome> outcomes,
                                    const ActivatorConfig& cfg) {
  HitMissMeasurement m;
  std::vector<double> hit_per_token;
  std::vector<double> miss_per_token;
  double hit_sum = 0.0;
  double miss_sum = 0.0;
  for (const RequestOutcome& o : outcomes) {
    if (o.prompt_tokens == 0) {
      continue;
    }
    const double per_token = o.ttft_ms / static_cast<double>(o.prompt_tokens);
    if (o.reuse_fraction >= cfg.hit_fraction_hi) {
      hit_per_token.push_back(per_token);
      hit_sum += o.ttft_ms;
    } else if (o.reuse_fraction <= cfg.hit_fraction_lo) {
      miss_per_token.push_back(per_token);
      miss_sum += o.ttft_ms;
    }
  }
  m.hits = hit_per_token.size();
  m.misses = miss_per_token.size();
  if (m.hits > 0) {
    m.hit_ttft_mean_ms = hit_sum / static_cast<double>(m.hits);
  }
  if (m.misses > 0) {
    m.miss_ttft_mean_ms = miss_sum / static_cast<double>(m.misses);
  }
  m.overlap = kde_overlap(hit_per_token, miss_per_token, cfg.grid_points);
  return m;
}

OverheadStats overhead_stats(std::span<const double> samples_us) {
  OverheadStats s;
  s.count = samples_us.size();
  if (samples_us.empty()) {
    return s;
  }
  std::vector<double> sorted(samples_us.begin(), samples_us.end());
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (const double v : sorted) {
    sum += v;
  }
  s.mean_us = sum / static_cast<double>(sorted.size());
  s.median_us = nearest_rank(sorted, 50, 100);
  s.p99_us = nearest_rank(sorted, 99, 100);
  return s;
}

nlohmann::json to_json(const RequestOutcome& o) {
  return {{"schema_version", kSchemaVersion},
          {"id", o.id},
          {"user", o.user},
          {"arrival_ms", o.arrival_ms},
          {"prompt_tokens", o.prompt_tokens},
          {"reused_blocks", o.reused_blocks},
          {"total_blocks", o.total_blocks},
          {"reuse_fraction", o.reuse_fraction},
          {"ttft_ms", o.ttft_ms},
          {"truncated", o.truncated},
          {"isolation_was_active", o.isolation_was_active}};
}

RequestOutcome outcome_from_json(const nlohmann::json& j) {
  return RequestOutcome{
      .id = j.at("id").get<RequestId>(),
      .user = j.at("user").get<UserId>(),
      .arrival_ms = j.at("arrival_ms").get<double>(),
      .prompt_tokens = j.at("prompt_tokens").get<size_t>(),
      .reused_blocks = j.at("reused_blocks").get<size_t>(),
      .total_blocks = j.at("total_blocks").get<size_t>(),
      .reuse_fraction = j.at("reuse_fraction").get<double>(),
      .ttft_ms = j.at("ttft_ms").get<double>(),
      .truncated = j.at("truncated").get<bool>(),
      .isolation_was_active = j.at("isolation_was_active").get<bool>()};
}

nlohmann::json to_json(const DecisionTrace& d) {
  return {{"schema_version", kSchemaVersion},
          {"id", d.id},
          {"user", d.user},
          {"chain_length", d.chain_length},
          {"detector_reused_blocks", d.detector_reused_blocks},
          {"reused_blocks", d.reused_blocks},
          {"truncated", d.truncated},
          {"flags_set", d.flags_set},
          {"namespace", d.ns}};
}

nlohmann::json to_json(const ActivatorTrace& a) {
  nlohmann::json j = {{"schema_version", kSchemaVersion},
                      {"id", a.id},
                      {"at_ms", a.at_ms},
                      {"hit_samples", a.hit_samples},
                      {"miss_samples", a.miss_samples},
                      {"active", a.active}};
  if (a.overlap) {
    j["overlap"] = *a.overlap;
  } else {
    j["overlap"] = "insufficient";
  }
  return j;
}

nlohmann::json to_json(const CacheEntry& e) {
  return {{"schema_version", kSchemaVersion},
          {"key", e.key.value},
          {"namespace", e.key.ns.to_string()},
          {"block_index", e.block_index},
          {"owner", e.meta.owner_id},
          {"flag", e.meta.attack_flag},
          {"last_used", e.last_used}};
}

nlohmann::json to_json(const GroupSummary& g) {
  return {{"requests", g.requests},
          {"reused_blocks", g.reused_blocks},
          {"total_blocks", g.total_blocks},
          {"hit_rate", g.hit_rate},
          {"ttft_mean_ms", g.ttft.mean_ms},
          {"ttft_p50_ms", g.ttft.p50_ms},
          {"ttft_p99_ms", g.ttft.p99_ms}};
}

nlohmann::json to_json(const Summary& s) {
  nlohmann::json j = to_json(s.all);
  j["excluded_users"] = s.excluded_users;
  j["excluding_users"] =
      s.excluding ? to_json(*s.excluding) : nlohmann::json(nullptr);
  nlohmann::json per_user = nlohmann::json::array();
  for (const auto& [user, g] : s.per_user) {
    nlohmann::json row = to_json(g);
    row["user"] = user;
    per_user.push_back(std::move(row));
  }
  j["per_user"] = std::move(per_user);
  return j;
}

nlohmann::json to_json(const OverheadStats& s) {
  return {{"count", s.count},
          {"median_us", s.median_us},
          {"mean_us", s.mean_us},
          {"p99_us", s.p99_us}};
}

}  // namespace apcsim
