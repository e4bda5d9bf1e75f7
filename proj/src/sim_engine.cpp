#include "apcsim/sim_engine.h"

#include <algorithm>
#include <chrono>
#include <deque>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "apcsim/detector.h"

namespace apcsim {
namespace {

using Clock = std::chrono::steady_clock;

double micros_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
}

std::vector<ChainLink> links_from(std::span<const PrefixHash> keys,
                                  size_t first_index) {
  std::vector<ChainLink> links;
  links.reserve(keys.size());
  for (size_t i = 0; i < keys.size(); ++i) {
    links.push_back(ChainLink{.key = keys[i], .block_index = first_index + i});
  }
  return links;
}

}  // namespace

Admission admit_to_cache(PrefixCache& cache,
                         PolicyKind kind,
                         UserId user,
                         std::span<const TokenId> tokens,
                         size_t block_size,
                         bool enforce) {
  const Namespace lookup_ns = kind == PolicyKind::kUserIsolation
                                  ? Namespace::isolated_to(user)
                                  : Namespace::shared();
  const std::vector<PrefixHash> chain = hash_chain(tokens, block_size, lookup_ns);
  const std::vector<CacheEntry> hits = cache.lookup_longest_prefix(chain);

  Admission adm{.chain_length = hits.size()};
  std::vector<PrefixHash> used_keys;

  if (kind != PolicyKind::kSelectiveIsolation) {
    adm.reused_blocks = hits.size();
    const std::vector<ChainLink> links = links_from(
        std::span<const PrefixHash>(chain).subspan(hits.size()), hits.size());
    if (!links.empty()) {
      cache.insert_blocks(links, user,
                          std::span<const PrefixHash>(chain).first(hits.size()));
    }
    cache.touch_chain(chain);
    return adm;
  }

  const ReuseDecision decision = decide_reuse(user, hits, enforce);
  size_t reused = decision.reused_blocks;
  used_keys.assign(chain.begin(),
                   chain.begin() + static_cast<std::ptrdiff_t>(reused));

  std::vector<PrefixHash> rest;
  if (decision.new_block_namespace.is_shared()) {
    rest.assign(chain.begin() + static_cast<std::ptrdiff_t>(reused), chain.end());
  } else {
    // Continue in the requester's own namespace from the last served entry;
    // only this user ever creates keys there.
    const std::optional<PrefixHash> parent =
        reused > 0 ? std::optional<PrefixHash>(chain[reused - 1]) : std::nullopt;
    rest = hash_chain(tokens, block_size, decision.new_block_namespace, parent,
                      reused);
    const std::vector<CacheEntry> own = cache.lookup_longest_prefix(rest);
    for (const CacheEntry& e : own) {
      used_keys.push_back(e.key);
    }
    rest.erase(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(own.size()));
    reused += own.size();
  }
  commit_decision(cache, decision, links_from(rest, reused), user, used_keys);
  used_keys.insert(used_keys.end(), rest.begin(), rest.end());
  cache.touch_chain(used_keys);

  adm.reused_blocks = reused;
  adm.decision = decision;
  return adm;
}

namespace {

class Engine {
 public:
  Engine(const SimOptions& options)
      : opts_(options),
        cache_(options.cache_capacity_blocks),
        jitter_(options.jitter_seed) {
    validate(opts_.profile);
    if (opts_.block_size == 0) {
      throw std::invalid_argument("block_size must be >= 1");
    }
    if (opts_.policy.kind == PolicyKind::kSelectiveIsolation) {
      activator_.emplace(opts_.policy.activator);
    }
  }

  ScenarioResult run(const std::vector<Request>& requests) {
    std::vector<size_t> order(requests.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (requests[a].arrival_ms != requests[b].arrival_ms) {
        return requests[a].arrival_ms < requests[b].arrival_ms;
      }
      return requests[a].id < requests[b].id;
    });

    for (const size_t idx : order) {
      const Request& req = requests[idx];
      if (req.tokens.empty()) {
        throw std::invalid_argument("request " + std::to_string(req.id) +
                                    " has no tokens");
      }
      absorb(queue_.step_batches(req.arrival_ms, opts_.profile, jitter_));
      finalize_until(req.arrival_ms);
      try {
        admit(req);
      } catch (const std::logic_error& e) {
        throw InvariantBreach(e.what());
      }
      if (cache_.size() > cache_.capacity()) {
        throw InvariantBreach("cache holds more entries than its capacity");
      }
    }
    absorb(queue_.step_batches(std::numeric_limits<double>::infinity(),
                               opts_.profile, jitter_));
    finalize_until(std::numeric_limits<double>::infinity());

    result_.policy = opts_.policy.kind;
    std::sort(result_.outcomes.begin(), result_.outcomes.end(),
              [](const RequestOutcome& a, const RequestOutcome& b) {
                return a.id < b.id;
              });
    result_.cache.entries = cache_.size();
    result_.cache.capacity_blocks = cache_.capacity();
    result_.cache.evictions = cache_.evictions();
    const std::vector<CacheEntry> entries = cache_.entries();
    result_.cache.flagged_entries = static_cast<size_t>(
        std::count_if(entries.begin(), entries.end(), [](const CacheEntry& e) {
          return e.meta.attack_flag;
        }));
    if (opts_.keep_final_cache) {
      result_.final_cache = entries;
    }
    return std::move(result_);
  }

 private:
  void absorb(std::vector<Completion> done) {
    completions_.insert(completions_.end(), done.begin(), done.end());
  }

  // Completions leave the single server in finish order.
  void finalize_until(double now) {
    while (!completions_.empty() && completions_.front().finish_ms <= now) {
      const Completion c = completions_.front();
      completions_.pop_front();
      auto it = in_flight_.find(c.id);
      RequestOutcome outcome = it->second;
      in_flight_.erase(it);
      outcome.ttft_ms = c.ttft_ms();
      if (activator_) {
        activator_->record(outcome.ttft_ms, outcome.prompt_tokens,
                           outcome.reuse_fraction);
      }
      result_.outcomes.push_back(outcome);
    }
  }

  void admit(const Request& req) {
    const size_t bs = opts_.block_size;
    const size_t total_blocks = req.tokens.size() / bs;
    const PolicyKind kind = opts_.policy.kind;

    RequestOutcome outcome{.id = req.id,
                           .user = req.user,
                           .arrival_ms = req.arrival_ms,
                           .prompt_tokens = req.tokens.size(),
                           .total_blocks = total_blocks};

    bool enforce = false;
    if (kind == PolicyKind::kSelectiveIsolation) {
      enforce = true;
      if (!opts_.policy.always_on) {
        const auto t0 = Clock::now();
        const ActivationState state = activator_->evaluate();
        result_.overhead.activator_us.push_back(micros_since(t0));
        enforce = state.active;
        result_.activator.push_back(
            ActivatorTrace{.id = req.id,
                           .at_ms = req.arrival_ms,
                           .hit_samples = activator_->window().hit_samples().size(),
                           .miss_samples =
                               activator_->window().miss_samples().size(),
                           .overlap = state.overlap,
                           .active = state.active});
      }
    }

    const auto t0 = Clock::now();
    const Admission adm =
        admit_to_cache(cache_, kind, req.user, req.tokens, bs, enforce);
    if (adm.decision) {
      result_.overhead.detector_us.push_back(micros_since(t0));
      const ReuseDecision& d = *adm.decision;
      DecisionTrace trace{.id = req.id,
                          .user = req.user,
                          .chain_length = adm.chain_length,
                          .detector_reused_blocks = d.reused_blocks,
                          .reused_blocks = adm.reused_blocks,
                          .truncated = d.truncated,
                          .ns = d.new_block_namespace.to_string()};
      for (const PrefixHash& f : d.flags_to_set) {
        trace.flags_set.push_back(f.value);
      }
      result_.decisions.push_back(std::move(trace));
      outcome.truncated = d.truncated;
      outcome.isolation_was_active = enforce;
    }
    outcome.reused_blocks = adm.reused_blocks;

    outcome.reuse_fraction =
        total_blocks == 0 ? 0.0
                          : static_cast<double>(outcome.reused_blocks) /
                                static_cast<double>(total_blocks);
    const size_t recomputed =
        req.tokens.size() - outcome.reused_blocks * bs;
    queue_.enqueue(req.id, recomputed, req.arrival_ms);
    if (!in_flight_.emplace(req.id, outcome).second) {
      throw std::invalid_argument("duplicate request id " +
                                  std::to_string(req.id));
    }
  }

  SimOptions opts_;
  PrefixCache cache_;
  Rng jitter_;
  ServiceQueue queue_;
  std::optional<Activator> activator_;
  std::deque<Completion> completions_;
  std::unordered_map<RequestId, RequestOutcome> in_flight_;
  ScenarioResult result_;
};

}  // namespace

const char* to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kPrefixCaching:
      return "prefix_caching";
    case PolicyKind::kUserIsolation:
      return "user_isolation";
    case PolicyKind::kSelectiveIsolation:
      return "selective_isolation";
  }
  return "?";
}

std::optional<PolicyKind> parse_policy_kind(const std::string& s) {
  for (PolicyKind k : {PolicyKind::kPrefixCaching, PolicyKind::kUserIsolation,
                       PolicyKind::kSelectiveIsolation}) {
    if (s == to_string(k)) {
      return k;
    }
  }
  return std::nullopt;
}

ScenarioResult simulate(const SimOptions& options,
                        const std::vector<Request>& requests) {
  Engine engine(options);
  return engine.run(requests);
}

}  // namespace apcsim
