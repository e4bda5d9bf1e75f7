#include "apcsim/detector.h"

namespace apcsim {
namespace {

std::vector<PrefixHash> flags_for(UserId requester,
                                  std::span<const CacheEntry> served) {
  for (size_t i = served.size(); i-- > 0;) {
    const CacheEntry& e = served[i];
    if (e.meta.owner_id != requester) {
      if (e.meta.attack_flag) {
        // an existing barrier at or below this depth already covers it
        return {};
      }
      return {e.key};
    }
  }
  return {};
}

}  // namespace

ReuseDecision decide_reuse(UserId requester,
                           std::span<const CacheEntry> hit_chain,
                           bool enforcement_active) {
  const size_t k = hit_chain.size();
  ReuseDecision decision;
  decision.reused_blocks = k;
  decision.new_block_namespace = Namespace::shared();

  if (enforcement_active) {
    for (size_t i = 0; i < k; ++i) {
      const CacheEntry& e = hit_chain[i];
      if (!e.meta.attack_flag) {
        continue;
      }
      if (i + 1 < k) {
        if (hit_chain[i + 1].meta.owner_id == requester) {
          continue;
        }
        decision.reused_blocks = i + 1;
        decision.truncated = true;
        decision.new_block_namespace = Namespace::isolated_to(requester);
        break;
      }
      if (e.meta.owner_id != requester) {
        decision.new_block_namespace = Namespace::isolated_to(requester);
      }
    }
  }

  decision.flags_to_set =
      flags_for(requester, hit_chain.first(decision.reused_blocks));
  return decision;
}

void commit_decision(PrefixCache& cache,
                     const ReuseDecision& decision,
                     std::span<const ChainLink> recomputed_chain,
                     UserId requester,
                     std::span<const PrefixHash> served) {
  for (const PrefixHash& key : decision.flags_to_set) {
    cache.flag_entry(key);
  }
  if (!recomputed_chain.empty()) {
    cache.insert_blocks(recomputed_chain, requester, served);
  }
}

}  // namespace apcsim
