#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "apcsim/prefix_cache.h"
#include "apcsim/token_model.h"

namespace apcsim {

struct ReuseDecision {
  // number of leading hit-chain entries whose content is served
  size_t reused_blocks = 0;
  std::vector<PrefixHash> flags_to_set;
  // namespace in which the request's remaining blocks are looked up and
  // inserted
  Namespace new_block_namespace;
  // enforcement cut the hit chain short
  bool truncated = false;
};

// Selective-isolation verdict for one request's hit chain.
//
// With enforcement active, the first flagged entry e_f stops a non-owner:
//   - f < k: reuse may pass e_f only if e_{f+1} is owned by the requester,
//     otherwise reuse stops at f (truncated);
//   - f == k: if the requester does not own e_f, everything it recomputes
//     goes to its isolated namespace.
// The flag to place is computed from the served entries whether or not
// enforcement is active: the deepest served entry owned by someone else,
// unless it is already flagged.
ReuseDecision decide_reuse(UserId requester,
                           std::span<const CacheEntry> hit_chain,
                           bool enforcement_active);

// Applies the decision's flags and inserts the recomputed blocks (already
// hashed in decision.new_block_namespace) owned by the requester. `served`
// are the keys the request reused, in chain order.
void commit_decision(PrefixCache& cache,
                     const ReuseDecision& decision,
                     std::span<const ChainLink> recomputed_chain,
                     UserId requester,
                     std::span<const PrefixHash> served = {});

}  // namespace apcsim
