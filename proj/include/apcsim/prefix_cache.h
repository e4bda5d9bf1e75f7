#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "apcsim/token_model.h"

namespace apcsim {

// Per-entry isolation metadata: exactly two machine words.
struct EntryMetadata {
  // set once when the entry is allocated
  UserId owner_id = 0;
  // monotone for the entry's lifetime
  bool attack_flag = false;
};
static_assert(sizeof(EntryMetadata) == 2 * sizeof(void*));

struct CacheEntry {
  PrefixHash key;
  size_t block_index = 0;
  EntryMetadata meta;
  uint64_t last_used = 0;
};

// One block that is about to be inserted.
struct ChainLink {
  PrefixHash key;
  size_t block_index = 0;
};

// Block-granular prefix cache with LRU eviction over a logical clock.
//
// Every operation that touches a chain of entries stamps them deepest-first,
// so the chain root ends up most recent and eviction trims chains from the
// leaves inward. Ties on last_used (only reachable through restore()) are
// broken by the smaller hash value.
//
// Contract violations (inserting a present key, flagging an absent one,
// over-evicting) throw std::logic_error: they indicate a simulator bug.
class PrefixCache {
 public:
  explicit PrefixCache(size_t capacity_blocks);

  // Maximal run e_1..e_k of `chain` present in the cache. Refreshes the
  // returned entries' last_used.
  std::vector<CacheEntry> lookup_longest_prefix(
      std::span<const PrefixHash> chain);

  // New entries are owned by `owner` and unflagged. `parents` are the keys
  // that precede new_chain in its prompt; present ones are re-stamped with
  // the new blocks before LRU eviction restores the capacity invariant, so a
  // chain is only ever trimmed from its leaves.
  void insert_blocks(std::span<const ChainLink> new_chain, UserId owner,
                     std::span<const PrefixHash> parents = {});

  // Removes the `count` least recently used entries.
  void evict_lru(size_t count);

  // Idempotent.
  void flag_entry(const PrefixHash& key);

  // Re-stamps every present key of a request's full chain, deepest first.
  // Absent keys are skipped.
  void touch_chain(std::span<const PrefixHash> chain);

  // Installs an entry with explicit metadata and timestamp. Used to seed
  // arbitrary cache states; the clock is advanced past entry.last_used.
  void restore(const CacheEntry& entry);

  const CacheEntry* find(const PrefixHash& key) const;
  bool contains(const PrefixHash& key) const { return find(key) != nullptr; }

  size_t size() const { return entries_.size(); }
  size_t capacity() const { return capacity_; }
  uint64_t clock() const { return clock_; }
  uint64_t evictions() const { return evictions_; }

  // Snapshot ordered by hash value.
  std::vector<CacheEntry> entries() const;

 private:
  using LruKey = std::pair<uint64_t, uint64_t>;  // (last_used, hash value)

  void stamp(CacheEntry& entry, uint64_t when);
  void stamp_deepest_first(std::span<CacheEntry* const> chain);

  size_t capacity_;
  uint64_t clock_ = 0;
  uint64_t evictions_ = 0;
  std::unordered_map<uint64_t, CacheEntry> entries_;
  std::set<LruKey> lru_;
};

}  // namespace apcsim
