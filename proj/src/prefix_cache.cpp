#include "apcsim/prefix_cache.h"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace apcsim {

PrefixCache::PrefixCache(size_t capacity_blocks) : capacity_(capacity_blocks) {
  if (capacity_ == 0) {
    throw std::invalid_argument("cache capacity must be >= 1 block");
  }
}

void PrefixCache::stamp(CacheEntry& entry, uint64_t when) {
  lru_.erase({entry.last_used, entry.key.value});
  entry.last_used = when;
  lru_.insert({entry.last_used, entry.key.value});
}

void PrefixCache::stamp_deepest_first(std::span<CacheEntry* const> chain) {
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    stamp(**it, ++clock_);
  }
}

std::vector<CacheEntry> PrefixCache::lookup_longest_prefix(
    std::span<const PrefixHash> chain) {
  std::vector<CacheEntry*> hits;
  for (const PrefixHash& key : chain) {
    auto it = entries_.find(key.value);
    if (it == entries_.end()) {
      break;
    }
    hits.push_back(&it->second);
  }
  stamp_deepest_first(hits);

  std::vector<CacheEntry> out;
  out.reserve(hits.size());
  for (const CacheEntry* e : hits) {
    out.push_back(*e);
  }
  return out;
}

void PrefixCache::insert_blocks(std::span<const ChainLink> new_chain,
                                UserId owner,
                                std::span<const PrefixHash> parents) {
  std::vector<CacheEntry*> inserted;
  inserted.reserve(parents.size() + new_chain.size());
  for (const PrefixHash& key : parents) {
    auto it = entries_.find(key.value);
    if (it != entries_.end()) {
      inserted.push_back(&it->second);
    }
  }
  for (const ChainLink& link : new_chain) {
    if (entries_.contains(link.key.value)) {
      throw std::logic_error("insert_blocks: key already present (" +
                             std::to_string(link.key.value) + ")");
    }
    CacheEntry entry{.key = link.key,
                     .block_index = link.block_index,
                     .meta = EntryMetadata{.owner_id = owner,
                                           .attack_flag = false},
                     .last_used = 0};
    auto [it, ok] = entries_.emplace(link.key.value, entry);
    lru_.insert({0, link.key.value});
    inserted.push_back(&it->second);
  }
  stamp_deepest_first(inserted);
  if (entries_.size() > capacity_) {
    evict_lru(entries_.size() - capacity_);
  }
}

void PrefixCache::evict_lru(size_t count) {
  if (count > entries_.size()) {
    throw std::logic_error("evict_lru: count exceeds number of entries");
  }
  for (size_t i = 0; i < count; ++i) {
    auto victim = lru_.begin();
    entries_.erase(victim->second);
    lru_.erase(victim);
    ++evictions_;
  }
}

void PrefixCache::flag_entry(const PrefixHash& key) {
  auto it = entries_.find(key.value);
  if (it == entries_.end()) {
    throw std::logic_error("flag_entry: key not present (" +
                           std::to_string(key.value) + ")");
  }
  it->second.meta.attack_flag = true;
}

void PrefixCache::touch_chain(std::span<const PrefixHash> chain) {
  std::vector<CacheEntry*> present;
  present.reserve(chain.size());
  for (const PrefixHash& key : chain) {
    auto it = entries_.find(key.value);
    if (it != entries_.end()) {
      present.push_back(&it->second);
    }
  }
  stamp_deepest_first(present);
}

void PrefixCache::restore(const CacheEntry& entry) {
  if (entries_.contains(entry.key.value)) {
    throw std::logic_error("restore: key already present");
  }
  entries_.emplace(entry.key.value, entry);
  lru_.insert({entry.last_used, entry.key.value});
  clock_ = std::max(clock_, entry.last_used);
  if (entries_.size() > capacity_) {
    evict_lru(entries_.size() - capacity_);
  }
}

const CacheEntry* PrefixCache::find(const PrefixHash& key) const {
  auto it = entries_.find(key.value);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<CacheEntry> PrefixCache::entries() const {
  std::vector<CacheEntry> out;
  out.reserve(entries_.size());
  for (const auto& [_, e] : entries_) {
    out.push_back(e);
  }
  std::sort(out.begin(), out.end(), [](const CacheEntry& a, const CacheEntry& b) {
    return a.key.value < b.key.value;
  });
  return out;
}

}  // namespace apcsim
