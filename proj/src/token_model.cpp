#include "apcsim/token_model.h"

#include <stdexcept>

namespace apcsim {
namespace {

constexpr uint64_t kRootSeed = 0x243f6a8885a308d3ULL;
constexpr uint64_t kSharedTag = 0x13198a2e03707344ULL;
constexpr uint64_t kIsolatedTag = 0xa4093822299f31d0ULL;

// splitmix64 finalizer
uint64_t mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t combine(uint64_t h, uint64_t v) { return mix(h ^ mix(v)); }

}  // namespace

std::string Namespace::to_string() const {
  if (is_shared()) {
    return "shared";
  }
  return "user:" + std::to_string(*user_);
}

ChunkedPrompt chunk_into_blocks(std::span<const TokenId> tokens,
                                size_t block_size) {
  if (block_size == 0) {
    throw std::invalid_argument("block_size must be >= 1");
  }
  ChunkedPrompt out;
  const size_t full = tokens.size() / block_size;
  out.blocks.reserve(full);
  for (size_t i = 0; i < full; ++i) {
    out.blocks.push_back(
        Block{.tokens = tokens.subspan(i * block_size, block_size), .index = i});
  }
  out.tail = tokens.size() - full * block_size;
  return out;
}

PrefixHash chain_hash(const std::optional<PrefixHash>& parent,
                      std::span<const TokenId> block_tokens,
                      const Namespace& ns) {
  uint64_t h = parent ? combine(kRootSeed, parent->value) : kRootSeed;
  h = ns.is_shared() ? combine(h, kSharedTag)
                     : combine(combine(h, kIsolatedTag), ns.user());
  h = combine(h, block_tokens.size());
  for (const TokenId t : block_tokens) {
    h = combine(h, t);
  }
  return PrefixHash{.value = h, .ns = ns};
}

std::vector<PrefixHash> hash_chain(std::span<const TokenId> tokens,
                                   size_t block_size,
                                   const Namespace& ns,
                                   const std::optional<PrefixHash>& parent,
                                   size_t first_block) {
  const ChunkedPrompt chunks = chunk_into_blocks(tokens, block_size);
  std::vector<PrefixHash> chain;
  if (first_block >= chunks.blocks.size()) {
    return chain;
  }
  chain.reserve(chunks.blocks.size() - first_block);
  std::optional<PrefixHash> prev = parent;
  for (size_t i = first_block; i < chunks.blocks.size(); ++i) {
    prev = chain_hash(prev, chunks.blocks[i].tokens, ns);
    chain.push_back(*prev);
  }
  return chain;
}

}  // namespace apcsim
