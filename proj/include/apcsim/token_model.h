#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace apcsim {

using TokenId = uint32_t;
using UserId = uint64_t;
using RequestId = uint64_t;

// Partition of the cache key space. Shared keys are visible to every user;
// isolated keys are salted with one user id and only that user derives them.
class Namespace {
 public:
  Namespace() = default;

  static Namespace shared() { return Namespace(); }
  static Namespace isolated_to(UserId user) { return Namespace(user); }

  bool is_shared() const { return !user_.has_value(); }
  // only valid for isolated namespaces
  UserId user() const { return user_.value(); }

  // "shared" or "user:<id>"
  std::string to_string() const;

  friend bool operator==(const Namespace&, const Namespace&) = default;

 private:
  explicit Namespace(UserId user) : user_(user) {}

  std::optional<UserId> user_;
};

// Identity of one cached block: a digest over the namespace, the parent
// block's digest and this block's tokens.
struct PrefixHash {
  uint64_t value = 0;
  Namespace ns;

  friend bool operator==(const PrefixHash&, const PrefixHash&) = default;
};

// A full block viewed inside its prompt. The tokens are not owned.
struct Block {
  std::span<const TokenId> tokens;
  size_t index = 0;
};

struct ChunkedPrompt {
  std::vector<Block> blocks;
  // trailing tokens that do not fill a block; never cached
  size_t tail = 0;
};

ChunkedPrompt chunk_into_blocks(std::span<const TokenId> tokens,
                                size_t block_size);

// parent == nullopt means the chain root.
PrefixHash chain_hash(const std::optional<PrefixHash>& parent,
                      std::span<const TokenId> block_tokens,
                      const Namespace& ns);

// Hashes blocks [first_block, floor(len/block_size)) of a prompt, continuing
// from `parent` (the hash of block first_block - 1, or nullopt at the root).
std::vector<PrefixHash> hash_chain(std::span<const TokenId> tokens,
                                   size_t block_size,
                                   const Namespace& ns,
                                   const std::optional<PrefixHash>& parent =
                                       std::nullopt,
                                   size_t first_block = 0);

}  // namespace apcsim
