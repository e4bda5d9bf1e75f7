#include <gtest/gtest.h>

#include <set>
#include <vector>

#include "apcsim/token_model.h"

using namespace apcsim;

TEST(Chunking, FullBlocksAndTail) {
  std::vector<TokenId> t(35);
  const ChunkedPrompt c = chunk_into_blocks(t, 16);
  ASSERT_EQ(c.blocks.size(), 2u);
  EXPECT_EQ(c.tail, 3u);
  EXPECT_EQ(c.blocks[1].index, 1u);
  EXPECT_EQ(c.blocks[1].tokens.data(), t.data() + 16);
  EXPECT_EQ(c.blocks[1].tokens.size(), 16u);
}

TEST(Chunking, ShorterThanOneBlock) {
  std::vector<TokenId> t(5);
  const ChunkedPrompt c = chunk_into_blocks(t, 16);
  EXPECT_TRUE(c.blocks.empty());
  EXPECT_EQ(c.tail, 5u);
  EXPECT_TRUE(hash_chain(t, 16, Namespace::shared()).empty());
}

TEST(Namespace, Names) {
  EXPECT_EQ(Namespace::shared().to_string(), "shared");
  EXPECT_EQ(Namespace::isolated_to(7).to_string(), "user:7");
  EXPECT_NE(Namespace::shared(), Namespace::isolated_to(0));
}

// Exhaustive over a 3-token vocabulary, block size 2 and 2-block prompts:
// block i hashes agree exactly when the token prefixes through block i agree,
// and no two distinct (namespace, prefix) pairs collide.
TEST(ChainHash, ExhaustivePrefixFaithfulness) {
  constexpr size_t kBs = 2;
  std::vector<std::vector<TokenId>> prompts;
  for (int x = 0; x < 81; ++x) {
    std::vector<TokenId> p;
    int v = x;
    for (int i = 0; i < 4; ++i) {
      p.push_back(static_cast<TokenId>(v % 3));
      v /= 3;
    }
    prompts.push_back(p);
  }
  const std::vector<Namespace> spaces = {Namespace::shared(),
                                         Namespace::isolated_to(0),
                                         Namespace::isolated_to(1)};
  std::set<uint64_t> distinct;
  size_t expected_distinct = 0;
  for (const Namespace& ns : spaces) {
    // 9 one-block prefixes plus 81 two-block prefixes per namespace
    expected_distinct += 9 + 81;
    for (const auto& p : prompts) {
      for (const PrefixHash& h : hash_chain(p, kBs, ns)) {
        distinct.insert(h.value);
      }
    }
  }
  EXPECT_EQ(distinct.size(), expected_distinct);

  for (const Namespace& ns : spaces) {
    for (const auto& a : prompts) {
      const auto ha = hash_chain(a, kBs, ns);
      for (const auto& b : prompts) {
        const auto hb = hash_chain(b, kBs, ns);
        for (size_t i = 0; i < 2; ++i) {
          const bool same_prefix =
              std::equal(a.begin(), a.begin() + 2 * (i + 1), b.begin());
          EXPECT_EQ(ha[i] == hb[i], same_prefix);
        }
      }
    }
  }
}

TEST(ChainHash, ContinuationMatchesFullChain) {
  std::vector<TokenId> t;
  for (TokenId i = 0; i < 70; ++i) {
    t.push_back(i * 7 + 1);
  }
  const Namespace ns = Namespace::isolated_to(3);
  const auto full = hash_chain(t, 16, ns);
  ASSERT_EQ(full.size(), 4u);
  const auto tail = hash_chain(t, 16, ns, full[1], 2);
  ASSERT_EQ(tail.size(), 2u);
  EXPECT_EQ(tail[0], full[2]);
  EXPECT_EQ(tail[1], full[3]);
  EXPECT_EQ(full[0], chain_hash(std::nullopt, std::span(t).first(16), ns));
}

TEST(ChainHash, NamespaceSwitchMidChainDiffers) {
  std::vector<TokenId> t(48, 5);
  const auto shared = hash_chain(t, 16, Namespace::shared());
  const auto mixed = hash_chain(t, 16, Namespace::isolated_to(2), shared[0], 1);
  EXPECT_NE(mixed[0], shared[1]);
  EXPECT_EQ(mixed[0].ns, Namespace::isolated_to(2));
}
