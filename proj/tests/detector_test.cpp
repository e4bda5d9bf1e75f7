#include <gtest/gtest.h>

#include <optional>
#include <vector>

#include "apcsim/detector.h"

using namespace apcsim;

namespace {

CacheEntry entry(uint64_t id, UserId owner, bool flagged = false) {
  return CacheEntry{.key = {.value = id, .ns = Namespace::shared()},
                    .block_index = id - 1,
                    .meta = {.owner_id = owner, .attack_flag = flagged}};
}

// Independent statement of the rule, phrased over 1-based positions.
struct Expected {
  size_t reused;
  bool truncated;
  bool isolated;
  std::optional<size_t> flag_position;
};

Expected reference(UserId req, const std::vector<UserId>& owner,
                   const std::vector<bool>& flag, bool enforce) {
  const size_t k = owner.size();
  auto own = [&](size_t pos) { return owner[pos - 1]; };
  auto flagged = [&](size_t pos) { return static_cast<bool>(flag[pos - 1]); };

  Expected out{k, false, false, std::nullopt};
  if (enforce) {
    std::optional<size_t> stop;
    for (size_t f = 1; f < k && !stop; ++f) {
      if (flagged(f) && own(f + 1) != req) {
        stop = f;
      }
    }
    if (stop) {
      out = {*stop, true, true, std::nullopt};
    } else if (k > 0 && flagged(k) && own(k) != req) {
      out.isolated = true;
    }
  }
  std::optional<size_t> deepest_foreign;
  for (size_t d = 1; d <= out.reused; ++d) {
    if (own(d) != req) {
      deepest_foreign = d;
    }
  }
  if (deepest_foreign && !flagged(*deepest_foreign)) {
    out.flag_position = deepest_foreign;
  }
  return out;
}

}  // namespace

TEST(Detector, ForeignUnflaggedChainIsServedAndFlagged) {
  const std::vector<CacheEntry> chain = {entry(1, 1), entry(2, 1)};
  const ReuseDecision d = decide_reuse(2, chain, true);
  EXPECT_EQ(d.reused_blocks, 2u);
  ASSERT_EQ(d.flags_to_set.size(), 1u);
  EXPECT_EQ(d.flags_to_set[0].value, 2u);
  EXPECT_TRUE(d.new_block_namespace.is_shared());
  EXPECT_FALSE(d.truncated);
}

TEST(Detector, OwnerContinuesThroughItsOwnFlag) {
  const std::vector<CacheEntry> chain = {entry(1, 1), entry(2, 1, true), entry(3, 1)};
  const ReuseDecision d = decide_reuse(1, chain, true);
  EXPECT_EQ(d.reused_blocks, 3u);
  EXPECT_FALSE(d.truncated);
  EXPECT_TRUE(d.flags_to_set.empty());
  EXPECT_TRUE(d.new_block_namespace.is_shared());
}

TEST(Detector, FlaggedLastHitRedirectsOtherUsers) {
  const std::vector<CacheEntry> chain = {entry(1, 1), entry(2, 1, true)};
  const ReuseDecision d = decide_reuse(3, chain, true);
  EXPECT_EQ(d.reused_blocks, 2u);
  EXPECT_FALSE(d.truncated);
  EXPECT_EQ(d.new_block_namespace, Namespace::isolated_to(3));
  EXPECT_TRUE(d.flags_to_set.empty());
}

TEST(Detector, FlagStopsNonOwnerBeforeForeignContinuation) {
  const std::vector<CacheEntry> chain = {entry(1, 1), entry(2, 1, true), entry(3, 1)};
  const ReuseDecision d = decide_reuse(3, chain, true);
  EXPECT_EQ(d.reused_blocks, 2u);
  EXPECT_TRUE(d.truncated);
  EXPECT_EQ(d.new_block_namespace, Namespace::isolated_to(3));
}

TEST(Detector, EmptyChain) {
  const ReuseDecision d = decide_reuse(0, {}, true);
  EXPECT_EQ(d.reused_blocks, 0u);
  EXPECT_TRUE(d.flags_to_set.empty());
  EXPECT_TRUE(d.new_block_namespace.is_shared());
}

// Every owner/flag assignment of chains up to 4 entries over 3 users.
TEST(Detector, MatchesReferenceExhaustively) {
  size_t cases = 0;
  for (size_t k = 0; k <= 4; ++k) {
    size_t owner_combos = 1;
    for (size_t i = 0; i < k; ++i) {
      owner_combos *= 3;
    }
    for (size_t oc = 0; oc < owner_combos; ++oc) {
      for (size_t fc = 0; fc < (size_t{1} << k); ++fc) {
        std::vector<UserId> owner(k);
        std::vector<bool> flag(k);
        std::vector<CacheEntry> chain;
        size_t rest = oc;
        for (size_t i = 0; i < k; ++i) {
          owner[i] = rest % 3;
          rest /= 3;
          flag[i] = (fc >> i) & 1;
          chain.push_back(entry(i + 1, owner[i], flag[i]));
        }
        for (UserId req = 0; req < 3; ++req) {
          for (bool enforce : {true, false}) {
            const Expected want = reference(req, owner, flag, enforce);
            const ReuseDecision got = decide_reuse(req, chain, enforce);
            ASSERT_EQ(got.reused_blocks, want.reused);
            ASSERT_EQ(got.truncated, want.truncated);
            ASSERT_EQ(!got.new_block_namespace.is_shared(), want.isolated);
            if (want.isolated) {
              ASSERT_EQ(got.new_block_namespace.user(), req);
            }
            ASSERT_EQ(got.flags_to_set.size(), want.flag_position ? 1u : 0u);
            if (want.flag_position) {
              ASSERT_EQ(got.flags_to_set[0].value, *want.flag_position);
            }
            // a user's own chain is always served whole and never flagged
            bool all_own = true;
            for (UserId o : owner) {
              all_own = all_own && o == req;
            }
            if (all_own) {
              ASSERT_EQ(got.reused_blocks, k);
              ASSERT_TRUE(got.flags_to_set.empty());
            }
            // deactivation still records the metadata
            if (!enforce) {
              ASSERT_EQ(got.reused_blocks, k);
              ASSERT_FALSE(got.truncated);
            }
            ++cases;
          }
        }
      }
    }
  }
  // 6 * (1 + 6 + 36 + 216 + 1296)
  EXPECT_EQ(cases, 9330u);
}

TEST(Detector, SecondForeignRequestStopsAtBarrier) {
  PrefixCache cache(16);
  std::vector<ChainLink> links;
  for (uint64_t i = 1; i <= 3; ++i) {
    links.push_back(ChainLink{.key = {.value = i, .ns = Namespace::shared()},
                              .block_index = i - 1});
  }
  cache.insert_blocks(links, 1);
  const std::vector<PrefixHash> two = {links[0].key, links[1].key};
  ReuseDecision d = decide_reuse(2, cache.lookup_longest_prefix(two), true);
  commit_decision(cache, d, {}, 2);
  EXPECT_TRUE(cache.find(links[1].key)->meta.attack_flag);

  const std::vector<PrefixHash> three = {links[0].key, links[1].key, links[2].key};
  d = decide_reuse(3, cache.lookup_longest_prefix(three), true);
  EXPECT_LE(d.reused_blocks, 2u);
  EXPECT_FALSE(d.new_block_namespace.is_shared());
}

TEST(Detector, CommitFlagsThenInsertsForRequester) {
  PrefixCache cache(16);
  cache.insert_blocks(std::vector<ChainLink>{{.key = {.value = 1}, .block_index = 0}}, 1);
  const ReuseDecision d{.reused_blocks = 1,
                        .flags_to_set = {{.value = 1}},
                        .new_block_namespace = Namespace::isolated_to(4)};
  const std::vector<ChainLink> rest = {
      {.key = {.value = 77, .ns = Namespace::isolated_to(4)}, .block_index = 1}};
  commit_decision(cache, d, rest, 4);
  EXPECT_TRUE(cache.find({.value = 1})->meta.attack_flag);
  EXPECT_EQ(cache.find({.value = 77})->meta.owner_id, 4u);
  EXPECT_EQ(cache.find({.value = 1})->meta.owner_id, 1u);
}
