#include <gtest/gtest.h>

#include <cstdio>

#include "support/security_enumeration.h"

using namespace apcsim::enumeration;

TEST(SecurityEnumeration, CandidateSequences) {
  EXPECT_EQ(candidate_sequences().size(), 15u);
}

TEST(SecurityEnumeration, NoProbeIsServedPastPre) {
  const Report rep = enumerate_all();
  std::printf("scenarios=%zu enforced_probes=%zu excluded_first_guess=%zu seconds=%.2f\n",
              rep.scenarios, rep.enforced_probes, rep.excluded_first_guess, rep.seconds);
  EXPECT_FALSE(rep.leaked) << rep.first_leak;
  EXPECT_GT(rep.scenarios, 100000u);
  EXPECT_LT(rep.seconds, 60.0);
}

TEST(SecurityEnumeration, WitnessEmptyPre) { EXPECT_TRUE(witness_empty_pre()); }

TEST(SecurityEnumeration, WitnessFirstAttemptGuess) {
  EXPECT_TRUE(witness_first_attempt_guess());
}

TEST(SecurityEnumeration, MetadataWrittenWhileDeactivated) {
  EXPECT_TRUE(metadata_written_while_deactivated());
}
