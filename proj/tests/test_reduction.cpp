#include <catch2/catch_amalgamated.hpp>

#include "reduction_check.hpp"

// With both penalty weights at zero the production learners must be
// indistinguishable, bit for bit, from implementations that never heard of
// the penalties: same parameters after the same interaction schedule.

TEST_CASE("off-policy learner with zero penalties equals the plain implementation") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    CAPTURE(seed);
    REQUIRE(reduction::td3_reduction_matches(capslab::EnvKind::Toy, seed, 1000, 200));
  }
}

TEST_CASE("on-policy learner with zero penalties equals the plain implementation") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    CAPTURE(seed);
    REQUIRE(reduction::ppo_reduction_matches(capslab::EnvKind::Toy, seed, 1000));
  }
}
