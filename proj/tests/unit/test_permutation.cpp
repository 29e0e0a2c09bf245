#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "cubic/permutation.hpp"

using namespace cubic;

TEST(Permutation, KnownRanks) {
  EXPECT_EQ(permutation_rank({0, 1, 2, 3}), 0);
  EXPECT_EQ(permutation_rank({3, 2, 1, 0}), 23);
  EXPECT_EQ(permutation_rank({0, 1, 3, 2}), 1);
  EXPECT_EQ(permutation_rank({1, 0, 2, 3}), 6);
}

TEST(Permutation, ExhaustiveRoundTripMatchesLexicographicOrder) {
  Permutation4 p{0, 1, 2, 3};
  int expected = 0;
  do {
    EXPECT_EQ(permutation_rank(p), expected);
    EXPECT_EQ(permutation_unrank(expected), p);
    const Permutation4 inv = inverse_permutation(p);
    for (int i = 0; i < kTupleSize; ++i) EXPECT_EQ(inv[static_cast<size_t>(p[static_cast<size_t>(i)])], i);
    ++expected;
  } while (std::next_permutation(p.begin(), p.end()));
  EXPECT_EQ(expected, kNumPermutations);
}

TEST(Permutation, RejectsInvalidInput) {
  EXPECT_THROW(permutation_rank({0, 0, 1, 2}), std::invalid_argument);
  EXPECT_THROW(permutation_rank({0, 1, 2, 4}), std::invalid_argument);
  EXPECT_THROW(permutation_unrank(24), std::out_of_range);
  EXPECT_THROW(permutation_unrank(-1), std::out_of_range);
}

TEST(PuzzleLabel, FlipAddsTwentyFourAndAllIdsRoundTrip) {
  std::set<int> seen;
  for (int id = 0; id < 2 * kNumPermutations; ++id) {
    const PuzzleLabel l = PuzzleLabel::from_class_id(id);
    EXPECT_EQ(l.class_id(), id);
    EXPECT_EQ(l.flipped, id >= kNumPermutations);
    seen.insert(l.class_id());
  }
  EXPECT_EQ(seen.size(), 48u);
  for (int r = 0; r < kNumPermutations; ++r) {
    EXPECT_EQ((PuzzleLabel{r, true}).class_id(), (PuzzleLabel{r, false}).class_id() + 24);
  }
  EXPECT_THROW(PuzzleLabel::from_class_id(48), std::out_of_range);
  EXPECT_THROW(PuzzleLabel::from_class_id(-1), std::out_of_range);
}
