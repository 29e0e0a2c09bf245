#pragma once

#include <array>

namespace cubic {

inline constexpr int kTupleSize = 4;
inline constexpr int kNumPermutations = 24;  // 4!

// perm[i] is the canonical position shown at emitted slot i.
using Permutation4 = std::array<int, kTupleSize>;

// Lexicographic (Lehmer) rank in [0, 24). Throws std::invalid_argument for
// repeated or out-of-range entries.
int permutation_rank(const Permutation4& perm);

// Inverse of permutation_rank. Throws std::out_of_range for rank outside [0, 24).
Permutation4 permutation_unrank(int rank);

Permutation4 inverse_permutation(const Permutation4& perm);

/// Puzzle class: permutation rank, plus 24 when the tuple was flipped upside-down.
struct PuzzleLabel {
  int perm_rank = 0;
  bool flipped = false;

  int class_id() const { return perm_rank + (flipped ? kNumPermutations : 0); }
  // Throws std::out_of_range for class ids outside [0, 48).
  static PuzzleLabel from_class_id(int class_id);

  bool operator==(const PuzzleLabel&) const = default;
};

}  // namespace cubic
