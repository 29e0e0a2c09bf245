#include "cubic/permutation.hpp"

#include <stdexcept>
#include <string>

namespace cubic {

namespace {
constexpr int kFactorial[kTupleSize] = {6, 2, 1, 1};  // (3-i)!
}

int permutation_rank(const Permutation4& perm) {
  bool seen[kTupleSize] = {false, false, false, false};
  for (int v : perm) {
    if (v < 0 || v >= kTupleSize) {
      throw std::invalid_argument("permutation_rank: element " + std::to_string(v) + " outside [0,4)");
    }
    if (seen[v]) throw std::invalid_argument("permutation_rank: repeated element " + std::to_string(v));
    seen[v] = true;
  }
  // Lehmer digit i counts the later elements smaller than perm[i].
  int rank = 0;
  for (int i = 0; i < kTupleSize; ++i) {
    int smaller = 0;
    for (int j = i + 1; j < kTupleSize; ++j) smaller += perm[j] < perm[i];
    rank += smaller * kFactorial[i];
  }
  return rank;
}

Permutation4 permutation_unrank(int rank) {
  if (rank < 0 || rank >= kNumPermutations) {
    throw std::out_of_range("permutation_unrank: rank " + std::to_string(rank) + " outside [0,24)");
  }
  int items[kTupleSize] = {0, 1, 2, 3};
  int remaining = kTupleSize;
  Permutation4 perm{};
  for (int i = 0; i < kTupleSize; ++i) {
    const int digit = rank / kFactorial[i];
    rank %= kFactorial[i];
    perm[i] = items[digit];
    for (int j = digit; j + 1 < remaining; ++j) items[j] = items[j + 1];
    --remaining;
  }
  return perm;
}

Permutation4 inverse_permutation(const Permutation4& perm) {
  permutation_rank(perm);  // validates
  Permutation4 inv{};
  for (int i = 0; i < kTupleSize; ++i) inv[perm[i]] = i;
  return inv;
}

PuzzleLabel PuzzleLabel::from_class_id(int class_id) {
  if (class_id < 0 || class_id >= 2 * kNumPermutations) {
    throw std::out_of_range("puzzle class id " + std::to_string(class_id) + " outside [0,48)");
  }
  return {class_id % kNumPermutations, class_id >= kNumPermutations};
}

}  // namespace cubic
