#pragma once

#include <cstdint>
#include <vector>

#include "speechut/autodiff.hpp"

namespace speechut {

// A sampled set of positions (the M of masking or the R of mixing) plus the
// parameters it was drawn with, so it can be regenerated from the seed.
struct SpanSet {
  std::vector<int64_t> positions;  // sorted, unique, all in [0, length)
  int64_t length = 0;
  double prob = 0.0;
  int span_len = 0;
  uint64_t seed = 0;

  bool contains(int64_t t) const;
  std::vector<uint8_t> as_mask() const;  // length-sized 0/1 vector
  size_t count() const { return positions.size(); }
};

// Every position is a span start independently with probability p; a start at
// t covers [t, min(t+l, length)). Overlapping spans union.
SpanSet sample_spans(int64_t length, double prob, int span_len, uint64_t seed);

// Replace rows of X at masked positions with the mask embedding (broadcast).
// Other rows keep their tape identity bit-for-bit.
Var corrupt_speech(Tape& t, Var x, const SpanSet& mask, Var mask_embedding);

// Replace unit ids at masked positions with the MASK id.
std::vector<int> corrupt_units(const std::vector<int>& units, const SpanSet& mask, int mask_id);

// Embedding mixing: row t of the result comes from u iff t is in R - M.
Var mix_embeddings(Tape& t, Var h, Var u_frame, const SpanSet& mix, const SpanSet& mask);

// The replace pattern of mix_embeddings, exposed for tests.
std::vector<uint8_t> mix_replace_pattern(int64_t length, const SpanSet& mix, const SpanSet& mask);

}  // namespace speechut
