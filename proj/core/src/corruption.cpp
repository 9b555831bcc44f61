#include "speechut/corruption.hpp"

#include <algorithm>

namespace speechut {

bool SpanSet::contains(int64_t t) const {
  return std::binary_search(positions.begin(), positions.end(), t);
}

std::vector<uint8_t> SpanSet::as_mask() const {
  std::vector<uint8_t> m(static_cast<size_t>(length), 0);
  for (int64_t p : positions) m[static_cast<size_t>(p)] = 1;
  return m;
}

SpanSet sample_spans(int64_t length, double prob, int span_len, uint64_t seed) {
  if (prob < 0.0 || prob > 1.0) throw ContractError("sample_spans: prob must lie in [0,1]");
  if (span_len < 1) throw ContractError("sample_spans: span length must be >= 1");
  SpanSet s;
  s.length = length;
  s.prob = prob;
  s.span_len = span_len;
  s.seed = seed;
  std::vector<uint8_t> covered(static_cast<size_t>(length), 0);
  Rng rng(seed);
  for (int64_t t = 0; t < length; ++t) {
    if (rng.uniform() < prob) {
      const int64_t end = std::min(length, t + span_len);
      for (int64_t j = t; j < end; ++j) covered[static_cast<size_t>(j)] = 1;
    }
  }
  for (int64_t t = 0; t < length; ++t)
    if (covered[static_cast<size_t>(t)]) s.positions.push_back(t);
  return s;
}

Var corrupt_speech(Tape& t, Var x, const SpanSet& mask, Var mask_embedding) {
  const Tensor& xv = t.val(x);
  const int64_t rows = xv.rows(), d = xv.cols();
  if (mask.length != rows) throw ShapeError("corrupt_speech: mask length does not match sequence");
  if (t.val(mask_embedding).numel() != d) throw ShapeError("corrupt_speech: mask embedding dim mismatch");
  if (mask.positions.empty()) return x;
  // broadcast the embedding into a [T x d] tensor via a 0/1 column matmul;
  // keeps the gradient path to the embedding, masked rows only.
  Tensor indicator = Tensor::zeros({rows, 1});
  for (int64_t p : mask.positions) indicator.at(p, 0) = 1.0;
  Var emb_row = t.reshape(mask_embedding, {1, d});
  Var broadcast = t.matmul(t.input(std::move(indicator)), emb_row);  // masked rows = embedding, others zero
  return t.mix_rows(x, broadcast, mask.as_mask());
}

std::vector<int> corrupt_units(const std::vector<int>& units, const SpanSet& mask, int mask_id) {
  if (mask.length != static_cast<int64_t>(units.size()))
    throw ShapeError("corrupt_units: mask length does not match sequence");
  std::vector<int> out = units;
  for (int64_t p : mask.positions) out[static_cast<size_t>(p)] = mask_id;
  return out;
}

std::vector<uint8_t> mix_replace_pattern(int64_t length, const SpanSet& mix, const SpanSet& mask) {
  std::vector<uint8_t> replace(static_cast<size_t>(length), 0);
  for (int64_t p : mix.positions)
    if (p >= 0 && p < length && !mask.contains(p)) replace[static_cast<size_t>(p)] = 1;
  return replace;
}

Var mix_embeddings(Tape& t, Var h, Var u_frame, const SpanSet& mix, const SpanSet& mask) {
  const Tensor& hv = t.val(h);
  const Tensor& uv = t.val(u_frame);
  if (hv.rows() != uv.rows() || hv.cols() != uv.cols())
    throw ShapeError("mix_embeddings: alignment error, H " + hv.shape_str() + " vs U " + uv.shape_str());
  return t.mix_rows(h, u_frame, mix_replace_pattern(hv.rows(), mix, mask));
}

}  // namespace speechut
