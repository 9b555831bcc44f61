#pragma once

#include "speechut/model.hpp"

namespace speechut {

// Generic token-to-token encoder-decoder on the shared transformer blocks.
// Used for the T2U generator, its reversed U2T twin, and (decoder-only, via
// an empty context) related probes. BOS/EOS live one and two past the raw
// target vocabulary.
struct Seq2SeqConfig {
  int64_t d_model = 48;
  int64_t d_ffn = 96;
  int n_enc = 2;
  int n_dec = 2;
  int n_heads = 4;
  int src_vocab = 0;
  int tgt_vocab = 0;  // raw symbols; BOS/EOS appended internally
  int rel_buckets = 16;
  int rel_max_distance = 64;
  int64_t max_positions = 1024;

  void validate() const;
  std::string to_text() const;
  static Seq2SeqConfig from_text(const std::string& text);
};

class Seq2Seq {
 public:
  Seq2Seq(Seq2SeqConfig cfg, uint64_t seed);
  Seq2Seq(Seq2SeqConfig cfg, Params params);

  Seq2SeqConfig cfg;
  Params params;

  int bos() const { return cfg.tgt_vocab; }
  int eos() const { return cfg.tgt_vocab + 1; }
  int tgt_total() const { return cfg.tgt_vocab + 2; }

  Var encode(Tape& t, const std::vector<int>& src);
  // causal logits [|prefix| x tgt_total]; prefix over target ids, BOS first
  Var decode_logits(Tape& t, Var ctx, const std::vector<int>& prefix);
};

Params init_seq2seq_params(const Seq2SeqConfig& cfg, uint64_t seed);

}  // namespace speechut
