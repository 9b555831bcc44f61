#pragma once

#include <optional>
#include <string>
#include <vector>

#include "speechut/ctc.hpp"
#include "speechut/inference.hpp"

namespace speechut {

struct BeamWeights {
  double w_ed = 0.8;
  double w_ctc = 0.2;
  double w_lm = 0.0;
};

struct BeamOpts {
  int beam = 10;
  int64_t max_len = 200;           // hard cap on generated tokens
  bool length_normalize = false;   // divide finished scores by length
  int nbest = 1;
};

// Partial or finished decode. The fused score is always reconstructible from
// the stored per-source parts and the weights.
struct Hypothesis {
  std::vector<int> tokens;  // generated tokens, BOS/EOS excluded
  double att = 0.0;         // attention-decoder log-prob
  double ctc = 0.0;         // CTC prefix log-prob part
  double lm = 0.0;          // LM log-prob
  double fused = 0.0;
  bool finished = false;
};

struct BeamResult {
  Hypothesis best;
  std::vector<Hypothesis> nbest;
  bool finished_found = false;  // false: length cap hit, best is unfinished
};

double fused_score(const Hypothesis& h, const BeamWeights& w);

// Length-synchronous joint beam search. `att` scores every expansion; the
// CTC part (when ctc_logprobs given and w_ctc > 0) uses prefix-score deltas
// with the exact-sequence probability at EOS; `lm` is shallow fusion.
BeamResult beam_search(StepScorer& att, const Tensor* ctc_logprobs, StepScorer* lm,
                       const BeamWeights& weights, const BeamOpts& opts);

// w_lm * log p_LM(next | prefix-state row): the fusion increment for one step.
double shallow_fusion_score(const std::vector<double>& lm_row, int next_token, double w_lm);

// ---- evaluation ----
// Levenshtein word edits over reference words; rates in [0, ...], 0 is exact.
double evaluate_wer(const std::vector<std::string>& hyps, const std::vector<std::string>& refs);
// corpus-level 4-gram BLEU with brevity penalty, in [0, 100]
double evaluate_bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs);

// ---- character language model (decoder-only, no cross-attention) ----
struct CharLmConfig {
  int64_t d_model = 48;
  int64_t d_ffn = 96;
  int n_layers = 2;
  int n_heads = 4;
  int vocab = TextVocab().size();
  int rel_buckets = 16;
  int rel_max_distance = 64;

  std::string to_text() const;
  static CharLmConfig from_text(const std::string& text);
};

class CharLm {
 public:
  CharLm(CharLmConfig cfg, uint64_t seed);
  CharLm(CharLmConfig cfg, Params params);

  CharLmConfig cfg;
  Params params;

  // training-path logits for a BOS-started prefix
  Var logits(Tape& t, const std::vector<int>& prefix);
  // next-token scorer for shallow fusion
  std::unique_ptr<StepScorer> scorer();
};

// teacher-forced LM training on raw texts; returns the per-step mean NLL trace
std::vector<double> train_char_lm(CharLm& lm, const std::vector<std::string>& texts,
                                  int64_t steps, double peak_lr, uint64_t seed);

}  // namespace speechut
