#pragma once

#include <vector>

#include "speechut/autodiff.hpp"

namespace speechut::ctc {

// Interleaved-blank lattice for one (logprobs, target) pair. Kept around so
// tests can inspect the alpha table; the loss op below builds one internally.
struct CtcLattice {
  std::vector<int> extended;       // blank, y1, blank, y2, ..., blank (length 2|Y|+1)
  std::vector<double> log_alpha;   // [T' x (2|Y|+1)], row-major
  int64_t t_len = 0;
  double nll = kPosInf;
  bool feasible = false;
};

// Feasibility: a target needs |Y| + (#adjacent repeats) frames at minimum.
int64_t min_frames_for(const std::vector<int>& target);

// Forward DP in log space over already log-normalized rows. blank = last
// column index of logprobs. Infeasible targets yield +inf, flagged.
CtcLattice ctc_forward(const Tensor& logprobs, const std::vector<int>& target);

struct CtcLossResult {
  Var loss;       // scalar; +inf when infeasible (no gradient flows then)
  bool feasible;
};

// Differentiable CTC NLL. Gradient w.r.t. the logprob entries comes from the
// standard alpha-beta occupancy identity.
CtcLossResult ctc_loss(Tape& tape, Var logprobs, const std::vector<int>& target);

// Test oracle: exhaustively enumerates all (V+1)^T alignments, collapses each
// and sums the probability of those matching the target. Independent of the
// DP above by construction; refuses inputs beyond the stated caps.
double ctc_oracle(const Tensor& logprobs, const std::vector<int>& target);

// Per-frame argmax, collapse repeats, drop blanks.
std::vector<int> ctc_greedy_decode(const Tensor& logprobs);

// Incremental prefix scoring (blank/non-blank split accumulators).
// prefix_logprob = log P(collapsed output starts with the prefix);
// complete_logprob = log P(collapsed output equals the prefix exactly).
class CtcPrefixScorer {
 public:
  explicit CtcPrefixScorer(const Tensor& logprobs);

  struct State {
    std::vector<double> r_n;  // log mass: collapse == prefix, last frame is the final symbol
    std::vector<double> r_b;  // log mass: collapse == prefix, last frame blank
    double psi = 0.0;         // log P(starts with prefix)
    int last = -1;
  };

  State initial() const;
  State extend(const State& s, int token) const;

  static double prefix_logprob(const State& s) { return s.psi; }
  double complete_logprob(const State& s) const;

  int64_t frames() const { return t_len_; }
  int vocab() const { return vocab_; }  // non-blank vocabulary size

 private:
  Tensor logp_;
  int64_t t_len_ = 0;
  int vocab_ = 0;
  int blank_ = 0;
};

// One-shot convenience: log P(output starts with prefix).
double ctc_prefix_score(const Tensor& logprobs, const std::vector<int>& prefix);

}  // namespace speechut::ctc
