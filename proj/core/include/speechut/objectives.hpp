#pragma once

#include <string>
#include <vector>

#include "speechut/corruption.hpp"
#include "speechut/ctc.hpp"
#include "speechut/model.hpp"

namespace speechut {

// Reported per-step loss record. `total` always satisfies the weighted-sum
// identity over the stored components.
struct LossBreakdown {
  double s2u_h = 0.0;
  double s2u_c = 0.0;
  double u2t_ce = 0.0;
  double u2t_ctc = 0.0;
  double mum = 0.0;
  double lambda = 0.0;
  double gamma = 0.0;
  double total = 0.0;

  double s2u() const { return s2u_h + s2u_c; }
  double u2t() const { return u2t_ce + u2t_ctc; }
  std::string to_line(int64_t step, double lr) const;  // line-oriented log record
};

// total = (s2u_h + s2u_c) + lambda * (u2t_ce + u2t_ctc) + gamma * mum.
// Non-finite parts are a training-divergence error.
LossBreakdown combine(double s2u_h, double s2u_c, double u2t_ce, double u2t_ctc, double mum,
                      double lambda, double gamma);

struct S2ULoss {
  Var h_term;  // masked-position NLL under the cosine head (sum over M)
  Var c_term;  // masked-position NLL under the shared W^u head (sum over M)
  int64_t masked = 0;
};

// Eq.-1 style pair of masked-prediction losses. h is the speech-encoder
// output, c_s the unit-encoder output on the (possibly mixed) speech path,
// z_frame the frame-aligned target units.
S2ULoss loss_s2u(Tape& t, Model& m, Var h, Var c_s, const std::vector<int>& z_frame, const SpanSet& mask);

// Token-summed teacher-forced NLL of the target (which includes EOS).
Var loss_u2t_ce(Tape& t, Var decoder_logits, const std::vector<int>& target, double smooth_eps = 0.0);

struct U2TLoss {
  Var ce;
  Var ctc;  // zero when disabled; +inf (flagged) when infeasible
  bool ctc_enabled = false;
  bool ctc_feasible = true;
  Var total;
};

// CE plus, when enabled, CTC NLL against the same target.
U2TLoss loss_u2t(Tape& t, Var decoder_logits, std::optional<Var> ctc_logprobs,
                 const std::vector<int>& target, bool enable_ctc, double smooth_eps = 0.0);

struct MUMLoss {
  Var term;  // masked-position NLL under the shared W^u head (sum over M)
  int64_t masked = 0;
};

// z is the uncorrupted unit sequence; c_u came from encoding corrupt_units(z, mask).
MUMLoss loss_mum(Tape& t, Model& m, Var c_u, const std::vector<int>& z, const SpanSet& mask);

}  // namespace speechut
