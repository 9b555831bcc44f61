#include "speechut/objectives.hpp"

#include <cmath>
#include <sstream>

namespace speechut {

std::string LossBreakdown::to_line(int64_t step, double lr) const {
  std::ostringstream os;
  os.precision(10);
  os << "step=" << step << " lr=" << lr << " s2u_h=" << s2u_h << " s2u_c=" << s2u_c
     << " u2t_ce=" << u2t_ce << " u2t_ctc=" << u2t_ctc << " mum=" << mum << " total=" << total;
  return os.str();
}

LossBreakdown combine(double s2u_h, double s2u_c, double u2t_ce, double u2t_ctc, double mum,
                      double lambda, double gamma) {
  for (double part : {s2u_h, s2u_c, u2t_ce, u2t_ctc, mum})
    if (!std::isfinite(part))
      throw NumericError("combine: non-finite loss component, training diverged");
  LossBreakdown b;
  b.s2u_h = s2u_h;
  b.s2u_c = s2u_c;
  b.u2t_ce = u2t_ce;
  b.u2t_ctc = u2t_ctc;
  b.mum = mum;
  b.lambda = lambda;
  b.gamma = gamma;
  b.total = (s2u_h + s2u_c) + lambda * (u2t_ce + u2t_ctc) + gamma * mum;
  return b;
}

namespace {

std::vector<int> mask_rows(const SpanSet& mask, int64_t t_len, const char* what) {
  std::vector<int> rows;
  rows.reserve(mask.positions.size());
  for (int64_t p : mask.positions) {
    if (p < 0 || p >= t_len)
      throw ContractError(std::string(what) + ": masked position " + std::to_string(p) +
                          " outside sequence of length " + std::to_string(t_len));
    rows.push_back(static_cast<int>(p));
  }
  return rows;
}

}  // namespace

S2ULoss loss_s2u(Tape& t, Model& m, Var h, Var c_s, const std::vector<int>& z_frame, const SpanSet& mask) {
  const int64_t t_len = t.val(h).rows();
  if (t.val(c_s).rows() != t_len || static_cast<int64_t>(z_frame.size()) != t_len)
    throw ShapeError("loss_s2u: H, C_s and frame units must share a length");
  S2ULoss out;
  out.masked = static_cast<int64_t>(mask.positions.size());
  if (out.masked == 0) {
    out.h_term = t.input(Tensor::scalar(0.0));
    out.c_term = t.input(Tensor::scalar(0.0));
    return out;
  }
  auto rows = mask_rows(mask, t_len, "loss_s2u");
  Var logp_h = t.log_softmax_rows(m.s2u_logits_cosine(t, h));
  out.h_term = t.nll_pick(logp_h, z_frame, rows);
  Var logp_c = t.log_softmax_rows(m.unit_logits(t, c_s));
  out.c_term = t.nll_pick(logp_c, z_frame, rows);
  return out;
}

Var loss_u2t_ce(Tape& t, Var decoder_logits, const std::vector<int>& target, double smooth_eps) {
  if (t.val(decoder_logits).rows() != static_cast<int64_t>(target.size()))
    throw ContractError("loss_u2t_ce: logits rows " + std::to_string(t.val(decoder_logits).rows()) +
                        " must equal target length " + std::to_string(target.size()));
  return t.cross_entropy(decoder_logits, target, smooth_eps);
}

U2TLoss loss_u2t(Tape& t, Var decoder_logits, std::optional<Var> ctc_logprobs,
                 const std::vector<int>& target, bool enable_ctc, double smooth_eps) {
  U2TLoss out;
  out.ce = loss_u2t_ce(t, decoder_logits, target, smooth_eps);
  out.ctc_enabled = enable_ctc;
  if (!enable_ctc) {
    out.ctc = t.input(Tensor::scalar(0.0));
    out.total = out.ce;
    return out;
  }
  if (!ctc_logprobs) throw ContractError("loss_u2t: CTC enabled but no CTC log-probs given");
  // CTC target excludes EOS (it is a decoder artifact, not an emission)
  std::vector<int> ctc_target = target;
  if (!ctc_target.empty() && ctc_target.back() == TextVocab().eos()) ctc_target.pop_back();
  auto res = ctc::ctc_loss(t, *ctc_logprobs, ctc_target);
  out.ctc = res.loss;
  out.ctc_feasible = res.feasible;
  out.total = res.feasible ? t.add(out.ce, out.ctc) : out.ce;
  return out;
}

MUMLoss loss_mum(Tape& t, Model& m, Var c_u, const std::vector<int>& z, const SpanSet& mask) {
  const int64_t len = t.val(c_u).rows();
  if (static_cast<int64_t>(z.size()) != len)
    throw ShapeError("loss_mum: C_u and unit targets must share a length");
  MUMLoss out;
  out.masked = static_cast<int64_t>(mask.positions.size());
  if (out.masked == 0) {
    out.term = t.input(Tensor::scalar(0.0));
    return out;
  }
  auto rows = mask_rows(mask, len, "loss_mum");
  Var logp = t.log_softmax_rows(m.unit_logits(t, c_u));
  out.term = t.nll_pick(logp, z, rows);
  return out;
}

}  // namespace speechut
