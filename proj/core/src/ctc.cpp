#include "speechut/ctc.hpp"

#include <cmath>
#include <memory>

namespace speechut::ctc {

namespace {

void check_logprobs(const Tensor& logprobs, const std::vector<int>& target) {
  if (logprobs.rank() != 2) throw ShapeError("ctc: logprobs must be [T' x V+1]");
  if (logprobs.cols() < 2) throw ShapeError("ctc: need at least one symbol plus blank");
  const int blank = static_cast<int>(logprobs.cols()) - 1;
  for (int y : target)
    if (y < 0 || y >= blank)
      throw VocabError("ctc: target id " + std::to_string(y) + " out of non-blank vocabulary " + std::to_string(blank));
}

}  // namespace

int64_t min_frames_for(const std::vector<int>& target) {
  int64_t repeats = 0;
  for (size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++repeats;
  return static_cast<int64_t>(target.size()) + repeats;
}

CtcLattice ctc_forward(const Tensor& logprobs, const std::vector<int>& target) {
  check_logprobs(logprobs, target);
  const int64_t t_len = logprobs.rows();
  const int blank = static_cast<int>(logprobs.cols()) - 1;
  const int64_t s_len = 2 * static_cast<int64_t>(target.size()) + 1;

  CtcLattice lat;
  lat.t_len = t_len;
  lat.extended.resize(static_cast<size_t>(s_len));
  for (int64_t s = 0; s < s_len; ++s)
    lat.extended[static_cast<size_t>(s)] = (s % 2 == 0) ? blank : target[static_cast<size_t>(s / 2)];

  if (t_len < min_frames_for(target)) {
    lat.feasible = false;
    lat.nll = kPosInf;
    return lat;
  }
  lat.feasible = true;
  lat.log_alpha.assign(static_cast<size_t>(t_len * s_len), kNegInf);
  auto alpha = [&](int64_t t, int64_t s) -> double& { return lat.log_alpha[static_cast<size_t>(t * s_len + s)]; };

  alpha(0, 0) = logprobs.at(0, lat.extended[0]);
  if (s_len > 1) alpha(0, 1) = logprobs.at(0, lat.extended[1]);
  for (int64_t t = 1; t < t_len; ++t) {
    for (int64_t s = 0; s < s_len; ++s) {
      double m = alpha(t - 1, s);
      if (s >= 1) m = logsumexp2(m, alpha(t - 1, s - 1));
      // skip a blank between distinct symbols
      if (s >= 2 && lat.extended[static_cast<size_t>(s)] != blank &&
          lat.extended[static_cast<size_t>(s)] != lat.extended[static_cast<size_t>(s - 2)])
        m = logsumexp2(m, alpha(t - 1, s - 2));
      if (m != kNegInf) alpha(t, s) = m + logprobs.at(t, lat.extended[static_cast<size_t>(s)]);
    }
  }
  double logp = alpha(t_len - 1, s_len - 1);
  if (s_len > 1) logp = logsumexp2(logp, alpha(t_len - 1, s_len - 2));
  lat.nll = -logp;
  return lat;
}

CtcLossResult ctc_loss(Tape& tape, Var logprobs, const std::vector<int>& target) {
  const Tensor& lp = tape.val(logprobs);
  CtcLattice lat = ctc_forward(lp, target);
  if (!lat.feasible) {
    Var v = tape.custom(Tensor::scalar(kPosInf), {logprobs}, [](Tape&, int32_t) {}, /*check_finite=*/false);
    return {v, false};
  }

  const double nll = lat.nll;
  auto lat_ptr = std::make_shared<CtcLattice>(std::move(lat));
  std::vector<int> tgt = target;
  Var v = tape.custom(Tensor::scalar(nll), {logprobs},
                      [logprobs, lat_ptr, tgt, nll](Tape& t, int32_t self) {
    if (!t.node_requires_grad(logprobs.ix)) return;
    const double gscale = t.grad_buf(self).v[0];
    const Tensor& lp2 = t.value_at(logprobs.ix);
    const int64_t t_len = lp2.rows();
    const int64_t s_len = static_cast<int64_t>(lat_ptr->extended.size());
    const int blank = static_cast<int>(lp2.cols()) - 1;
    const double log_total = -nll;

    // beta[t][s]: log mass of continuations strictly after emitting at (t,s)
    std::vector<double> beta(static_cast<size_t>(t_len * s_len), kNegInf);
    auto bt = [&](int64_t tt, int64_t s) -> double& { return beta[static_cast<size_t>(tt * s_len + s)]; };
    bt(t_len - 1, s_len - 1) = 0.0;
    if (s_len > 1) bt(t_len - 1, s_len - 2) = 0.0;
    for (int64_t tt = t_len - 2; tt >= 0; --tt) {
      for (int64_t s = 0; s < s_len; ++s) {
        double m = kNegInf;
        if (bt(tt + 1, s) != kNegInf)
          m = logsumexp2(m, bt(tt + 1, s) + lp2.at(tt + 1, lat_ptr->extended[static_cast<size_t>(s)]));
        if (s + 1 < s_len && bt(tt + 1, s + 1) != kNegInf)
          m = logsumexp2(m, bt(tt + 1, s + 1) + lp2.at(tt + 1, lat_ptr->extended[static_cast<size_t>(s + 1)]));
        if (s + 2 < s_len && lat_ptr->extended[static_cast<size_t>(s + 2)] != blank &&
            lat_ptr->extended[static_cast<size_t>(s + 2)] != lat_ptr->extended[static_cast<size_t>(s)] &&
            bt(tt + 1, s + 2) != kNegInf)
          m = logsumexp2(m, bt(tt + 1, s + 2) + lp2.at(tt + 1, lat_ptr->extended[static_cast<size_t>(s + 2)]));
        bt(tt, s) = m;
      }
    }

    Tensor& dl = t.grad_buf(logprobs.ix);
    for (int64_t tt = 0; tt < t_len; ++tt) {
      for (int64_t s = 0; s < s_len; ++s) {
        const double a = lat_ptr->log_alpha[static_cast<size_t>(tt * s_len + s)];
        if (a == kNegInf || bt(tt, s) == kNegInf) continue;
        const double occ = std::exp(a + bt(tt, s) - log_total);  // d logp / d logprob[tt, sym]
        dl.at(tt, lat_ptr->extended[static_cast<size_t>(s)]) -= gscale * occ;  // loss = -logp
      }
    }
  }, /*check_finite=*/true);
  return {v, true};
}

double ctc_oracle(const Tensor& logprobs, const std::vector<int>& target) {
  if (logprobs.rank() != 2) throw ShapeError("ctc_oracle: logprobs must be rank-2");
  const int64_t t_len = logprobs.rows();
  const int symbols = static_cast<int>(logprobs.cols());  // includes blank
  if (t_len > 8 || symbols - 1 > 4)
    throw ContractError("ctc_oracle: refusing instance beyond caps (T' <= 8, V <= 4)");
  const int blank = symbols - 1;

  double total = kNegInf;
  std::vector<int> path(static_cast<size_t>(t_len), 0);
  const int64_t n_paths = [&] {
    int64_t n = 1;
    for (int64_t i = 0; i < t_len; ++i) n *= symbols;
    return n;
  }();
  for (int64_t code = 0; code < n_paths; ++code) {
    int64_t c = code;
    for (int64_t i = 0; i < t_len; ++i) {
      path[static_cast<size_t>(i)] = static_cast<int>(c % symbols);
      c /= symbols;
    }
    // collapse repeats then drop blanks
    std::vector<int> collapsed;
    int prev = -1;
    for (int s : path) {
      if (s != prev && s != blank) collapsed.push_back(s);
      prev = s;
    }
    if (collapsed != target) continue;
    double lp = 0.0;
    for (int64_t i = 0; i < t_len; ++i) lp += logprobs.at(i, path[static_cast<size_t>(i)]);
    total = logsumexp2(total, lp);
  }
  return -total;
}

std::vector<int> ctc_greedy_decode(const Tensor& logprobs) {
  if (logprobs.rank() != 2) throw ShapeError("ctc_greedy_decode: logprobs must be rank-2");
  const int blank = static_cast<int>(logprobs.cols()) - 1;
  std::vector<int> out;
  int prev = -1;
  for (int64_t t = 0; t < logprobs.rows(); ++t) {
    int best = 0;
    for (int64_t j = 1; j < logprobs.cols(); ++j)
      if (logprobs.at(t, j) > logprobs.at(t, best)) best = static_cast<int>(j);
    if (best != prev && best != blank) out.push_back(best);
    prev = best;
  }
  return out;
}

CtcPrefixScorer::CtcPrefixScorer(const Tensor& logprobs) : logp_(logprobs) {
  if (logprobs.rank() != 2 || logprobs.cols() < 2) throw ShapeError("CtcPrefixScorer: logprobs must be [T' x V+1]");
  t_len_ = logprobs.rows();
  vocab_ = static_cast<int>(logprobs.cols()) - 1;
  blank_ = vocab_;
}

CtcPrefixScorer::State CtcPrefixScorer::initial() const {
  State s;
  s.r_n.assign(static_cast<size_t>(t_len_ + 1), kNegInf);
  s.r_b.assign(static_cast<size_t>(t_len_ + 1), kNegInf);
  s.r_b[0] = 0.0;
  for (int64_t t = 1; t <= t_len_; ++t)
    s.r_b[static_cast<size_t>(t)] = s.r_b[static_cast<size_t>(t - 1)] + logp_.at(t - 1, blank_);
  s.psi = 0.0;  // every output starts with the empty prefix
  s.last = -1;
  return s;
}

CtcPrefixScorer::State CtcPrefixScorer::extend(const State& s, int token) const {
  if (token < 0 || token >= vocab_) throw VocabError("CtcPrefixScorer: token out of vocabulary");
  State n;
  n.r_n.assign(static_cast<size_t>(t_len_ + 1), kNegInf);
  n.r_b.assign(static_cast<size_t>(t_len_ + 1), kNegInf);
  n.last = token;
  double psi = kNegInf;
  for (int64_t t = 1; t <= t_len_; ++t) {
    // phi: mass of the old prefix able to start `token` at frame t
    double phi = s.r_b[static_cast<size_t>(t - 1)];
    if (token != s.last) phi = logsumexp2(phi, s.r_n[static_cast<size_t>(t - 1)]);
    const double p_tok = logp_.at(t - 1, token);
    n.r_n[static_cast<size_t>(t)] = p_tok + logsumexp2(n.r_n[static_cast<size_t>(t - 1)], phi);
    n.r_b[static_cast<size_t>(t)] =
        logp_.at(t - 1, blank_) + logsumexp2(n.r_b[static_cast<size_t>(t - 1)], n.r_n[static_cast<size_t>(t - 1)]);
    psi = logsumexp2(psi, phi + p_tok);
  }
  n.psi = psi;
  return n;
}

double CtcPrefixScorer::complete_logprob(const State& s) const {
  if (s.last == -1) return s.r_b[static_cast<size_t>(t_len_)];
  return logsumexp2(s.r_n[static_cast<size_t>(t_len_)], s.r_b[static_cast<size_t>(t_len_)]);
}

double ctc_prefix_score(const Tensor& logprobs, const std::vector<int>& prefix) {
  CtcPrefixScorer scorer(logprobs);
  CtcPrefixScorer::State st = scorer.initial();
  for (int tok : prefix) st = scorer.extend(st, tok);
  return CtcPrefixScorer::prefix_logprob(st);
}

}  // namespace speechut::ctc
