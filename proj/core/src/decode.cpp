#include "speechut/decode.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "speechut/trainer.hpp"

namespace speechut {

double fused_score(const Hypothesis& h, const BeamWeights& w) {
  return w.w_ed * h.att + w.w_ctc * h.ctc + w.w_lm * h.lm;
}

double shallow_fusion_score(const std::vector<double>& lm_row, int next_token, double w_lm) {
  if (w_lm == 0.0) return 0.0;
  if (next_token < 0 || next_token >= static_cast<int>(lm_row.size()))
    throw VocabError("shallow_fusion_score: token out of LM vocabulary");
  return w_lm * lm_row[static_cast<size_t>(next_token)];
}

namespace {

struct LiveHyp {
  Hypothesis hyp;
  StepScorer::StatePtr att_state;
  std::vector<double> att_row;
  StepScorer::StatePtr lm_state;
  std::vector<double> lm_row;
  std::optional<ctc::CtcPrefixScorer::State> ctc_state;
};

}  // namespace

BeamResult beam_search(StepScorer& att, const Tensor* ctc_logprobs, StepScorer* lm,
                       const BeamWeights& weights, const BeamOpts& opts) {
  if (opts.beam < 1) throw ContractError("beam_search: beam must be >= 1");
  if (weights.w_ed < 0 || weights.w_ctc < 0 || weights.w_lm < 0)
    throw ContractError("beam_search: weights must be non-negative");
  const bool use_ctc = ctc_logprobs != nullptr && weights.w_ctc > 0.0;
  const bool use_lm = lm != nullptr && weights.w_lm > 0.0;
  std::optional<ctc::CtcPrefixScorer> ctc_scorer;
  if (use_ctc) ctc_scorer.emplace(*ctc_logprobs);

  const int vocab = att.vocab();
  const int eos = att.eos();
  const int bos = att.bos();

  std::vector<LiveHyp> beam;
  {
    LiveHyp root;
    auto [st, row] = att.advance(att.start(), bos);
    root.att_state = st;
    root.att_row = std::move(row);
    if (use_lm) {
      auto [ls, lrow] = lm->advance(lm->start(), lm->bos());
      root.lm_state = ls;
      root.lm_row = std::move(lrow);
    }
    if (use_ctc) root.ctc_state = ctc_scorer->initial();
    beam.push_back(std::move(root));
  }

  std::vector<Hypothesis> finished;
  auto norm = [&](const Hypothesis& h) {
    return opts.length_normalize ? h.fused / std::max<size_t>(1, h.tokens.size() + 1) : h.fused;
  };

  for (int64_t step = 0; step <= opts.max_len && !beam.empty(); ++step) {
    struct Cand {
      size_t parent;
      int token;
      Hypothesis hyp;
    };
    std::vector<Cand> cands;
    for (size_t pi = 0; pi < beam.size(); ++pi) {
      const LiveHyp& parent = beam[pi];
      for (int tok = 0; tok < vocab; ++tok) {
        if (tok == bos) continue;
        Hypothesis h = parent.hyp;
        h.att += parent.att_row[static_cast<size_t>(tok)];
        if (use_lm) h.lm += parent.lm_row[static_cast<size_t>(tok)];
        if (use_ctc) {
          if (tok == eos)
            h.ctc = ctc_scorer->complete_logprob(*parent.ctc_state);
          else if (tok < ctc_scorer->vocab())
            h.ctc = ctc::CtcPrefixScorer::prefix_logprob(ctc_scorer->extend(*parent.ctc_state, tok));
          else
            h.ctc = kNegInf;  // specials other than EOS cannot be CTC emissions
        }
        if (tok == eos) {
          h.finished = true;
        } else {
          h.tokens.push_back(tok);
        }
        h.fused = fused_score(h, weights);
        if (!std::isfinite(h.fused)) continue;
        cands.push_back(Cand{pi, tok, std::move(h)});
      }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Cand& a, const Cand& b) { return a.hyp.fused > b.hyp.fused; });

    // only the top-B candidates survive; a finished hypothesis consumes its
    // slot, which makes beam=1 exactly greedy
    std::vector<LiveHyp> next_beam;
    int taken = 0;
    for (const Cand& c : cands) {
      if (taken >= opts.beam) break;
      ++taken;
      if (c.hyp.finished) {
        finished.push_back(c.hyp);
        continue;
      }
      LiveHyp child;
      child.hyp = c.hyp;
      const LiveHyp& parent = beam[c.parent];
      auto [st, row] = att.advance(parent.att_state, c.token);
      child.att_state = st;
      child.att_row = std::move(row);
      if (use_lm) {
        auto [ls, lrow] = lm->advance(parent.lm_state, c.token);
        child.lm_state = ls;
        child.lm_row = std::move(lrow);
      }
      if (use_ctc) child.ctc_state = ctc_scorer->extend(*parent.ctc_state, c.token);
      next_beam.push_back(std::move(child));
    }
    beam = std::move(next_beam);

    // fused increments are non-positive, so once the best finished hypothesis
    // beats everything alive, no extension can overtake it
    if (!finished.empty() && !beam.empty()) {
      const double best_fin = norm(*std::max_element(finished.begin(), finished.end(),
                                                     [&](const Hypothesis& a, const Hypothesis& b) {
                                                       return norm(a) < norm(b);
                                                     }));
      const double best_live = norm(std::max_element(beam.begin(), beam.end(),
                                                     [&](const LiveHyp& a, const LiveHyp& b) {
                                                       return norm(a.hyp) < norm(b.hyp);
                                                     })
                                        ->hyp);
      if (best_live <= best_fin) break;
    }
  }

  BeamResult result;
  result.finished_found = !finished.empty();
  std::vector<Hypothesis> pool = finished;
  if (pool.empty())
    for (const LiveHyp& lh : beam) pool.push_back(lh.hyp);
  if (pool.empty()) throw ContractError("beam_search: no hypotheses (max_len 0 with empty beam?)");
  std::stable_sort(pool.begin(), pool.end(),
                   [&](const Hypothesis& a, const Hypothesis& b) { return norm(a) > norm(b); });
  result.best = pool.front();
  for (size_t i = 0; i < pool.size() && static_cast<int>(i) < opts.nbest; ++i)
    result.nbest.push_back(pool[i]);
  return result;
}

namespace {

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

size_t edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<size_t> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = j;
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= m; ++j) {
      const size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

double evaluate_wer(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  if (refs.empty()) throw InputError("evaluate_wer: empty reference set");
  if (hyps.size() != refs.size()) throw InputError("evaluate_wer: hypothesis/reference count mismatch");
  size_t edits = 0, ref_words = 0;
  for (size_t i = 0; i < refs.size(); ++i) {
    const auto r = split_words(refs[i]);
    const auto h = split_words(hyps[i]);
    edits += edit_distance(h, r);
    ref_words += r.size();
  }
  if (ref_words == 0) throw InputError("evaluate_wer: references contain no words");
  return static_cast<double>(edits) / static_cast<double>(ref_words);
}

double evaluate_bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  if (refs.empty()) throw InputError("evaluate_bleu: empty reference set");
  if (hyps.size() != refs.size()) throw InputError("evaluate_bleu: hypothesis/reference count mismatch");
  double log_prec_sum = 0.0;
  size_t hyp_len = 0, ref_len = 0;
  for (int n = 1; n <= 4; ++n) {
    size_t matched = 0, total = 0;
    for (size_t i = 0; i < refs.size(); ++i) {
      const auto h = split_words(hyps[i]);
      const auto r = split_words(refs[i]);
      if (n == 1) {
        hyp_len += h.size();
        ref_len += r.size();
      }
      if (h.size() < static_cast<size_t>(n)) continue;
      std::map<std::vector<std::string>, size_t> ref_counts;
      for (size_t j = 0; j + n <= r.size(); ++j)
        ++ref_counts[std::vector<std::string>(r.begin() + j, r.begin() + j + n)];
      std::map<std::vector<std::string>, size_t> hyp_counts;
      for (size_t j = 0; j + n <= h.size(); ++j)
        ++hyp_counts[std::vector<std::string>(h.begin() + j, h.begin() + j + n)];
      for (const auto& [gram, cnt] : hyp_counts) {
        total += cnt;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matched += std::min(cnt, it->second);
      }
    }
    if (total == 0 || matched == 0) return 0.0;
    log_prec_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
  }
  const double bp = hyp_len >= ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref_len) / std::max<size_t>(1, hyp_len));
  return 100.0 * bp * std::exp(log_prec_sum / 4.0);
}

std::string CharLmConfig::to_text() const {
  std::ostringstream os;
  os << "lm.d_model = " << d_model << "\n";
  os << "lm.d_ffn = " << d_ffn << "\n";
  os << "lm.n_layers = " << n_layers << "\n";
  os << "lm.n_heads = " << n_heads << "\n";
  os << "lm.vocab = " << vocab << "\n";
  os << "lm.rel_buckets = " << rel_buckets << "\n";
  os << "lm.rel_max_distance = " << rel_max_distance << "\n";
  return os.str();
}

CharLmConfig CharLmConfig::from_text(const std::string& text) {
  CharLmConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "lm.d_model") c.d_model = std::stoll(val);
    else if (key == "lm.d_ffn") c.d_ffn = std::stoll(val);
    else if (key == "lm.n_layers") c.n_layers = std::stoi(val);
    else if (key == "lm.n_heads") c.n_heads = std::stoi(val);
    else if (key == "lm.vocab") c.vocab = std::stoi(val);
    else if (key == "lm.rel_buckets") c.rel_buckets = std::stoi(val);
    else if (key == "lm.rel_max_distance") c.rel_max_distance = std::stoi(val);
  }
  return c;
}

namespace {
BlockDims lm_dims(const CharLmConfig& c) {
  return BlockDims{c.d_model, c.d_ffn, c.n_heads, c.rel_buckets, c.rel_max_distance};
}

Params init_char_lm_params(const CharLmConfig& cfg, uint64_t seed) {
  Params p;
  Rng rng(derive_seed(seed, "charlm-init"));
  auto randn = [&](std::vector<int64_t> shape, double stdev) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& x : t.v) x = stdev * rng.normal();
    return t;
  };
  p.add("lm.embed", randn({cfg.vocab, cfg.d_model}, 1.0));
  add_stack_params(p, "lm", cfg.n_layers, lm_dims(cfg), false, rng);
  p.add("lm.out.w", randn({cfg.vocab, cfg.d_model}, 1.0 / std::sqrt(static_cast<double>(cfg.d_model))));
  p.add("lm.out.b", Tensor::zeros({cfg.vocab}));
  return p;
}
}  // namespace

CharLm::CharLm(CharLmConfig c, uint64_t seed) : cfg(c), params(init_char_lm_params(c, seed)) {}

CharLm::CharLm(CharLmConfig c, Params ps) : cfg(c), params(std::move(ps)) {}

Var CharLm::logits(Tape& t, const std::vector<int>& prefix) {
  if (prefix.empty() || prefix[0] != TextVocab().bos())
    throw InputError("char lm: prefix must begin with BOS");
  Var x = t.embedding(t.param(params.at("lm.embed")), prefix);
  x = decoder_stack_fwd(t, params, "lm", cfg.n_layers, lm_dims(cfg), x, std::nullopt);
  return t.add_rowvec(t.matmul_nt(x, t.param(params.at("lm.out.w"))), t.param(params.at("lm.out.b")));
}

std::unique_ptr<StepScorer> CharLm::scorer() {
  TextVocab tv;
  IncrementalDecoder::Spec spec;
  spec.params = &params;
  spec.dims = lm_dims(cfg);
  spec.n_layers = cfg.n_layers;
  spec.stack_prefix = "lm";
  spec.embed_name = "lm.embed";
  spec.out_w = "lm.out.w";
  spec.out_b = "lm.out.b";
  spec.vocab = cfg.vocab;
  spec.bos = tv.bos();
  spec.eos = tv.eos();
  return std::make_unique<IncrementalDecoder>(std::move(spec), Tensor::zeros({0, cfg.d_model}));
}

std::vector<double> train_char_lm(CharLm& lm, const std::vector<std::string>& texts,
                                  int64_t steps, double peak_lr, uint64_t seed) {
  if (texts.empty()) throw InputError("train_char_lm: no texts");
  TextVocab tv;
  AdamState state;
  std::vector<double> trace;
  Rng rng(derive_seed(seed, "lm-order"));
  for (int64_t step = 0; step < steps; ++step) {
    const double lr = lr_linear(step, std::max<int64_t>(1, steps / 10), steps, peak_lr);
    double loss_sum = 0.0;
    const int batch = 4;
    for (int b = 0; b < batch; ++b) {
      const std::string& text = texts[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(texts.size())))];
      std::vector<int> ids = tv.encode(text);
      std::vector<int> prefix = {tv.bos()};
      prefix.insert(prefix.end(), ids.begin(), ids.end());
      std::vector<int> target = ids;
      target.push_back(tv.eos());
      Tape t;
      Var lg = lm.logits(t, prefix);
      Var loss = t.scale(t.cross_entropy(lg, target, 0.0), 1.0 / static_cast<double>(target.size()));
      loss_sum += t.val(loss).scalar_value();
      t.backward(t.scale(loss, 1.0 / batch));
    }
    adam_update(lm.params, state, lr, 0.9, 0.98, 1e-8, 0.0);
    trace.push_back(loss_sum / batch);
  }
  return trace;
}

}  // namespace speechut
