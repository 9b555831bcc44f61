#include "speechut/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "speechut/checkpoint.hpp"

namespace speechut {

void TrainConfig::validate() const {
  if (schedule == "linear" && warmup_steps > total_steps)
    throw ConfigError("train: warmup must not exceed total steps");
  if (total_steps < 1) throw ConfigError("train: total steps must be positive");
  const double frac_sum = tristage_warmup + tristage_hold + tristage_decay;
  if (std::abs(frac_sum - 1.0) > 1e-9) throw ConfigError("train: tristage fractions must sum to 1");
  if (tristage_start_scale <= 0 || tristage_start_scale > 1 || tristage_end_scale <= 0 || tristage_end_scale > 1)
    throw ConfigError("train: tristage scales must lie in (0,1]");
  if (schedule != "linear" && schedule != "tristage") throw ConfigError("train: unknown schedule " + schedule);
  if (loss_mode != "mean" && loss_mode != "sum") throw ConfigError("train: loss_mode must be mean or sum");
  if (accum < 1) throw ConfigError("train: accumulation factor must be >= 1");
  if (lambda < 0 || gamma < 0) throw ConfigError("train: loss weights must be non-negative");
  if (ctc_weight < 0 || ctc_weight > 1) throw ConfigError("train: ctc weight must lie in [0,1]");
}

double lr_linear(int64_t step, int64_t warmup, int64_t total, double peak) {
  if (step < 0 || step > total) throw ContractError("lr_linear: step outside [0,total]");
  if (warmup > 0 && step <= warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (total == warmup) return step < total ? peak : 0.0;
  return peak * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

double lr_tristage(int64_t step, int64_t total, double warmup_frac, double hold_frac,
                   double decay_frac, double peak, double start_scale, double end_scale) {
  if (step < 0 || step > total) throw ContractError("lr_tristage: step outside [0,total]");
  const double w = warmup_frac * static_cast<double>(total);
  const double h = hold_frac * static_cast<double>(total);
  const double d = decay_frac * static_cast<double>(total);
  const double s = static_cast<double>(step);
  if (s < w && w > 0) return peak * (start_scale + (1.0 - start_scale) * s / w);
  if (s < w + h) return peak;
  if (d <= 0) return peak * end_scale;
  const double frac = std::min(1.0, (s - w - h) / d);
  return peak * std::exp(std::log(end_scale) * frac);
}

double schedule_lr(const TrainConfig& cfg, int64_t step) {
  if (cfg.schedule == "tristage")
    return lr_tristage(step, cfg.total_steps, cfg.tristage_warmup, cfg.tristage_hold,
                       cfg.tristage_decay, cfg.peak_lr, cfg.tristage_start_scale, cfg.tristage_end_scale);
  return lr_linear(step, cfg.warmup_steps, cfg.total_steps, cfg.peak_lr);
}

void adam_update(Params& params, AdamState& state, double lr, double beta1, double beta2,
                 double eps, double weight_decay) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params.map()) {
    auto mit = state.m.find(name);
    if (mit == state.m.end()) {
      state.m.emplace(name, Tensor::zeros(p.value.shape));
      state.v.emplace(name, Tensor::zeros(p.value.shape));
      mit = state.m.find(name);
    }
    Tensor& m = mit->second;
    Tensor& v = state.v.at(name);
    for (size_t i = 0; i < p.value.v.size(); ++i) {
      const double g = p.grad.v[i];
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient in " + name);
      m.v[i] = beta1 * m.v[i] + (1.0 - beta1) * g;
      v.v[i] = beta2 * v.v[i] + (1.0 - beta2) * g * g;
      const double mhat = m.v[i] / bc1;
      const double vhat = v.v[i] / bc2;
      p.value.v[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p.value.v[i]);
    }
    p.zero_grad();
  }
}

namespace {

std::vector<size_t> shuffled_indices(size_t n, uint64_t seed) {
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  for (size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(i)))]);
  return order;
}

}  // namespace

BatchSampler::BatchSampler(const PretrainData& data, const TrainConfig& cfg) : data_(data), cfg_(cfg) {
  if (!data.s2u.empty()) s2u_order_ = shuffled_indices(data.s2u.size(), derive_seed(cfg.seed, "s2u-order", 0));
  if (!data.u2t.empty()) u2t_order_ = shuffled_indices(data.u2t.size(), derive_seed(cfg.seed, "u2t-order", 0));
  if (!data.mum.empty()) mum_order_ = shuffled_indices(data.mum.size(), derive_seed(cfg.seed, "mum-order", 0));
}

TaskBatches BatchSampler::next() {
  TaskBatches b;
  auto take = [&](std::vector<size_t>& order, size_t& cur, uint64_t& epoch, const char* tag,
                  auto cost_fn, int64_t budget, std::vector<size_t>& out) {
    if (order.empty()) return;
    int64_t used = 0;
    while (true) {
      if (cur >= order.size()) {
        ++epoch;
        order = shuffled_indices(order.size(), derive_seed(cfg_.seed, tag, epoch));
        cur = 0;
      }
      const size_t ix = order[cur];
      const int64_t cost = cost_fn(ix);
      if (!out.empty() && used + cost > budget) break;
      out.push_back(ix);
      used += cost;
      ++cur;
      if (used >= budget) break;
    }
  };
  take(s2u_order_, s2u_cur_, s2u_epoch_, "s2u-order",
       [&](size_t i) { return static_cast<int64_t>(data_.s2u[i].wave.size()); }, cfg_.budget_s2u_samples, b.s2u);
  take(u2t_order_, u2t_cur_, u2t_epoch_, "u2t-order",
       [&](size_t i) { return static_cast<int64_t>(data_.u2t[i].text.size()) + 1; }, cfg_.budget_u2t_tokens, b.u2t);
  take(mum_order_, mum_cur_, mum_epoch_, "mum-order",
       [&](size_t i) { return static_cast<int64_t>(data_.mum[i].units.size()); }, cfg_.budget_mum_tokens, b.mum);
  return b;
}

namespace {

// Spans are sampled before any forward pass so the per-component
// normalization denominators are known up front; each example then runs
// backward on its already-weighted contribution. Because the weights are
// fixed for the whole update, splitting it into micro-batches cannot change
// the accumulated gradient.
struct PreparedS2U {
  size_t ix;
  SpanSet mask;
  SpanSet mix;
};
struct PreparedMUM {
  size_t ix;
  SpanSet mask;
};
struct PreparedStep {
  std::vector<PreparedS2U> s2u;
  std::vector<size_t> u2t;
  std::vector<PreparedMUM> mum;
  int64_t s2u_masked = 0, u2t_tokens = 0, ctc_tokens = 0, mum_masked = 0;
};

PreparedStep prepare_step(Model& m, const PretrainData& data,
                          const std::vector<TaskBatches>& micro_batches, const TrainConfig& cfg,
                          uint64_t step_seed) {
  PreparedStep prep;
  size_t s2u_counter = 0, mum_counter = 0;
  for (const TaskBatches& batch : micro_batches) {
    for (size_t ix : batch.s2u) {
      const S2UExample& ex = data.s2u[ix];
      const uint64_t ex_seed = derive_seed(step_seed, "s2u", s2u_counter++);
      const int64_t frames = m.cfg.prenet_out_len(static_cast<int64_t>(ex.wave.size()));
      if (static_cast<int64_t>(ex.frame_units.size()) != frames)
        throw ShapeError("pretrain: frame units (" + std::to_string(ex.frame_units.size()) +
                         ") do not match prenet frames (" + std::to_string(frames) + ")");
      PreparedS2U p;
      p.ix = ix;
      p.mask = sample_spans(frames, m.cfg.mask_prob, m.cfg.mask_len, derive_seed(ex_seed, "m"));
      if (cfg.enable_mix) p.mix = sample_spans(frames, m.cfg.mix_prob, m.cfg.mix_len, derive_seed(ex_seed, "r"));
      prep.s2u_masked += static_cast<int64_t>(p.mask.count());
      prep.s2u.push_back(std::move(p));
    }
    if (cfg.lambda > 0) {
      for (size_t ix : batch.u2t) {
        const U2TExample& ex = data.u2t[ix];
        prep.u2t.push_back(ix);
        prep.u2t_tokens += static_cast<int64_t>(ex.text.size()) + 1;  // + EOS
        if (cfg.enable_ctc && static_cast<int64_t>(ex.units.size()) >= 2) {
          std::vector<int> ctc_target = ex.text;
          const int64_t t_prime = static_cast<int64_t>(ex.units.size()) - 1;
          if (t_prime >= ctc::min_frames_for(ctc_target))
            prep.ctc_tokens += static_cast<int64_t>(ex.text.size()) + 1;
        }
      }
    }
    if (cfg.gamma > 0) {
      for (size_t ix : batch.mum) {
        const MUMExample& ex = data.mum[ix];
        const uint64_t ex_seed = derive_seed(step_seed, "mum", mum_counter++);
        if (ex.units.empty()) continue;
        PreparedMUM p;
        p.ix = ix;
        p.mask = sample_spans(static_cast<int64_t>(ex.units.size()), m.cfg.mask_prob, m.cfg.mask_len,
                              derive_seed(ex_seed, "m"));
        prep.mum_masked += static_cast<int64_t>(p.mask.count());
        prep.mum.push_back(std::move(p));
      }
    }
  }
  return prep;
}

struct StepSums {
  double s2u_h = 0, s2u_c = 0, u2t_ce = 0, u2t_ctc = 0, mum = 0;
};

// forward+backward over every prepared example; gradients accumulate into
// param.grad with the Eq.-9 weights already applied
StepSums run_prepared(Model& m, const PretrainData& data, const PreparedStep& prep,
                      const TrainConfig& cfg) {
  StepSums sums;
  const bool mean = cfg.mean_mode();
  const double s2u_norm = mean ? 1.0 / std::max<int64_t>(1, prep.s2u_masked) : 1.0;
  const double ce_norm = mean ? 1.0 / std::max<int64_t>(1, prep.u2t_tokens) : 1.0;
  const double ctc_norm = mean ? 1.0 / std::max<int64_t>(1, prep.ctc_tokens) : 1.0;
  const double mum_norm = mean ? 1.0 / std::max<int64_t>(1, prep.mum_masked) : 1.0;

  for (const PreparedS2U& pex : prep.s2u) {
    const S2UExample& ex = data.s2u[pex.ix];
    Tape t;
    Var x = m.speech_prenet(t, ex.wave);
    Var xc = corrupt_speech(t, x, pex.mask, m.speech_mask_embedding(t));
    Var h = m.speech_encoder(t, xc);
    Var enc_in = h;
    if (cfg.enable_mix) {
      Var u_frame = m.unit_prenet(t, ex.frame_units);
      enc_in = mix_embeddings(t, h, u_frame, pex.mix, pex.mask);
    }
    Var c_s = m.unit_encoder(t, enc_in);
    S2ULoss l = loss_s2u(t, m, h, c_s, ex.frame_units, pex.mask);
    if (l.masked == 0) continue;
    sums.s2u_h += t.val(l.h_term).scalar_value();
    sums.s2u_c += t.val(l.c_term).scalar_value();
    t.backward(t.scale(t.add(l.h_term, l.c_term), s2u_norm));
  }

  for (size_t ix : prep.u2t) {
    const U2TExample& ex = data.u2t[ix];
    Tape t;
    Var u = m.unit_prenet(t, ex.units);
    Var c_u = m.unit_encoder(t, u);
    std::vector<int> prefix = {TextVocab().bos()};
    prefix.insert(prefix.end(), ex.text.begin(), ex.text.end());
    std::vector<int> target = ex.text;
    target.push_back(TextVocab().eos());
    Var logits = m.text_decoder(t, c_u, prefix);
    std::optional<Var> ctc_lp;
    const bool want_ctc = cfg.enable_ctc && static_cast<int64_t>(ex.units.size()) >= 2;
    if (want_ctc) ctc_lp = m.ctc_head(t, c_u);
    U2TLoss l = loss_u2t(t, logits, ctc_lp, target, want_ctc, cfg.label_smoothing);
    sums.u2t_ce += t.val(l.ce).scalar_value();
    Var weighted = t.scale(l.ce, cfg.lambda * ce_norm);
    if (l.ctc_enabled && l.ctc_feasible) {
      sums.u2t_ctc += t.val(l.ctc).scalar_value();
      weighted = t.add(weighted, t.scale(l.ctc, cfg.lambda * ctc_norm));
    }
    t.backward(weighted);
  }

  for (const PreparedMUM& pex : prep.mum) {
    const MUMExample& ex = data.mum[pex.ix];
    Tape t;
    std::vector<int> corrupted = corrupt_units(ex.units, pex.mask, m.cfg.mask_unit_id());
    Var u = m.unit_prenet(t, corrupted);
    Var c_u = m.unit_encoder(t, u);
    MUMLoss l = loss_mum(t, m, c_u, ex.units, pex.mask);
    if (l.masked == 0) continue;
    sums.mum += t.val(l.term).scalar_value();
    t.backward(t.scale(l.term, cfg.gamma * mum_norm));
  }
  return sums;
}

}  // namespace

LossBreakdown pretrain_step(Model& m, const PretrainData& data,
                            const std::vector<TaskBatches>& micro_batches, const TrainConfig& cfg,
                            AdamState& state, double lr, uint64_t step_seed) {
  PreparedStep prep = prepare_step(m, data, micro_batches, cfg, step_seed);
  StepSums sums = run_prepared(m, data, prep, cfg);

  const bool mean = cfg.mean_mode();
  const double s2u_h = mean ? sums.s2u_h / std::max<int64_t>(1, prep.s2u_masked) : sums.s2u_h;
  const double s2u_c = mean ? sums.s2u_c / std::max<int64_t>(1, prep.s2u_masked) : sums.s2u_c;
  const double u2t_ce = mean ? sums.u2t_ce / std::max<int64_t>(1, prep.u2t_tokens) : sums.u2t_ce;
  const double u2t_ctc = mean ? sums.u2t_ctc / std::max<int64_t>(1, prep.ctc_tokens) : sums.u2t_ctc;
  const double mum = mean ? sums.mum / std::max<int64_t>(1, prep.mum_masked) : sums.mum;
  LossBreakdown b = combine(s2u_h, s2u_c, u2t_ce, u2t_ctc, mum, cfg.lambda, cfg.gamma);

  for (const auto& [name, p] : m.params.map())
    if (!p.grad.all_finite())
      throw NumericError("pretrain step: NaN gradient in " + name + " | " + b.to_line(state.step, lr));

  adam_update(m.params, state, lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
  return b;
}

PretrainResult pretrain(Model& m, const PretrainData& data, const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  PretrainResult result;
  BatchSampler sampler(data, cfg);
  AdamState state;
  for (int64_t step = 0; step < cfg.total_steps; ++step) {
    std::vector<TaskBatches> micro;
    for (int a = 0; a < cfg.accum; ++a) micro.push_back(sampler.next());
    const double lr = schedule_lr(cfg, step);
    const uint64_t step_seed = derive_seed(cfg.seed, "step", static_cast<uint64_t>(step));
    LossBreakdown b = pretrain_step(m, data, micro, cfg, state, lr, step_seed);
    result.trace.push_back(b);
    if (log && (step % cfg.log_every == 0 || step + 1 == cfg.total_steps))
      (*log) << b.to_line(step, lr) << "\n";
    if (cfg.save_every > 0 && !cfg.checkpoint_dir.empty() && (step + 1) % cfg.save_every == 0)
      save_checkpoint(cfg.checkpoint_dir + "/step_" + std::to_string(step + 1) + ".sutc", m.params,
                      m.cfg.to_text());
  }
  return result;
}

Var finetune_loss(Tape& t, Model& m, const LabeledExample& ex, FinetuneMode mode,
                  const TrainConfig& cfg, uint64_t ex_seed, double* ce_out, double* ctc_out) {
  Var x = m.speech_prenet(t, ex.wave);
  const int64_t frames = t.val(x).rows();
  if (cfg.finetune_mask_prob > 0) {
    SpanSet mask = sample_spans(frames, cfg.finetune_mask_prob, cfg.finetune_mask_len,
                                derive_seed(ex_seed, "ft-mask"));
    x = corrupt_speech(t, x, mask, m.speech_mask_embedding(t));
  }
  Var h = m.speech_encoder(t, x);
  Var c = m.unit_encoder(t, h);

  const double n_tokens = static_cast<double>(ex.text.size()) + 1.0;
  std::optional<Var> ce;
  if (mode != FinetuneMode::encoder_only_ctc) {
    std::vector<int> prefix = {TextVocab().bos()};
    prefix.insert(prefix.end(), ex.text.begin(), ex.text.end());
    std::vector<int> target = ex.text;
    target.push_back(TextVocab().eos());
    const double eps = mode == FinetuneMode::ed_only_st ? cfg.label_smoothing : 0.0;
    Var logits = m.text_decoder(t, c, prefix);
    ce = t.scale(loss_u2t_ce(t, logits, target, eps), 1.0 / n_tokens);
  }
  std::optional<Var> ctc;
  if (mode != FinetuneMode::ed_only_st) {
    Var lp = m.ctc_head(t, c);
    auto res = ctc::ctc_loss(t, lp, ex.text);
    if (res.feasible) ctc = t.scale(res.loss, 1.0 / n_tokens);
  }
  if (ce_out) *ce_out = ce ? t.val(*ce).scalar_value() : 0.0;
  if (ctc_out) *ctc_out = ctc ? t.val(*ctc).scalar_value() : 0.0;

  switch (mode) {
    case FinetuneMode::ed_only_st:
      return *ce;
    case FinetuneMode::encoder_only_ctc:
      return ctc ? *ctc : t.input(Tensor::scalar(0.0));
    case FinetuneMode::ctc_attention_asr: {
      Var out = t.scale(*ce, 1.0 - cfg.ctc_weight);
      if (ctc) out = t.add(out, t.scale(*ctc, cfg.ctc_weight));
      return out;
    }
  }
  throw ContractError("finetune_loss: bad mode");
}

FinetuneResult finetune(Model& m, FinetuneMode mode, const std::vector<LabeledExample>& corpus,
                        const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  if (corpus.empty()) throw InputError("finetune: empty labeled corpus");
  if (mode != FinetuneMode::encoder_only_ctc && !m.params.has("dec.embed"))
    throw CheckpointError("finetune: checkpoint has no decoder but mode " + to_string(mode) + " needs one");
  if (mode != FinetuneMode::ed_only_st && !m.params.has("ctc.conv.w"))
    throw CheckpointError("finetune: checkpoint has no CTC head but mode " + to_string(mode) + " needs one");

  FinetuneResult result;
  AdamState state;
  std::vector<size_t> order = shuffled_indices(corpus.size(), derive_seed(cfg.seed, "ft-order", 0));
  size_t cur = 0;
  uint64_t epoch = 0;
  // batch size: respect the s2u sample budget
  for (int64_t step = 0; step < cfg.total_steps; ++step) {
    std::vector<size_t> batch;
    int64_t used = 0;
    while (true) {
      if (cur >= order.size()) {
        ++epoch;
        order = shuffled_indices(corpus.size(), derive_seed(cfg.seed, "ft-order", epoch));
        cur = 0;
      }
      const int64_t cost = static_cast<int64_t>(corpus[order[cur]].wave.size());
      if (!batch.empty() && used + cost > cfg.budget_s2u_samples) break;
      batch.push_back(order[cur]);
      used += cost;
      ++cur;
      if (used >= cfg.budget_s2u_samples) break;
    }

    const double lr = schedule_lr(cfg, step);
    double step_loss = 0.0;
    const uint64_t step_seed = derive_seed(cfg.seed, "ft-step", static_cast<uint64_t>(step));
    for (size_t bi = 0; bi < batch.size(); ++bi) {
      Tape t;
      Var loss = finetune_loss(t, m, corpus[batch[bi]], mode, cfg, derive_seed(step_seed, "ex", bi));
      step_loss += t.val(loss).scalar_value();
      t.backward(t.scale(loss, 1.0 / static_cast<double>(batch.size())));
    }
    step_loss /= static_cast<double>(batch.size());
    adam_update(m.params, state, lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
    result.trace.push_back(step_loss);
    if (log && (step % cfg.log_every == 0 || step + 1 == cfg.total_steps))
      (*log) << "step=" << step << " lr=" << lr << " loss=" << step_loss << "\n";
    if (cfg.save_every > 0 && !cfg.checkpoint_dir.empty() && (step + 1) % cfg.save_every == 0)
      save_checkpoint(cfg.checkpoint_dir + "/ft_step_" + std::to_string(step + 1) + ".sutc", m.params,
                      m.cfg.to_text());
  }
  return result;
}

Params average_checkpoints(const std::vector<std::string>& paths) {
  if (paths.empty()) throw InputError("average_checkpoints: no checkpoints given");
  Checkpoint first = load_checkpoint(paths[0]);
  Params avg = std::move(first.params);
  for (size_t i = 1; i < paths.size(); ++i) {
    Checkpoint ck = load_checkpoint(paths[i]);
    if (ck.params.names() != avg.names())
      throw CheckpointError("average_checkpoints: tensor-name sets differ between " + paths[0] + " and " + paths[i]);
    for (auto& [name, p] : avg.map()) {
      const Parameter& q = ck.params.at(name);
      if (!p.value.same_shape(q.value))
        throw CheckpointError("average_checkpoints: shape mismatch for " + name);
      kern::add_inplace(p.value, q.value);
    }
  }
  const double inv = 1.0 / static_cast<double>(paths.size());
  for (auto& [name, p] : avg.map()) kern::scale_inplace(p.value, inv);
  return avg;
}

}  // namespace speechut
