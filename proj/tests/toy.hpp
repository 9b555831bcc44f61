#pragma once

// Shared desk-scale toy fixtures: a tiny SpeechUT configuration plus random
// example builders and the loss pipelines used by the gradient-check suites.

#include <vector>

#include "speechut/corruption.hpp"
#include "speechut/model.hpp"
#include "speechut/objectives.hpp"
#include "speechut/trainer.hpp"

namespace testsup {

using namespace speechut;

// 2-layer toy model with a [3,2]/[2,2] pre-net (receptive field 5, hop 4).
inline ModelConfig toy_config() {
  ModelConfig c;
  c.d_model = 8;
  c.d_ffn = 16;
  c.n_layers_speech_enc = 2;
  c.n_layers_unit_enc = 2;
  c.n_layers_dec = 2;
  c.n_heads = 2;
  c.unit_vocab = 5;
  c.prenet_kernels = {3, 2};
  c.prenet_strides = {2, 2};
  c.prenet_channels = 4;
  c.d_unit_embed = 4;
  c.ctc_channels = 8;
  c.rel_buckets = 8;
  c.rel_max_distance = 16;
  c.max_positions = 64;
  // toy sequences are short; denser spans keep the masked losses non-trivial
  c.mask_prob = 0.3;
  c.mask_len = 3;
  c.mix_prob = 0.2;
  c.mix_len = 2;
  return c;
}

// waveform sized so the toy pre-net emits exactly `frames` outputs
inline std::vector<double> toy_wave(const ModelConfig& cfg, int64_t frames, Rng& rng) {
  const int64_t hop = cfg.stride_product();
  std::vector<double> w(static_cast<size_t>(hop * (frames + 1)));
  for (double& x : w) x = 0.5 * rng.normal();
  return w;
}

inline S2UExample toy_s2u_example(const ModelConfig& cfg, int64_t frames, Rng& rng) {
  S2UExample ex;
  ex.wave = toy_wave(cfg, frames, rng);
  for (int64_t i = 0; i < frames; ++i)
    ex.frame_units.push_back(static_cast<int>(rng.uniform_int(cfg.unit_vocab)));
  return ex;
}

// frame units in short runs, the shape real clustered speech units take
inline S2UExample toy_s2u_runs_example(const ModelConfig& cfg, int64_t frames, Rng& rng) {
  S2UExample ex;
  ex.wave = toy_wave(cfg, frames, rng);
  while (static_cast<int64_t>(ex.frame_units.size()) < frames) {
    const int u = static_cast<int>(rng.uniform_int(cfg.unit_vocab));
    const int len = 2 + static_cast<int>(rng.uniform_int(3));
    for (int i = 0; i < len && static_cast<int64_t>(ex.frame_units.size()) < frames; ++i)
      ex.frame_units.push_back(u);
  }
  return ex;
}

inline U2TExample toy_u2t_example(const ModelConfig& cfg, int64_t units, int64_t text_len, Rng& rng) {
  U2TExample ex;
  for (int64_t i = 0; i < units; ++i)
    ex.units.push_back(static_cast<int>(rng.uniform_int(cfg.unit_vocab)));
  for (int64_t i = 0; i < text_len; ++i)
    ex.text.push_back(static_cast<int>(rng.uniform_int(26)));
  return ex;
}

inline MUMExample toy_mum_example(const ModelConfig& cfg, int64_t units, Rng& rng) {
  MUMExample ex;
  for (int64_t i = 0; i < units; ++i)
    ex.units.push_back(static_cast<int>(rng.uniform_int(cfg.unit_vocab)));
  return ex;
}

// Full S2U pipeline (mask -> speech enc -> mix -> unit enc -> two losses).
struct S2UForward {
  Var h;
  Var c_s;
  S2ULoss loss;
  SpanSet mask;
};
inline S2UForward s2u_forward(Tape& t, Model& m, const S2UExample& ex, uint64_t seed, bool mix_on) {
  S2UForward out;
  Var x = m.speech_prenet(t, ex.wave);
  const int64_t frames = t.val(x).rows();
  out.mask = sample_spans(frames, m.cfg.mask_prob, m.cfg.mask_len, derive_seed(seed, "m"));
  Var xc = corrupt_speech(t, x, out.mask, m.speech_mask_embedding(t));
  out.h = m.speech_encoder(t, xc);
  Var enc_in = out.h;
  if (mix_on) {
    SpanSet mix = sample_spans(frames, m.cfg.mix_prob, m.cfg.mix_len, derive_seed(seed, "r"));
    Var u_frame = m.unit_prenet(t, ex.frame_units);
    enc_in = mix_embeddings(t, out.h, u_frame, mix, out.mask);
  }
  out.c_s = m.unit_encoder(t, enc_in);
  out.loss = loss_s2u(t, m, out.h, out.c_s, ex.frame_units, out.mask);
  return out;
}

struct U2TForward {
  Var c_u;
  U2TLoss loss;
};
inline U2TForward u2t_forward(Tape& t, Model& m, const U2TExample& ex, bool with_ctc) {
  U2TForward out;
  Var u = m.unit_prenet(t, ex.units);
  out.c_u = m.unit_encoder(t, u);
  std::vector<int> prefix = {TextVocab().bos()};
  prefix.insert(prefix.end(), ex.text.begin(), ex.text.end());
  std::vector<int> target = ex.text;
  target.push_back(TextVocab().eos());
  Var logits = m.text_decoder(t, out.c_u, prefix);
  std::optional<Var> ctc_lp;
  if (with_ctc) ctc_lp = m.ctc_head(t, out.c_u);
  out.loss = loss_u2t(t, logits, ctc_lp, target, with_ctc, 0.0);
  return out;
}

struct MUMForward {
  Var c_u;
  MUMLoss loss;
  SpanSet mask;
};
inline MUMForward mum_forward(Tape& t, Model& m, const MUMExample& ex, uint64_t seed) {
  MUMForward out;
  out.mask = sample_spans(static_cast<int64_t>(ex.units.size()), m.cfg.mask_prob, m.cfg.mask_len,
                          derive_seed(seed, "m"));
  std::vector<int> corrupted = corrupt_units(ex.units, out.mask, m.cfg.mask_unit_id());
  Var u = m.unit_prenet(t, corrupted);
  out.c_u = m.unit_encoder(t, u);
  out.loss = loss_mum(t, m, out.c_u, ex.units, out.mask);
  return out;
}

inline std::vector<Parameter*> all_params(Model& m) {
  std::vector<Parameter*> out;
  for (auto& [name, p] : m.params.map()) out.push_back(&p);
  return out;
}

}  // namespace testsup
