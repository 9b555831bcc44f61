#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "speechut/autodiff.hpp"
#include "speechut/vocab.hpp"

namespace speechut {

// Architectural hyperparameters. Defaults are the desk-scale configuration;
// the paper-scale values go in through the same fields.
struct ModelConfig {
  int64_t d_model = 64;
  int64_t d_ffn = 128;
  int n_layers_speech_enc = 2;
  int n_layers_unit_enc = 2;
  int n_layers_dec = 2;
  int n_heads = 4;
  int unit_vocab = 32;  // K; MASK is the extra id K
  int text_vocab = TextVocab().size();
  std::vector<int64_t> prenet_kernels = {10, 3, 3, 3, 3, 2, 2};
  std::vector<int64_t> prenet_strides = {5, 2, 2, 2, 2, 2, 2};
  int64_t prenet_channels = 32;
  int64_t d_unit_embed = 32;  // dim of the unit embedding matrix e (below d_model)
  int64_t ctc_channels = 64;
  double tau = 0.1;
  double lambda = 0.1;  // U2T weight
  double gamma = 0.5;   // MUM weight
  double mask_prob = 0.08;
  int mask_len = 10;
  double mix_prob = 0.04;
  int mix_len = 5;
  int rel_buckets = 16;
  int rel_max_distance = 64;
  int64_t max_positions = 512;
  int64_t downsample_rate = 0;  // 0 = derive from strides; nonzero must match

  void validate() const;
  int64_t stride_product() const;
  int64_t receptive_field() const;                 // minimum waveform length
  int64_t prenet_out_len(int64_t samples) const;   // composed valid-conv length
  int mask_unit_id() const { return unit_vocab; }

  std::string to_text() const;                       // "key = value" lines
  static ModelConfig from_text(const std::string&);  // inverse of to_text
};

// Named parameter tensors with deterministic (sorted) iteration order.
class Params {
 public:
  Parameter& add(const std::string& name, Tensor t);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool has(const std::string& name) const { return m_.count(name) != 0; }
  std::vector<std::string> names() const;
  size_t size() const { return m_.size(); }
  int64_t total_elements() const;
  void zero_grads();
  std::map<std::string, Parameter>& map() { return m_; }
  const std::map<std::string, Parameter>& map() const { return m_; }

 private:
  std::map<std::string, Parameter> m_;
};

// T5-style bucketed relative positions (rel = key_pos - query_pos).
int relative_bucket(int64_t rel, bool bidirectional, int num_buckets, int max_distance);
std::vector<int> relative_bucket_matrix(int64_t rows, int64_t cols, bool bidirectional,
                                        int num_buckets, int max_distance);

// Shared transformer building blocks. Every stack in this project (the two
// SpeechUT encoders, the text decoder, the T2U/U2T generators, the char LM)
// uses the same parameter layout and these forwards, so there is exactly one
// attention implementation to get right.
struct BlockDims {
  int64_t d_model = 0;
  int64_t d_ffn = 0;
  int n_heads = 0;
  int rel_buckets = 0;
  int rel_max_distance = 0;
};
BlockDims dims_of(const ModelConfig& cfg);

void add_layernorm_params(Params& p, const std::string& prefix, int64_t d);
void add_transformer_layer_params(Params& p, const std::string& prefix, const BlockDims& dims,
                                  bool with_cross, Rng& rng);
void add_stack_params(Params& p, const std::string& prefix, int n_layers, const BlockDims& dims,
                      bool with_cross, Rng& rng);

Var transformer_layer_fwd(Tape& t, Params& p, const std::string& prefix, const BlockDims& dims,
                          Var x, bool causal, std::optional<Var> ctx);
Var encoder_stack_fwd(Tape& t, Params& p, const std::string& prefix, int n_layers,
                      const BlockDims& dims, Var x);
Var decoder_stack_fwd(Tape& t, Params& p, const std::string& prefix, int n_layers,
                      const BlockDims& dims, Var x, std::optional<Var> ctx);

// The SpeechUT network: pre-nets, the two encoders, the text decoder and the
// prediction heads. Forward methods record onto the caller's tape; parameters
// are mutated only through their grad buffers.
class Model {
 public:
  Model(ModelConfig cfg, uint64_t seed);          // fresh random init
  Model(ModelConfig cfg, Params params);          // restore (validates names)

  ModelConfig cfg;
  Params params;

  // waveform -> local features X [T x d_model]
  Var speech_prenet(Tape& t, const std::vector<double>& waveform);
  // unit ids (may include MASK = K) -> embeddings + learned positions [L x d_model]
  Var unit_prenet(Tape& t, const std::vector<int>& units);
  Var speech_encoder(Tape& t, Var x);
  Var unit_encoder(Tape& t, Var x);
  // Eq.-style cosine logits over units: cos(Ws h_t, e_z) / tau, [T x K]
  Var s2u_logits_cosine(Tape& t, Var h);
  // shared unit classifier W^u, used by both encoder-output heads, [N x K]
  Var unit_logits(Tape& t, Var c);
  // causal decoder logits for a BOS-started prefix, [|prefix| x text_vocab]
  Var text_decoder(Tape& t, Var ctx, const std::vector<int>& prefix);
  // conv(k=2) + linear head, log-softmax rows, blank last: [L-1 x text_vocab+1]
  Var ctc_head(Tape& t, Var c);

  Var speech_mask_embedding(Tape& t) { return t.param(params.at("speech.mask_emb")); }

};

// Fresh-init parameter construction for the full SpeechUT model.
Params init_speechut_params(const ModelConfig& cfg, uint64_t seed);

enum class FinetuneMode { ctc_attention_asr, ed_only_st, encoder_only_ctc };
FinetuneMode finetune_mode_from(const std::string& name);
std::string to_string(FinetuneMode m);

// Keeps exactly the tensors the fine-tuning graph uses: drops the unit
// pre-net always, the CTC head in ST mode, and the decoder in encoder-only
// mode. Introduces no new tensors.
Params assemble_finetune_model(const Params& pretrained, const ModelConfig& cfg, FinetuneMode mode);

// Parameter-name sets for each part of the model, used by assembly and by
// checkpoint validation.
std::vector<std::string> unit_prenet_param_names(const ModelConfig& cfg);
std::vector<std::string> decoder_param_names(const ModelConfig& cfg);
std::vector<std::string> ctc_head_param_names(const ModelConfig& cfg);

}  // namespace speechut
