#pragma once

#include <memory>
#include <string>
#include <vector>

#include "speechut/model.hpp"

namespace speechut {

// Next-token scorer over a token vocabulary. Implementations carry their
// incremental state in immutable snapshots so beam hypotheses can share and
// fork them freely.
class StepScorer {
 public:
  struct State {
    virtual ~State() = default;
  };
  using StatePtr = std::shared_ptr<const State>;

  virtual ~StepScorer() = default;
  virtual int vocab() const = 0;
  virtual int bos() const = 0;
  virtual int eos() const = 0;
  // start() is the empty-prefix state; advance() consumes one token and
  // returns the new state plus log-probs for the following token.
  virtual StatePtr start() = 0;
  virtual std::pair<StatePtr, std::vector<double>> advance(const StatePtr& s, int token) = 0;
};

// Value-only causal decoder with per-layer self-attention KV caches and a
// precomputed cross-attention context. Runs on the same kernels as the tape
// forward, so the two paths agree bit-for-bit.
class IncrementalDecoder : public StepScorer {
 public:
  struct Spec {
    Params* params = nullptr;
    BlockDims dims;
    int n_layers = 0;
    std::string stack_prefix;  // e.g. "dec"
    std::string embed_name;    // e.g. "dec.embed"
    std::string out_w;
    std::string out_b;
    int vocab = 0;
    int bos = 0;
    int eos = 0;
  };

  IncrementalDecoder(Spec spec, Tensor ctx);  // ctx [S x d]; S may be 0

  int vocab() const override { return spec_.vocab; }
  int bos() const override { return spec_.bos; }
  int eos() const override { return spec_.eos; }
  StatePtr start() override;
  std::pair<StatePtr, std::vector<double>> advance(const StatePtr& s, int token) override;

 private:
  struct CacheState;
  Spec spec_;
  Tensor ctx_;
  // cross-attention K/V per layer, precomputed once from ctx
  std::vector<Tensor> cross_k_, cross_v_;
};

// Uniform distribution scorer (used as a neutral LM in tests and as the
// degenerate fusion case).
class UniformScorer : public StepScorer {
 public:
  UniformScorer(int vocab, int bos, int eos) : vocab_(vocab), bos_(bos), eos_(eos) {}
  int vocab() const override { return vocab_; }
  int bos() const override { return bos_; }
  int eos() const override { return eos_; }
  StatePtr start() override { return std::make_shared<State>(); }
  std::pair<StatePtr, std::vector<double>> advance(const StatePtr&, int) override {
    return {std::make_shared<State>(),
            std::vector<double>(static_cast<size_t>(vocab_), -std::log(static_cast<double>(vocab_)))};
  }

 private:
  int vocab_, bos_, eos_;
};

// Value-only encoder forwards for decoding/probing (no masking, no grads).
Tensor infer_speech_context(Model& m, const std::vector<double>& wave);   // prenet->speech enc->unit enc
Tensor infer_ctc_logprobs(Model& m, const Tensor& ctx);                   // ctc head on a context
Tensor infer_unit_context(Model& m, const std::vector<int>& units);       // unit prenet->unit enc

// decoder scorer over a fixed context for the SpeechUT text decoder
std::unique_ptr<IncrementalDecoder> make_text_decoder_scorer(Model& m, Tensor ctx);

}  // namespace speechut
