#include "speechut/inference.hpp"

#include <cmath>

namespace speechut {

namespace {

// row-vector helpers on the shared kernels, keeping op order identical to the
// tape forward so values reproduce exactly
Tensor linear_row(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor out;
  kern::matmul_nt(x, w, out);
  for (int64_t j = 0; j < out.cols(); ++j) out.at(0, j) += b.v[static_cast<size_t>(j)];
  return out;
}

Tensor layernorm_row(const Tensor& x, const Tensor& g, const Tensor& b) {
  Tensor out;
  kern::layernorm_rows(x, g, b, 1e-5, out);
  return out;
}

Tensor slice_row_cols(const Tensor& x, int64_t c0, int64_t c1) {
  Tensor out = Tensor::zeros({1, c1 - c0});
  for (int64_t j = c0; j < c1; ++j) out.at(0, j - c0) = x.at(0, j);
  return out;
}

void append_row(Tensor& mat, const Tensor& row) {
  if (mat.numel() == 0 && mat.rank() != 2) mat = Tensor::zeros({0, row.cols()});
  Tensor next = Tensor::zeros({mat.rows() + 1, row.cols()});
  std::copy(mat.v.begin(), mat.v.end(), next.v.begin());
  std::copy(row.v.begin(), row.v.end(), next.v.begin() + mat.numel());
  mat = std::move(next);
}

}  // namespace

struct IncrementalDecoder::CacheState : StepScorer::State {
  // per layer: cached self-attention keys/values over the consumed prefix
  std::vector<Tensor> k;
  std::vector<Tensor> v;
  int64_t len = 0;
};

IncrementalDecoder::IncrementalDecoder(Spec spec, Tensor ctx) : spec_(std::move(spec)), ctx_(std::move(ctx)) {
  Params& p = *spec_.params;
  cross_k_.resize(static_cast<size_t>(spec_.n_layers));
  cross_v_.resize(static_cast<size_t>(spec_.n_layers));
  if (ctx_.rank() == 2 && ctx_.rows() > 0) {
    for (int l = 0; l < spec_.n_layers; ++l) {
      const std::string pre = spec_.stack_prefix + ".l" + std::to_string(l) + ".cross";
      Tensor k, v;
      kern::matmul_nt(ctx_, p.at(pre + ".wk").value, k);
      kern::matmul_nt(ctx_, p.at(pre + ".wv").value, v);
      const Tensor& bk = p.at(pre + ".bk").value;
      const Tensor& bv = p.at(pre + ".bv").value;
      for (int64_t i = 0; i < k.rows(); ++i)
        for (int64_t j = 0; j < k.cols(); ++j) {
          k.at(i, j) += bk.v[static_cast<size_t>(j)];
          v.at(i, j) += bv.v[static_cast<size_t>(j)];
        }
      cross_k_[static_cast<size_t>(l)] = std::move(k);
      cross_v_[static_cast<size_t>(l)] = std::move(v);
    }
  }
}

StepScorer::StatePtr IncrementalDecoder::start() {
  auto st = std::make_shared<CacheState>();
  st->k.assign(static_cast<size_t>(spec_.n_layers), Tensor::zeros({0, spec_.dims.d_model}));
  st->v.assign(static_cast<size_t>(spec_.n_layers), Tensor::zeros({0, spec_.dims.d_model}));
  return st;
}

std::pair<StepScorer::StatePtr, std::vector<double>> IncrementalDecoder::advance(const StatePtr& s, int token) {
  const auto* prev = dynamic_cast<const CacheState*>(s.get());
  if (!prev) throw ContractError("IncrementalDecoder: foreign state");
  if (token < 0 || token >= spec_.vocab) throw VocabError("IncrementalDecoder: token out of vocabulary");
  Params& p = *spec_.params;
  const BlockDims& dims = spec_.dims;
  const int64_t dh = dims.d_model / dims.n_heads;
  const int64_t pos = prev->len;  // position of the new token

  auto next = std::make_shared<CacheState>(*prev);
  next->len = pos + 1;

  const Tensor& table = p.at(spec_.embed_name).value;
  Tensor x = Tensor::zeros({1, dims.d_model});
  std::copy_n(table.v.data() + static_cast<int64_t>(token) * dims.d_model, dims.d_model, x.v.data());

  for (int l = 0; l < spec_.n_layers; ++l) {
    const std::string lp = spec_.stack_prefix + ".l" + std::to_string(l);
    // self attention over the cached prefix plus this position
    Tensor n1 = layernorm_row(x, p.at(lp + ".ln1.g").value, p.at(lp + ".ln1.b").value);
    Tensor q = linear_row(n1, p.at(lp + ".attn.wq").value, p.at(lp + ".attn.bq").value);
    Tensor k_new = linear_row(n1, p.at(lp + ".attn.wk").value, p.at(lp + ".attn.bk").value);
    Tensor v_new = linear_row(n1, p.at(lp + ".attn.wv").value, p.at(lp + ".attn.bv").value);
    append_row(next->k[static_cast<size_t>(l)], k_new);
    append_row(next->v[static_cast<size_t>(l)], v_new);
    const Tensor& kc = next->k[static_cast<size_t>(l)];
    const Tensor& vc = next->v[static_cast<size_t>(l)];
    const Tensor& relbias = p.at(lp + ".relbias").value;

    Tensor att_out = Tensor::zeros({1, dims.d_model});
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < dims.n_heads; ++h) {
      Tensor qh = slice_row_cols(q, h * dh, (h + 1) * dh);
      Tensor scores = Tensor::zeros({1, pos + 1});
      for (int64_t j = 0; j <= pos; ++j) {
        double dot = 0.0;
        for (int64_t c = 0; c < dh; ++c) dot += qh.at(0, c) * kc.at(j, h * dh + c);
        const int bkt = relative_bucket(j - pos, false, dims.rel_buckets, dims.rel_max_distance);
        scores.at(0, j) = dot * inv_scale + relbias.v[static_cast<size_t>(bkt)];
      }
      Tensor w;
      kern::softmax_rows(scores, w);
      for (int64_t j = 0; j <= pos; ++j)
        for (int64_t c = 0; c < dh; ++c) att_out.at(0, h * dh + c) += w.at(0, j) * vc.at(j, h * dh + c);
    }
    Tensor proj = linear_row(att_out, p.at(lp + ".attn.wo").value, p.at(lp + ".attn.bo").value);
    for (int64_t c = 0; c < dims.d_model; ++c) x.at(0, c) += proj.at(0, c);

    // cross attention on the fixed context
    if (ctx_.rank() == 2 && ctx_.rows() > 0) {
      Tensor nc = layernorm_row(x, p.at(lp + ".lnc.g").value, p.at(lp + ".lnc.b").value);
      Tensor qc = linear_row(nc, p.at(lp + ".cross.wq").value, p.at(lp + ".cross.bq").value);
      const Tensor& kx = cross_k_[static_cast<size_t>(l)];
      const Tensor& vx = cross_v_[static_cast<size_t>(l)];
      Tensor cross_out = Tensor::zeros({1, dims.d_model});
      const double inv_scale_c = 1.0 / std::sqrt(static_cast<double>(dh));
      for (int h = 0; h < dims.n_heads; ++h) {
        Tensor scores = Tensor::zeros({1, kx.rows()});
        for (int64_t j = 0; j < kx.rows(); ++j) {
          double dot = 0.0;
          for (int64_t c = 0; c < dh; ++c) dot += qc.at(0, h * dh + c) * kx.at(j, h * dh + c);
          scores.at(0, j) = dot * inv_scale_c;
        }
        Tensor w;
        kern::softmax_rows(scores, w);
        for (int64_t j = 0; j < kx.rows(); ++j)
          for (int64_t c = 0; c < dh; ++c) cross_out.at(0, h * dh + c) += w.at(0, j) * vx.at(j, h * dh + c);
      }
      Tensor projc = linear_row(cross_out, p.at(lp + ".cross.wo").value, p.at(lp + ".cross.bo").value);
      for (int64_t c = 0; c < dims.d_model; ++c) x.at(0, c) += projc.at(0, c);
    }

    Tensor n2 = layernorm_row(x, p.at(lp + ".ln2.g").value, p.at(lp + ".ln2.b").value);
    Tensor f = linear_row(n2, p.at(lp + ".ffn.w1").value, p.at(lp + ".ffn.b1").value);
    Tensor fg;
    kern::gelu(f, fg);
    Tensor f2 = linear_row(fg, p.at(lp + ".ffn.w2").value, p.at(lp + ".ffn.b2").value);
    for (int64_t c = 0; c < dims.d_model; ++c) x.at(0, c) += f2.at(0, c);
  }

  Tensor y = layernorm_row(x, p.at(spec_.stack_prefix + ".final_ln.g").value,
                           p.at(spec_.stack_prefix + ".final_ln.b").value);
  Tensor logits = linear_row(y, p.at(spec_.out_w).value, p.at(spec_.out_b).value);
  Tensor logp;
  kern::log_softmax_rows(logits, logp);
  return {next, logp.v};
}

Tensor infer_speech_context(Model& m, const std::vector<double>& wave) {
  Tape t;
  Var x = m.speech_prenet(t, wave);
  Var h = m.speech_encoder(t, x);
  Var c = m.unit_encoder(t, h);
  return t.val(c);
}

Tensor infer_ctc_logprobs(Model& m, const Tensor& ctx) {
  Tape t;
  return t.val(m.ctc_head(t, t.input(ctx)));
}

Tensor infer_unit_context(Model& m, const std::vector<int>& units) {
  Tape t;
  Var u = m.unit_prenet(t, units);
  Var c = m.unit_encoder(t, u);
  return t.val(c);
}

std::unique_ptr<IncrementalDecoder> make_text_decoder_scorer(Model& m, Tensor ctx) {
  TextVocab tv;
  IncrementalDecoder::Spec spec;
  spec.params = &m.params;
  spec.dims = dims_of(m.cfg);
  spec.n_layers = m.cfg.n_layers_dec;
  spec.stack_prefix = "dec";
  spec.embed_name = "dec.embed";
  spec.out_w = "dec.out.w";
  spec.out_b = "dec.out.b";
  spec.vocab = m.cfg.text_vocab;
  spec.bos = tv.bos();
  spec.eos = tv.eos();
  return std::make_unique<IncrementalDecoder>(std::move(spec), std::move(ctx));
}

}  // namespace speechut
