#include "speechut/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace speechut {

void ModelConfig::validate() const {
  if (tau <= 0) throw ConfigError("model: tau must be positive");
  if (lambda < 0 || gamma < 0) throw ConfigError("model: loss weights must be non-negative");
  if (n_layers_speech_enc != n_layers_unit_enc)
    throw ConfigError("model: speech and unit encoders must have the same layer count (" +
                      std::to_string(n_layers_speech_enc) + " vs " + std::to_string(n_layers_unit_enc) + ")");
  if (prenet_kernels.size() != prenet_strides.size())
    throw ConfigError("model: prenet kernels and strides differ in length");
  if (prenet_kernels.empty()) throw ConfigError("model: prenet needs at least one layer");
  if (d_model % n_heads != 0) throw ConfigError("model: d_model must be divisible by n_heads");
  if (downsample_rate != 0 && downsample_rate != stride_product())
    throw ConfigError("model: declared downsample rate " + std::to_string(downsample_rate) +
                      " does not equal the stride product " + std::to_string(stride_product()));
  if (unit_vocab < 1 || text_vocab < 2) throw ConfigError("model: vocabulary sizes too small");
  if (mask_prob < 0 || mask_prob > 1 || mix_prob < 0 || mix_prob > 1)
    throw ConfigError("model: span probabilities must lie in [0,1]");
}

int64_t ModelConfig::stride_product() const {
  int64_t p = 1;
  for (int64_t s : prenet_strides) p *= s;
  return p;
}

int64_t ModelConfig::receptive_field() const {
  int64_t rf = 1, hop = 1;
  for (size_t i = 0; i < prenet_kernels.size(); ++i) {
    rf += (prenet_kernels[i] - 1) * hop;
    hop *= prenet_strides[i];
  }
  return rf;
}

int64_t ModelConfig::prenet_out_len(int64_t samples) const {
  int64_t len = samples;
  for (size_t i = 0; i < prenet_kernels.size(); ++i)
    len = kern::conv1d_out_len(len, prenet_kernels[i], prenet_strides[i]);
  return len;
}

namespace {

std::string join_i64(const std::vector<int64_t>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::vector<int64_t> parse_i64_list(const std::string& s) {
  std::vector<int64_t> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(std::stoll(cur));
      cur.clear();
    } else if (!isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "model.d_model = " << d_model << "\n";
  os << "model.d_ffn = " << d_ffn << "\n";
  os << "model.n_layers_speech_enc = " << n_layers_speech_enc << "\n";
  os << "model.n_layers_unit_enc = " << n_layers_unit_enc << "\n";
  os << "model.n_layers_dec = " << n_layers_dec << "\n";
  os << "model.n_heads = " << n_heads << "\n";
  os << "model.unit_vocab = " << unit_vocab << "\n";
  os << "model.text_vocab = " << text_vocab << "\n";
  os << "model.prenet_kernels = " << join_i64(prenet_kernels) << "\n";
  os << "model.prenet_strides = " << join_i64(prenet_strides) << "\n";
  os << "model.prenet_channels = " << prenet_channels << "\n";
  os << "model.d_unit_embed = " << d_unit_embed << "\n";
  os << "model.ctc_channels = " << ctc_channels << "\n";
  os << "model.tau = " << tau << "\n";
  os << "model.lambda = " << lambda << "\n";
  os << "model.gamma = " << gamma << "\n";
  os << "model.mask_prob = " << mask_prob << "\n";
  os << "model.mask_len = " << mask_len << "\n";
  os << "model.mix_prob = " << mix_prob << "\n";
  os << "model.mix_len = " << mix_len << "\n";
  os << "model.rel_buckets = " << rel_buckets << "\n";
  os << "model.rel_max_distance = " << rel_max_distance << "\n";
  os << "model.max_positions = " << max_positions << "\n";
  os << "model.downsample_rate = " << downsample_rate << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig c;
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
    if (key == "model.d_model") c.d_model = std::stoll(val);
    else if (key == "model.d_ffn") c.d_ffn = std::stoll(val);
    else if (key == "model.n_layers_speech_enc") c.n_layers_speech_enc = std::stoi(val);
    else if (key == "model.n_layers_unit_enc") c.n_layers_unit_enc = std::stoi(val);
    else if (key == "model.n_layers_dec") c.n_layers_dec = std::stoi(val);
    else if (key == "model.n_heads") c.n_heads = std::stoi(val);
    else if (key == "model.unit_vocab") c.unit_vocab = std::stoi(val);
    else if (key == "model.text_vocab") c.text_vocab = std::stoi(val);
    else if (key == "model.prenet_kernels") c.prenet_kernels = parse_i64_list(val);
    else if (key == "model.prenet_strides") c.prenet_strides = parse_i64_list(val);
    else if (key == "model.prenet_channels") c.prenet_channels = std::stoll(val);
    else if (key == "model.d_unit_embed") c.d_unit_embed = std::stoll(val);
    else if (key == "model.ctc_channels") c.ctc_channels = std::stoll(val);
    else if (key == "model.tau") c.tau = std::stod(val);
    else if (key == "model.lambda") c.lambda = std::stod(val);
    else if (key == "model.gamma") c.gamma = std::stod(val);
    else if (key == "model.mask_prob") c.mask_prob = std::stod(val);
    else if (key == "model.mask_len") c.mask_len = std::stoi(val);
    else if (key == "model.mix_prob") c.mix_prob = std::stod(val);
    else if (key == "model.mix_len") c.mix_len = std::stoi(val);
    else if (key == "model.rel_buckets") c.rel_buckets = std::stoi(val);
    else if (key == "model.rel_max_distance") c.rel_max_distance = std::stoi(val);
    else if (key == "model.max_positions") c.max_positions = std::stoll(val);
    else if (key == "model.downsample_rate") c.downsample_rate = std::stoll(val);
  }
  return c;
}

Parameter& Params::add(const std::string& name, Tensor t) {
  auto [it, inserted] = m_.emplace(name, Parameter(name, std::move(t)));
  if (!inserted) throw CheckpointError("duplicate parameter name: " + name);
  return it->second;
}

Parameter& Params::at(const std::string& name) {
  auto it = m_.find(name);
  if (it == m_.end()) throw CheckpointError("missing parameter tensor: " + name);
  return it->second;
}

const Parameter& Params::at(const std::string& name) const {
  auto it = m_.find(name);
  if (it == m_.end()) throw CheckpointError("missing parameter tensor: " + name);
  return it->second;
}

std::vector<std::string> Params::names() const {
  std::vector<std::string> out;
  out.reserve(m_.size());
  for (const auto& [k, v] : m_) out.push_back(k);
  return out;
}

int64_t Params::total_elements() const {
  int64_t n = 0;
  for (const auto& [k, v] : m_) n += v.value.numel();
  return n;
}

void Params::zero_grads() {
  for (auto& [k, v] : m_) v.zero_grad();
}

int relative_bucket(int64_t rel, bool bidirectional, int num_buckets, int max_distance) {
  int bucket = 0;
  int nb = num_buckets;
  if (bidirectional) {
    nb /= 2;
    if (rel > 0) bucket += nb;
    rel = std::abs(rel);
  } else {
    rel = rel < 0 ? -rel : 0;  // causal attention sees only rel <= 0
  }
  const int max_exact = nb / 2;
  if (rel < max_exact) return bucket + static_cast<int>(rel);
  const double frac =
      std::log(static_cast<double>(rel) / max_exact) / std::log(static_cast<double>(max_distance) / max_exact);
  int v = max_exact + static_cast<int>(frac * (nb - max_exact));
  return bucket + std::min(v, nb - 1);
}

std::vector<int> relative_bucket_matrix(int64_t rows, int64_t cols, bool bidirectional,
                                        int num_buckets, int max_distance) {
  std::vector<int> out(static_cast<size_t>(rows * cols));
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j)
      out[static_cast<size_t>(i * cols + j)] = relative_bucket(j - i, bidirectional, num_buckets, max_distance);
  return out;
}

BlockDims dims_of(const ModelConfig& cfg) {
  return BlockDims{cfg.d_model, cfg.d_ffn, cfg.n_heads, cfg.rel_buckets, cfg.rel_max_distance};
}

namespace {

Tensor randn(std::vector<int64_t> shape, Rng& rng, double stdev) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& x : t.v) x = stdev * rng.normal();
  return t;
}

void add_attention(Params& p, const std::string& pre, int64_t d, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  for (const char* w : {"wq", "wk", "wv", "wo"}) p.add(pre + "." + w, randn({d, d}, rng, s));
  for (const char* b : {"bq", "bk", "bv", "bo"}) p.add(pre + "." + b, Tensor::zeros({d}));
}

// q_in attends kv_in. One learned relative-bias table per layer shared across
// heads; cross attention carries no positional bias.
Var mha_fwd(Tape& t, Params& p, const std::string& prefix, const BlockDims& dims, Var q_in,
            Var kv_in, bool causal, bool with_rel_bias) {
  const int64_t dh = dims.d_model / dims.n_heads;
  const int64_t tq = t.val(q_in).rows();
  const int64_t tk = t.val(kv_in).rows();

  Var q = t.add_rowvec(t.matmul_nt(q_in, t.param(p.at(prefix + ".wq"))), t.param(p.at(prefix + ".bq")));
  Var k = t.add_rowvec(t.matmul_nt(kv_in, t.param(p.at(prefix + ".wk"))), t.param(p.at(prefix + ".bk")));
  Var v = t.add_rowvec(t.matmul_nt(kv_in, t.param(p.at(prefix + ".wv"))), t.param(p.at(prefix + ".bv")));

  std::optional<Var> bias;
  if (with_rel_bias) {
    const std::string layer_prefix = prefix.substr(0, prefix.rfind('.'));
    auto buckets = relative_bucket_matrix(tq, tk, !causal, dims.rel_buckets, dims.rel_max_distance);
    bias = t.relative_bias(t.param(p.at(layer_prefix + ".relbias")), buckets, tq, tk);
  }
  std::optional<Var> causal_mask;
  if (causal) {
    Tensor mt = Tensor::zeros({tq, tk});
    for (int64_t i = 0; i < tq; ++i)
      for (int64_t j = i + 1; j < tk; ++j) mt.at(i, j) = -1e30;
    causal_mask = t.input(std::move(mt));
  }

  std::vector<Var> heads;
  heads.reserve(static_cast<size_t>(dims.n_heads));
  for (int h = 0; h < dims.n_heads; ++h) {
    Var qh = t.slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = t.slice_cols(k, h * dh, (h + 1) * dh);
    Var vh = t.slice_cols(v, h * dh, (h + 1) * dh);
    Var scores = t.scale(t.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
    if (bias) scores = t.add(scores, *bias);
    if (causal_mask) scores = t.add(scores, *causal_mask);
    Var w = t.softmax(scores);
    heads.push_back(t.matmul(w, vh));
  }
  Var cat = t.concat_cols(heads);
  return t.add_rowvec(t.matmul_nt(cat, t.param(p.at(prefix + ".wo"))), t.param(p.at(prefix + ".bo")));
}

}  // namespace

void add_layernorm_params(Params& p, const std::string& prefix, int64_t d) {
  p.add(prefix + ".g", Tensor::full({d}, 1.0));
  p.add(prefix + ".b", Tensor::zeros({d}));
}

void add_transformer_layer_params(Params& p, const std::string& pre, const BlockDims& dims,
                                  bool with_cross, Rng& rng) {
  const int64_t d = dims.d_model;
  add_attention(p, pre + ".attn", d, rng);
  add_layernorm_params(p, pre + ".ln1", d);
  if (with_cross) {
    add_attention(p, pre + ".cross", d, rng);
    add_layernorm_params(p, pre + ".lnc", d);
  }
  p.add(pre + ".ffn.w1", randn({dims.d_ffn, d}, rng, 1.0 / std::sqrt(static_cast<double>(d))));
  p.add(pre + ".ffn.b1", Tensor::zeros({dims.d_ffn}));
  p.add(pre + ".ffn.w2", randn({d, dims.d_ffn}, rng, 1.0 / std::sqrt(static_cast<double>(dims.d_ffn))));
  p.add(pre + ".ffn.b2", Tensor::zeros({d}));
  add_layernorm_params(p, pre + ".ln2", d);
  p.add(pre + ".relbias", Tensor::zeros({dims.rel_buckets}));
}

void add_stack_params(Params& p, const std::string& prefix, int n_layers, const BlockDims& dims,
                      bool with_cross, Rng& rng) {
  for (int i = 0; i < n_layers; ++i)
    add_transformer_layer_params(p, prefix + ".l" + std::to_string(i), dims, with_cross, rng);
  add_layernorm_params(p, prefix + ".final_ln", dims.d_model);
}

Var transformer_layer_fwd(Tape& t, Params& p, const std::string& prefix, const BlockDims& dims,
                          Var x, bool causal, std::optional<Var> ctx) {
  // pre-LN blocks with residual connections
  Var n1 = t.layernorm_rows(x, t.param(p.at(prefix + ".ln1.g")), t.param(p.at(prefix + ".ln1.b")));
  x = t.add(x, mha_fwd(t, p, prefix + ".attn", dims, n1, n1, causal, /*with_rel_bias=*/true));
  if (ctx && t.val(*ctx).rows() > 0) {
    Var nc = t.layernorm_rows(x, t.param(p.at(prefix + ".lnc.g")), t.param(p.at(prefix + ".lnc.b")));
    x = t.add(x, mha_fwd(t, p, prefix + ".cross", dims, nc, *ctx, /*causal=*/false, /*with_rel_bias=*/false));
  }
  Var n2 = t.layernorm_rows(x, t.param(p.at(prefix + ".ln2.g")), t.param(p.at(prefix + ".ln2.b")));
  Var h = t.add_rowvec(t.matmul_nt(n2, t.param(p.at(prefix + ".ffn.w1"))), t.param(p.at(prefix + ".ffn.b1")));
  h = t.gelu(h);
  h = t.add_rowvec(t.matmul_nt(h, t.param(p.at(prefix + ".ffn.w2"))), t.param(p.at(prefix + ".ffn.b2")));
  return t.add(x, h);
}

Var encoder_stack_fwd(Tape& t, Params& p, const std::string& prefix, int n_layers,
                      const BlockDims& dims, Var x) {
  if (t.val(x).rows() == 0) return x;
  for (int i = 0; i < n_layers; ++i)
    x = transformer_layer_fwd(t, p, prefix + ".l" + std::to_string(i), dims, x, false, std::nullopt);
  return t.layernorm_rows(x, t.param(p.at(prefix + ".final_ln.g")), t.param(p.at(prefix + ".final_ln.b")));
}

Var decoder_stack_fwd(Tape& t, Params& p, const std::string& prefix, int n_layers,
                      const BlockDims& dims, Var x, std::optional<Var> ctx) {
  if (t.val(x).rows() == 0) return x;
  for (int i = 0; i < n_layers; ++i)
    x = transformer_layer_fwd(t, p, prefix + ".l" + std::to_string(i), dims, x, true, ctx);
  return t.layernorm_rows(x, t.param(p.at(prefix + ".final_ln.g")), t.param(p.at(prefix + ".final_ln.b")));
}

Params init_speechut_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Params p;
  Rng rng(derive_seed(seed, "speechut-init"));
  const int64_t d = cfg.d_model;
  const double ds = 1.0 / std::sqrt(static_cast<double>(d));
  const BlockDims dims = dims_of(cfg);

  // speech pre-net: conv stack then projection to d_model
  int64_t cin = 1;
  for (size_t i = 0; i < cfg.prenet_kernels.size(); ++i) {
    const int64_t k = cfg.prenet_kernels[i];
    const std::string pre = "speech_prenet.conv" + std::to_string(i);
    p.add(pre + ".w", randn({cfg.prenet_channels, cin, k}, rng,
                            1.0 / std::sqrt(static_cast<double>(cin * k))));
    p.add(pre + ".b", Tensor::zeros({cfg.prenet_channels}));
    cin = cfg.prenet_channels;
  }
  p.add("speech_prenet.proj.w", randn({d, cfg.prenet_channels}, rng,
                                      1.0 / std::sqrt(static_cast<double>(cfg.prenet_channels))));
  p.add("speech_prenet.proj.b", Tensor::zeros({d}));
  p.add("speech.mask_emb", randn({d}, rng, ds));

  // unit pre-net: embedding (with MASK row K) + learned positions
  p.add("unit_prenet.embed", randn({cfg.unit_vocab + 1, d}, rng, 1.0));
  p.add("unit_prenet.pos", randn({cfg.max_positions, d}, rng, 0.5));

  add_stack_params(p, "speech_enc", cfg.n_layers_speech_enc, dims, false, rng);
  add_stack_params(p, "unit_enc", cfg.n_layers_unit_enc, dims, false, rng);

  // S2U heads: W^s projection and the unit embedding matrix e (distinct
  // storage from the unit pre-net table), plus the shared classifier W^u
  p.add("s2u.ws", randn({cfg.d_unit_embed, d}, rng, ds));
  p.add("s2u.e", randn({cfg.unit_vocab, cfg.d_unit_embed}, rng, 1.0));
  p.add("head.wu", randn({cfg.unit_vocab, d}, rng, ds));

  // CTC head: conv k=2 + linear projection to vocab+blank
  p.add("ctc.conv.w", randn({cfg.ctc_channels, d, 2}, rng, 1.0 / std::sqrt(static_cast<double>(2 * d))));
  p.add("ctc.conv.b", Tensor::zeros({cfg.ctc_channels}));
  p.add("ctc.proj.w", randn({cfg.text_vocab + 1, cfg.ctc_channels}, rng,
                            1.0 / std::sqrt(static_cast<double>(cfg.ctc_channels))));
  p.add("ctc.proj.b", Tensor::zeros({cfg.text_vocab + 1}));

  // text decoder
  p.add("dec.embed", randn({cfg.text_vocab, d}, rng, 1.0));
  add_stack_params(p, "dec", cfg.n_layers_dec, dims, true, rng);
  p.add("dec.out.w", randn({cfg.text_vocab, d}, rng, ds));
  p.add("dec.out.b", Tensor::zeros({cfg.text_vocab}));
  return p;
}

Model::Model(ModelConfig c, uint64_t seed) : cfg(std::move(c)), params(init_speechut_params(cfg, seed)) {}

Model::Model(ModelConfig c, Params ps) : cfg(std::move(c)), params(std::move(ps)) {
  cfg.validate();
}

Var Model::speech_prenet(Tape& t, const std::vector<double>& waveform) {
  const int64_t rf = cfg.receptive_field();
  if (static_cast<int64_t>(waveform.size()) < rf)
    throw InputError("speech_prenet: waveform of " + std::to_string(waveform.size()) +
                     " samples is shorter than the required minimum of " + std::to_string(rf));
  Tensor x0({static_cast<int64_t>(waveform.size()), 1}, waveform);
  Var x = t.input(std::move(x0));
  for (size_t i = 0; i < cfg.prenet_kernels.size(); ++i) {
    const std::string pre = "speech_prenet.conv" + std::to_string(i);
    x = t.conv1d(x, t.param(params.at(pre + ".w")), t.param(params.at(pre + ".b")), cfg.prenet_strides[i]);
    x = t.gelu(x);
  }
  x = t.add_rowvec(t.matmul_nt(x, t.param(params.at("speech_prenet.proj.w"))),
                   t.param(params.at("speech_prenet.proj.b")));
  return x;
}

Var Model::unit_prenet(Tape& t, const std::vector<int>& units) {
  for (int u : units)
    if (u < 0 || u > cfg.unit_vocab)
      throw VocabError("unit_prenet: unit id " + std::to_string(u) + " outside [0," +
                       std::to_string(cfg.unit_vocab) + "] (MASK = " + std::to_string(cfg.unit_vocab) + ")");
  if (static_cast<int64_t>(units.size()) > cfg.max_positions)
    throw InputError("unit_prenet: sequence of " + std::to_string(units.size()) +
                     " exceeds max positions " + std::to_string(cfg.max_positions));
  Var emb = t.embedding(t.param(params.at("unit_prenet.embed")), units);
  if (units.empty()) return emb;
  std::vector<int> pos_ids(units.size());
  for (size_t i = 0; i < units.size(); ++i) pos_ids[i] = static_cast<int>(i);
  Var pos = t.embedding(t.param(params.at("unit_prenet.pos")), pos_ids);
  return t.add(emb, pos);
}

Var Model::speech_encoder(Tape& t, Var x) {
  return encoder_stack_fwd(t, params, "speech_enc", cfg.n_layers_speech_enc, dims_of(cfg), x);
}

Var Model::unit_encoder(Tape& t, Var x) {
  return encoder_stack_fwd(t, params, "unit_enc", cfg.n_layers_unit_enc, dims_of(cfg), x);
}

Var Model::s2u_logits_cosine(Tape& t, Var h) {
  Var proj = t.matmul_nt(h, t.param(params.at("s2u.ws")));     // [T x d_e]
  Var pn = t.normalize_rows(proj);
  Var en = t.normalize_rows(t.param(params.at("s2u.e")));      // [K x d_e]
  return t.scale(t.matmul_nt(pn, en), 1.0 / cfg.tau);
}

Var Model::unit_logits(Tape& t, Var c) { return t.matmul_nt(c, t.param(params.at("head.wu"))); }

Var Model::text_decoder(Tape& t, Var ctx, const std::vector<int>& prefix) {
  if (prefix.empty() || prefix[0] != TextVocab().bos())
    throw InputError("text_decoder: prefix must begin with BOS");
  for (int id : prefix)
    if (id < 0 || id >= cfg.text_vocab)
      throw VocabError("text_decoder: token " + std::to_string(id) + " out of vocabulary");
  Var x = t.embedding(t.param(params.at("dec.embed")), prefix);
  x = decoder_stack_fwd(t, params, "dec", cfg.n_layers_dec, dims_of(cfg), x, ctx);
  return t.add_rowvec(t.matmul_nt(x, t.param(params.at("dec.out.w"))), t.param(params.at("dec.out.b")));
}

Var Model::ctc_head(Tape& t, Var c) {
  if (t.val(c).rows() < 2) throw InputError("ctc_head: needs at least 2 positions (conv kernel 2)");
  Var h = t.conv1d(c, t.param(params.at("ctc.conv.w")), t.param(params.at("ctc.conv.b")), 1);
  h = t.gelu(h);
  h = t.add_rowvec(t.matmul_nt(h, t.param(params.at("ctc.proj.w"))), t.param(params.at("ctc.proj.b")));
  return t.log_softmax_rows(h);
}

FinetuneMode finetune_mode_from(const std::string& name) {
  if (name == "asr" || name == "ctc_attention_asr") return FinetuneMode::ctc_attention_asr;
  if (name == "st" || name == "ed_only_st") return FinetuneMode::ed_only_st;
  if (name == "encoder-only" || name == "encoder_only_ctc") return FinetuneMode::encoder_only_ctc;
  throw ConfigError("unknown fine-tune mode '" + name + "' (asr | st | encoder-only)");
}

std::string to_string(FinetuneMode m) {
  switch (m) {
    case FinetuneMode::ctc_attention_asr: return "ctc_attention_asr";
    case FinetuneMode::ed_only_st: return "ed_only_st";
    case FinetuneMode::encoder_only_ctc: return "encoder_only_ctc";
  }
  return "?";
}

std::vector<std::string> unit_prenet_param_names(const ModelConfig&) {
  return {"unit_prenet.embed", "unit_prenet.pos"};
}

std::vector<std::string> decoder_param_names(const ModelConfig& cfg) {
  std::vector<std::string> out = {"dec.embed", "dec.final_ln.g", "dec.final_ln.b", "dec.out.w", "dec.out.b"};
  for (int i = 0; i < cfg.n_layers_dec; ++i) {
    const std::string pre = "dec.l" + std::to_string(i);
    for (const char* w : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo", ".attn.bq", ".attn.bk", ".attn.bv",
                          ".attn.bo", ".cross.wq", ".cross.wk", ".cross.wv", ".cross.wo", ".cross.bq",
                          ".cross.bk", ".cross.bv", ".cross.bo", ".ln1.g", ".ln1.b", ".lnc.g", ".lnc.b",
                          ".ffn.w1", ".ffn.b1", ".ffn.w2", ".ffn.b2", ".ln2.g", ".ln2.b", ".relbias"})
      out.push_back(pre + w);
  }
  return out;
}

std::vector<std::string> ctc_head_param_names(const ModelConfig&) {
  return {"ctc.conv.w", "ctc.conv.b", "ctc.proj.w", "ctc.proj.b"};
}

Params assemble_finetune_model(const Params& pretrained, const ModelConfig& cfg, FinetuneMode mode) {
  std::vector<std::string> drop = unit_prenet_param_names(cfg);
  if (mode == FinetuneMode::ed_only_st)
    for (const auto& n : ctc_head_param_names(cfg)) drop.push_back(n);
  if (mode == FinetuneMode::encoder_only_ctc)
    for (const auto& n : decoder_param_names(cfg)) drop.push_back(n);

  // everything the fine-tuning graph needs must exist in the checkpoint
  Params reference = init_speechut_params(cfg, 0);
  std::string missing;
  for (const auto& name : reference.names())
    if (!pretrained.has(name)) missing += (missing.empty() ? "" : ", ") + name;
  if (!missing.empty()) throw CheckpointError("checkpoint is missing tensors: " + missing);

  Params out;
  for (const auto& [name, param] : pretrained.map()) {
    if (std::find(drop.begin(), drop.end(), name) != drop.end()) continue;
    out.add(name, param.value);
  }
  return out;
}

}  // namespace speechut
