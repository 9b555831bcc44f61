#include "speechut/seq2seq.hpp"

#include <cmath>
#include <sstream>

namespace speechut {

void Seq2SeqConfig::validate() const {
  if (src_vocab < 1 || tgt_vocab < 1) throw ConfigError("seq2seq: vocabularies must be non-empty");
  if (d_model % n_heads != 0) throw ConfigError("seq2seq: d_model must be divisible by n_heads");
}

std::string Seq2SeqConfig::to_text() const {
  std::ostringstream os;
  os << "s2s.d_model = " << d_model << "\n";
  os << "s2s.d_ffn = " << d_ffn << "\n";
  os << "s2s.n_enc = " << n_enc << "\n";
  os << "s2s.n_dec = " << n_dec << "\n";
  os << "s2s.n_heads = " << n_heads << "\n";
  os << "s2s.src_vocab = " << src_vocab << "\n";
  os << "s2s.tgt_vocab = " << tgt_vocab << "\n";
  os << "s2s.rel_buckets = " << rel_buckets << "\n";
  os << "s2s.rel_max_distance = " << rel_max_distance << "\n";
  os << "s2s.max_positions = " << max_positions << "\n";
  return os.str();
}

Seq2SeqConfig Seq2SeqConfig::from_text(const std::string& text) {
  Seq2SeqConfig c;
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
    if (key == "s2s.d_model") c.d_model = std::stoll(val);
    else if (key == "s2s.d_ffn") c.d_ffn = std::stoll(val);
    else if (key == "s2s.n_enc") c.n_enc = std::stoi(val);
    else if (key == "s2s.n_dec") c.n_dec = std::stoi(val);
    else if (key == "s2s.n_heads") c.n_heads = std::stoi(val);
    else if (key == "s2s.src_vocab") c.src_vocab = std::stoi(val);
    else if (key == "s2s.tgt_vocab") c.tgt_vocab = std::stoi(val);
    else if (key == "s2s.rel_buckets") c.rel_buckets = std::stoi(val);
    else if (key == "s2s.rel_max_distance") c.rel_max_distance = std::stoi(val);
    else if (key == "s2s.max_positions") c.max_positions = std::stoll(val);
  }
  return c;
}

namespace {
BlockDims dims_of(const Seq2SeqConfig& c) {
  return BlockDims{c.d_model, c.d_ffn, c.n_heads, c.rel_buckets, c.rel_max_distance};
}
}  // namespace

Params init_seq2seq_params(const Seq2SeqConfig& cfg, uint64_t seed) {
  cfg.validate();
  Params p;
  Rng rng(derive_seed(seed, "seq2seq-init"));
  const int64_t d = cfg.d_model;
  auto randn = [&](std::vector<int64_t> shape, double stdev) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& x : t.v) x = stdev * rng.normal();
    return t;
  };
  p.add("enc.embed", randn({cfg.src_vocab, d}, 1.0));
  p.add("enc.pos", randn({cfg.max_positions, d}, 0.5));
  add_stack_params(p, "enc", cfg.n_enc, dims_of(cfg), false, rng);
  p.add("dec.embed", randn({cfg.tgt_vocab + 2, d}, 1.0));
  add_stack_params(p, "dec", cfg.n_dec, dims_of(cfg), true, rng);
  p.add("dec.out.w", randn({cfg.tgt_vocab + 2, d}, 1.0 / std::sqrt(static_cast<double>(d))));
  p.add("dec.out.b", Tensor::zeros({cfg.tgt_vocab + 2}));
  return p;
}

Seq2Seq::Seq2Seq(Seq2SeqConfig c, uint64_t seed) : cfg(c), params(init_seq2seq_params(c, seed)) {}

Seq2Seq::Seq2Seq(Seq2SeqConfig c, Params ps) : cfg(c), params(std::move(ps)) { cfg.validate(); }

Var Seq2Seq::encode(Tape& t, const std::vector<int>& src) {
  for (int s : src)
    if (s < 0 || s >= cfg.src_vocab)
      throw VocabError("seq2seq encode: token " + std::to_string(s) + " out of source vocabulary");
  if (static_cast<int64_t>(src.size()) > cfg.max_positions)
    throw InputError("seq2seq encode: input exceeds max positions");
  Var x = t.embedding(t.param(params.at("enc.embed")), src);
  if (!src.empty()) {
    std::vector<int> pos_ids(src.size());
    for (size_t i = 0; i < src.size(); ++i) pos_ids[i] = static_cast<int>(i);
    x = t.add(x, t.embedding(t.param(params.at("enc.pos")), pos_ids));
  }
  return encoder_stack_fwd(t, params, "enc", cfg.n_enc, dims_of(cfg), x);
}

Var Seq2Seq::decode_logits(Tape& t, Var ctx, const std::vector<int>& prefix) {
  if (prefix.empty() || prefix[0] != bos())
    throw InputError("seq2seq decode: prefix must begin with BOS");
  for (int s : prefix)
    if (s < 0 || s >= tgt_total())
      throw VocabError("seq2seq decode: token " + std::to_string(s) + " out of target vocabulary");
  Var x = t.embedding(t.param(params.at("dec.embed")), prefix);
  x = decoder_stack_fwd(t, params, "dec", cfg.n_dec, dims_of(cfg), x, ctx);
  return t.add_rowvec(t.matmul_nt(x, t.param(params.at("dec.out.w"))), t.param(params.at("dec.out.b")));
}

}  // namespace speechut
