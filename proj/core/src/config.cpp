#include "speechut/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace speechut {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace

void KvConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line without '=': " + line);
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void KvConfig::set(const std::string& key, const std::string& value) {
  if (key.empty()) throw ConfigError("empty config key");
  kv_[key] = value;
}

void KvConfig::set_kv(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("override must look like key=value: " + kv);
  set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
}

bool KvConfig::has(const std::string& key) const { return kv_.count(key) != 0; }

std::string KvConfig::get_str(const std::string& key, const std::string& dflt) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? dflt : it->second;
}

double KvConfig::get_double(const std::string& key, double dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " is not a number: " + it->second);
  }
}

int64_t KvConfig::get_int(const std::string& key, int64_t dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  try {
    return std::stoll(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " is not an integer: " + it->second);
  }
}

bool KvConfig::get_bool(const std::string& key, bool dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key " + key + " is not a boolean: " + v);
}

std::vector<int64_t> KvConfig::get_int_list(const std::string& key, std::vector<int64_t> dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  std::vector<int64_t> out;
  std::string cur;
  for (char c : it->second + ",") {
    if (c == ',') {
      if (!trim(cur).empty()) out.push_back(std::stoll(trim(cur)));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  return out;
}

void KvConfig::ensure_known(const std::vector<std::string>& valid_keys) const {
  for (const auto& [key, value] : kv_) {
    if (std::find(valid_keys.begin(), valid_keys.end(), key) == valid_keys.end()) {
      std::ostringstream os;
      os << "unknown config key '" << key << "'; valid keys:";
      for (const auto& k : valid_keys) os << " " << k;
      throw ConfigError(os.str());
    }
  }
}

std::vector<std::string> known_config_keys() {
  return {
      "model.d_model", "model.d_ffn", "model.n_layers_speech_enc", "model.n_layers_unit_enc",
      "model.n_layers_dec", "model.n_heads", "model.unit_vocab", "model.text_vocab",
      "model.prenet_kernels", "model.prenet_strides", "model.prenet_channels", "model.d_unit_embed",
      "model.ctc_channels", "model.tau", "model.lambda", "model.gamma", "model.mask_prob",
      "model.mask_len", "model.mix_prob", "model.mix_len", "model.rel_buckets",
      "model.rel_max_distance", "model.max_positions", "model.downsample_rate",
      "train.total_steps", "train.warmup_steps", "train.peak_lr", "train.schedule",
      "train.tristage_warmup", "train.tristage_hold", "train.tristage_decay",
      "train.tristage_start_scale", "train.tristage_end_scale", "train.beta1", "train.beta2",
      "train.adam_eps", "train.weight_decay", "train.seed", "train.accum", "train.lambda",
      "train.gamma", "train.enable_ctc", "train.enable_mix", "train.loss_mode",
      "train.label_smoothing", "train.budget_s2u_samples", "train.budget_u2t_tokens",
      "train.budget_mum_tokens", "train.ctc_weight", "train.finetune_mask_prob",
      "train.finetune_mask_len", "train.log_every", "train.save_every", "train.checkpoint_dir",
      "decode.beam", "decode.w_ed", "decode.w_ctc", "decode.w_lm", "decode.max_len",
      "decode.length_normalize", "decode.nbest",
      "unit.k", "unit.seed", "unit.max_iter", "unit.filter_threshold", "unit.max_words",
      "unit.beam",
      "corpus.sample_rate", "corpus.frame_hop", "corpus.d_feat", "corpus.n_vowels",
      "corpus.n_consonants", "corpus.n_silences", "corpus.lexicon_words", "corpus.word_min_syms",
      "corpus.word_max_syms", "corpus.sent_min_words", "corpus.sent_max_words",
      "corpus.feature_noise", "corpus.feature_drift", "corpus.wave_noise", "corpus.seed",
  };
}

ModelConfig model_config_from(const KvConfig& cfg) {
  ModelConfig m;
  m.d_model = cfg.get_int("model.d_model", m.d_model);
  m.d_ffn = cfg.get_int("model.d_ffn", m.d_ffn);
  m.n_layers_speech_enc = static_cast<int>(cfg.get_int("model.n_layers_speech_enc", m.n_layers_speech_enc));
  m.n_layers_unit_enc = static_cast<int>(cfg.get_int("model.n_layers_unit_enc", m.n_layers_unit_enc));
  m.n_layers_dec = static_cast<int>(cfg.get_int("model.n_layers_dec", m.n_layers_dec));
  m.n_heads = static_cast<int>(cfg.get_int("model.n_heads", m.n_heads));
  m.unit_vocab = static_cast<int>(cfg.get_int("model.unit_vocab", m.unit_vocab));
  m.text_vocab = static_cast<int>(cfg.get_int("model.text_vocab", m.text_vocab));
  m.prenet_kernels = cfg.get_int_list("model.prenet_kernels", m.prenet_kernels);
  m.prenet_strides = cfg.get_int_list("model.prenet_strides", m.prenet_strides);
  m.prenet_channels = cfg.get_int("model.prenet_channels", m.prenet_channels);
  m.d_unit_embed = cfg.get_int("model.d_unit_embed", m.d_unit_embed);
  m.ctc_channels = cfg.get_int("model.ctc_channels", m.ctc_channels);
  m.tau = cfg.get_double("model.tau", m.tau);
  m.lambda = cfg.get_double("model.lambda", m.lambda);
  m.gamma = cfg.get_double("model.gamma", m.gamma);
  m.mask_prob = cfg.get_double("model.mask_prob", m.mask_prob);
  m.mask_len = static_cast<int>(cfg.get_int("model.mask_len", m.mask_len));
  m.mix_prob = cfg.get_double("model.mix_prob", m.mix_prob);
  m.mix_len = static_cast<int>(cfg.get_int("model.mix_len", m.mix_len));
  m.rel_buckets = static_cast<int>(cfg.get_int("model.rel_buckets", m.rel_buckets));
  m.rel_max_distance = static_cast<int>(cfg.get_int("model.rel_max_distance", m.rel_max_distance));
  m.max_positions = cfg.get_int("model.max_positions", m.max_positions);
  m.downsample_rate = cfg.get_int("model.downsample_rate", m.downsample_rate);
  m.validate();
  return m;
}

TrainConfig train_config_from(const KvConfig& cfg) {
  TrainConfig t;
  t.total_steps = cfg.get_int("train.total_steps", t.total_steps);
  t.warmup_steps = cfg.get_int("train.warmup_steps", t.warmup_steps);
  t.peak_lr = cfg.get_double("train.peak_lr", t.peak_lr);
  t.schedule = cfg.get_str("train.schedule", t.schedule);
  t.tristage_warmup = cfg.get_double("train.tristage_warmup", t.tristage_warmup);
  t.tristage_hold = cfg.get_double("train.tristage_hold", t.tristage_hold);
  t.tristage_decay = cfg.get_double("train.tristage_decay", t.tristage_decay);
  t.tristage_start_scale = cfg.get_double("train.tristage_start_scale", t.tristage_start_scale);
  t.tristage_end_scale = cfg.get_double("train.tristage_end_scale", t.tristage_end_scale);
  t.beta1 = cfg.get_double("train.beta1", t.beta1);
  t.beta2 = cfg.get_double("train.beta2", t.beta2);
  t.adam_eps = cfg.get_double("train.adam_eps", t.adam_eps);
  t.weight_decay = cfg.get_double("train.weight_decay", t.weight_decay);
  t.seed = static_cast<uint64_t>(cfg.get_int("train.seed", static_cast<int64_t>(t.seed)));
  t.accum = static_cast<int>(cfg.get_int("train.accum", t.accum));
  t.lambda = cfg.get_double("train.lambda", t.lambda);
  t.gamma = cfg.get_double("train.gamma", t.gamma);
  t.enable_ctc = cfg.get_bool("train.enable_ctc", t.enable_ctc);
  t.enable_mix = cfg.get_bool("train.enable_mix", t.enable_mix);
  t.loss_mode = cfg.get_str("train.loss_mode", t.loss_mode);
  t.label_smoothing = cfg.get_double("train.label_smoothing", t.label_smoothing);
  t.budget_s2u_samples = cfg.get_int("train.budget_s2u_samples", t.budget_s2u_samples);
  t.budget_u2t_tokens = cfg.get_int("train.budget_u2t_tokens", t.budget_u2t_tokens);
  t.budget_mum_tokens = cfg.get_int("train.budget_mum_tokens", t.budget_mum_tokens);
  t.ctc_weight = cfg.get_double("train.ctc_weight", t.ctc_weight);
  t.finetune_mask_prob = cfg.get_double("train.finetune_mask_prob", t.finetune_mask_prob);
  t.finetune_mask_len = static_cast<int>(cfg.get_int("train.finetune_mask_len", t.finetune_mask_len));
  t.log_every = cfg.get_int("train.log_every", t.log_every);
  t.save_every = cfg.get_int("train.save_every", t.save_every);
  t.checkpoint_dir = cfg.get_str("train.checkpoint_dir", t.checkpoint_dir);
  t.validate();
  return t;
}

DecodeOptions decode_options_from(const KvConfig& cfg) {
  DecodeOptions d;
  d.beam = static_cast<int>(cfg.get_int("decode.beam", d.beam));
  d.w_ed = cfg.get_double("decode.w_ed", d.w_ed);
  d.w_ctc = cfg.get_double("decode.w_ctc", d.w_ctc);
  d.w_lm = cfg.get_double("decode.w_lm", d.w_lm);
  d.max_len = cfg.get_int("decode.max_len", d.max_len);
  d.length_normalize = cfg.get_bool("decode.length_normalize", d.length_normalize);
  d.nbest = static_cast<int>(cfg.get_int("decode.nbest", d.nbest));
  return d;
}

UnitOptions unit_options_from(const KvConfig& cfg) {
  UnitOptions u;
  u.k = cfg.get_int("unit.k", u.k);
  u.seed = static_cast<uint64_t>(cfg.get_int("unit.seed", static_cast<int64_t>(u.seed)));
  u.max_iter = cfg.get_int("unit.max_iter", u.max_iter);
  u.filter_threshold = cfg.get_double("unit.filter_threshold", u.filter_threshold);
  u.max_words = cfg.get_int("unit.max_words", u.max_words);
  u.beam = static_cast<int>(cfg.get_int("unit.beam", u.beam));
  return u;
}

}  // namespace speechut
