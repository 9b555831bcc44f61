#include "speechut/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace speechut::corpus {

namespace fs = std::filesystem;
using speechut::derive_seed;
using speechut::InputError;
using speechut::Rng;

Lexicon build_lexicon(const SyntheticCorpusSpec& spec) {
  Lexicon lex;
  Rng rng(derive_seed(spec.seed, "lexicon"));
  const char vowel_letters[] = {'a', 'e', 'i', 'o', 'u'};
  const char cons_letters[] = {'b', 'd', 'g', 'k', 't'};
  if (spec.n_vowels > 5 || spec.n_consonants > 5)
    throw speechut::ConfigError("corpus: at most 5 vowel and 5 consonant symbols are supported");

  int id = 0;
  for (int i = 0; i < spec.n_vowels; ++i) {
    Symbol s;
    s.id = id++;
    s.cls = SymbolClass::vowel;
    s.letter = vowel_letters[i];
    s.freq1 = 180.0 + 70.0 * i + 15.0 * rng.uniform();
    s.freq2 = 700.0 + 180.0 * i + 40.0 * rng.uniform();
    s.amp = 0.55 + 0.1 * rng.uniform();
    s.min_frames = 2;
    s.max_frames = 4;
    lex.symbols.push_back(s);
  }
  for (int i = 0; i < spec.n_consonants; ++i) {
    Symbol s;
    s.id = id++;
    s.cls = SymbolClass::consonant;
    s.letter = cons_letters[i];
    s.freq1 = 1400.0 + 260.0 * i + 60.0 * rng.uniform();
    s.freq2 = 2600.0 + 320.0 * i + 80.0 * rng.uniform();
    s.amp = 0.3 + 0.08 * rng.uniform();
    s.min_frames = 2;
    s.max_frames = 3;
    lex.symbols.push_back(s);
  }
  for (int i = 0; i < spec.n_silences; ++i) {
    Symbol s;
    s.id = id++;
    s.cls = SymbolClass::silence;
    s.letter = 0;
    s.freq1 = 30.0 + 10.0 * i;
    s.freq2 = 0.0;
    s.amp = 0.01;
    // fixed duration: hidden silence segments stay predictable under masking
    s.min_frames = 2;
    s.max_frames = 2;
    lex.symbols.push_back(s);
  }
  for (Symbol& s : lex.symbols) {
    s.proto.resize(static_cast<size_t>(spec.d_feat));
    s.drift.resize(static_cast<size_t>(spec.d_feat));
    for (int j = 0; j < spec.d_feat; ++j) s.proto[static_cast<size_t>(j)] = 2.0 * rng.normal();
    double norm = 0.0;
    for (int j = 0; j < spec.d_feat; ++j) {
      s.drift[static_cast<size_t>(j)] = rng.normal();
      norm += s.drift[static_cast<size_t>(j)] * s.drift[static_cast<size_t>(j)];
    }
    norm = std::sqrt(norm);
    for (int j = 0; j < spec.d_feat; ++j)
      s.drift[static_cast<size_t>(j)] *= spec.feature_drift / std::max(norm, 1e-9);
  }

  // distinct CV-pattern words spelled with the symbol letters
  std::set<std::string> seen;
  std::vector<int> vowel_ids, cons_ids;
  for (const Symbol& s : lex.symbols) {
    if (s.cls == SymbolClass::vowel) vowel_ids.push_back(s.id);
    if (s.cls == SymbolClass::consonant) cons_ids.push_back(s.id);
  }
  int guard = 0;
  while (static_cast<int>(lex.words.size()) < spec.lexicon_words && guard++ < 10000) {
    const int len = spec.word_min_syms +
                    static_cast<int>(rng.uniform_int(spec.word_max_syms - spec.word_min_syms + 1));
    std::vector<int> syms;
    std::string word;
    for (int i = 0; i < len; ++i) {
      // alternate consonant/vowel-ish, starting randomly
      const bool pick_vowel = (i % 2 == 0) ? rng.uniform() < 0.45 : rng.uniform() < 0.7;
      const int sym = pick_vowel
                          ? vowel_ids[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(vowel_ids.size())))]
                          : cons_ids[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(cons_ids.size())))];
      syms.push_back(sym);
      word.push_back(lex.symbols[static_cast<size_t>(sym)].letter);
    }
    if (seen.count(word)) continue;
    seen.insert(word);
    lex.words.push_back(word);
    lex.word_symbols.push_back(std::move(syms));
  }
  if (static_cast<int>(lex.words.size()) < spec.lexicon_words)
    throw speechut::ConfigError("corpus: could not build a distinct lexicon of the requested size");
  return lex;
}

namespace {

std::vector<int> sample_word_ids(const SyntheticCorpusSpec& spec, const Lexicon& lex, Rng& rng) {
  const int n = spec.sent_min_words +
                static_cast<int>(rng.uniform_int(spec.sent_max_words - spec.sent_min_words + 1));
  std::vector<int> out;
  for (int i = 0; i < n; ++i)
    out.push_back(static_cast<int>(rng.uniform_int(static_cast<int64_t>(lex.words.size()))));
  return out;
}

}  // namespace

std::string sample_sentence(const SyntheticCorpusSpec& spec, const Lexicon& lex, uint64_t seed) {
  Rng rng(seed);
  std::string text;
  for (int w : sample_word_ids(spec, lex, rng)) {
    if (!text.empty()) text += ' ';
    text += lex.words[static_cast<size_t>(w)];
  }
  return text;
}

Utterance synth_utterance(const SyntheticCorpusSpec& spec, const Lexicon& lex,
                          const std::string& id, uint64_t utt_seed) {
  Rng rng(utt_seed);
  Utterance u;
  u.id = id;

  const std::vector<int> word_ids = sample_word_ids(spec, lex, rng);
  std::vector<int> sym_seq;
  // silence ids are a deterministic function of position: boundary silences
  // take the last silence symbol, inter-word gaps the first
  const int gap_silence = spec.n_vowels + spec.n_consonants;
  const int edge_silence = gap_silence + std::max(0, spec.n_silences - 1);
  sym_seq.push_back(edge_silence);
  for (size_t wi = 0; wi < word_ids.size(); ++wi) {
    if (wi) sym_seq.push_back(gap_silence);  // aligns with the transcript space
    for (int s : lex.word_symbols[static_cast<size_t>(word_ids[wi])]) sym_seq.push_back(s);
    if (!u.text.empty()) u.text += ' ';
    u.text += lex.words[static_cast<size_t>(word_ids[wi])];
  }
  sym_seq.push_back(edge_silence);

  // frames per symbol segment
  std::vector<int> seg_sym, seg_len;
  for (int s : sym_seq) {
    const Symbol& sym = lex.symbols[static_cast<size_t>(s)];
    seg_sym.push_back(s);
    seg_len.push_back(sym.min_frames +
                      static_cast<int>(rng.uniform_int(sym.max_frames - sym.min_frames + 1)));
  }
  for (size_t si = 0; si < seg_sym.size(); ++si)
    for (int f = 0; f < seg_len[si]; ++f) u.frame_symbols.push_back(seg_sym[si]);
  const int64_t frames = static_cast<int64_t>(u.frame_symbols.size());

  // features: prototype + within-segment drift + noise
  u.features = Tensor::zeros({frames, spec.d_feat});
  {
    int64_t fr = 0;
    for (size_t si = 0; si < seg_sym.size(); ++si) {
      const Symbol& sym = lex.symbols[static_cast<size_t>(seg_sym[si])];
      for (int f = 0; f < seg_len[si]; ++f, ++fr) {
        for (int j = 0; j < spec.d_feat; ++j)
          u.features.at(fr, j) = sym.proto[static_cast<size_t>(j)] +
                                 sym.drift[static_cast<size_t>(j)] * static_cast<double>(f) +
                                 spec.feature_noise * rng.normal();
      }
    }
  }

  // waveform: one hop-sized block per frame plus one trailing silence block,
  // so a prenet with receptive field in (hop, 2*hop] emits exactly `frames`
  const int64_t hop = spec.frame_hop;
  u.wave.assign(static_cast<size_t>((frames + 1) * hop), 0.0);
  double phase1 = 6.28318530717958647692 * rng.uniform();
  double phase2 = 6.28318530717958647692 * rng.uniform();
  int prev_sym = -1;
  for (int64_t fr = 0; fr <= frames; ++fr) {
    const int sym_id = fr < frames ? u.frame_symbols[static_cast<size_t>(fr)]
                                   : (spec.n_vowels + spec.n_consonants);  // trailing pad: silence
    const Symbol& sym = lex.symbols[static_cast<size_t>(sym_id)];
    if (sym_id != prev_sym) {
      phase1 = 6.28318530717958647692 * rng.uniform();
      phase2 = 6.28318530717958647692 * rng.uniform();
      prev_sym = sym_id;
    }
    const double w1 = 6.28318530717958647692 * sym.freq1 / spec.sample_rate;
    const double w2 = 6.28318530717958647692 * sym.freq2 / spec.sample_rate;
    for (int64_t i = 0; i < hop; ++i) {
      const double x = sym.amp * (std::sin(phase1) + 0.35 * std::sin(phase2)) + spec.wave_noise * rng.normal();
      u.wave[static_cast<size_t>(fr * hop + i)] = x;
      phase1 += w1;
      phase2 += w2;
    }
  }
  return u;
}

std::string Manifest::resolve(const std::string& rel) const {
  if (rel.empty()) return rel;
  if (rel.front() == '/') return rel;
  return dir.empty() ? rel : dir + "/" + rel;
}

namespace {
std::string swap_ext(const std::string& path, const std::string& ext) {
  const auto dot = path.rfind('.');
  return (dot == std::string::npos ? path : path.substr(0, dot)) + ext;
}
}  // namespace

std::string Manifest::feature_path(const ManifestEntry& e) const { return resolve(swap_ext(e.audio_path, ".feat")); }
std::string Manifest::label_path(const ManifestEntry& e) const { return resolve(swap_ext(e.audio_path, ".phn")); }

void save_manifest(const std::string& path, const Manifest& m) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InputError("cannot write manifest: " + path);
  for (const ManifestEntry& e : m.entries) {
    os << e.id << '\t' << e.audio_path << '\t' << e.n_samples << '\t' << e.transcript << '\t'
       << (e.unit_path.empty() ? "-" : e.unit_path) << "\n";
  }
}

Manifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open manifest: " + path);
  Manifest m;
  m.dir = fs::path(path).parent_path().string();
  std::string line;
  std::set<std::string> ids;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::string cur;
    for (char c : line + "\t") {
      if (c == '\t') {
        cols.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (cols.size() < 3) throw InputError("manifest: malformed line '" + line + "'");
    ManifestEntry e;
    e.id = cols[0];
    e.audio_path = cols[1];
    e.n_samples = std::stoll(cols[2]);
    if (cols.size() > 3) e.transcript = cols[3];
    if (cols.size() > 4 && cols[4] != "-") e.unit_path = cols[4];
    if (!ids.insert(e.id).second) throw InputError("manifest: duplicate id " + e.id);
    m.entries.push_back(std::move(e));
  }
  // fail fast on broken references
  for (const ManifestEntry& e : m.entries) {
    if (!fs::exists(m.resolve(e.audio_path)))
      throw InputError("manifest: missing audio file " + m.resolve(e.audio_path));
    if (!e.unit_path.empty() && !fs::exists(m.resolve(e.unit_path)))
      throw InputError("manifest: missing unit file " + m.resolve(e.unit_path));
  }
  return m;
}

void write_audio_f32(const std::string& path, const std::vector<double>& wave) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot write audio: " + path);
  std::vector<float> buf(wave.size());
  for (size_t i = 0; i < wave.size(); ++i) buf[i] = static_cast<float>(wave[i]);
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

std::vector<double> read_audio_f32(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw InputError("cannot open audio: " + path);
  const std::streamsize bytes = is.tellg();
  is.seekg(0);
  std::vector<float> buf(static_cast<size_t>(bytes / 4));
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  std::vector<double> out(buf.size());
  for (size_t i = 0; i < buf.size(); ++i) out[i] = static_cast<double>(buf[i]);
  return out;
}

void write_features(const std::string& path, const Tensor& features) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot write features: " + path);
  const uint64_t rows = static_cast<uint64_t>(features.rows());
  const uint64_t cols = static_cast<uint64_t>(features.cols());
  os.write(reinterpret_cast<const char*>(&rows), 8);
  os.write(reinterpret_cast<const char*>(&cols), 8);
  os.write(reinterpret_cast<const char*>(features.v.data()),
           static_cast<std::streamsize>(features.v.size() * sizeof(double)));
}

Tensor read_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open features: " + path);
  uint64_t rows, cols;
  is.read(reinterpret_cast<char*>(&rows), 8);
  is.read(reinterpret_cast<char*>(&cols), 8);
  Tensor t = Tensor::zeros({static_cast<int64_t>(rows), static_cast<int64_t>(cols)});
  is.read(reinterpret_cast<char*>(t.v.data()), static_cast<std::streamsize>(t.v.size() * sizeof(double)));
  if (!is) throw InputError("truncated feature file: " + path);
  return t;
}

void write_frame_labels(const std::string& path, const std::vector<int>& labels) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InputError("cannot write labels: " + path);
  for (size_t i = 0; i < labels.size(); ++i) os << (i ? " " : "") << labels[i];
  os << "\n";
}

std::vector<int> read_frame_labels(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open labels: " + path);
  std::vector<int> out;
  int v;
  while (is >> v) out.push_back(v);
  return out;
}

Manifest gen_corpus(const std::string& dir, const SyntheticCorpusSpec& spec, int64_t n_utts) {
  fs::create_directories(fs::path(dir) / "audio");
  const Lexicon lex = build_lexicon(spec);
  Manifest m;
  m.dir = dir;
  for (int64_t i = 0; i < n_utts; ++i) {
    std::ostringstream id;
    id << "utt" << std::setw(5) << std::setfill('0') << i;
    Utterance u = synth_utterance(spec, lex, id.str(), derive_seed(spec.seed, "utt", static_cast<uint64_t>(i)));
    const std::string rel = "audio/" + u.id + ".f32";
    write_audio_f32(dir + "/" + rel, u.wave);
    write_features(dir + "/audio/" + u.id + ".feat", u.features);
    write_frame_labels(dir + "/audio/" + u.id + ".phn", u.frame_symbols);
    ManifestEntry e;
    e.id = u.id;
    e.audio_path = rel;
    e.n_samples = static_cast<int64_t>(u.wave.size());
    e.transcript = u.text;
    m.entries.push_back(std::move(e));
  }
  save_manifest(dir + "/manifest.tsv", m);
  return m;
}

}  // namespace speechut::corpus
