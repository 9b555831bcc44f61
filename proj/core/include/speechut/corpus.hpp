#pragma once

#include <string>
#include <vector>

#include "speechut/tensor.hpp"
#include "speechut/vocab.hpp"

namespace speechut::corpus {

using speechut::Tensor;

// Toy phoneme classes; silence symbols carry no letter and align with the
// inter-word spaces of the transcript.
enum class SymbolClass { vowel = 0, consonant = 1, silence = 2 };

struct Symbol {
  int id = 0;
  SymbolClass cls = SymbolClass::vowel;
  char letter = 0;        // 0 for silence symbols
  double freq1 = 0.0;     // oscillator parameters
  double freq2 = 0.0;
  double amp = 0.0;
  int min_frames = 1;
  int max_frames = 3;
  std::vector<double> proto;  // feature-space prototype
  std::vector<double> drift;  // per-frame drift direction within a segment
};

// Deterministic generator description. Everything derives from (spec, seed):
// symbol inventory, lexicon, per-utterance content, waveforms, features and
// frame labels.
struct SyntheticCorpusSpec {
  int sample_rate = 16000;
  int64_t frame_hop = 320;  // must equal the prenet stride product
  int d_feat = 8;
  int n_vowels = 5;
  int n_consonants = 5;
  int n_silences = 2;
  int lexicon_words = 16;
  int word_min_syms = 2;
  int word_max_syms = 4;
  int sent_min_words = 1;
  int sent_max_words = 3;
  double feature_noise = 0.05;
  double feature_drift = 0.8;
  double wave_noise = 0.004;
  uint64_t seed = 1;

  int n_symbols() const { return n_vowels + n_consonants + n_silences; }
};

struct Lexicon {
  std::vector<Symbol> symbols;
  std::vector<std::string> words;              // spelled with the symbol letters
  std::vector<std::vector<int>> word_symbols;  // symbol ids per word
};

// Symbol inventory and lexicon are pure functions of the spec (and its seed).
Lexicon build_lexicon(const SyntheticCorpusSpec& spec);

struct Utterance {
  std::string id;
  std::string text;                // words joined by single spaces
  std::vector<int> frame_symbols;  // ground-truth symbol id per frame
  std::vector<double> wave;
  Tensor features;                 // [frames x d_feat], the k-means input
};

// One utterance, deterministic in (spec, lexicon, utt_seed). Waveform length
// is (frames+1)*hop so a valid-conv prenet with receptive field hop+80..2*hop
// emits exactly `frames` outputs.
Utterance synth_utterance(const SyntheticCorpusSpec& spec, const Lexicon& lex,
                          const std::string& id, uint64_t utt_seed);

// Text-only sampling from the same sentence distribution.
std::string sample_sentence(const SyntheticCorpusSpec& spec, const Lexicon& lex, uint64_t seed);

// ---- on-disk corpus ----
// manifest.tsv rows: id<TAB>audio-path<TAB>n-samples<TAB>transcript<TAB>unit-path("-" if absent)
// audio: headerless little-endian float32 mono
// <id>.feat: u64 frames | u64 dim | float64 rows (the generative features)
// <id>.phn: space-separated frame symbol ids
struct ManifestEntry {
  std::string id;
  std::string audio_path;  // relative to the manifest directory
  int64_t n_samples = 0;
  std::string transcript;
  std::string unit_path;  // empty if none
};

struct Manifest {
  std::string dir;  // directory holding the manifest
  std::vector<ManifestEntry> entries;

  std::string resolve(const std::string& rel) const;
  std::string feature_path(const ManifestEntry& e) const;  // .f32 -> .feat
  std::string label_path(const ManifestEntry& e) const;    // .f32 -> .phn
};

void save_manifest(const std::string& path, const Manifest& m);
// Validates before returning: unique ids, every referenced file exists.
Manifest load_manifest(const std::string& path);

void write_audio_f32(const std::string& path, const std::vector<double>& wave);
std::vector<double> read_audio_f32(const std::string& path);
void write_features(const std::string& path, const Tensor& features);
Tensor read_features(const std::string& path);
void write_frame_labels(const std::string& path, const std::vector<int>& labels);
std::vector<int> read_frame_labels(const std::string& path);

// Generates n_utts utterances plus sidecar files and the manifest; returns it.
Manifest gen_corpus(const std::string& dir, const SyntheticCorpusSpec& spec, int64_t n_utts);

}  // namespace speechut::corpus
