#pragma once

#include <string>
#include <utility>
#include <vector>

#include "speechut/seq2seq.hpp"
#include "speechut/trainer.hpp"

namespace speechut::unitgen {

using speechut::Tensor;

// k-means codebook over feature frames.
struct Codebook {
  Tensor centroids;  // [K x d]
  uint64_t seed = 0;
  int64_t iterations = 0;
  std::vector<double> inertia_trace;  // one entry per Lloyd assignment pass

  int64_t k() const { return centroids.rows(); }
  int64_t dim() const { return centroids.cols(); }
};

// Lloyd iterations from k-means++ initialization; stops at max_iter or an
// assignment fixpoint. Empty clusters are re-seeded from the point farthest
// from its assigned centroid.
Codebook kmeans_fit(const Tensor& features, int64_t k, uint64_t seed, int64_t max_iter = 50);

// nearest centroid per frame (squared Euclidean); ties resolve to lowest id
std::vector<int> assign_units(const Tensor& features, const Codebook& cb);

struct ReducedUnits {
  std::vector<int> ids;         // no two adjacent ids equal
  std::vector<int64_t> durations;  // run lengths; same size as ids
};
ReducedUnits reduce_units(const std::vector<int>& frame_units);
std::vector<int> expand_units(const ReducedUnits& reduced);

// ---- codebook / unit files ----
// codebook: u64 K | u64 d | u64 seed | K*d little-endian float64
void save_codebook(const std::string& path, const Codebook& cb);
Codebook load_codebook(const std::string& path);
// one example per line, space-separated decimal ids; ".dur" files carry the
// matching run lengths in the same layout
void write_unit_file(const std::string& path, const std::vector<std::vector<int>>& units);
std::vector<std::vector<int>> read_unit_file(const std::string& path);
void write_duration_file(const std::string& path, const std::vector<std::vector<int64_t>>& durs);
std::vector<std::vector<int64_t>> read_duration_file(const std::string& path);

// ---- T2U ----
struct T2UPair {
  std::vector<int> units;  // reduced
  std::string text;
  double avg_loglik = 0.0;
};

// per paired example: assign -> reduce -> pair with the transcription
std::vector<T2UPair> build_t2u_corpus(const std::vector<std::pair<Tensor, std::string>>& paired,
                                      const Codebook& cb);

// Teacher-forced training of a generator (either direction). Pairs are
// (src tokens, tgt tokens); returns the per-step mean-NLL trace.
struct SeqPair {
  std::vector<int> src;
  std::vector<int> tgt;
};
std::vector<double> train_seq2seq(Seq2Seq& model, const std::vector<SeqPair>& pairs,
                                  int64_t steps, double peak_lr, uint64_t seed,
                                  std::ostream* log = nullptr);

struct GenResult {
  std::vector<int> tokens;   // generated target ids, BOS/EOS stripped
  double avg_loglik = 0.0;   // mean chosen-token log-prob (0 when nothing generated)
};
// greedy (beam=1) or beam generation; throws InputError when no EOS appears
// within cap_factor * max(1, |src|) steps
GenResult generate(Seq2Seq& model, const std::vector<int>& src, int beam = 1, int64_t cap_factor = 8);

// text -> reduced units through a trained T2U generator
GenResult t2u_generate(Seq2Seq& t2u, const std::string& text, int beam = 1, int64_t cap_factor = 8);

struct FilterResult {
  std::vector<T2UPair> kept;
  std::vector<T2UPair> dropped;
};
// keep iff avg_loglik >= threshold and the text has at most max_words words
FilterResult filter_by_likelihood(const std::vector<T2UPair>& pairs, double threshold,
                                  int64_t max_words);

// ---- cascade evaluation ----
enum class CascadeMode { s2u_then_u2t, t2u_then_u2t };

// speech features -> units -> text, scored by WER against the references
double cascade_eval_s2u(const std::vector<std::pair<Tensor, std::string>>& corpus,
                        const Codebook& cb, Seq2Seq& u2t);
// text -> units -> text round trip, scored by WER against the original text
double cascade_eval_t2u(const std::vector<std::string>& texts, Seq2Seq& t2u, Seq2Seq& u2t);

}  // namespace speechut::unitgen
