#include "speechut/unitgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "speechut/decode.hpp"

namespace speechut::unitgen {

namespace {

double sq_dist(const double* a, const double* b, int64_t d) {
  double s = 0.0;
  for (int64_t i = 0; i < d; ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

}  // namespace

Codebook kmeans_fit(const Tensor& features, int64_t k, uint64_t seed, int64_t max_iter) {
  if (features.rank() != 2) throw ShapeError("kmeans_fit: features must be [N x d]");
  const int64_t n = features.rows(), d = features.cols();
  if (n < k) throw ConfigError("kmeans_fit: need at least K=" + std::to_string(k) + " points, got " + std::to_string(n));
  if (k < 1) throw ConfigError("kmeans_fit: K must be positive");

  Codebook cb;
  cb.seed = seed;
  cb.centroids = Tensor::zeros({k, d});
  Rng rng(derive_seed(seed, "kmeans++"));

  // k-means++ seeding
  std::vector<double> min_d2(static_cast<size_t>(n), kPosInf);
  int64_t first = rng.uniform_int(n);
  std::copy_n(features.v.data() + first * d, d, cb.centroids.v.data());
  for (int64_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const double d2 = sq_dist(features.v.data() + i * d, cb.centroids.v.data() + (c - 1) * d, d);
      min_d2[static_cast<size_t>(i)] = std::min(min_d2[static_cast<size_t>(i)], d2);
      total += min_d2[static_cast<size_t>(i)];
    }
    int64_t chosen = n - 1;
    if (total > 0) {
      double r = rng.uniform() * total, acc = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        acc += min_d2[static_cast<size_t>(i)];
        if (acc >= r) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = rng.uniform_int(n);
    }
    std::copy_n(features.v.data() + chosen * d, d, cb.centroids.v.data() + c * d);
  }

  std::vector<int> assign(static_cast<size_t>(n), -1);
  std::vector<int> prev_assign;
  for (int64_t iter = 0; iter < max_iter; ++iter) {
    // assignment pass + inertia
    double inertia = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      double best = kPosInf;
      int best_c = 0;
      for (int64_t c = 0; c < k; ++c) {
        const double d2 = sq_dist(features.v.data() + i * d, cb.centroids.v.data() + c * d, d);
        if (d2 < best) {
          best = d2;
          best_c = static_cast<int>(c);
        }
      }
      assign[static_cast<size_t>(i)] = best_c;
      inertia += best;
    }
    cb.inertia_trace.push_back(inertia);
    cb.iterations = iter + 1;
    if (assign == prev_assign) break;
    prev_assign = assign;

    // update pass
    Tensor sums = Tensor::zeros({k, d});
    std::vector<int64_t> counts(static_cast<size_t>(k), 0);
    for (int64_t i = 0; i < n; ++i) {
      const int c = assign[static_cast<size_t>(i)];
      ++counts[static_cast<size_t>(c)];
      for (int64_t j = 0; j < d; ++j) sums.at(c, j) += features.at(i, j);
    }
    for (int64_t c = 0; c < k; ++c) {
      if (counts[static_cast<size_t>(c)] > 0) {
        for (int64_t j = 0; j < d; ++j)
          cb.centroids.at(c, j) = sums.at(c, j) / static_cast<double>(counts[static_cast<size_t>(c)]);
      } else {
        // empty cluster: move the centroid onto the point farthest from its
        // current assignment
        int64_t far_ix = 0;
        double far_d2 = -1.0;
        for (int64_t i = 0; i < n; ++i) {
          const int ci = assign[static_cast<size_t>(i)];
          const double d2 = sq_dist(features.v.data() + i * d, cb.centroids.v.data() + ci * d, d);
          if (d2 > far_d2) {
            far_d2 = d2;
            far_ix = i;
          }
        }
        for (int64_t j = 0; j < d; ++j) cb.centroids.at(c, j) = features.at(far_ix, j);
      }
    }
  }
  if (!cb.centroids.all_finite()) throw NumericError("kmeans_fit: NaN centroid");
  return cb;
}

std::vector<int> assign_units(const Tensor& features, const Codebook& cb) {
  if (features.rank() != 2 || features.cols() != cb.dim())
    throw ShapeError("assign_units: feature dim " + features.shape_str() + " does not match codebook dim " +
                     std::to_string(cb.dim()));
  const int64_t n = features.rows(), d = features.cols(), k = cb.k();
  std::vector<int> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    double best = kPosInf;
    int best_c = 0;
    for (int64_t c = 0; c < k; ++c) {
      const double d2 = sq_dist(features.v.data() + i * d, cb.centroids.v.data() + c * d, d);
      if (d2 < best) {  // strict: ties keep the lowest id
        best = d2;
        best_c = static_cast<int>(c);
      }
    }
    out[static_cast<size_t>(i)] = best_c;
  }
  return out;
}

ReducedUnits reduce_units(const std::vector<int>& frame_units) {
  ReducedUnits r;
  for (int u : frame_units) {
    if (!r.ids.empty() && r.ids.back() == u) {
      ++r.durations.back();
    } else {
      r.ids.push_back(u);
      r.durations.push_back(1);
    }
  }
  return r;
}

std::vector<int> expand_units(const ReducedUnits& reduced) {
  if (reduced.ids.size() != reduced.durations.size())
    throw ShapeError("expand_units: ids/durations size mismatch");
  std::vector<int> out;
  for (size_t i = 0; i < reduced.ids.size(); ++i)
    for (int64_t j = 0; j < reduced.durations[i]; ++j) out.push_back(reduced.ids[i]);
  return out;
}

void save_codebook(const std::string& path, const Codebook& cb) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot write codebook: " + path);
  const uint64_t k = static_cast<uint64_t>(cb.k()), d = static_cast<uint64_t>(cb.dim()), s = cb.seed;
  os.write(reinterpret_cast<const char*>(&k), 8);
  os.write(reinterpret_cast<const char*>(&d), 8);
  os.write(reinterpret_cast<const char*>(&s), 8);
  os.write(reinterpret_cast<const char*>(cb.centroids.v.data()),
           static_cast<std::streamsize>(cb.centroids.v.size() * sizeof(double)));
  if (!os) throw InputError("write failure on codebook: " + path);
}

Codebook load_codebook(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open codebook: " + path);
  uint64_t k, d, s;
  is.read(reinterpret_cast<char*>(&k), 8);
  is.read(reinterpret_cast<char*>(&d), 8);
  is.read(reinterpret_cast<char*>(&s), 8);
  if (!is) throw InputError("truncated codebook header: " + path);
  Codebook cb;
  cb.seed = s;
  cb.centroids = Tensor::zeros({static_cast<int64_t>(k), static_cast<int64_t>(d)});
  is.read(reinterpret_cast<char*>(cb.centroids.v.data()),
          static_cast<std::streamsize>(cb.centroids.v.size() * sizeof(double)));
  if (!is) throw InputError("truncated codebook payload: " + path);
  return cb;
}

void write_unit_file(const std::string& path, const std::vector<std::vector<int>>& units) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InputError("cannot write unit file: " + path);
  for (const auto& line : units) {
    for (size_t i = 0; i < line.size(); ++i) os << (i ? " " : "") << line[i];
    os << "\n";
  }
}

std::vector<std::vector<int>> read_unit_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open unit file: " + path);
  std::vector<std::vector<int>> out;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::vector<int> ids;
    int v;
    while (ls >> v) ids.push_back(v);
    out.push_back(std::move(ids));
  }
  return out;
}

void write_duration_file(const std::string& path, const std::vector<std::vector<int64_t>>& durs) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InputError("cannot write duration file: " + path);
  for (const auto& line : durs) {
    for (size_t i = 0; i < line.size(); ++i) os << (i ? " " : "") << line[i];
    os << "\n";
  }
}

std::vector<std::vector<int64_t>> read_duration_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open duration file: " + path);
  std::vector<std::vector<int64_t>> out;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::vector<int64_t> ids;
    int64_t v;
    while (ls >> v) ids.push_back(v);
    out.push_back(std::move(ids));
  }
  return out;
}

std::vector<T2UPair> build_t2u_corpus(const std::vector<std::pair<Tensor, std::string>>& paired,
                                      const Codebook& cb) {
  std::vector<T2UPair> out;
  out.reserve(paired.size());
  for (const auto& [features, text] : paired) {
    T2UPair p;
    p.units = reduce_units(assign_units(features, cb)).ids;
    p.text = text;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<double> train_seq2seq(Seq2Seq& model, const std::vector<SeqPair>& pairs,
                                  int64_t steps, double peak_lr, uint64_t seed, std::ostream* log) {
  if (pairs.empty()) throw InputError("train_seq2seq: no pairs");
  AdamState state;
  std::vector<double> trace;
  Rng rng(derive_seed(seed, "s2s-order"));
  const int batch = 4;
  for (int64_t step = 0; step < steps; ++step) {
    const double lr = lr_linear(step, std::max<int64_t>(1, steps / 10), steps, peak_lr);
    double loss_sum = 0.0;
    for (int b = 0; b < batch; ++b) {
      const SeqPair& pair = pairs[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(pairs.size())))];
      Tape t;
      Var ctx = model.encode(t, pair.src);
      std::vector<int> prefix = {model.bos()};
      prefix.insert(prefix.end(), pair.tgt.begin(), pair.tgt.end());
      std::vector<int> target = pair.tgt;
      target.push_back(model.eos());
      Var lg = model.decode_logits(t, ctx, prefix);
      Var loss = t.scale(t.cross_entropy(lg, target, 0.0), 1.0 / static_cast<double>(target.size()));
      loss_sum += t.val(loss).scalar_value();
      t.backward(t.scale(loss, 1.0 / batch));
    }
    adam_update(model.params, state, lr, 0.9, 0.98, 1e-8, 0.0);
    trace.push_back(loss_sum / batch);
    if (log && (step % 50 == 0 || step + 1 == steps)) (*log) << "step=" << step << " loss=" << trace.back() << "\n";
  }
  return trace;
}

namespace {

IncrementalDecoder::Spec s2s_decoder_spec(Seq2Seq& model) {
  IncrementalDecoder::Spec spec;
  spec.params = &model.params;
  spec.dims = BlockDims{model.cfg.d_model, model.cfg.d_ffn, model.cfg.n_heads,
                        model.cfg.rel_buckets, model.cfg.rel_max_distance};
  spec.n_layers = model.cfg.n_dec;
  spec.stack_prefix = "dec";
  spec.embed_name = "dec.embed";
  spec.out_w = "dec.out.w";
  spec.out_b = "dec.out.b";
  spec.vocab = model.tgt_total();
  spec.bos = model.bos();
  spec.eos = model.eos();
  return spec;
}

}  // namespace

GenResult generate(Seq2Seq& model, const std::vector<int>& src, int beam, int64_t cap_factor) {
  if (beam < 1) throw ContractError("generate: beam must be >= 1");
  Tensor ctx;
  {
    Tape t;
    ctx = t.val(model.encode(t, src));
  }
  IncrementalDecoder dec(s2s_decoder_spec(model), std::move(ctx));
  const int64_t cap = cap_factor * std::max<int64_t>(1, static_cast<int64_t>(src.size()));

  BeamOpts opts;
  opts.beam = beam;
  opts.max_len = cap;
  BeamWeights weights;
  weights.w_ed = 1.0;
  weights.w_ctc = 0.0;
  weights.w_lm = 0.0;
  BeamResult res = beam_search(dec, nullptr, nullptr, weights, opts);
  if (!res.finished_found)
    throw InputError("generate: no EOS within the hard length cap of " + std::to_string(cap) + " tokens");
  GenResult out;
  out.tokens = res.best.tokens;
  out.avg_loglik = out.tokens.empty() ? 0.0 : res.best.att / static_cast<double>(out.tokens.size() + 1);
  return out;
}

GenResult t2u_generate(Seq2Seq& t2u, const std::string& text, int beam, int64_t cap_factor) {
  TextVocab tv;
  GenResult res = generate(t2u, tv.encode(text), beam, cap_factor);
  return res;
}

FilterResult filter_by_likelihood(const std::vector<T2UPair>& pairs, double threshold,
                                  int64_t max_words) {
  FilterResult r;
  for (const T2UPair& p : pairs) {
    int64_t words = 0;
    std::istringstream is(p.text);
    std::string w;
    while (is >> w) ++words;
    if (p.avg_loglik >= threshold && words <= max_words)
      r.kept.push_back(p);
    else
      r.dropped.push_back(p);
  }
  return r;
}

double cascade_eval_s2u(const std::vector<std::pair<Tensor, std::string>>& corpus,
                        const Codebook& cb, Seq2Seq& u2t) {
  if (corpus.empty()) throw InputError("cascade_eval: empty corpus");
  TextVocab tv;
  std::vector<std::string> hyps, refs;
  for (const auto& [features, text] : corpus) {
    const auto reduced = reduce_units(assign_units(features, cb)).ids;
    GenResult g = generate(u2t, reduced, 1);
    hyps.push_back(tv.decode(g.tokens));
    refs.push_back(text);
  }
  return evaluate_wer(hyps, refs);
}

double cascade_eval_t2u(const std::vector<std::string>& texts, Seq2Seq& t2u, Seq2Seq& u2t) {
  if (texts.empty()) throw InputError("cascade_eval: empty corpus");
  TextVocab tv;
  std::vector<std::string> hyps, refs;
  for (const std::string& text : texts) {
    GenResult units = t2u_generate(t2u, text);
    GenResult back = generate(u2t, units.tokens, 1);
    hyps.push_back(tv.decode(back.tokens));
    refs.push_back(text);
  }
  return evaluate_wer(hyps, refs);
}

}  // namespace speechut::unitgen
