// speechut: command-line driver for the unit-bridged speech-unit-text
// pipeline. Subcommands cover corpus synthesis, unit generation, generator
// training, pre-training, fine-tuning, decoding and the analysis probes.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "speechut/analysis.hpp"
#include "speechut/checkpoint.hpp"
#include "speechut/config.hpp"
#include "speechut/corpus.hpp"
#include "speechut/decode.hpp"
#include "speechut/inference.hpp"
#include "speechut/model.hpp"
#include "speechut/trainer.hpp"
#include "speechut/unitgen.hpp"

namespace fs = std::filesystem;
using namespace speechut;

namespace {

struct GlobalArgs {
  std::vector<std::string> config_files;
  std::vector<std::string> overrides;
};

KvConfig build_config(const GlobalArgs& g) {
  KvConfig cfg;
  for (const auto& f : g.config_files) cfg.load_file(f);
  for (const auto& kv : g.overrides) cfg.set_kv(kv);
  cfg.ensure_known(known_config_keys());
  return cfg;
}

corpus::SyntheticCorpusSpec corpus_spec_from(const KvConfig& cfg) {
  corpus::SyntheticCorpusSpec s;
  s.sample_rate = static_cast<int>(cfg.get_int("corpus.sample_rate", s.sample_rate));
  s.frame_hop = cfg.get_int("corpus.frame_hop", s.frame_hop);
  s.d_feat = static_cast<int>(cfg.get_int("corpus.d_feat", s.d_feat));
  s.n_vowels = static_cast<int>(cfg.get_int("corpus.n_vowels", s.n_vowels));
  s.n_consonants = static_cast<int>(cfg.get_int("corpus.n_consonants", s.n_consonants));
  s.n_silences = static_cast<int>(cfg.get_int("corpus.n_silences", s.n_silences));
  s.lexicon_words = static_cast<int>(cfg.get_int("corpus.lexicon_words", s.lexicon_words));
  s.word_min_syms = static_cast<int>(cfg.get_int("corpus.word_min_syms", s.word_min_syms));
  s.word_max_syms = static_cast<int>(cfg.get_int("corpus.word_max_syms", s.word_max_syms));
  s.sent_min_words = static_cast<int>(cfg.get_int("corpus.sent_min_words", s.sent_min_words));
  s.sent_max_words = static_cast<int>(cfg.get_int("corpus.sent_max_words", s.sent_max_words));
  s.feature_noise = cfg.get_double("corpus.feature_noise", s.feature_noise);
  s.feature_drift = cfg.get_double("corpus.feature_drift", s.feature_drift);
  s.wave_noise = cfg.get_double("corpus.wave_noise", s.wave_noise);
  s.seed = static_cast<uint64_t>(cfg.get_int("corpus.seed", static_cast<int64_t>(s.seed)));
  return s;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open text file: " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

Seq2SeqConfig generator_config(const KvConfig& cfg, bool text_to_unit) {
  const UnitOptions uo = unit_options_from(cfg);
  Seq2SeqConfig c;
  c.d_model = 48;
  c.d_ffn = 96;
  c.n_enc = 2;
  c.n_dec = 2;
  c.n_heads = 4;
  TextVocab tv;
  if (text_to_unit) {
    c.src_vocab = tv.size();
    c.tgt_vocab = static_cast<int>(uo.k);
  } else {
    c.src_vocab = static_cast<int>(uo.k);
    c.tgt_vocab = tv.size();
  }
  return c;
}

Seq2Seq load_seq2seq(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.metadata.find("s2s.") == std::string::npos)
    throw CheckpointError("not a generator checkpoint: " + path);
  return Seq2Seq(Seq2SeqConfig::from_text(ck.metadata), std::move(ck.params));
}

Model load_model(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.metadata.find("model.") == std::string::npos)
    throw CheckpointError("not a model checkpoint: " + path);
  return Model(ModelConfig::from_text(ck.metadata), std::move(ck.params));
}

// pre-training corpus assembly: speech + frame units from the manifest, text
// pairs from the generated unit-text file, MUM units from both sources
struct LoadedPretrainData {
  PretrainData data;
  size_t skipped = 0;
};

std::vector<std::pair<std::vector<int>, std::string>> read_pairs_file(const std::string& path) {
  std::vector<std::pair<std::vector<int>, std::string>> out;
  for (const std::string& line : read_lines(path)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw InputError("pairs file line without tab: " + line);
    std::vector<int> units;
    std::istringstream us(line.substr(0, tab));
    int v;
    while (us >> v) units.push_back(v);
    std::string rest = line.substr(tab + 1);
    const auto tab2 = rest.find('\t');
    if (tab2 != std::string::npos) rest = rest.substr(0, tab2);  // strip avg_loglik column
    out.push_back({std::move(units), rest});
  }
  return out;
}

LoadedPretrainData load_pretrain_data(const corpus::Manifest& man,
                                      const std::vector<std::vector<int>>& frame_units,
                                      const std::string& pairs_path) {
  if (frame_units.size() != man.entries.size())
    throw InputError("unit file has " + std::to_string(frame_units.size()) + " lines for " +
                     std::to_string(man.entries.size()) + " manifest entries");
  LoadedPretrainData out;
  TextVocab tv;
  for (size_t i = 0; i < man.entries.size(); ++i) {
    S2UExample ex;
    ex.wave = corpus::read_audio_f32(man.resolve(man.entries[i].audio_path));
    ex.frame_units = frame_units[i];
    out.data.s2u.push_back(std::move(ex));
    MUMExample mx;
    mx.units = frame_units[i];
    out.data.mum.push_back(std::move(mx));
  }
  if (!pairs_path.empty()) {
    for (auto& [units, text] : read_pairs_file(pairs_path)) {
      if (units.empty()) {
        ++out.skipped;
        continue;
      }
      U2TExample ex;
      ex.units = units;
      ex.text = tv.encode(text);
      out.data.u2t.push_back(std::move(ex));
      MUMExample mx;
      mx.units = units;
      out.data.mum.push_back(std::move(mx));
    }
  }
  return out;
}

std::vector<LabeledExample> load_labeled(const corpus::Manifest& man) {
  TextVocab tv;
  std::vector<LabeledExample> out;
  for (const auto& e : man.entries) {
    if (e.transcript.empty()) continue;
    LabeledExample ex;
    ex.wave = corpus::read_audio_f32(man.resolve(e.audio_path));
    ex.text = tv.encode(e.transcript);
    out.push_back(std::move(ex));
  }
  if (out.empty()) throw InputError("no transcribed entries in the manifest");
  return out;
}

int cmd_gen_corpus(const KvConfig& cfg, const std::string& out_dir, int64_t n_utts, bool text_only,
                   int64_t n_sents) {
  corpus::SyntheticCorpusSpec spec = corpus_spec_from(cfg);
  fs::create_directories(out_dir);
  if (text_only) {
    corpus::Lexicon lex = corpus::build_lexicon(spec);
    std::ofstream os(out_dir + "/texts.txt", std::ios::trunc);
    for (int64_t i = 0; i < n_sents; ++i)
      os << corpus::sample_sentence(spec, lex, derive_seed(spec.seed, "text", static_cast<uint64_t>(i)))
         << "\n";
    std::cout << "status=ok cmd=gen-corpus text_only=1 sents=" << n_sents
              << " out=" << out_dir + "/texts.txt" << "\n";
    return 0;
  }
  corpus::Manifest man = corpus::gen_corpus(out_dir, spec, n_utts);
  std::cout << "status=ok cmd=gen-corpus utts=" << man.entries.size()
            << " manifest=" << out_dir + "/manifest.tsv" << "\n";
  return 0;
}

int cmd_gen_units(const KvConfig& cfg, const std::string& manifest_path, const std::string& out_dir) {
  const UnitOptions uo = unit_options_from(cfg);
  corpus::Manifest man = corpus::load_manifest(manifest_path);
  if (man.entries.empty()) throw InputError("gen-units: empty manifest");
  fs::create_directories(out_dir);

  std::vector<Tensor> feats;
  int64_t total = 0;
  for (const auto& e : man.entries) {
    feats.push_back(corpus::read_features(man.feature_path(e)));
    total += feats.back().rows();
  }
  Tensor pool = Tensor::zeros({total, feats[0].cols()});
  int64_t row = 0;
  for (const Tensor& f : feats) {
    std::copy(f.v.begin(), f.v.end(), pool.v.begin() + row * f.cols());
    row += f.rows();
  }
  unitgen::Codebook cb = unitgen::kmeans_fit(pool, uo.k, uo.seed, uo.max_iter);
  unitgen::save_codebook(out_dir + "/codebook.bin", cb);

  std::vector<std::vector<int>> frame_units;
  std::vector<std::vector<int>> reduced;
  std::vector<std::vector<int64_t>> durations;
  for (const Tensor& f : feats) {
    frame_units.push_back(unitgen::assign_units(f, cb));
    unitgen::ReducedUnits r = unitgen::reduce_units(frame_units.back());
    reduced.push_back(std::move(r.ids));
    durations.push_back(std::move(r.durations));
  }
  unitgen::write_unit_file(out_dir + "/units_frame.txt", frame_units);
  unitgen::write_unit_file(out_dir + "/units_reduced.txt", reduced);
  unitgen::write_duration_file(out_dir + "/units_reduced.txt.dur", durations);

  // manifest copy pointing at the frame-level units (absolute paths)
  corpus::Manifest out_man;
  out_man.dir = out_dir;
  for (const auto& e : man.entries) {
    corpus::ManifestEntry ne = e;
    ne.audio_path = man.resolve(e.audio_path);
    ne.unit_path = fs::absolute(out_dir + "/units_frame.txt").string();
    out_man.entries.push_back(std::move(ne));
  }
  corpus::save_manifest(out_dir + "/manifest.tsv", out_man);

  std::cout << "status=ok cmd=gen-units k=" << uo.k << " iters=" << cb.iterations
            << " inertia=" << cb.inertia_trace.back() << " units=" << out_dir + "/units_frame.txt"
            << " manifest=" << out_dir + "/manifest.tsv" << "\n";
  return 0;
}

int cmd_train_generator(const KvConfig& cfg, bool text_to_unit, const std::string& manifest_path,
                        const std::string& units_path, const std::string& out_path, int64_t take,
                        int64_t steps, double lr) {
  corpus::Manifest man = corpus::load_manifest(manifest_path);
  auto frame_units = unitgen::read_unit_file(units_path);
  if (frame_units.size() != man.entries.size())
    throw InputError("unit file does not match the manifest");
  TextVocab tv;
  std::vector<unitgen::SeqPair> pairs;
  const size_t n = take > 0 ? std::min<size_t>(man.entries.size(), static_cast<size_t>(take))
                            : man.entries.size();
  for (size_t i = 0; i < n; ++i) {
    const auto reduced = unitgen::reduce_units(frame_units[i]).ids;
    const auto text_ids = tv.encode(man.entries[i].transcript);
    if (text_to_unit)
      pairs.push_back({text_ids, reduced});
    else
      pairs.push_back({reduced, text_ids});
  }
  const TrainConfig tc = train_config_from(cfg);
  Seq2Seq model(generator_config(cfg, text_to_unit), derive_seed(tc.seed, "generator-init"));
  auto trace = unitgen::train_seq2seq(model, pairs, steps, lr, tc.seed, &std::cerr);
  save_checkpoint(out_path, model.params, model.cfg.to_text());
  std::cout << "status=ok cmd=" << (text_to_unit ? "train-t2u" : "train-u2t") << " pairs=" << pairs.size()
            << " steps=" << steps << " final_loss=" << trace.back() << " out=" << out_path << "\n";
  return 0;
}

int cmd_gen_text_units(const KvConfig& cfg, const std::string& t2u_path, const std::string& texts_path,
                       const std::string& out_path) {
  const UnitOptions uo = unit_options_from(cfg);
  Seq2Seq t2u = load_seq2seq(t2u_path);
  std::vector<unitgen::T2UPair> pairs;
  size_t cap_errors = 0;
  for (const std::string& text : read_lines(texts_path)) {
    try {
      unitgen::GenResult g = unitgen::t2u_generate(t2u, text, uo.beam);
      pairs.push_back({g.tokens, text, g.avg_loglik});
    } catch (const InputError&) {
      ++cap_errors;  // length-cap runaway: drop the sample
    }
  }
  unitgen::FilterResult filtered = unitgen::filter_by_likelihood(pairs, uo.filter_threshold, uo.max_words);
  auto write_pairs = [](const std::string& path, const std::vector<unitgen::T2UPair>& ps) {
    std::ofstream os(path, std::ios::trunc);
    os.precision(10);
    for (const auto& p : ps) {
      for (size_t i = 0; i < p.units.size(); ++i) os << (i ? " " : "") << p.units[i];
      os << '\t' << p.text << '\t' << p.avg_loglik << "\n";
    }
  };
  write_pairs(out_path, filtered.kept);
  write_pairs(out_path + ".dropped", filtered.dropped);
  std::cout << "status=ok cmd=gen-text-units kept=" << filtered.kept.size()
            << " dropped=" << filtered.dropped.size() << " cap_errors=" << cap_errors
            << " threshold=" << uo.filter_threshold << " out=" << out_path << "\n";
  return 0;
}

int cmd_pretrain(const KvConfig& cfg, const std::string& manifest_path, const std::string& units_path,
                 const std::string& pairs_path, const std::string& out_path) {
  ModelConfig mc = model_config_from(cfg);
  TrainConfig tc = train_config_from(cfg);
  corpus::Manifest man = corpus::load_manifest(manifest_path);
  auto frame_units = unitgen::read_unit_file(units_path);
  LoadedPretrainData loaded = load_pretrain_data(man, frame_units, pairs_path);

  Model model(mc, derive_seed(tc.seed, "pretrain-init"));
  PretrainResult res = pretrain(model, loaded.data, tc, &std::cerr);
  save_checkpoint(out_path, model.params, mc.to_text());
  const LossBreakdown& last = res.trace.back();
  std::cout << "status=ok cmd=pretrain steps=" << tc.total_steps << " s2u=" << last.s2u()
            << " u2t=" << last.u2t() << " mum=" << last.mum << " total=" << last.total
            << " out=" << out_path << "\n";
  return 0;
}

int cmd_finetune(const KvConfig& cfg, const std::string& mode_name, const std::string& ckpt_path,
                 const std::string& manifest_path, const std::string& out_path) {
  const FinetuneMode mode = finetune_mode_from(mode_name);
  Checkpoint ck = load_checkpoint(ckpt_path);
  ModelConfig mc = ModelConfig::from_text(ck.metadata);
  Params assembled = assemble_finetune_model(ck.params, mc, mode);
  Model model(mc, std::move(assembled));

  TrainConfig tc = train_config_from(cfg);
  if (mode == FinetuneMode::ed_only_st && !cfg.has("train.label_smoothing")) tc.label_smoothing = 0.1;
  corpus::Manifest man = corpus::load_manifest(manifest_path);
  std::vector<LabeledExample> corpus_data = load_labeled(man);
  FinetuneResult res = finetune(model, mode, corpus_data, tc, &std::cerr);
  save_checkpoint(out_path, model.params, mc.to_text());
  std::cout << "status=ok cmd=finetune mode=" << to_string(mode) << " examples=" << corpus_data.size()
            << " steps=" << tc.total_steps << " final_loss=" << res.trace.back() << " out=" << out_path
            << "\n";
  return 0;
}

int cmd_decode(const KvConfig& cfg, const std::string& ckpt_path, const std::string& manifest_path,
               const std::string& out_path, const std::string& lm_path, const std::string& nbest_path) {
  Model model = load_model(ckpt_path);
  DecodeOptions dopt = decode_options_from(cfg);
  corpus::Manifest man = corpus::load_manifest(manifest_path);
  TextVocab tv;

  std::unique_ptr<CharLm> lm;
  std::unique_ptr<StepScorer> lm_scorer;
  if (!lm_path.empty()) {
    Checkpoint ck = load_checkpoint(lm_path);
    if (ck.metadata.find("lm.") == std::string::npos)
      throw CheckpointError("not a language-model checkpoint: " + lm_path);
    lm = std::make_unique<CharLm>(CharLmConfig::from_text(ck.metadata), std::move(ck.params));
    lm_scorer = lm->scorer();
  }
  const bool have_ctc = model.params.has("ctc.conv.w");

  BeamWeights w;
  w.w_ed = dopt.w_ed;
  w.w_ctc = have_ctc ? dopt.w_ctc : 0.0;
  w.w_lm = lm_scorer ? dopt.w_lm : 0.0;
  BeamOpts bo;
  bo.beam = dopt.beam;
  bo.max_len = dopt.max_len;
  bo.length_normalize = dopt.length_normalize;
  bo.nbest = dopt.nbest;

  std::ofstream os(out_path, std::ios::trunc);
  if (!os) throw InputError("cannot write hypotheses: " + out_path);
  std::ofstream nbest_os;
  if (!nbest_path.empty()) nbest_os.open(nbest_path, std::ios::trunc);

  std::vector<std::string> hyps, refs;
  size_t unfinished = 0;
  for (const auto& e : man.entries) {
    const auto wave = corpus::read_audio_f32(man.resolve(e.audio_path));
    Tensor ctx = infer_speech_context(model, wave);
    Tensor ctc_lp;
    if (have_ctc && w.w_ctc > 0 && ctx.rows() >= 2) ctc_lp = infer_ctc_logprobs(model, ctx);
    auto scorer = make_text_decoder_scorer(model, ctx);
    BeamResult res = beam_search(*scorer, ctc_lp.numel() > 0 ? &ctc_lp : nullptr, lm_scorer.get(), w, bo);
    if (!res.finished_found) ++unfinished;
    const std::string text = tv.decode(res.best.tokens);
    os << e.id << '\t' << text << "\n";
    if (nbest_os.is_open()) {
      for (size_t r = 0; r < res.nbest.size(); ++r)
        nbest_os << e.id << '\t' << r << '\t' << res.nbest[r].fused << '\t'
                 << tv.decode(res.nbest[r].tokens) << "\n";
    }
    if (!e.transcript.empty()) {
      hyps.push_back(text);
      refs.push_back(e.transcript);
    }
  }
  std::ostringstream summary;
  summary << "status=ok cmd=decode utts=" << man.entries.size() << " unfinished=" << unfinished
          << " out=" << out_path;
  if (!refs.empty()) summary << " wer=" << evaluate_wer(hyps, refs);
  std::cout << summary.str() << "\n";
  return 0;
}

int cmd_cascade(const KvConfig& cfg, const std::string& mode, const std::string& u2t_path,
                const std::string& t2u_path, const std::string& codebook_path,
                const std::string& manifest_path, const std::string& texts_path) {
  (void)cfg;
  Seq2Seq u2t = load_seq2seq(u2t_path);
  double err = 0.0;
  size_t count = 0;
  if (mode == "s2u") {
    unitgen::Codebook cb = unitgen::load_codebook(codebook_path);
    corpus::Manifest man = corpus::load_manifest(manifest_path);
    std::vector<std::pair<Tensor, std::string>> corpus_data;
    for (const auto& e : man.entries)
      corpus_data.push_back({corpus::read_features(man.feature_path(e)), e.transcript});
    err = unitgen::cascade_eval_s2u(corpus_data, cb, u2t);
    count = corpus_data.size();
  } else if (mode == "t2u") {
    Seq2Seq t2u = load_seq2seq(t2u_path);
    auto texts = read_lines(texts_path);
    err = unitgen::cascade_eval_t2u(texts, t2u, u2t);
    count = texts.size();
  } else {
    throw ConfigError("cascade-eval mode must be s2u or t2u");
  }
  std::cout << "status=ok cmd=cascade-eval mode=" << mode << " utts=" << count << " wer=" << err << "\n";
  return 0;
}

int cmd_probe(const KvConfig& cfg, const std::string& ckpt_path, const std::string& manifest_path,
              const std::string& units_path, int layer) {
  Model model = load_model(ckpt_path);
  corpus::SyntheticCorpusSpec spec = corpus_spec_from(cfg);
  corpus::Lexicon lex = corpus::build_lexicon(spec);
  corpus::Manifest man = corpus::load_manifest(manifest_path);
  auto frame_units = unitgen::read_unit_file(units_path);
  if (frame_units.size() != man.entries.size()) throw InputError("unit file does not match the manifest");

  std::vector<analysis::ProbeExample> examples;
  for (size_t i = 0; i < man.entries.size(); ++i) {
    analysis::ProbeExample ex;
    ex.wave = corpus::read_audio_f32(man.resolve(man.entries[i].audio_path));
    ex.frame_units = frame_units[i];
    ex.frame_labels = corpus::read_frame_labels(man.label_path(man.entries[i]));
    for (int s : ex.frame_labels)
      ex.frame_classes.push_back(static_cast<int>(lex.symbols.at(static_cast<size_t>(s)).cls));
    examples.push_back(std::move(ex));
  }
  const int use_layer = layer >= 0 ? layer : analysis::default_probe_layer(model.cfg);
  auto report = analysis::probe_alignment(model, examples, use_layer, spec.n_symbols());
  std::cout << "status=ok cmd=probe " << report.to_line() << "\n";
  return 0;
}

int cmd_export_reps(const KvConfig& cfg, const std::string& ckpt_path, const std::string& manifest_path,
                    const std::string& units_path, int layer, const std::string& out_path,
                    const std::string& modality) {
  (void)cfg;
  Model model = load_model(ckpt_path);
  corpus::Manifest man = corpus::load_manifest(manifest_path);
  auto frame_units = unitgen::read_unit_file(units_path);
  if (frame_units.size() != man.entries.size()) throw InputError("unit file does not match the manifest");

  std::vector<analysis::RepRow> rows;
  for (size_t i = 0; i < man.entries.size(); ++i) {
    auto push_rows = [&](const Tensor& reps, const char* tag) {
      for (int64_t p = 0; p < reps.rows(); ++p) {
        analysis::RepRow r;
        r.utt_id = man.entries[i].id;
        r.pos = p;
        r.modality = tag;
        r.layer = layer;
        r.values.assign(reps.v.begin() + p * reps.cols(), reps.v.begin() + (p + 1) * reps.cols());
        rows.push_back(std::move(r));
      }
    };
    if (modality == "speech" || modality == "both") {
      const auto wave = corpus::read_audio_f32(man.resolve(man.entries[i].audio_path));
      push_rows(analysis::speech_path_reps(model, wave, layer), "speech");
    }
    if (modality == "unit" || modality == "both")
      push_rows(analysis::unit_path_reps(model, frame_units[i], layer), "unit");
  }
  std::ofstream os(out_path, std::ios::trunc);
  if (!os) throw InputError("cannot write representations: " + out_path);
  analysis::export_reps(os, rows);
  std::cout << "status=ok cmd=export-reps rows=" << rows.size() << " layer=" << layer
            << " out=" << out_path << "\n";
  return 0;
}

int cmd_average(const std::string& out_path, const std::vector<std::string>& inputs) {
  Params avg = average_checkpoints(inputs);
  // keep the metadata of the first checkpoint
  Checkpoint first = load_checkpoint(inputs.front());
  save_checkpoint(out_path, avg, first.metadata);
  std::cout << "status=ok cmd=average-ckpt n=" << inputs.size() << " out=" << out_path << "\n";
  return 0;
}

int cmd_train_lm(const KvConfig& cfg, const std::string& texts_path, const std::string& out_path,
                 int64_t steps, double lr) {
  const TrainConfig tc = train_config_from(cfg);
  auto texts = read_lines(texts_path);
  CharLm lm(CharLmConfig{}, derive_seed(tc.seed, "lm-init"));
  auto trace = train_char_lm(lm, texts, steps, lr, tc.seed);
  save_checkpoint(out_path, lm.params, lm.cfg.to_text());
  std::cout << "status=ok cmd=train-lm texts=" << texts.size() << " steps=" << steps
            << " final_loss=" << trace.back() << " out=" << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unit-bridged speech-unit-text pre-training pipeline"};
  app.require_subcommand(1);
  GlobalArgs global;
  app.add_option("--config", global.config_files, "layered key=value config file(s)");
  app.add_option("--set", global.overrides, "config override key=value (repeatable)");

  // gen-corpus
  std::string out_dir;
  int64_t n_utts = 100;
  bool text_only = false;
  auto* gen = app.add_subcommand("gen-corpus", "synthesize a toy corpus (audio, features, labels)");
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--n-utts", n_utts, "number of utterances (or sentences with --text-only)");
  gen->add_flag("--text-only", text_only, "emit texts.txt instead of audio");

  // gen-units
  std::string manifest_path, units_out;
  auto* gu = app.add_subcommand("gen-units", "fit k-means on corpus features and emit unit files");
  gu->add_option("--manifest", manifest_path, "corpus manifest")->required();
  gu->add_option("--out-dir", units_out, "output directory")->required();

  // train-t2u / train-u2t
  std::string gen_units_path, gen_out;
  int64_t gen_take = 0, gen_steps = 1200;
  double gen_lr = 3e-3;
  auto add_gen_opts = [&](CLI::App* cmd) {
    cmd->add_option("--manifest", manifest_path, "corpus manifest")->required();
    cmd->add_option("--units-frame", gen_units_path, "frame-level unit file")->required();
    cmd->add_option("--out", gen_out, "output checkpoint")->required();
    cmd->add_option("--take", gen_take, "use only the first N manifest entries");
    cmd->add_option("--steps", gen_steps, "training steps");
    cmd->add_option("--lr", gen_lr, "peak learning rate");
  };
  auto* t2u_cmd = app.add_subcommand("train-t2u", "train the text-to-unit generator");
  add_gen_opts(t2u_cmd);
  auto* u2t_cmd = app.add_subcommand("train-u2t", "train the reversed unit-to-text generator");
  add_gen_opts(u2t_cmd);

  // gen-text-units
  std::string t2u_path, texts_path, pairs_out;
  auto* gtu = app.add_subcommand("gen-text-units", "convert a text corpus to unit-text pairs");
  gtu->add_option("--t2u", t2u_path, "t2u generator checkpoint")->required();
  gtu->add_option("--texts", texts_path, "text corpus, one sentence per line")->required();
  gtu->add_option("--out", pairs_out, "output pairs file")->required();

  // pretrain
  std::string pre_units, pre_pairs, pre_out;
  auto* pre = app.add_subcommand("pretrain", "joint S2U + U2T + MUM pre-training");
  pre->add_option("--manifest", manifest_path, "speech manifest")->required();
  pre->add_option("--units-frame", pre_units, "frame-level unit file")->required();
  pre->add_option("--pairs", pre_pairs, "unit-text pairs file (U2T task)");
  pre->add_option("--out", pre_out, "output checkpoint")->required();

  // finetune
  std::string ft_mode = "asr", ft_ckpt, ft_out;
  auto* ft = app.add_subcommand("finetune", "fine-tune an assembled model (asr | st | encoder-only)");
  ft->add_option("--mode", ft_mode, "asr | st | encoder-only");
  ft->add_option("--ckpt", ft_ckpt, "pre-trained checkpoint")->required();
  ft->add_option("--manifest", manifest_path, "labeled manifest")->required();
  ft->add_option("--out", ft_out, "output checkpoint")->required();

  // decode
  std::string dec_ckpt, dec_out, dec_lm, dec_nbest;
  auto* dec = app.add_subcommand("decode", "joint CTC/attention beam decoding");
  dec->add_option("--ckpt", dec_ckpt, "fine-tuned checkpoint")->required();
  dec->add_option("--manifest", manifest_path, "manifest to decode")->required();
  dec->add_option("--out", dec_out, "hypotheses file (utt-id<TAB>text)")->required();
  dec->add_option("--lm", dec_lm, "char LM checkpoint for shallow fusion");
  dec->add_option("--nbest-out", dec_nbest, "n-best file (utt-id<TAB>rank<TAB>score<TAB>text)");

  // cascade-eval
  std::string cas_mode, cas_u2t, cas_t2u, cas_cb;
  auto* cas = app.add_subcommand("cascade-eval", "cascade evaluation (s2u->u2t or t2u->u2t)");
  cas->add_option("--mode", cas_mode, "s2u | t2u")->required();
  cas->add_option("--u2t", cas_u2t, "u2t generator checkpoint")->required();
  cas->add_option("--t2u", cas_t2u, "t2u generator checkpoint (t2u mode)");
  cas->add_option("--codebook", cas_cb, "codebook (s2u mode)");
  cas->add_option("--manifest", manifest_path, "manifest (s2u mode)");
  cas->add_option("--texts", texts_path, "texts file (t2u mode)");

  // probe
  std::string probe_ckpt, probe_units;
  int probe_layer = -1;
  auto* pr = app.add_subcommand("probe", "linear phoneme probe of speech/unit alignment");
  pr->add_option("--ckpt", probe_ckpt, "model checkpoint")->required();
  pr->add_option("--manifest", manifest_path, "labeled manifest")->required();
  pr->add_option("--units-frame", probe_units, "frame-level unit file")->required();
  pr->add_option("--layer", probe_layer, "unit-encoder layer (default: middle)");

  // export-reps
  std::string exp_ckpt, exp_units, exp_out, exp_mod = "both";
  int exp_layer = 0;
  auto* ex = app.add_subcommand("export-reps", "dump per-position encoder representations");
  ex->add_option("--ckpt", exp_ckpt, "model checkpoint")->required();
  ex->add_option("--manifest", manifest_path, "manifest")->required();
  ex->add_option("--units-frame", exp_units, "frame-level unit file")->required();
  ex->add_option("--layer", exp_layer, "unit-encoder layer index");
  ex->add_option("--out", exp_out, "output file")->required();
  ex->add_option("--modality", exp_mod, "speech | unit | both");

  // average-ckpt
  std::string avg_out;
  std::vector<std::string> avg_in;
  auto* avg = app.add_subcommand("average-ckpt", "elementwise mean of checkpoints");
  avg->add_option("--out", avg_out, "output checkpoint")->required();
  avg->add_option("inputs", avg_in, "input checkpoints")->required();

  // train-lm
  std::string lm_texts, lm_out;
  int64_t lm_steps = 800;
  double lm_lr = 3e-3;
  auto* tlm = app.add_subcommand("train-lm", "train the character LM used for shallow fusion");
  tlm->add_option("--texts", lm_texts, "text corpus")->required();
  tlm->add_option("--out", lm_out, "output checkpoint")->required();
  tlm->add_option("--steps", lm_steps, "training steps");
  tlm->add_option("--lr", lm_lr, "peak learning rate");

  // let --config/--set appear after the subcommand name as well
  for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; })) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    KvConfig cfg = build_config(global);
    if (gen->parsed()) return cmd_gen_corpus(cfg, out_dir, n_utts, text_only, n_utts);
    if (gu->parsed()) return cmd_gen_units(cfg, manifest_path, units_out);
    if (t2u_cmd->parsed())
      return cmd_train_generator(cfg, true, manifest_path, gen_units_path, gen_out, gen_take, gen_steps, gen_lr);
    if (u2t_cmd->parsed())
      return cmd_train_generator(cfg, false, manifest_path, gen_units_path, gen_out, gen_take, gen_steps, gen_lr);
    if (gtu->parsed()) return cmd_gen_text_units(cfg, t2u_path, texts_path, pairs_out);
    if (pre->parsed()) return cmd_pretrain(cfg, manifest_path, pre_units, pre_pairs, pre_out);
    if (ft->parsed()) return cmd_finetune(cfg, ft_mode, ft_ckpt, manifest_path, ft_out);
    if (dec->parsed()) return cmd_decode(cfg, dec_ckpt, manifest_path, dec_out, dec_lm, dec_nbest);
    if (cas->parsed()) return cmd_cascade(cfg, cas_mode, cas_u2t, cas_t2u, cas_cb, manifest_path, texts_path);
    if (pr->parsed()) return cmd_probe(cfg, probe_ckpt, manifest_path, probe_units, probe_layer);
    if (ex->parsed())
      return cmd_export_reps(cfg, exp_ckpt, manifest_path, exp_units, exp_layer, exp_out, exp_mod);
    if (avg->parsed()) return cmd_average(avg_out, avg_in);
    if (tlm->parsed()) return cmd_train_lm(cfg, lm_texts, lm_out, lm_steps, lm_lr);
  } catch (const Error& e) {
    std::cout << "status=error msg=\"" << e.what() << "\"" << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cout << "status=error msg=\"" << e.what() << "\"" << std::endl;
    return 2;
  }
  return 0;
}
