#include "speechut/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "speechut/trainer.hpp"

namespace speechut::analysis {

namespace {

Tensor stack_reps(Model& m, Tape& t, Var input, int layer) {
  const int n = m.cfg.n_layers_unit_enc;
  if (layer < 0 || layer > n)
    throw InputError("probe layer " + std::to_string(layer) + " out of range [0," + std::to_string(n) + "]");
  Var x = input;
  const BlockDims dims = dims_of(m.cfg);
  for (int i = 0; i < layer; ++i)
    x = transformer_layer_fwd(t, m.params, "unit_enc.l" + std::to_string(i), dims, x, false, std::nullopt);
  if (layer == n)
    x = t.layernorm_rows(x, t.param(m.params.at("unit_enc.final_ln.g")),
                         t.param(m.params.at("unit_enc.final_ln.b")));
  return t.val(x);
}

}  // namespace

Tensor speech_path_reps(Model& m, const std::vector<double>& wave, int layer) {
  Tape t;
  Var x = m.speech_prenet(t, wave);
  Var h = m.speech_encoder(t, x);
  return stack_reps(m, t, h, layer);
}

Tensor unit_path_reps(Model& m, const std::vector<int>& frame_units, int layer) {
  Tape t;
  Var u = m.unit_prenet(t, frame_units);
  return stack_reps(m, t, u, layer);
}

int default_probe_layer(const ModelConfig& cfg) { return (cfg.n_layers_unit_enc + 1) / 2; }

std::string ProbeReport::to_line() const {
  std::ostringstream os;
  os.precision(6);
  os << "layer=" << layer << " train_acc=" << train_accuracy
     << " speech_label_agreement=" << speech_label_agreement
     << " unit_label_agreement=" << unit_label_agreement << " pair_agreement=" << pair_agreement;
  for (const auto& [cls, present] : class_present) {
    os << " class" << cls << "=";
    if (present)
      os << per_class_label_agreement.at(cls);
    else
      os << "n/a";
  }
  return os.str();
}

ProbeReport probe_alignment(Model& m, const std::vector<ProbeExample>& examples, int layer,
                            int n_labels, int64_t classifier_steps, uint64_t seed) {
  if (examples.empty()) throw InputError("probe: no examples");
  ProbeReport rep;
  rep.layer = layer;
  rep.n_label_classes = n_labels;

  // collect representations per frame for both paths
  std::vector<std::vector<double>> speech_rows, unit_rows;
  std::vector<int> labels, classes;
  int64_t dim = 0;
  for (const ProbeExample& ex : examples) {
    Tensor sp = speech_path_reps(m, ex.wave, layer);
    Tensor un = unit_path_reps(m, ex.frame_units, layer);
    if (sp.rows() != un.rows() || sp.rows() != static_cast<int64_t>(ex.frame_labels.size()))
      throw ShapeError("probe: per-frame alignment mismatch");
    dim = sp.cols();
    for (int64_t i = 0; i < sp.rows(); ++i) {
      speech_rows.emplace_back(sp.v.begin() + i * dim, sp.v.begin() + (i + 1) * dim);
      unit_rows.emplace_back(un.v.begin() + i * dim, un.v.begin() + (i + 1) * dim);
      labels.push_back(ex.frame_labels[static_cast<size_t>(i)]);
      classes.push_back(ex.frame_classes[static_cast<size_t>(i)]);
    }
  }
  const int64_t n = static_cast<int64_t>(speech_rows.size());

  // linear softmax classifier trained on the speech-path representations
  Params probe_params;
  {
    Tensor wt = Tensor::zeros({n_labels, dim});
    Rng rng(derive_seed(seed, "probe-init"));
    for (double& x : wt.v) x = 0.01 * rng.normal();
    probe_params.add("probe.w", std::move(wt));
    probe_params.add("probe.b", Tensor::zeros({n_labels}));
  }
  Tensor features = Tensor::zeros({n, dim});
  for (int64_t i = 0; i < n; ++i)
    std::copy(speech_rows[static_cast<size_t>(i)].begin(), speech_rows[static_cast<size_t>(i)].end(),
              features.v.begin() + i * dim);
  AdamState state;
  for (int64_t step = 0; step < classifier_steps; ++step) {
    Tape t;
    Var logits = t.add_rowvec(t.matmul_nt(t.input(features), t.param(probe_params.at("probe.w"))),
                              t.param(probe_params.at("probe.b")));
    Var loss = t.scale(t.cross_entropy(logits, labels, 0.0), 1.0 / static_cast<double>(n));
    t.backward(loss);
    adam_update(probe_params, state, 5e-2, 0.9, 0.98, 1e-8, 0.0);
  }

  auto predict = [&](const std::vector<double>& row) {
    const Tensor& wt = probe_params.at("probe.w").value;
    const Tensor& bt = probe_params.at("probe.b").value;
    int best = 0;
    double best_v = -1e300;
    for (int c = 0; c < n_labels; ++c) {
      double s = bt.v[static_cast<size_t>(c)];
      for (int64_t j = 0; j < dim; ++j) s += wt.at(c, j) * row[static_cast<size_t>(j)];
      if (s > best_v) {
        best_v = s;
        best = c;
      }
    }
    return best;
  };

  std::map<int, int64_t> class_total, class_label_ok, class_pair_ok;
  int64_t speech_ok = 0, unit_ok = 0, pair_ok = 0;
  for (int64_t i = 0; i < n; ++i) {
    const int ps = predict(speech_rows[static_cast<size_t>(i)]);
    const int pu = predict(unit_rows[static_cast<size_t>(i)]);
    const int lab = labels[static_cast<size_t>(i)];
    const int cls = classes[static_cast<size_t>(i)];
    if (ps == lab) ++speech_ok;
    if (pu == lab) ++unit_ok;
    if (ps == pu) ++pair_ok;
    ++class_total[cls];
    if (pu == lab) ++class_label_ok[cls];
    if (ps == pu) ++class_pair_ok[cls];
  }
  rep.train_accuracy = static_cast<double>(speech_ok) / static_cast<double>(n);
  rep.speech_label_agreement = rep.train_accuracy;
  rep.unit_label_agreement = static_cast<double>(unit_ok) / static_cast<double>(n);
  rep.pair_agreement = static_cast<double>(pair_ok) / static_cast<double>(n);
  for (int cls = 0; cls < 3; ++cls) {
    const auto it = class_total.find(cls);
    if (it == class_total.end() || it->second == 0) {
      rep.class_present[cls] = false;
      continue;
    }
    rep.class_present[cls] = true;
    rep.per_class_label_agreement[cls] =
        static_cast<double>(class_label_ok[cls]) / static_cast<double>(it->second);
    rep.per_class_pair_agreement[cls] =
        static_cast<double>(class_pair_ok[cls]) / static_cast<double>(it->second);
  }
  return rep;
}

void export_reps(std::ostream& os, const std::vector<RepRow>& rows) {
  char buf[64];
  for (const RepRow& r : rows) {
    os << r.utt_id << '\t' << r.pos << '\t' << r.modality << '\t' << r.layer << '\t';
    for (size_t i = 0; i < r.values.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", r.values[i]);
      os << (i ? " " : "") << buf;
    }
    os << "\n";
  }
}

std::vector<RepRow> read_reps(std::istream& is) {
  std::vector<RepRow> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    RepRow r;
    std::istringstream ls(line);
    std::string pos_s, layer_s, values_s;
    std::getline(ls, r.utt_id, '\t');
    std::getline(ls, pos_s, '\t');
    std::getline(ls, r.modality, '\t');
    std::getline(ls, layer_s, '\t');
    std::getline(ls, values_s);
    r.pos = std::stoll(pos_s);
    r.layer = std::stoi(layer_s);
    std::istringstream vs(values_s);
    double v;
    while (vs >> v) r.values.push_back(v);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace speechut::analysis
