#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "speechut/model.hpp"

namespace speechut::analysis {

// Unit-encoder representations at a chosen depth for each input path.
// layer 0 is the stack input (speech path: H; unit path: the unit pre-net
// output), layer n_layers is the full stack output including the final norm.
Tensor speech_path_reps(Model& m, const std::vector<double>& wave, int layer);
Tensor unit_path_reps(Model& m, const std::vector<int>& frame_units, int layer);
int default_probe_layer(const ModelConfig& cfg);  // middle of the unit encoder

struct ProbeExample {
  std::vector<double> wave;
  std::vector<int> frame_units;   // frame-aligned units (unit path input)
  std::vector<int> frame_labels;  // ground-truth symbol id per frame
  std::vector<int> frame_classes; // symbol class per frame (vowel/consonant/silence)
};

struct ProbeReport {
  int layer = 0;
  int n_label_classes = 0;
  double train_accuracy = 0.0;        // classifier on its speech-rep training set
  double speech_label_agreement = 0.0;
  double unit_label_agreement = 0.0;  // pred(unit rep) == frame label
  double pair_agreement = 0.0;        // pred(unit rep) == pred(speech rep)
  // keyed by symbol class id; absent classes are reported in `class_present`
  std::map<int, double> per_class_label_agreement;
  std::map<int, double> per_class_pair_agreement;
  std::map<int, bool> class_present;

  std::string to_line() const;
};

// Trains a linear phoneme classifier on speech-path representations and tests
// it on unit-path representations of the same utterances.
ProbeReport probe_alignment(Model& m, const std::vector<ProbeExample>& examples, int layer,
                            int n_labels, int64_t classifier_steps = 300, uint64_t seed = 7);

// ---- representation export ----
// Text rows "<utt-id>\t<pos>\t<modality>\t<layer>\t<v0> <v1> ...", %.17g so a
// round trip reproduces the doubles exactly.
struct RepRow {
  std::string utt_id;
  int64_t pos = 0;
  std::string modality;  // "speech" | "unit"
  int layer = 0;
  std::vector<double> values;
};

void export_reps(std::ostream& os, const std::vector<RepRow>& rows);
std::vector<RepRow> read_reps(std::istream& is);

}  // namespace speechut::analysis
