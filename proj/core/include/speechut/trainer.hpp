#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "speechut/objectives.hpp"

namespace speechut {

struct TrainConfig {
  int64_t total_steps = 3000;
  int64_t warmup_steps = 300;
  double peak_lr = 5e-4;
  std::string schedule = "linear";  // linear | tristage
  double tristage_warmup = 0.1;
  double tristage_hold = 0.4;
  double tristage_decay = 0.5;
  double tristage_start_scale = 0.01;
  double tristage_end_scale = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  uint64_t seed = 1;
  int accum = 1;  // gradient-accumulation micro-steps per update
  double lambda = 0.1;
  double gamma = 0.5;
  bool enable_ctc = true;  // U2T auxiliary CTC (Table-3 "w\o CTC" drops it)
  bool enable_mix = true;  // embedding mixing on the S2U path
  std::string loss_mode = "mean";  // mean (per-token) | sum (raw, paper-literal)
  double label_smoothing = 0.0;
  // per-task batch budgets (waveform samples / target tokens / unit tokens)
  int64_t budget_s2u_samples = 32000;
  int64_t budget_u2t_tokens = 100;
  int64_t budget_mum_tokens = 120;
  // fine-tuning
  double ctc_weight = 0.5;
  double finetune_mask_prob = 0.05;
  int finetune_mask_len = 10;
  int64_t log_every = 25;
  int64_t save_every = 0;            // 0 = only final
  std::string checkpoint_dir;        // where periodic checkpoints go

  void validate() const;
  bool mean_mode() const { return loss_mode == "mean"; }
};

// ---- pre-training data ----
struct S2UExample {
  std::vector<double> wave;
  std::vector<int> frame_units;  // aligned to prenet output frames
};
struct U2TExample {
  std::vector<int> units;  // reduced units
  std::vector<int> text;   // token ids, no BOS/EOS
};
struct MUMExample {
  std::vector<int> units;
};
struct PretrainData {
  std::vector<S2UExample> s2u;
  std::vector<U2TExample> u2t;
  std::vector<MUMExample> mum;
};

// One task-triple of example indices consumed together in a micro-step.
struct TaskBatches {
  std::vector<size_t> s2u;
  std::vector<size_t> u2t;
  std::vector<size_t> mum;
};

// ---- optimization schedules ----
double lr_linear(int64_t step, int64_t warmup, int64_t total, double peak);
double lr_tristage(int64_t step, int64_t total, double warmup_frac, double hold_frac,
                   double decay_frac, double peak, double start_scale, double end_scale);
double schedule_lr(const TrainConfig& cfg, int64_t step);

// ---- Adam ----
struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  int64_t step = 0;
};
// standard bias-corrected update with decoupled weight decay; consumes and
// clears the parameters' grad buffers
void adam_update(Params& params, AdamState& state, double lr, double beta1, double beta2,
                 double eps, double weight_decay);

// Deterministic per-epoch shuffling batch source, filling each batch up to
// the configured budget.
class BatchSampler {
 public:
  BatchSampler(const PretrainData& data, const TrainConfig& cfg);
  TaskBatches next();

 private:
  std::vector<size_t> refill(std::vector<size_t>& order, size_t& cursor, size_t n, const char* tag,
                             uint64_t& epoch);
  const PretrainData& data_;
  const TrainConfig& cfg_;
  std::vector<size_t> s2u_order_, u2t_order_, mum_order_;
  size_t s2u_cur_ = 0, u2t_cur_ = 0, mum_cur_ = 0;
  uint64_t s2u_epoch_ = 0, u2t_epoch_ = 0, mum_epoch_ = 0;
};

// Forward+backward over the three tasks for the given micro-batches, a single
// optimizer update, and the per-step loss report. step_seed fixes all span
// sampling inside the step.
LossBreakdown pretrain_step(Model& m, const PretrainData& data,
                            const std::vector<TaskBatches>& micro_batches, const TrainConfig& cfg,
                            AdamState& state, double lr, uint64_t step_seed);

struct PretrainResult {
  std::vector<LossBreakdown> trace;  // one record per step
};
PretrainResult pretrain(Model& m, const PretrainData& data, const TrainConfig& cfg,
                        std::ostream* log = nullptr);

// ---- fine-tuning ----
struct LabeledExample {
  std::vector<double> wave;
  std::vector<int> text;  // token ids, no BOS/EOS
};

// One fine-tune loss on the speech path (assembled model, no unit pre-net):
// asr = ctc_weight*CTC + (1-ctc_weight)*CE, st = CE(eps), encoder-only = CTC.
Var finetune_loss(Tape& t, Model& m, const LabeledExample& ex, FinetuneMode mode,
                  const TrainConfig& cfg, uint64_t ex_seed, double* ce_out = nullptr,
                  double* ctc_out = nullptr);

struct FinetuneResult {
  std::vector<double> trace;
};
FinetuneResult finetune(Model& m, FinetuneMode mode, const std::vector<LabeledExample>& corpus,
                        const TrainConfig& cfg, std::ostream* log = nullptr);

// Elementwise arithmetic mean of the named tensors of several checkpoints.
Params average_checkpoints(const std::vector<std::string>& paths);

}  // namespace speechut
