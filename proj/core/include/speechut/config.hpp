#pragma once

#include <map>
#include <string>
#include <vector>

#include "speechut/model.hpp"
#include "speechut/trainer.hpp"

namespace speechut {

// Layered "key = value" configuration: file entries first, then command-line
// overrides on top. Keys are namespaced (model.*, train.*, decode.*, unit.*,
// corpus.*). Unknown keys are an error that lists the valid ones.
class KvConfig {
 public:
  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);
  void set_kv(const std::string& kv);  // "key=value"

  bool has(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& dflt) const;
  double get_double(const std::string& key, double dflt) const;
  int64_t get_int(const std::string& key, int64_t dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;
  std::vector<int64_t> get_int_list(const std::string& key, std::vector<int64_t> dflt) const;

  void ensure_known(const std::vector<std::string>& valid_keys) const;
  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

// The full key inventory and the typed views the subcommands use.
std::vector<std::string> known_config_keys();
ModelConfig model_config_from(const KvConfig& cfg);
TrainConfig train_config_from(const KvConfig& cfg);

struct DecodeOptions {
  int beam = 10;
  double w_ed = 0.8;
  double w_ctc = 0.2;
  double w_lm = 0.0;
  int64_t max_len = 200;
  bool length_normalize = false;
  int nbest = 1;
};
DecodeOptions decode_options_from(const KvConfig& cfg);

struct UnitOptions {
  int64_t k = 32;
  uint64_t seed = 1;
  int64_t max_iter = 50;
  double filter_threshold = -0.666;
  int64_t max_words = 25;
  int beam = 1;
};
UnitOptions unit_options_from(const KvConfig& cfg);

}  // namespace speechut
