#ifndef ADVRE_CONFIG_H_
#define ADVRE_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "advre/corpus.h"
#include "advre/encoder.h"
#include "advre/eval.h"
#include "advre/trainer.h"

namespace advre {

// Everything one pipeline run needs. Serialized as a flat "key = value"
// document; see README for the key list.
struct RunConfig {
  std::uint64_t seed = 1;
  SyntheticConfig data;
  Arch arch = Arch::kPcnn;
  std::size_t word_dim = 50;
  std::optional<std::size_t> position_dim;  // unset: 5 for CNNs, 3 for RNNs
  std::optional<std::size_t> hidden_dim;    // unset: 230 for CNNs, 150 for RNNs
  std::size_t window = 3;
  double dropout = 0.5;
  std::string word_vectors;  // optional pretrained vectors file
  PretrainConfig pretrain;
  TrainConfig train;
  Aggregation aggregation = Aggregation::kMax;
  std::vector<std::size_t> eval_n;  // empty: chosen from the test fact count
  std::string inspect_relation = "rel1";
  std::size_t inspect_k = 5;

  // Resolved encoder configuration (arch defaults filled in).
  EncoderConfig encoder() const;
  // Propagates the run seed into the sub-configs and validates everything.
  void finalize();
};

// Known keys in serialization order.
const std::vector<std::string>& config_keys();

RunConfig default_run_config();
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
// "key = value" lines; '#' starts a comment.
void apply_config_text(RunConfig& cfg, const std::string& text);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);
// For each key, an environment variable <prefix><KEY IN UPPER CASE>
// overrides it, e.g. ADVRE_NOISE_RATE=0.2.
void apply_env_overrides(RunConfig& cfg, const std::string& prefix = "ADVRE_");
std::string config_to_text(const RunConfig& cfg);

}  // namespace advre

#endif  // ADVRE_CONFIG_H_
