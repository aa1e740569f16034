#ifndef ADVRE_PIPELINE_H_
#define ADVRE_PIPELINE_H_

#include <filesystem>
#include <ostream>
#include <string>

#include "advre/config.h"
#include "advre/errors.h"

namespace advre {

// A stage was run before the stage that produces its inputs.
class MissingArtifactError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// File layout of one output directory.
struct RunPaths {
  explicit RunPaths(std::filesystem::path out);

  std::filesystem::path out;
  std::filesystem::path data_dir;
  std::filesystem::path train_data;
  std::filesystem::path test_data;
  std::filesystem::path schema;
  std::filesystem::path vocab;
  std::filesystem::path pretrain_ckpt;
  std::filesystem::path pretrain_log;
  std::filesystem::path train_ckpt;
  std::filesystem::path split;
  std::filesystem::path metrics;
  std::filesystem::path diverged_ckpt;
  std::filesystem::path eval_summary;
  std::filesystem::path effective_config;

  std::filesystem::path pr_curve(const std::string& model) const;
  std::filesystem::path inspect_report(const std::string& relation) const;
};

// Each stage writes the effective configuration next to its outputs and
// progress lines to `log`.
void run_gen_data(const RunConfig& cfg, const RunPaths& paths, bool force,
                  std::ostream& log);
void run_pretrain(const RunConfig& cfg, const RunPaths& paths, std::ostream& log);
void run_train(const RunConfig& cfg, const RunPaths& paths, std::ostream& log);
void run_eval(const RunConfig& cfg, const RunPaths& paths, std::ostream& log);
void run_inspect(const RunConfig& cfg, const RunPaths& paths, std::ostream& log);

}  // namespace advre

#endif  // ADVRE_PIPELINE_H_
