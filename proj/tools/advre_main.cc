#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "advre/config.h"
#include "advre/errors.h"
#include "advre/pipeline.h"

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  std::optional<std::string> arch;
  std::vector<std::string> overrides;
  bool force = false;
};

void add_common(CLI::App* cmd, Options& opt) {
  cmd->add_option("--config", opt.config_path, "key = value configuration file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", opt.seed, "random seed for every stage");
  cmd->add_option("--out", opt.out, "output directory")->capture_default_str();
  cmd->add_option("--arch", opt.arch, "sentence encoder")
      ->check(CLI::IsMember({"cnn", "pcnn", "rnn", "birnn"}));
  cmd->add_option("--set", opt.overrides, "extra key=value setting (repeatable)");
}

// defaults < config file < ADVRE_* environment < command-line flags
advre::RunConfig resolve(const Options& opt) {
  advre::RunConfig cfg = advre::default_run_config();
  if (!opt.config_path.empty()) advre::apply_config_file(cfg, opt.config_path);
  advre::apply_env_overrides(cfg);
  for (const std::string& kv : opt.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw advre::ConfigError("--set expects key=value, got '" + kv + "'");
    advre::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.arch) advre::apply_setting(cfg, "arch", *opt.arch);
  cfg.finalize();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial denoising for distantly supervised relation extraction"};
  app.require_subcommand(1);
  Options opt;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic noisy corpus");
  add_common(gen, opt);
  gen->add_flag("--force", opt.force, "overwrite an existing dataset");
  auto* pre = app.add_subcommand("pretrain", "pretrain the encoder as a classifier");
  add_common(pre, opt);
  auto* train = app.add_subcommand("train", "adversarial training from the pretrained encoder");
  add_common(train, opt);
  auto* eval = app.add_subcommand("eval", "held-out precision/recall and P@N");
  add_common(eval, opt);
  auto* insp = app.add_subcommand("inspect", "sentences ranked by confusing score");
  add_common(insp, opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const advre::RunConfig cfg = resolve(opt);
    const advre::RunPaths paths(opt.out);
    if (gen->parsed()) advre::run_gen_data(cfg, paths, opt.force, std::cout);
    if (pre->parsed()) advre::run_pretrain(cfg, paths, std::cout);
    if (train->parsed()) advre::run_train(cfg, paths, std::cout);
    if (eval->parsed()) advre::run_eval(cfg, paths, std::cout);
    if (insp->parsed()) advre::run_inspect(cfg, paths, std::cout);
  } catch (const advre::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
