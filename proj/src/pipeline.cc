#include "advre/pipeline.h"

#include <cstdio>
#include <fstream>
#include <set>

#include "advre/corpus.h"
#include "advre/encoder.h"
#include "advre/eval.h"
#include "advre/rng.h"
#include "advre/trainer.h"

namespace fs = std::filesystem;

namespace advre {

RunPaths::RunPaths(fs::path out_dir)
    : out(std::move(out_dir)),
      data_dir(out / "data"),
      train_data(data_dir / "train.jsonl"),
      test_data(data_dir / "test.jsonl"),
      schema(data_dir / "schema.txt"),
      vocab(data_dir / "vocab.txt"),
      pretrain_ckpt(out / "pretrain.ckpt"),
      pretrain_log(out / "pretrain_log.csv"),
      train_ckpt(out / "train.ckpt"),
      split(out / "split.csv"),
      metrics(out / "metrics.csv"),
      diverged_ckpt(out / "diverged.ckpt"),
      eval_summary(out / "eval.csv"),
      effective_config(out / "effective_config.txt") {}

fs::path RunPaths::pr_curve(const std::string& model) const {
  return out / ("pr_" + model + ".csv");
}

fs::path RunPaths::inspect_report(const std::string& relation) const {
  return out / ("inspect_" + relation + ".txt");
}

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

void write_effective_config(const RunConfig& cfg, const RunPaths& paths) {
  fs::create_directories(paths.out);
  auto os = open_out(paths.effective_config);
  os << config_to_text(cfg);
}

void require(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw MissingArtifactError(path.string() + " not found; run '" + producer +
                               "' with the same --out first");
  }
}

struct Dataset {
  RelationSchema schema{{"NA", "r1"}};
  Vocabulary vocab;
  Corpus train;
  Corpus test;
};

Dataset load_dataset(const RunConfig& cfg, const RunPaths& paths, bool with_test) {
  require(paths.train_data, "gen-data");
  require(paths.schema, "gen-data");
  require(paths.vocab, "gen-data");
  Dataset d;
  d.schema = load_schema(paths.schema);
  d.vocab = load_vocabulary(paths.vocab);
  CorpusLimits limits;
  limits.max_len = cfg.data.max_len;
  limits.n_relations = d.schema.size();
  limits.vocab_size = d.vocab.size();
  d.train = load_corpus(paths.train_data, limits);
  if (with_test) {
    require(paths.test_data, "gen-data");
    d.test = load_corpus(paths.test_data, limits);
  }
  return d;
}

std::pair<EncoderConfig, EncoderParams> load_stage_checkpoint(const fs::path& path,
                                                              const std::string& producer,
                                                              const RunConfig& cfg,
                                                              std::ostream& log) {
  require(path, producer);
  auto loaded = load_checkpoint(path);
  if (loaded.first.arch != cfg.arch) {
    log << "note: " << path.filename().string() << " holds a "
        << arch_name(loaded.first.arch) << " encoder; the configured arch "
        << arch_name(cfg.arch) << " is ignored\n";
  }
  return loaded;
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_split(const TrainState& state, const fs::path& path) {
  auto os = open_out(path);
  os << "id,set\n";
  const std::set<InstanceId> promoted(state.promoted_ids.begin(), state.promoted_ids.end());
  for (InstanceId id : state.split.confident) {
    os << id << (promoted.count(id) ? ",promoted\n" : ",confident\n");
  }
  for (InstanceId id : state.split.unconfident) os << id << ",unconfident\n";
}

std::vector<std::size_t> choose_eval_n(const RunConfig& cfg, std::size_t n_facts,
                                       std::size_t ranking_size) {
  std::vector<std::size_t> ns = cfg.eval_n;
  if (ns.empty()) {
    ns = n_facts >= 600 ? std::vector<std::size_t>{100, 200, 300}
                        : std::vector<std::size_t>{20, 50, 100};
  }
  for (std::size_t n : ns) {
    if (n > ranking_size) {
      throw ConfigError("eval_n: N=" + std::to_string(n) + " exceeds the " +
                        std::to_string(ranking_size) + " candidate triples");
    }
  }
  return ns;
}

}  // namespace

void run_gen_data(const RunConfig& cfg, const RunPaths& paths, bool force,
                  std::ostream& log) {
  if (!force && (fs::exists(paths.train_data) || fs::exists(paths.test_data))) {
    throw ConfigError(paths.data_dir.string() +
                      " already holds a dataset; pass --force to overwrite it");
  }
  const SyntheticData data = generate_synthetic(cfg.data);
  fs::create_directories(paths.data_dir);
  save_corpus(data.train, paths.train_data);
  save_corpus(data.test, paths.test_data);
  save_schema(data.schema, paths.schema);
  save_vocabulary(data.vocab, paths.vocab);
  write_effective_config(cfg, paths);
  std::size_t noisy = 0;
  for (const Instance& inst : data.train.instances) {
    if (inst.noise_flag && *inst.noise_flag) ++noisy;
  }
  log << "wrote " << data.train.size() << " training sentences (" << noisy
      << " noisy) and " << data.test.size() << " test sentences to "
      << paths.data_dir.string() << "\n";
}

void run_pretrain(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  const Dataset d = load_dataset(cfg, paths, false);
  const EncoderConfig ecfg = cfg.encoder();
  const Encoder encoder(ecfg);
  Rng init_rng = Rng::stream(cfg.seed, "init");
  EncoderParams params = init_params(ecfg, d.vocab.size(), d.schema.size(), init_rng);
  if (!cfg.word_vectors.empty()) {
    const std::size_t n = load_pretrained_vectors(params, d.vocab, cfg.word_vectors);
    log << "loaded " << n << " pretrained word vectors\n";
  }
  const PretrainLog plog = pretrain_classifier(d.train, encoder, params, cfg.pretrain);
  write_effective_config(cfg, paths);
  save_checkpoint(ecfg, params, paths.pretrain_ckpt);
  {
    auto os = open_out(paths.pretrain_log);
    os << "epoch,loss\n";
    for (std::size_t e = 0; e < plog.epoch_loss.size(); ++e) {
      os << e + 1 << ',' << fmt(plog.epoch_loss[e]) << '\n';
    }
  }
  log << "pretrained " << arch_name(ecfg.arch) << " encoder for "
      << plog.epoch_loss.size() << " epochs; training accuracy "
      << classifier_accuracy(d.train, encoder, params) << "\n";
}

void run_train(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  const Dataset d = load_dataset(cfg, paths, false);
  auto [ecfg, params] = load_stage_checkpoint(paths.pretrain_ckpt, "pretrain", cfg, log);
  const Encoder encoder(ecfg);
  CorpusSplit split = initial_split(d.train, encoder, params, cfg.train.confident_fraction);
  log << "initial split: " << split.confident.size() << " confident, "
      << split.unconfident.size() << " unconfident\n";
  TrainState state = make_train_state(std::move(split), std::move(params), cfg.seed);
  write_effective_config(cfg, paths);

  TrainHooks hooks;
  hooks.on_checkpoint = [&](const TrainState& s) {
    save_checkpoint(ecfg, s.params, paths.train_ckpt);
    write_split(s, paths.split);
    auto os = open_out(paths.metrics);
    write_metrics_csv(s.metrics, os);
  };
  hooks.on_abort = [&](const TrainState& s) {
    save_checkpoint(ecfg, s.params, paths.diverged_ckpt);
    auto os = open_out(paths.metrics);
    write_metrics_csv(s.metrics, os);
    log << "training diverged at epoch " << s.epoch << "; state saved to "
        << paths.diverged_ckpt.string() << "\n";
  };
  train_adversarial(state, d.train, encoder, cfg.train, hooks);
  const EpochMetrics& last = state.metrics.back();
  log << "trained " << state.epoch << " epochs; L_D " << last.loss_d << ", L_S "
      << last.loss_s << ", |I_c| " << last.confident_size << ", promoted "
      << state.promoted_ids.size() << "\n";
}

void run_eval(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  const Dataset d = load_dataset(cfg, paths, true);
  require(paths.train_ckpt, "train");
  const FactSet facts = facts_from_labels(d.test);
  if (facts.empty()) throw ValidationError("test set holds no relation facts");

  struct Model {
    std::string name;
    fs::path ckpt;
  };
  std::vector<Model> models = {{"adversarial", paths.train_ckpt}};
  if (fs::exists(paths.pretrain_ckpt)) models.push_back({"pretrain", paths.pretrain_ckpt});

  write_effective_config(cfg, paths);
  auto summary = open_out(paths.eval_summary);
  summary << "model,mode,metric,value\n";
  auto row = [&](const std::string& model, const std::string& mode,
                 const std::string& metric, double value) {
    summary << model << ',' << mode << ',' << metric << ',' << fmt(value) << '\n';
  };

  for (const Model& m : models) {
    auto [ecfg, params] = load_checkpoint(m.ckpt);
    const Encoder encoder(ecfg);
    const auto ranked = score_triples(d.test, encoder, params, facts, cfg.aggregation);
    const PrCurve curve = pr_curve(ranked, facts.size());
    {
      auto os = open_out(paths.pr_curve(m.name));
      write_pr_csv(curve, os);
    }
    const auto ns = choose_eval_n(cfg, facts.size(), ranked.size());
    for (double r : {0.1, 0.2, 0.3}) {
      if (curve.back().recall >= r) {
        char name[32];
        std::snprintf(name, sizeof name, "precision@recall%.1f", r);
        row(m.name, "all", name, precision_at_recall(curve, r));
      }
    }
    log << m.name << ":";
    for (SentenceMode mode : {SentenceMode::kOne, SentenceMode::kTwo, SentenceMode::kAll}) {
      const FewSentenceResult res = few_sentence_eval(d.test, encoder, params, facts, mode,
                                                      cfg.seed, ns, cfg.aggregation);
      for (std::size_t i = 0; i < ns.size(); ++i) {
        row(m.name, sentence_mode_name(mode), "P@" + std::to_string(ns[i]), res.precision[i]);
      }
      row(m.name, sentence_mode_name(mode), "P@mean", res.mean);
      log << ' ' << sentence_mode_name(mode) << " P@mean=" << res.mean;
    }
    bool any_flag = false;
    for (const Instance& inst : d.train.instances) any_flag = any_flag || inst.noise_flag.has_value();
    if (any_flag) {
      try {
        const NoiseDetection nd = noise_detection_auc(d.train, encoder, params);
        row(m.name, "train", "noise_auc_confusing", nd.auc_confusing);
        row(m.name, "train", "noise_auc_discriminator", nd.auc_discriminator);
        log << " noise AUC(C)=" << nd.auc_confusing;
      } catch (const ValidationError&) {
        // Every flagged instance is clean (or noisy): AUC undefined.
      }
    }
    log << "\n";
  }
  log << "wrote " << paths.eval_summary.string() << "\n";
}

void run_inspect(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  const Dataset d = load_dataset(cfg, paths, false);
  auto [ecfg, params] = load_stage_checkpoint(paths.train_ckpt, "train", cfg, log);
  const Encoder encoder(ecfg);
  RelationId rel = 0;
  try {
    rel = d.schema.id(cfg.inspect_relation);
  } catch (const ValidationError&) {
    throw ConfigError("inspect_relation: unknown relation '" + cfg.inspect_relation + "'");
  }
  if (rel == kNa) throw ConfigError("inspect_relation: NA cannot be inspected");
  const InspectReport report =
      inspect(d.train, encoder, params, d.vocab, d.schema, rel, cfg.inspect_k);
  write_effective_config(cfg, paths);
  {
    auto os = open_out(paths.inspect_report(cfg.inspect_relation));
    write_inspect_report(report, d.schema, os);
  }
  write_inspect_report(report, d.schema, log);
}

}  // namespace advre
