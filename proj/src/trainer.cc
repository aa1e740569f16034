#include "advre/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "advre/errors.h"

namespace advre {

void PretrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("pretrain learning rate must be positive");
  if (batch_size < 1) throw ConfigError("pretrain batch size must be at least 1");
}

void TrainConfig::validate() const {
  if (!(alpha_d > 0.0) || !(alpha_s > 0.0)) {
    throw ConfigError("learning rates alpha_d and alpha_s must be positive");
  }
  if (promotion_period < 1) throw ConfigError("promotion_period must be at least 1");
  if (!(confident_fraction > 0.0 && confident_fraction < 1.0)) {
    throw ConfigError("confident_fraction must be in (0, 1)");
  }
  if (!(promotion_threshold >= 0.0 && promotion_threshold <= 1.0)) {
    throw ConfigError("promotion_threshold must be in [0, 1]");
  }
  adv.validate();
}

namespace {

std::vector<double> logits(std::span<const double> y, const EncoderParams& params) {
  std::vector<double> z(params.relation_emb.rows());
  for (std::size_t r = 0; r < z.size(); ++r) z[r] = dot(params.relation_emb.row(r), y);
  return z;
}

std::vector<double> softmax_of(std::vector<double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double& v : z) {
    v = std::exp(v - mx);
    s += v;
  }
  for (double& v : z) v /= s;
  return z;
}

}  // namespace

std::vector<double> relation_probabilities(const Instance& inst,
                                           const Encoder& encoder,
                                           const EncoderParams& params) {
  const Tensor y = encoder.embed(inst, params);
  return softmax_of(logits(y.data(), params));
}

double classifier_accuracy(const Corpus& corpus, const Encoder& encoder,
                           const EncoderParams& params) {
  if (corpus.empty()) return 0.0;
  std::size_t hits = 0;
  for (const Instance& inst : corpus.instances) {
    const auto p = relation_probabilities(inst, encoder, params);
    const auto best = std::max_element(p.begin(), p.end()) - p.begin();
    if (best == inst.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(corpus.size());
}

PretrainLog pretrain_classifier(const Corpus& corpus, const Encoder& encoder,
                                EncoderParams& params,
                                const PretrainConfig& cfg) {
  cfg.validate();
  PretrainLog log;
  if (cfg.epochs == 0) return log;
  if (corpus.empty()) throw TrainingError("cannot pretrain on an empty corpus");

  Rng order_rng = Rng::stream(cfg.seed, "pretrain-batch");
  Rng dropout_rng = Rng::stream(cfg.seed, "pretrain-dropout");
  std::vector<Tensor*> trainable = params.discriminator_tensors();
  const SgdConfig sgd{cfg.learning_rate, cfg.clip_norm};
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const Instance& inst = corpus.instances[order[k]];
        Encoding enc = encoder.encode(inst, params, true, &dropout_rng);
        const auto p = softmax_of(logits(enc.y.data(), params));
        const auto label = static_cast<std::size_t>(inst.label);
        total -= std::log(std::max(p[label], 1e-300));
        // d(-log p_label)/dz_r = p_r - [r == label]
        for (std::size_t r = 0; r < p.size(); ++r) {
          const double g = scale * (p[r] - (r == label ? 1.0 : 0.0));
          auto row = params.relation_emb.row(r);
          auto rg = params.relation_emb.grad_row(r);
          auto yg = enc.y.grad();
          for (std::size_t j = 0; j < row.size(); ++j) {
            rg[j] += g * enc.y[j];
            yg[j] += g * row[j];
          }
        }
        encoder.backward(inst, enc, params);
      }
      sgd_step(trainable, sgd);
    }
    const double mean = total / static_cast<double>(corpus.size());
    if (!std::isfinite(mean)) {
      throw TrainingError("pretraining loss became non-finite in epoch " +
                          std::to_string(epoch + 1));
    }
    log.epoch_loss.push_back(mean);
  }
  return log;
}

CorpusSplit initial_split(const Corpus& corpus, const Encoder& encoder,
                          const EncoderParams& params, double q) {
  if (!(q > 0.0 && q < 1.0)) {
    throw ConfigError("confident fraction must be in (0, 1)");
  }
  struct Ranked {
    double prob;
    InstanceId id;
  };
  std::vector<Ranked> ranked;
  CorpusSplit split;
  for (const Instance& inst : corpus.instances) {
    if (inst.label == kNa) {
      split.unconfident.insert(inst.id);
      continue;
    }
    const auto p = relation_probabilities(inst, encoder, params);
    ranked.push_back({p[static_cast<std::size_t>(inst.label)], inst.id});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    return a.prob != b.prob ? a.prob > b.prob : a.id < b.id;
  });
  const auto take = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(ranked.size())));
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    (i < take ? split.confident : split.unconfident).insert(ranked[i].id);
  }
  if (split.confident.empty()) {
    throw ConfigError("initial split left the confident set empty "
                      "(no non-NA training instances?)");
  }
  return split;
}

TrainState make_train_state(CorpusSplit split, EncoderParams params,
                            std::uint64_t seed) {
  TrainState s;
  s.split = std::move(split);
  s.params = std::move(params);
  s.batch_rng = Rng::stream(seed, "batch");
  s.dropout_rng = Rng::stream(seed, "dropout");
  return s;
}

namespace {

struct EncodedBatch {
  std::vector<Encoding> encodings;
  EmbeddedBatch batch;
};

EncodedBatch encode_batch(std::span<const Instance* const> instances,
                          const Encoder& encoder, const EncoderParams& params,
                          Rng* dropout_rng) {
  EncodedBatch out;
  for (const Instance* inst : instances) {
    Encoding enc = encoder.encode(*inst, params, dropout_rng != nullptr, dropout_rng);
    Tensor y = enc.y;
    out.batch.add(inst->id, std::move(y), inst->label);
    out.encodings.push_back(std::move(enc));
  }
  return out;
}

void backprop_batch(std::span<const Instance* const> instances,
                    EncodedBatch& eb, const Encoder& encoder,
                    EncoderParams& params) {
  for (std::size_t i = 0; i < instances.size(); ++i) {
    Encoding& enc = eb.encodings[i];
    auto src = eb.batch.ys[i].grad();
    std::copy(src.begin(), src.end(), enc.y.grad().begin());
    encoder.backward(*instances[i], enc, params);
  }
}

}  // namespace

StepLosses adversarial_step(std::span<const Instance* const> confident,
                            std::span<const Instance* const> unconfident,
                            const Encoder& encoder, EncoderParams& params,
                            const TrainConfig& cfg, Rng* dropout_rng) {
  StepLosses out;
  EncodedBatch conf = encode_batch(confident, encoder, params, dropout_rng);
  EncodedBatch unconf = encode_batch(unconfident, encoder, params, dropout_rng);

  // Sampler: only W moves; the embeddings stay valid for the next step.
  const LossValue ls = sampler_loss(unconf.batch, params, cfg.adv);
  std::vector<Tensor*> w = params.sampler_tensors();
  sgd_step(w, SgdConfig{cfg.alpha_s * cfg.adv.lambda, cfg.clip_norm});

  // Discriminator: Q_u from the updated W, held constant.
  const LossValue ld = discriminator_loss(conf.batch, unconf.batch, params, cfg.adv);
  backprop_batch(confident, conf, encoder, params);
  backprop_batch(unconfident, unconf, encoder, params);
  std::vector<Tensor*> d = params.discriminator_tensors();
  sgd_step(d, SgdConfig{cfg.alpha_d, cfg.clip_norm});

  out.sampler = ls.value;
  out.discriminator = ld.value;
  out.clamped = ls.clamped + ld.clamped;
  return out;
}

std::vector<InstanceId> promote(TrainState& state, const Corpus& corpus,
                                const Encoder& encoder, const TrainConfig& cfg) {
  std::vector<InstanceId> moved;
  if (state.split.unconfident.empty()) return moved;
  const auto index = corpus.index();
  std::vector<InstanceId> ids(state.split.unconfident.begin(),
                              state.split.unconfident.end());
  std::vector<double> c(ids.size()), d(ids.size());
  std::vector<RelationId> labels(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Instance& inst = corpus.instances.at(index.at(ids[i]));
    const Tensor y = encoder.embed(inst, state.params);
    c[i] = confusing_score(y.data(), state.params);
    d[i] = label_score(y.data(), inst.label, state.params);
    labels[i] = inst.label;
  }
  const bool use_median = ids.size() > 1;
  double median = 0.0;
  if (use_median) {
    std::vector<double> sorted = c;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size() / 2;
    median = sorted.size() % 2 ? sorted[m] : 0.5 * (sorted[m - 1] + sorted[m]);
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (labels[i] == kNa) continue;
    if (d[i] < cfg.promotion_threshold) continue;
    if (use_median && !(c[i] > median)) continue;
    moved.push_back(ids[i]);
  }
  for (InstanceId id : moved) state.split.promote(id);
  std::set<InstanceId> all_ids;
  for (const Instance& inst : corpus.instances) all_ids.insert(inst.id);
  state.split.check_partition(all_ids);
  state.promoted_ids.insert(state.promoted_ids.end(), moved.begin(), moved.end());
  return moved;
}

void train_adversarial(TrainState& state, const Corpus& corpus,
                       const Encoder& encoder, const TrainConfig& cfg,
                       const TrainHooks& hooks) {
  cfg.validate();
  if (cfg.epochs == 0) return;
  if (state.split.confident.empty()) {
    throw TrainingError("confident set is empty; the split is degenerate");
  }
  if (state.split.unconfident.empty()) {
    throw TrainingError("unconfident set is empty; nothing to sample");
  }
  const auto index = corpus.index();
  auto lookup = [&](const std::vector<InstanceId>& ids) {
    std::vector<const Instance*> out;
    out.reserve(ids.size());
    for (InstanceId id : ids) out.push_back(&corpus.instances.at(index.at(id)));
    return out;
  };
  auto abort = [&](const std::string& why) {
    if (hooks.on_abort) hooks.on_abort(state);
    throw TrainingError(why);
  };

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const std::vector<InstanceId> conf_ids(state.split.confident.begin(),
                                           state.split.confident.end());
    const std::vector<InstanceId> unconf_ids(state.split.unconfident.begin(),
                                             state.split.unconfident.end());
    const std::size_t iterations =
        (unconf_ids.size() + cfg.adv.unconfident_batch - 1) /
        cfg.adv.unconfident_batch;
    EpochMetrics m;
    m.epoch = state.epoch + 1;
    for (std::size_t it = 0; it < iterations; ++it) {
      const auto conf = lookup(state.batch_rng.sample(conf_ids, cfg.adv.confident_batch));
      const auto unconf =
          lookup(state.batch_rng.sample(unconf_ids, cfg.adv.unconfident_batch));
      const StepLosses l =
          adversarial_step(conf, unconf, encoder, state.params, cfg, &state.dropout_rng);
      ++m.sampler_steps;
      ++m.discriminator_steps;
      if (!std::isfinite(l.sampler) || !std::isfinite(l.discriminator) ||
          l.sampler > cfg.divergence_limit || l.discriminator > cfg.divergence_limit) {
        abort("adversarial training diverged in epoch " + std::to_string(m.epoch) +
              " (L_D=" + std::to_string(l.discriminator) +
              ", L_S=" + std::to_string(l.sampler) + ")");
      }
      m.loss_d += l.discriminator;
      m.loss_s += l.sampler;
      m.clamped_logs += l.clamped;
    }
    m.loss_d /= static_cast<double>(iterations);
    m.loss_s /= static_cast<double>(iterations);
    state.epoch = m.epoch;
    const bool promotion_epoch = state.epoch % cfg.promotion_period == 0;
    if (promotion_epoch) m.promoted = promote(state, corpus, encoder, cfg).size();
    m.confident_size = state.split.confident.size();
    state.metrics.push_back(m);
    if (promotion_epoch && hooks.on_checkpoint) hooks.on_checkpoint(state);
    if (state.split.unconfident.empty()) break;
  }
  if (hooks.on_checkpoint) hooks.on_checkpoint(state);
}

void write_metrics_csv(const std::vector<EpochMetrics>& metrics,
                       std::ostream& os) {
  os << "epoch,L_D,L_S,|I_c|,promoted_count\n";
  char buf[128];
  for (const EpochMetrics& m : metrics) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%zu,%zu\n", m.epoch, m.loss_d,
                  m.loss_s, m.confident_size, m.promoted);
    os << buf;
  }
}

}  // namespace advre
