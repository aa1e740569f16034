#ifndef ADVRE_TRAINER_H_
#define ADVRE_TRAINER_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "advre/adversarial.h"
#include "advre/corpus.h"
#include "advre/encoder.h"
#include "advre/rng.h"

namespace advre {

struct PretrainConfig {
  std::size_t epochs = 50;
  double learning_rate = 0.1;
  std::size_t batch_size = 32;
  std::optional<double> clip_norm;
  std::uint64_t seed = 1;

  void validate() const;
};

struct PretrainLog {
  std::vector<double> epoch_loss;  // mean cross-entropy per epoch
};

// Softmax classifier over all relations on top of the encoder, trained with
// cross-entropy against the distant labels. The softmax weight rows are the
// relation embedding table, so they carry over to the discriminator.
PretrainLog pretrain_classifier(const Corpus& corpus, const Encoder& encoder,
                                EncoderParams& params, const PretrainConfig& cfg);

// Softmax P(r | s) under the current relation table, evaluation mode.
std::vector<double> relation_probabilities(const Instance& inst,
                                           const Encoder& encoder,
                                           const EncoderParams& params);
// Fraction of instances whose argmax relation equals their label.
double classifier_accuracy(const Corpus& corpus, const Encoder& encoder,
                           const EncoderParams& params);

// Top ceil(q * N) non-NA instances by P(label | s) become confident; the rest
// and every NA instance are unconfident. Ties go to the lower id.
CorpusSplit initial_split(const Corpus& corpus, const Encoder& encoder,
                          const EncoderParams& params, double q);

struct TrainConfig {
  double alpha_d = 0.1;  // discriminator learning rate
  double alpha_s = 0.01;  // sampler learning rate (scaled by adv.lambda)
  std::size_t epochs = 100;
  std::size_t promotion_period = 10;
  double promotion_threshold = 0.5;  // tau_D
  double confident_fraction = 0.3;   // q
  std::optional<double> clip_norm;
  double divergence_limit = 1e6;
  AdvConfig adv;
  std::uint64_t seed = 1;

  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss_d = 0.0;
  double loss_s = 0.0;
  std::size_t confident_size = 0;
  std::size_t promoted = 0;
  std::size_t clamped_logs = 0;
  std::size_t sampler_steps = 0;
  std::size_t discriminator_steps = 0;

  bool operator==(const EpochMetrics&) const = default;
};

struct TrainState {
  std::size_t epoch = 0;
  CorpusSplit split;
  EncoderParams params;
  Rng batch_rng;
  Rng dropout_rng;
  std::vector<EpochMetrics> metrics;
  std::vector<InstanceId> promoted_ids;  // in promotion order
};

TrainState make_train_state(CorpusSplit split, EncoderParams params,
                            std::uint64_t seed);

struct StepLosses {
  double sampler = 0.0;        // L~_S before the sampler update
  double discriminator = 0.0;  // L~_D before the discriminator update
  std::size_t clamped = 0;
};

// One 1:1 alternation: an SGD step on L~_S for W (lr alpha_s * lambda), then
// an SGD step on L~_D for the encoder and relation table (lr alpha_d), with
// Q_u recomputed under the updated W. `dropout_rng` may be null to disable
// dropout.
StepLosses adversarial_step(std::span<const Instance* const> confident,
                            std::span<const Instance* const> unconfident,
                            const Encoder& encoder, EncoderParams& params,
                            const TrainConfig& cfg, Rng* dropout_rng);

// Moves I_u instances (never NA) with D(s, r_s) >= tau_D and C(s) strictly
// above the median C over I_u into I_c. With a single unconfident instance
// only the D test applies. Returns the moved ids.
std::vector<InstanceId> promote(TrainState& state, const Corpus& corpus,
                                const Encoder& encoder, const TrainConfig& cfg);

struct TrainHooks {
  // After every promotion epoch and once at the end.
  std::function<void(const TrainState&)> on_checkpoint;
  // Before a TrainingError is thrown for divergence.
  std::function<void(const TrainState&)> on_abort;
};

// Runs cfg.epochs further epochs. Each epoch makes ceil(|I_u| / |I_u batch|)
// alternations.
void train_adversarial(TrainState& state, const Corpus& corpus,
                       const Encoder& encoder, const TrainConfig& cfg,
                       const TrainHooks& hooks = {});

// epoch,L_D,L_S,|I_c|,promoted_count
void write_metrics_csv(const std::vector<EpochMetrics>& metrics,
                       std::ostream& os);

}  // namespace advre

#endif  // ADVRE_TRAINER_H_
