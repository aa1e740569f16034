#ifndef ADVRE_ADVERSARIAL_H_
#define ADVRE_ADVERSARIAL_H_

#include <cstddef>
#include <span>
#include <vector>

#include "advre/corpus.h"
#include "advre/encoder.h"
#include "advre/tensor.h"

namespace advre {

// log() arguments are clamped from below at this value.
inline constexpr double kLogFloor = 1e-12;

struct AdvConfig {
  double alpha = 1.0;   // sharpness of the confusing distribution
  double lambda = 1.0;  // folded into the sampler learning rate
  std::size_t confident_batch = 50;
  std::size_t unconfident_batch = 50;

  void validate() const;  // ConfigError
};

// D(s, r) = sigmoid(r . y) for a real relation r.
double discriminator_score(std::span<const double> y, RelationId r,
                           const EncoderParams& params);
// D(s, NA): mean of D(s, r) over every r != NA.
double na_score(std::span<const double> y, const EncoderParams& params);
// D(s, r_s), dispatching NA to na_score.
double label_score(std::span<const double> y, RelationId r,
                   const EncoderParams& params);
// C(s) = W . y
double confusing_score(std::span<const double> y, const EncoderParams& params);

// g(c) = sign(c) |c|^alpha, the exponent applied to C(s) before the softmax.
double sharpen(double c, double alpha);
// Q_u(s) = exp(g(C(s))) / sum exp(g(C(s'))), max-shifted.
std::vector<double> confusing_probabilities(std::span<const double> scores,
                                            double alpha);

// Embedded instances; gradients w.r.t. each y land in ys[i].grad().
struct EmbeddedBatch {
  std::vector<InstanceId> ids;
  std::vector<Tensor> ys;
  std::vector<RelationId> labels;

  std::size_t size() const { return ys.size(); }
  bool empty() const { return ys.empty(); }
  void add(InstanceId id, Tensor y, RelationId label);
};

struct BatchScores {
  std::vector<InstanceId> ids;
  std::vector<double> confusing;      // C(s)
  std::vector<double> discriminator;  // D(s, r_s)
  std::vector<double> probability;    // Q_u(s)
};
BatchScores score_batch(const EmbeddedBatch& batch, const EncoderParams& params,
                        double alpha);

struct LossValue {
  double value = 0.0;
  std::size_t clamped = 0;  // log arguments that hit kLogFloor
};

// -sum Q_u(s) log D(s, r_s) over the unconfident batch. With `backward`,
// accumulates the gradient into params.sampler_w only: D is held fixed.
LossValue sampler_loss(const EmbeddedBatch& unconf, EncoderParams& params,
                       const AdvConfig& cfg, bool backward = true);

// -(1/|c|) sum_c log D(s, r_s) - sum_u Q_u(s) log(1 - D(s, r_s)).
// With `backward`, accumulates into params.relation_emb and every ys[i] of
// both batches; Q_u is held fixed and params.sampler_w is untouched.
// TrainingError when the confident batch is empty.
LossValue discriminator_loss(EmbeddedBatch& conf, EmbeddedBatch& unconf,
                             EncoderParams& params, const AdvConfig& cfg,
                             bool backward = true);

struct Objective {
  double discriminator = 0.0;  // L~_D
  double sampler = 0.0;        // L~_S
  // L = L~_D + lambda L~_S
  double combined(double lambda) const { return discriminator + lambda * sampler; }
};
Objective combined_objective(const EmbeddedBatch& conf,
                             const EmbeddedBatch& unconf,
                             const EncoderParams& params, const AdvConfig& cfg);

}  // namespace advre

#endif  // ADVRE_ADVERSARIAL_H_
