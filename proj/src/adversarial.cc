#include "advre/adversarial.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "advre/errors.h"

namespace advre {

void AdvConfig::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  if (confident_batch < 1 || unconfident_batch < 1) {
    throw ConfigError("batch sizes must be at least 1");
  }
}

void EmbeddedBatch::add(InstanceId id, Tensor y, RelationId label) {
  ids.push_back(id);
  ys.push_back(std::move(y));
  labels.push_back(label);
}

namespace {

void check_relation(RelationId r, const EncoderParams& params) {
  if (r < 0 || static_cast<std::size_t>(r) >= params.relation_emb.rows()) {
    throw ValidationError("relation id " + std::to_string(r) + " out of range");
  }
}

// D(s, r) together with dD/dz_k for the logits z_k = r_k . y it depends on.
struct LabelScore {
  double d = 0.0;
  double one_minus_d = 0.0;  // computed without cancellation for real r
  std::vector<std::pair<RelationId, double>> dd_dz;
};

LabelScore score_label(std::span<const double> y, RelationId r,
                       const EncoderParams& params) {
  check_relation(r, params);
  LabelScore s;
  if (r != kNa) {
    const double z = dot(params.relation_emb.row(static_cast<std::size_t>(r)), y);
    s.d = sigmoid(z);
    s.one_minus_d = sigmoid(-z);
    s.dd_dz.emplace_back(r, s.d * s.one_minus_d);
    return s;
  }
  const std::size_t k = params.relation_emb.rows();
  if (k < 2) throw ValidationError("NA score needs at least one real relation");
  const double inv = 1.0 / static_cast<double>(k - 1);
  for (std::size_t q = 1; q < k; ++q) {
    const double sq = sigmoid(dot(params.relation_emb.row(q), y));
    s.d += sq;
    s.dd_dz.emplace_back(static_cast<RelationId>(q), sq * (1.0 - sq) * inv);
  }
  s.d *= inv;
  s.one_minus_d = 1.0 - s.d;
  return s;
}

double sharpen_derivative(double c, double alpha) {
  if (alpha == 1.0) return 1.0;
  // Floor |c| so alpha < 1 stays finite at c = 0.
  const double a = std::max(std::abs(c), 1e-6);
  return alpha * std::pow(a, alpha - 1.0);
}

double clamped_log(double v, std::size_t& clamped) {
  if (v < kLogFloor) {
    ++clamped;
    return std::log(kLogFloor);
  }
  return std::log(v);
}

// Pushes dL/dz_k back into y.grad and relation_emb.grad.
void backprop_logits(const LabelScore& s, double dl_dd, Tensor& y,
                     EncoderParams& params) {
  if (dl_dd == 0.0) return;
  for (auto [rel, dd] : s.dd_dz) {
    const double g = dl_dd * dd;
    const auto row = static_cast<std::size_t>(rel);
    auto r = params.relation_emb.row(row);
    auto rg = params.relation_emb.grad_row(row);
    auto yg = y.grad();
    for (std::size_t j = 0; j < r.size(); ++j) {
      yg[j] += g * r[j];
      rg[j] += g * y[j];
    }
  }
}

void check_batch(const EmbeddedBatch& b) {
  if (b.ys.size() != b.labels.size() || b.ids.size() != b.ys.size()) {
    throw DimensionError("embedded batch fields differ in length");
  }
}

}  // namespace

double discriminator_score(std::span<const double> y, RelationId r,
                           const EncoderParams& params) {
  check_relation(r, params);
  if (r == kNa) {
    throw ValidationError("discriminator_score takes a real relation; use na_score");
  }
  return sigmoid(dot(params.relation_emb.row(static_cast<std::size_t>(r)), y));
}

double na_score(std::span<const double> y, const EncoderParams& params) {
  return score_label(y, kNa, params).d;
}

double label_score(std::span<const double> y, RelationId r,
                   const EncoderParams& params) {
  return score_label(y, r, params).d;
}

double confusing_score(std::span<const double> y, const EncoderParams& params) {
  return dot(params.sampler_w.data(), y);
}

double sharpen(double c, double alpha) {
  if (alpha == 1.0) return c;
  const double m = std::pow(std::abs(c), alpha);
  return c < 0 ? -m : m;
}

std::vector<double> confusing_probabilities(std::span<const double> scores,
                                            double alpha) {
  if (scores.empty()) throw DimensionError("confusing_probabilities: empty batch");
  std::vector<double> g(scores.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = sharpen(scores[i], alpha);
  const double mx = *std::max_element(g.begin(), g.end());
  double z = 0.0;
  for (double& v : g) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : g) v /= z;
  return g;
}

BatchScores score_batch(const EmbeddedBatch& batch, const EncoderParams& params,
                        double alpha) {
  check_batch(batch);
  BatchScores s;
  s.ids = batch.ids;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    s.confusing.push_back(confusing_score(batch.ys[i].data(), params));
    s.discriminator.push_back(
        label_score(batch.ys[i].data(), batch.labels[i], params));
  }
  if (!batch.empty()) s.probability = confusing_probabilities(s.confusing, alpha);
  return s;
}

namespace {

LossValue sampler_loss_impl(const EmbeddedBatch& unconf,
                            const EncoderParams& params, const AdvConfig& cfg,
                            Tensor* w_grad) {
  check_batch(unconf);
  if (unconf.empty()) throw TrainingError("sampler loss on an empty batch");
  const std::size_t n = unconf.size();
  std::vector<double> c(n), logd(n);
  LossValue loss;
  for (std::size_t i = 0; i < n; ++i) {
    c[i] = confusing_score(unconf.ys[i].data(), params);
    logd[i] = clamped_log(
        label_score(unconf.ys[i].data(), unconf.labels[i], params), loss.clamped);
  }
  const std::vector<double> q = confusing_probabilities(c, cfg.alpha);
  double mean_logd = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    loss.value -= q[i] * logd[i];
    mean_logd += q[i] * logd[i];
  }
  if (w_grad) {
    auto wg = w_grad->grad();
    for (std::size_t i = 0; i < n; ++i) {
      // d/dg_i of -sum_j Q_j l_j with Q = softmax(g)
      const double dg = -q[i] * (logd[i] - mean_logd);
      const double dc = dg * sharpen_derivative(c[i], cfg.alpha);
      const auto y = unconf.ys[i].data();
      for (std::size_t j = 0; j < wg.size(); ++j) wg[j] += dc * y[j];
    }
  }
  return loss;
}

}  // namespace

LossValue sampler_loss(const EmbeddedBatch& unconf, EncoderParams& params,
                       const AdvConfig& cfg, bool backward) {
  return sampler_loss_impl(unconf, params, cfg,
                           backward ? &params.sampler_w : nullptr);
}

namespace {

LossValue discriminator_loss_impl(const EmbeddedBatch& conf,
                                  const EmbeddedBatch& unconf,
                                  const EncoderParams& params,
                                  const AdvConfig& cfg,
                                  EmbeddedBatch* conf_grad,
                                  EmbeddedBatch* unconf_grad,
                                  EncoderParams* param_grad) {
  check_batch(conf);
  check_batch(unconf);
  if (conf.empty()) {
    throw TrainingError("discriminator loss needs a non-empty confident batch");
  }
  LossValue loss;
  const double wc = 1.0 / static_cast<double>(conf.size());
  for (std::size_t i = 0; i < conf.size(); ++i) {
    const LabelScore s = score_label(conf.ys[i].data(), conf.labels[i], params);
    std::size_t before = loss.clamped;
    loss.value -= wc * clamped_log(s.d, loss.clamped);
    if (param_grad && loss.clamped == before) {
      backprop_logits(s, -wc / s.d, conf_grad->ys[i], *param_grad);
    }
  }
  if (unconf.empty()) return loss;
  std::vector<double> c(unconf.size());
  for (std::size_t i = 0; i < unconf.size(); ++i) {
    c[i] = confusing_score(unconf.ys[i].data(), params);
  }
  const std::vector<double> q = confusing_probabilities(c, cfg.alpha);
  for (std::size_t i = 0; i < unconf.size(); ++i) {
    const LabelScore s =
        score_label(unconf.ys[i].data(), unconf.labels[i], params);
    std::size_t before = loss.clamped;
    loss.value -= q[i] * clamped_log(s.one_minus_d, loss.clamped);
    if (param_grad && loss.clamped == before) {
      backprop_logits(s, q[i] / s.one_minus_d, unconf_grad->ys[i], *param_grad);
    }
  }
  return loss;
}

}  // namespace

LossValue discriminator_loss(EmbeddedBatch& conf, EmbeddedBatch& unconf,
                             EncoderParams& params, const AdvConfig& cfg,
                             bool backward) {
  if (!backward) {
    return discriminator_loss_impl(conf, unconf, params, cfg, nullptr, nullptr,
                                   nullptr);
  }
  return discriminator_loss_impl(conf, unconf, params, cfg, &conf, &unconf,
                                 &params);
}

Objective combined_objective(const EmbeddedBatch& conf,
                             const EmbeddedBatch& unconf,
                             const EncoderParams& params, const AdvConfig& cfg) {
  Objective o;
  o.discriminator =
      discriminator_loss_impl(conf, unconf, params, cfg, nullptr, nullptr, nullptr)
          .value;
  o.sampler = sampler_loss_impl(unconf, params, cfg, nullptr).value;
  return o;
}

}  // namespace advre
