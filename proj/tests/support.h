#ifndef ADVRE_TESTS_SUPPORT_H_
#define ADVRE_TESTS_SUPPORT_H_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "advre/corpus.h"
#include "advre/encoder.h"
#include "advre/rng.h"
#include "advre/tensor.h"

namespace advre::testing {

inline Instance random_instance(Rng& rng, std::size_t vocab_size, std::size_t n_relations,
                                std::size_t min_len, std::size_t max_len,
                                InstanceId id = 0) {
  Instance inst;
  inst.id = id;
  const auto n = static_cast<std::size_t>(
      rng.between(static_cast<std::int64_t>(min_len), static_cast<std::int64_t>(max_len)));
  for (std::size_t i = 0; i < n; ++i) {
    inst.tokens.push_back(
        static_cast<WordId>(rng.between(2, static_cast<std::int64_t>(vocab_size) - 1)));
  }
  inst.e1_pos = rng.below(n - 1);
  inst.e2_pos = inst.e1_pos + 1 + rng.below(n - 1 - inst.e1_pos);
  inst.pair_id = static_cast<PairId>(id);
  inst.label = static_cast<RelationId>(rng.below(n_relations));
  return inst;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// |a - n| / max(|a| + |n|, floor): relative error that stays meaningful when
// both gradients vanish.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  return std::abs(analytic - numeric) /
         std::max(std::abs(analytic) + std::abs(numeric), floor);
}

struct GradReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

// Central differences of `loss` with respect to every entry of `t`, compared
// with `analytic` (a snapshot of t.grad() taken after one backward pass).
inline void check_tensor(const std::string& name, Tensor& t,
                         const std::vector<double>& analytic,
                         const std::function<double()>& loss, GradReport& report,
                         double h = 1e-6) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double saved = t[i];
    t[i] = saved + h;
    const double up = loss();
    t[i] = saved - h;
    const double down = loss();
    t[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double err = relative_error(analytic[i], numeric);
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst = name + "[" + std::to_string(i) + "] analytic=" +
                     std::to_string(analytic[i]) + " numeric=" + std::to_string(numeric);
    }
    ++report.checked;
  }
}

inline std::vector<double> grad_copy(const Tensor& t) {
  return {t.grad().begin(), t.grad().end()};
}

inline EncoderConfig toy_encoder_config(Arch arch) {
  EncoderConfig cfg;
  cfg.arch = arch;
  cfg.word_dim = 4;
  cfg.position_dim = 2;
  cfg.hidden_dim = 3;
  cfg.window = 3;
  cfg.dropout = 0.5;
  cfg.max_len = 12;
  return cfg;
}

// Encoder parameters with every tensor (including the sampler hyperplane and
// biases) randomized so that no gradient path is trivially zero.
inline EncoderParams toy_params(const EncoderConfig& cfg, std::size_t vocab_size,
                                std::size_t n_relations, Rng& rng) {
  EncoderParams p = init_params(cfg, vocab_size, n_relations, rng);
  for (auto& [name, t] : p.named_tensors()) {
    if (name == "word_emb") {
      for (std::size_t c = 0; c < t->cols(); ++c) {
        for (std::size_t r = 1; r < t->rows(); ++r) t->at(r, c) = rng.uniform(-0.5, 0.5);
      }
    } else {
      for (double& v : t->data()) v = rng.uniform(-0.5, 0.5);
    }
  }
  return p;
}

}  // namespace advre::testing

#endif  // ADVRE_TESTS_SUPPORT_H_
