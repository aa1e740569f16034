// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "advre/adversarial.h"
#include "advre/config.h"
#include "advre/corpus.h"
#include "advre/encoder.h"
#include "advre/eval.h"
#include "advre/pipeline.h"
#include "advre/trainer.h"
#include "support.h"

using namespace advre;
using namespace advre::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

int failures = 0;

void report(const std::string& id, bool pass, const std::string& detail) {
  std::printf("%s criterion %s: %s\n", pass ? "PASS" : "FAIL", id.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double dot_oracle(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double d_oracle(std::span<const double> y, RelationId r, const EncoderParams& p) {
  if (r != kNa) return sig(dot_oracle(p.relation_emb.row(static_cast<std::size_t>(r)), y));
  double s = 0.0;
  for (std::size_t k = 1; k < p.relation_emb.rows(); ++k) s += sig(dot_oracle(p.relation_emb.row(k), y));
  return s / static_cast<double>(p.relation_emb.rows() - 1);
}

std::vector<double> softmax_oracle(const std::vector<double>& c) {
  const double mx = *std::max_element(c.begin(), c.end());
  std::vector<double> q(c.size());
  double z = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) z += q[i] = std::exp(c[i] - mx);
  for (double& v : q) v /= z;
  return q;
}

// ---------------------------------------------------------------- 1

void gradient_suite() {
  const auto start = Clock::now();
  double worst = 0.0;
  std::string where;
  std::size_t checked = 0;
  const std::size_t vocab = 12, n_rel = 4;
  for (Arch arch : {Arch::kCnn, Arch::kPcnn, Arch::kRnn, Arch::kBirnn}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      Rng rng(seed * 101 + static_cast<std::uint64_t>(arch));
      const EncoderConfig cfg = toy_encoder_config(arch);
      const Encoder encoder(cfg);
      EncoderParams p = toy_params(cfg, vocab, n_rel, rng);
      std::vector<Instance> conf, unconf;
      for (int i = 0; i < 2; ++i) conf.push_back(random_instance(rng, vocab, n_rel, 4, 7, i));
      for (int i = 0; i < 3; ++i) unconf.push_back(random_instance(rng, vocab, n_rel, 4, 7, 10 + i));
      unconf[0].label = kNa;
      const AdvConfig adv;

      // Sampler loss with respect to W.
      EmbeddedBatch ub;
      for (const Instance& s : unconf) ub.add(s.id, encoder.embed(s, p), s.label);
      p.zero_grad();
      sampler_loss(ub, p, adv, true);
      GradReport r;
      check_tensor(arch_name(cfg.arch) + " sampler W", p.sampler_w, grad_copy(p.sampler_w),
                   [&] { return sampler_loss(ub, p, adv, false).value; }, r);

      // Discriminator loss through the encoder, with Q_u frozen.
      std::vector<double> c;
      for (const Tensor& y : ub.ys) c.push_back(dot_oracle(p.sampler_w.data(), y.data()));
      const auto q = softmax_oracle(c);
      auto disc = [&] {
        double l = 0.0;
        for (const Instance& s : conf) {
          l -= std::log(d_oracle(encoder.embed(s, p).data(), s.label, p)) / static_cast<double>(conf.size());
        }
        for (std::size_t i = 0; i < unconf.size(); ++i) {
          l -= q[i] * std::log(1.0 - d_oracle(encoder.embed(unconf[i], p).data(), unconf[i].label, p));
        }
        return l;
      };
      p.zero_grad();
      std::vector<Encoding> ce, ue;
      EmbeddedBatch cb, ub2;
      for (const Instance& s : conf) {
        ce.push_back(encoder.encode(s, p, false, nullptr));
        cb.add(s.id, ce.back().y, s.label);
      }
      for (const Instance& s : unconf) {
        ue.push_back(encoder.encode(s, p, false, nullptr));
        ub2.add(s.id, ue.back().y, s.label);
      }
      const double value = discriminator_loss(cb, ub2, p, adv, true).value;
      if (std::abs(value - disc()) > 1e-12) r.max_rel_error = 1.0;
      for (std::size_t i = 0; i < conf.size(); ++i) {
        std::copy(cb.ys[i].grad().begin(), cb.ys[i].grad().end(), ce[i].y.grad().begin());
        encoder.backward(conf[i], ce[i], p);
      }
      for (std::size_t i = 0; i < unconf.size(); ++i) {
        std::copy(ub2.ys[i].grad().begin(), ub2.ys[i].grad().end(), ue[i].y.grad().begin());
        encoder.backward(unconf[i], ue[i], p);
      }
      auto tensors = p.named_tensors();
      std::vector<std::vector<double>> grads;
      for (auto& [name, t] : tensors) grads.push_back(grad_copy(*t));
      for (std::size_t k = 0; k < tensors.size(); ++k) {
        if (tensors[k].first == "sampler_w") continue;
        check_tensor(arch_name(cfg.arch) + " " + tensors[k].first, *tensors[k].second, grads[k],
                     disc, r);
      }
      checked += r.checked;
      if (r.max_rel_error > worst) {
        worst = r.max_rel_error;
        where = r.worst;
      }
    }
  }
  const double t = seconds_since(start);
  report("1", worst < 1e-4 && t < 60.0,
         "gradient suite over CNN/PCNN/RNN/BiRNN and both losses, " + std::to_string(checked) +
             " entries, max relative error " + fmt("%.3g", worst) + " (< 1e-4), " +
             fmt("%.1f s", t) + " (< 60 s)" + (where.empty() ? "" : "; worst at " + where));
}

// ---------------------------------------------------------------- 2

void gradient_partition() {
  bool ok = true;
  for (Arch arch : {Arch::kCnn, Arch::kPcnn, Arch::kRnn, Arch::kBirnn}) {
    Rng rng(7 + static_cast<std::uint64_t>(arch));
    const EncoderConfig cfg = toy_encoder_config(arch);
    const Encoder encoder(cfg);
    const EncoderParams p0 = toy_params(cfg, 12, 4, rng);
    std::vector<Instance> batch;
    for (int i = 0; i < 6; ++i) batch.push_back(random_instance(rng, 12, 4, 4, 7, i));
    std::vector<const Instance*> conf = {&batch[0], &batch[1], &batch[2]};
    std::vector<const Instance*> unconf = {&batch[3], &batch[4], &batch[5]};

    // Sampler step with every tensor handed to SGD: only W may move.
    EncoderParams a = p0;
    a.zero_grad();
    EmbeddedBatch ub;
    for (const Instance* s : unconf) ub.add(s->id, encoder.embed(*s, a), s->label);
    sampler_loss(ub, a, AdvConfig{}, true);
    std::vector<Tensor*> all;
    for (auto& [n, t] : a.named_tensors()) all.push_back(t);
    sgd_step(all, SgdConfig{0.5, std::nullopt});
    EncoderParams a_rest = a;
    a_rest.sampler_w = p0.sampler_w;
    ok = ok && !a.sampler_w.same_values(p0.sampler_w) && a_rest.same_values(p0);

    // Discriminator step through the encoder: W must not move.
    EncoderParams b = p0;
    b.zero_grad();
    std::vector<Encoding> encs;
    EmbeddedBatch cb, ub2;
    for (const Instance* s : conf) {
      encs.push_back(encoder.encode(*s, b, false, nullptr));
      cb.add(s->id, encs.back().y, s->label);
    }
    for (const Instance* s : unconf) {
      encs.push_back(encoder.encode(*s, b, false, nullptr));
      ub2.add(s->id, encs.back().y, s->label);
    }
    discriminator_loss(cb, ub2, b, AdvConfig{}, true);
    for (std::size_t i = 0; i < 3; ++i) {
      std::copy(cb.ys[i].grad().begin(), cb.ys[i].grad().end(), encs[i].y.grad().begin());
      encoder.backward(*conf[i], encs[i], b);
      std::copy(ub2.ys[i].grad().begin(), ub2.ys[i].grad().end(), encs[3 + i].y.grad().begin());
      encoder.backward(*unconf[i], encs[3 + i], b);
    }
    std::vector<Tensor*> all_b;
    for (auto& [n, t] : b.named_tensors()) all_b.push_back(t);
    sgd_step(all_b, SgdConfig{0.5, std::nullopt});
    ok = ok && b.sampler_w.same_values(p0.sampler_w) && !b.relation_emb.same_values(p0.relation_emb) &&
         !b.word_emb.same_values(p0.word_emb);

    // The training step itself, one half at a time.
    TrainConfig only_s;
    only_s.alpha_d = 0.0;
    EncoderParams c = p0;
    adversarial_step(conf, unconf, encoder, c, only_s, nullptr);
    EncoderParams c_rest = c;
    c_rest.sampler_w = p0.sampler_w;
    TrainConfig only_d;
    only_d.alpha_s = 0.0;
    EncoderParams d = p0;
    adversarial_step(conf, unconf, encoder, d, only_d, nullptr);
    ok = ok && c_rest.same_values(p0) && d.sampler_w.same_values(p0.sampler_w);
  }
  report("2", ok,
         "sampler updates change only W and discriminator updates leave W bit-identical, "
         "for all four encoders");
}

// ---------------------------------------------------------------- 3

void normalization() {
  Rng rng(3);
  double worst_sum = 0.0, worst_shift = 0.0;
  bool exact = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(64);
    std::vector<double> c(n);
    const double spread = rng.uniform(0.1, 30.0);
    for (double& v : c) v = rng.uniform(-spread, spread);
    const double alpha = trial % 2 ? 1.0 : rng.uniform(0.25, 4.0);
    const auto q = confusing_probabilities(c, alpha);
    double s = 0.0;
    for (double v : q) s += v;
    worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    if (alpha == 1.0) {
      Tensor t(Shape{n}, c);
      const Tensor p = softmax(t);
      const auto oracle = softmax_oracle(c);
      for (std::size_t i = 0; i < n; ++i) {
        exact = exact && q[i] == p[i] && std::abs(q[i] - oracle[i]) < 1e-15;
      }
      const double shift = rng.uniform(-50.0, 50.0);
      std::vector<double> shifted = c;
      for (double& v : shifted) v += shift;
      const auto qs = confusing_probabilities(shifted, 1.0);
      for (std::size_t i = 0; i < n; ++i) worst_shift = std::max(worst_shift, std::abs(qs[i] - q[i]));
    }
  }
  report("3", worst_sum < 1e-9 && exact && worst_shift < 1e-9,
         "1000 random batches: max |sum Q - 1| = " + fmt("%.2g", worst_sum) +
             ", alpha=1 equals P_u " + (exact ? "exactly" : "NOT exactly") +
             ", max shift deviation " + fmt("%.2g", worst_shift));
}

// ---------------------------------------------------------------- 4

void analytic_oracles() {
  Rng rng(4);
  double worst = 0.0;
  std::size_t cases = 0;
  bool exact = true;
  for (int trial = 0; trial < 200; ++trial, ++cases) {
    EncoderParams p;
    const std::size_t n_rel = 2 + rng.below(8), dim = 1 + rng.below(8);
    p.relation_emb = random_tensor({n_rel, dim}, rng, -2.0, 2.0);
    const Tensor y = random_tensor({dim}, rng, -2.0, 2.0);
    double mean = 0.0;
    for (std::size_t r = 1; r < n_rel; ++r) {
      double z = 0.0;
      for (std::size_t j = 0; j < dim; ++j) z += p.relation_emb.at(r, j) * y[j];
      mean += 1.0 / (1.0 + std::exp(-z));
    }
    mean /= static_cast<double>(n_rel - 1);
    worst = std::max(worst, std::abs(na_score(y.data(), p) - mean));

    const double x = rng.uniform(-30.0, 30.0);
    worst = std::max(worst, std::abs(sigmoid(x) - 1.0 / (1.0 + std::exp(-x))));
    std::vector<double> v(1 + rng.below(10));
    for (double& e : v) e = rng.uniform(-10.0, 10.0);
    const Tensor s = softmax(Tensor(Shape{v.size()}, v));
    double z = 0.0;
    for (double e : v) z += std::exp(e);
    for (std::size_t i = 0; i < v.size(); ++i) worst = std::max(worst, std::abs(s[i] - std::exp(v[i]) / z));

    const std::size_t n = 1 + rng.below(50);
    std::vector<RankedTriple> ranked(n);
    std::size_t positives = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ranked[i].score = static_cast<double>(n - i);
      ranked[i].is_correct = rng.bernoulli(0.5);
      positives += ranked[i].is_correct ? 1 : 0;
    }
    const std::size_t total = positives + 1 + rng.below(5);
    const PrCurve curve = pr_curve(ranked, total);
    for (std::size_t k = 1; k <= n; ++k) {
      std::size_t correct = 0;
      for (std::size_t i = 0; i < k; ++i) correct += ranked[i].is_correct ? 1 : 0;
      const double prec = static_cast<double>(correct) / static_cast<double>(k);
      exact = exact && curve[k - 1].precision == prec && p_at_n(ranked, k) == prec &&
              curve[k - 1].recall == static_cast<double>(correct) / static_cast<double>(total);
    }
  }
  report("4", worst < 1e-12 && exact,
         std::to_string(cases) + " random cases each for na_score, sigmoid, softmax, PR and P@N: "
         "max deviation " + fmt("%.2g", worst) + ", PR/P@N " + (exact ? "exact" : "MISMATCH"));
}

// ---------------------------------------------------------------- 5 and 6

void denoising_efficacy() {
  const auto start = Clock::now();
  SyntheticConfig dcfg;  // 8 relations + NA, 2000 pairs, noise 0.3
  dcfg.seed = 1;
  const SyntheticData data = generate_synthetic(dcfg);

  EncoderConfig ecfg = EncoderConfig::defaults(Arch::kPcnn);
  ecfg.hidden_dim = 64;
  const Encoder encoder(ecfg);
  Rng init = Rng::stream(dcfg.seed, "init");
  EncoderParams params = init_params(ecfg, data.vocab.size(), data.schema.size(), init);
  PretrainConfig pcfg;
  pcfg.epochs = 50;
  pcfg.seed = dcfg.seed;
  pretrain_classifier(data.train, encoder, params, pcfg);
  const EncoderParams baseline = params;

  TrainConfig tcfg;
  tcfg.epochs = 100;
  tcfg.seed = dcfg.seed;
  CorpusSplit split = initial_split(data.train, encoder, params, tcfg.confident_fraction);
  const std::set<InstanceId> initial_unconf = split.unconfident;
  TrainState state = make_train_state(std::move(split), std::move(params), tcfg.seed);
  train_adversarial(state, data.train, encoder, tcfg);
  const double runtime = seconds_since(start);

  // (a) noise detection by confusing score
  const NoiseDetection nd = noise_detection_auc(data.train, encoder, state.params);
  // Best AUC any label-blind scorer can reach when it knows exactly which
  // template each sentence came from: rank by the clean fraction of that
  // template's sentences.
  std::map<RelationId, std::pair<double, double>> per_template;  // clean, total
  for (const Instance& inst : data.train.instances) {
    auto& e = per_template[data.source_relation.at(inst.id)];
    e.first += *inst.noise_flag ? 0.0 : 1.0;
    e.second += 1.0;
  }
  std::vector<double> blind;
  std::vector<bool> noisy;
  for (const Instance& inst : data.train.instances) {
    const auto& e = per_template[data.source_relation.at(inst.id)];
    blind.push_back(-(e.first / e.second));
    noisy.push_back(*inst.noise_flag);
  }
  const double blind_bound = rank_sum_auc(blind, noisy);
  report("5a", nd.auc_confusing >= 0.80,
         "noise-detection AUC via C(s) = " + fmt("%.4f", nd.auc_confusing) +
             " (>= 0.80); via D(s,r_s) = " + fmt("%.4f", nd.auc_discriminator) +
             "; label-blind template bound = " + fmt("%.4f", blind_bound));

  // (b) held-out P@50, all sentences
  const FactSet facts = facts_from_labels(data.test);
  const auto adv_ranked = score_triples(data.test, encoder, state.params, facts);
  const auto base_ranked = score_triples(data.test, encoder, baseline, facts);
  const double adv_p50 = p_at_n(adv_ranked, 50), base_p50 = p_at_n(base_ranked, 50);
  report("5b", adv_p50 - base_p50 >= 0.05,
         "held-out P@50 adversarial " + fmt("%.3f", adv_p50) + " vs pretrain-only " +
             fmt("%.3f", base_p50) + " (gain >= 0.05 required)");

  // (c) promoted instances are cleaner than I_u
  const auto index = data.train.index();
  auto noise_rate = [&](const auto& ids) {
    double n = 0.0, k = 0.0;
    for (InstanceId id : ids) {
      k += 1.0;
      n += *data.train.instances[index.at(id)].noise_flag ? 1.0 : 0.0;
    }
    return k > 0 ? n / k : 0.0;
  };
  const double promoted_rate = noise_rate(state.promoted_ids);
  const double unconf_rate = noise_rate(initial_unconf);
  report("5c", !state.promoted_ids.empty() && promoted_rate < 0.5 * unconf_rate,
         std::to_string(state.promoted_ids.size()) + " promoted, noise rate " +
             fmt("%.4f", promoted_rate) + " vs I_u " + fmt("%.4f", unconf_rate) +
             " (< half required)");
  report("5-runtime", runtime < 600.0,
         fmt("pretrain 50 + adversarial 100 epochs in %.1f s (< 600 s)", runtime));

  // 6: one sentence per pair
  const auto one_adv = few_sentence_eval(data.test, encoder, state.params, facts,
                                         SentenceMode::kOne, dcfg.seed, {50});
  const auto one_base = few_sentence_eval(data.test, encoder, baseline, facts,
                                          SentenceMode::kOne, dcfg.seed, {50});
  report("6", one_adv.precision[0] >= one_base.precision[0],
         "ONE-sentence P@50 adversarial " + fmt("%.3f", one_adv.precision[0]) +
             " vs pretrain-only " + fmt("%.3f", one_base.precision[0]));

  // 8 (part): round-trips on this corpus and the trained parameters
  const fs::path dir = fs::temp_directory_path() / "advre_acceptance";
  fs::create_directories(dir);
  save_corpus(data.train, dir / "train.jsonl");
  const bool corpus_ok = load_corpus(dir / "train.jsonl") == data.train;
  save_checkpoint(ecfg, state.params, dir / "trained.ckpt");
  const auto [ecfg2, params2] = load_checkpoint(dir / "trained.ckpt");
  bool bits = ecfg2 == ecfg;
  const auto a = state.params.named_tensors();
  const auto b = params2.named_tensors();
  bits = bits && a.size() == b.size();
  for (std::size_t t = 0; bits && t < a.size(); ++t) {
    bits = a[t].first == b[t].first && a[t].second->shape() == b[t].second->shape() &&
           std::memcmp(a[t].second->data().data(), b[t].second->data().data(),
                       a[t].second->size() * sizeof(double)) == 0;
  }
  report("8", corpus_ok && bits,
         std::string("corpus save/load ") + (corpus_ok ? "equal" : "DIFFERENT") +
             ", checkpoint reload " + (bits ? "bit-identical" : "DIFFERENT"));
}

// ---------------------------------------------------------------- 7

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void reproducibility() {
  RunConfig cfg = default_run_config();
  apply_config_text(cfg,
                    "n_entity_pairs = 400\n"
                    "n_test_pairs = 100\n"
                    "hidden_dim = 32\n"
                    "pretrain_epochs = 10\n"
                    "epochs = 20\n");
  cfg.finalize();
  std::ostringstream sink;
  std::vector<fs::path> runs;
  for (const char* name : {"repro_a", "repro_b"}) {
    const fs::path out = fs::temp_directory_path() / "advre_acceptance" / name;
    fs::remove_all(out);
    const RunPaths paths(out);
    run_gen_data(cfg, paths, false, sink);
    run_pretrain(cfg, paths, sink);
    run_train(cfg, paths, sink);
    run_eval(cfg, paths, sink);
    runs.push_back(out);
  }
  bool same = true;
  std::string files;
  for (const char* f : {"metrics.csv", "pretrain_log.csv", "eval.csv", "pr_adversarial.csv",
                        "pr_pretrain.csv", "split.csv"}) {
    const std::string a = slurp(runs[0] / f), b = slurp(runs[1] / f);
    same = same && !a.empty() && a == b;
    files += std::string(files.empty() ? "" : ", ") + f;
  }
  report("7", same, "two full pipeline runs, byte-identical: " + files);
}

}  // namespace

int main() {
  gradient_suite();
  gradient_partition();
  normalization();
  analytic_oracles();
  reproducibility();
  denoising_efficacy();
  std::printf("%d criterion line(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
