#include "advre/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>

#include "advre/adversarial.h"
#include "advre/errors.h"
#include "advre/rng.h"

namespace advre {

Aggregation parse_aggregation(const std::string& name) {
  if (name == "max") return Aggregation::kMax;
  if (name == "mean") return Aggregation::kMean;
  throw ConfigError("unknown aggregation '" + name + "' (expected max or mean)");
}

std::string aggregation_name(Aggregation a) {
  return a == Aggregation::kMax ? "max" : "mean";
}

std::vector<RankedTriple> rank_triples(
    const Corpus& corpus, const std::vector<std::vector<double>>& scores,
    const FactSet& facts, Aggregation agg) {
  if (scores.size() != corpus.size()) {
    throw DimensionError("rank_triples: one score row per sentence required");
  }
  std::vector<RankedTriple> out;
  for (const auto& [pair, members] : corpus.by_pair()) {
    if (members.empty()) {
      std::cerr << "warning: pair " << pair << " has no sentences; skipped\n";
      continue;
    }
    const std::size_t n_rel = scores[members.front()].size();
    for (std::size_t r = 1; r < n_rel; ++r) {
      double agg_score = agg == Aggregation::kMax ? -INFINITY : 0.0;
      for (std::size_t i : members) {
        agg_score = agg == Aggregation::kMax ? std::max(agg_score, scores[i][r])
                                             : agg_score + scores[i][r];
      }
      if (agg == Aggregation::kMean) agg_score /= static_cast<double>(members.size());
      const auto rel = static_cast<RelationId>(r);
      out.push_back({pair, rel, agg_score, facts.count({pair, rel}) > 0});
    }
  }
  std::sort(out.begin(), out.end(), [](const RankedTriple& a, const RankedTriple& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.pair_id != b.pair_id) return a.pair_id < b.pair_id;
    return a.relation < b.relation;
  });
  return out;
}

std::vector<RankedTriple> score_triples(const Corpus& corpus,
                                        const Encoder& encoder,
                                        const EncoderParams& params,
                                        const FactSet& facts, Aggregation agg) {
  std::vector<std::vector<double>> scores;
  scores.reserve(corpus.size());
  const std::size_t n_rel = params.relation_emb.rows();
  for (const Instance& inst : corpus.instances) {
    const Tensor y = encoder.embed(inst, params);
    std::vector<double> row(n_rel, 0.0);
    for (std::size_t r = 1; r < n_rel; ++r) {
      row[r] = discriminator_score(y.data(), static_cast<RelationId>(r), params);
    }
    scores.push_back(std::move(row));
  }
  return rank_triples(corpus, scores, facts, agg);
}

PrCurve pr_curve(const std::vector<RankedTriple>& ranked,
                 std::size_t total_positives) {
  if (ranked.empty()) throw ValidationError("pr_curve: empty ranking");
  if (total_positives == 0) throw ValidationError("pr_curve: no positive facts");
  PrCurve curve;
  curve.reserve(ranked.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (ranked[i].is_correct) ++correct;
    curve.push_back({static_cast<double>(correct) / static_cast<double>(total_positives),
                     static_cast<double>(correct) / static_cast<double>(i + 1)});
  }
  return curve;
}

double p_at_n(const std::vector<RankedTriple>& ranked, std::size_t n) {
  if (n == 0 || n > ranked.size()) {
    throw ValidationError("P@" + std::to_string(n) + " requested from a ranking of " +
                          std::to_string(ranked.size()) + " triples");
  }
  const auto correct = std::count_if(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n),
                                     [](const RankedTriple& t) { return t.is_correct; });
  return static_cast<double>(correct) / static_cast<double>(n);
}

double precision_at_recall(const PrCurve& curve, double r) {
  for (const PrPoint& p : curve) {
    if (p.recall >= r) return p.precision;
  }
  throw ValidationError("recall " + std::to_string(r) + " is never reached");
}

SentenceMode parse_sentence_mode(const std::string& name) {
  std::string lower;
  for (char c : name) lower.push_back(static_cast<char>(std::tolower(c)));
  if (lower == "one") return SentenceMode::kOne;
  if (lower == "two") return SentenceMode::kTwo;
  if (lower == "all") return SentenceMode::kAll;
  throw ConfigError("unknown sentence mode '" + name + "' (expected one, two or all)");
}

std::string sentence_mode_name(SentenceMode m) {
  switch (m) {
    case SentenceMode::kOne: return "one";
    case SentenceMode::kTwo: return "two";
    case SentenceMode::kAll: return "all";
  }
  return "?";
}

Corpus restrict_sentences(const Corpus& corpus, SentenceMode mode,
                          std::uint64_t seed) {
  if (mode == SentenceMode::kAll) return corpus;
  const std::size_t keep = mode == SentenceMode::kOne ? 1 : 2;
  Rng rng = Rng::stream(seed, "few-sentence");
  std::vector<bool> kept(corpus.size(), false);
  for (const auto& [pair, members] : corpus.by_pair()) {
    for (std::size_t i : rng.sample(members, keep)) kept[i] = true;
  }
  Corpus out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (kept[i]) out.instances.push_back(corpus.instances[i]);
  }
  return out;
}

FewSentenceResult few_sentence_eval(const Corpus& corpus, const Encoder& encoder,
                                    const EncoderParams& params,
                                    const FactSet& facts, SentenceMode mode,
                                    std::uint64_t seed,
                                    const std::vector<std::size_t>& ns,
                                    Aggregation agg) {
  if (ns.empty()) throw ConfigError("few_sentence_eval needs at least one N");
  const Corpus restricted = restrict_sentences(corpus, mode, seed);
  const auto ranked = score_triples(restricted, encoder, params, facts, agg);
  FewSentenceResult r;
  r.mode = mode;
  r.n = ns;
  for (std::size_t n : ns) {
    r.precision.push_back(p_at_n(ranked, n));
    r.mean += r.precision.back();
  }
  r.mean /= static_cast<double>(ns.size());
  return r;
}

double rank_sum_auc(const std::vector<double>& scores,
                    const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) {
    throw DimensionError("rank_sum_auc: scores and labels differ in length");
  }
  const auto n_pos = static_cast<std::size_t>(
      std::count(positive.begin(), positive.end(), true));
  const std::size_t n_neg = positive.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw ValidationError("AUC undefined: every instance has the same label");
  }
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (positive[order[k]]) pos_rank_sum += avg_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

NoiseDetection noise_detection_auc(const Corpus& corpus, const Encoder& encoder,
                                   const EncoderParams& params) {
  std::vector<double> neg_c, neg_d;
  std::vector<bool> noisy;
  for (const Instance& inst : corpus.instances) {
    if (!inst.noise_flag) continue;
    const Tensor y = encoder.embed(inst, params);
    neg_c.push_back(-confusing_score(y.data(), params));
    neg_d.push_back(-label_score(y.data(), inst.label, params));
    noisy.push_back(*inst.noise_flag);
  }
  NoiseDetection r;
  r.instances = noisy.size();
  r.noisy = static_cast<std::size_t>(std::count(noisy.begin(), noisy.end(), true));
  r.auc_confusing = rank_sum_auc(neg_c, noisy);
  r.auc_discriminator = rank_sum_auc(neg_d, noisy);
  return r;
}

std::string render_instance(const Instance& inst, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
    if (i) out += ' ';
    const auto w = static_cast<std::size_t>(inst.tokens[i]);
    const std::string& word = w < vocab.size() ? vocab.word(inst.tokens[i])
                                               : vocab.word(Vocabulary::kUnk);
    if (i == inst.e1_pos || i == inst.e2_pos) {
      out += "[[" + word + "]]";
    } else {
      out += word;
    }
  }
  return out;
}

InspectReport inspect(const Corpus& corpus, const Encoder& encoder,
                      const EncoderParams& params, const Vocabulary& vocab,
                      const RelationSchema& schema, RelationId relation,
                      std::size_t k) {
  if (relation < 0 || static_cast<std::size_t>(relation) >= schema.size()) {
    throw ValidationError("relation id " + std::to_string(relation) + " out of range");
  }
  InspectReport report;
  report.relation = relation;
  std::vector<InspectEntry> entries;
  for (const Instance& inst : corpus.instances) {
    if (inst.label != relation) continue;
    const Tensor y = encoder.embed(inst, params);
    entries.push_back({inst.id, confusing_score(y.data(), params), inst.noise_flag,
                       render_instance(inst, vocab)});
  }
  std::sort(entries.begin(), entries.end(),
            [](const InspectEntry& a, const InspectEntry& b) {
              return a.confusing != b.confusing ? a.confusing > b.confusing
                                                : a.id < b.id;
            });
  const std::size_t m = entries.size();
  std::size_t n_top = k, n_bottom = k;
  if (m < 2 * k) {
    // Not enough for disjoint top and bottom lists: split everything by rank.
    n_top = (m + 1) / 2;
    n_bottom = m - n_top;
    report.note = "only " + std::to_string(m) + " instances labeled " +
                  schema.name(relation) + "; returning all of them";
  }
  report.top.assign(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(n_top));
  for (std::size_t i = 0; i < n_bottom; ++i) report.bottom.push_back(entries[m - 1 - i]);
  return report;
}

void write_inspect_report(const InspectReport& report,
                          const RelationSchema& schema, std::ostream& os) {
  char buf[64];
  auto line = [&](const InspectEntry& e) {
    std::snprintf(buf, sizeof buf, "%+.6f", e.confusing);
    os << "  C=" << buf << " id=" << e.id;
    if (e.noise_flag) os << " noise=" << (*e.noise_flag ? "yes" : "no");
    os << "  " << e.text << '\n';
  };
  os << "relation: " << schema.name(report.relation) << '\n';
  if (!report.note.empty()) os << "note: " << report.note << '\n';
  os << "highest confusing score:\n";
  for (const auto& e : report.top) line(e);
  os << "lowest confusing score:\n";
  for (const auto& e : report.bottom) line(e);
}

void write_pr_csv(const PrCurve& curve, std::ostream& os) {
  os << "rank,recall,precision\n";
  char buf[96];
  for (std::size_t i = 0; i < curve.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", i + 1, curve[i].recall,
                  curve[i].precision);
    os << buf;
  }
}

}  // namespace advre
