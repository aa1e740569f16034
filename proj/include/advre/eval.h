#ifndef ADVRE_EVAL_H_
#define ADVRE_EVAL_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "advre/corpus.h"
#include "advre/encoder.h"

namespace advre {

struct RankedTriple {
  PairId pair_id = 0;
  RelationId relation = 1;  // never NA
  double score = 0.0;
  bool is_correct = false;

  bool operator==(const RankedTriple&) const = default;
};

enum class Aggregation { kMax, kMean };
Aggregation parse_aggregation(const std::string& name);
std::string aggregation_name(Aggregation a);

// Every (pair, real relation) candidate scored by sigmoid(r . y) aggregated
// over the pair's sentences; sorted by descending score, then pair id, then
// relation. Correct iff the pair/relation is in `facts`.
std::vector<RankedTriple> score_triples(const Corpus& corpus,
                                        const Encoder& encoder,
                                        const EncoderParams& params,
                                        const FactSet& facts,
                                        Aggregation agg = Aggregation::kMax);

// Same ranking from precomputed per-sentence scores[i][r] (r = 0 ignored).
std::vector<RankedTriple> rank_triples(
    const Corpus& corpus, const std::vector<std::vector<double>>& scores,
    const FactSet& facts, Aggregation agg = Aggregation::kMax);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};
using PrCurve = std::vector<PrPoint>;

// One point per rank. total_positives is the size of the fact set.
PrCurve pr_curve(const std::vector<RankedTriple>& ranked,
                 std::size_t total_positives);
double p_at_n(const std::vector<RankedTriple>& ranked, std::size_t n);
// Precision at the first point whose recall reaches r.
double precision_at_recall(const PrCurve& curve, double r);

enum class SentenceMode { kOne, kTwo, kAll };
SentenceMode parse_sentence_mode(const std::string& name);
std::string sentence_mode_name(SentenceMode m);

// Keeps at most 1 / 2 / all sentences per pair, chosen at random.
Corpus restrict_sentences(const Corpus& corpus, SentenceMode mode,
                          std::uint64_t seed);

struct FewSentenceResult {
  SentenceMode mode = SentenceMode::kAll;
  std::vector<std::size_t> n;
  std::vector<double> precision;  // P@n for each n
  double mean = 0.0;
};
FewSentenceResult few_sentence_eval(const Corpus& corpus, const Encoder& encoder,
                                    const EncoderParams& params,
                                    const FactSet& facts, SentenceMode mode,
                                    std::uint64_t seed,
                                    const std::vector<std::size_t>& ns,
                                    Aggregation agg = Aggregation::kMax);

// Rank-sum (Mann-Whitney) AUC of `scores` for separating positives, with
// tied scores sharing their average rank. ValidationError when all labels
// are equal.
double rank_sum_auc(const std::vector<double>& scores,
                    const std::vector<bool>& positive);

struct NoiseDetection {
  double auc_confusing = 0.0;      // score -C(s)
  double auc_discriminator = 0.0;  // score -D(s, r_s)
  std::size_t instances = 0;
  std::size_t noisy = 0;
};
// Over the instances of `corpus` that carry a noise flag.
NoiseDetection noise_detection_auc(const Corpus& corpus, const Encoder& encoder,
                                   const EncoderParams& params);

struct InspectEntry {
  InstanceId id = 0;
  double confusing = 0.0;
  std::optional<bool> noise_flag;
  std::string text;
};
struct InspectReport {
  RelationId relation = 1;
  std::vector<InspectEntry> top;     // highest C(s)
  std::vector<InspectEntry> bottom;  // lowest C(s)
  std::string note;
};
// Entities rendered as [[word]].
std::string render_instance(const Instance& inst, const Vocabulary& vocab);
InspectReport inspect(const Corpus& corpus, const Encoder& encoder,
                      const EncoderParams& params, const Vocabulary& vocab,
                      const RelationSchema& schema, RelationId relation,
                      std::size_t k);
void write_inspect_report(const InspectReport& report,
                          const RelationSchema& schema, std::ostream& os);

// rank,recall,precision
void write_pr_csv(const PrCurve& curve, std::ostream& os);

}  // namespace advre

#endif  // ADVRE_EVAL_H_
