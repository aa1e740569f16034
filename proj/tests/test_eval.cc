#include <cmath>
#include <sstream>

#include "advre/adversarial.h"
#include "advre/errors.h"
#include "advre/eval.h"
#include "doctest.h"
#include "support.h"

using namespace advre;
using namespace advre::testing;

namespace {

std::vector<RankedTriple> random_ranking(Rng& rng, std::size_t n) {
  std::vector<RankedTriple> r(n);
  for (std::size_t i = 0; i < n; ++i) {
    r[i].pair_id = static_cast<PairId>(i);
    r[i].score = 1.0 - static_cast<double>(i) / static_cast<double>(n);
    r[i].is_correct = rng.bernoulli(0.4);
  }
  return r;
}

double pairwise_auc(const std::vector<double>& s, const std::vector<bool>& pos) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!pos[i] || pos[j]) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

Instance sentence(InstanceId id, PairId pair, RelationId label, std::vector<WordId> tokens) {
  Instance inst;
  inst.id = id;
  inst.pair_id = pair;
  inst.label = label;
  inst.tokens = std::move(tokens);
  inst.e1_pos = 0;
  inst.e2_pos = inst.tokens.size() - 1;
  return inst;
}

}  // namespace

TEST_CASE("PR curve and P@N agree with recounting") {
  Rng rng(1);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    const auto ranked = random_ranking(rng, n);
    std::size_t positives = 0;
    for (const auto& t : ranked) positives += t.is_correct ? 1 : 0;
    const std::size_t total = positives + rng.below(5) + (positives == 0 ? 1 : 0);
    const PrCurve curve = pr_curve(ranked, total);
    REQUIRE(curve.size() == n);
    for (std::size_t i = 1; i <= n; ++i) {
      std::size_t correct = 0;
      for (std::size_t k = 0; k < i; ++k) correct += ranked[k].is_correct ? 1 : 0;
      CHECK(curve[i - 1].precision == static_cast<double>(correct) / static_cast<double>(i));
      CHECK(curve[i - 1].recall == static_cast<double>(correct) / static_cast<double>(total));
      CHECK(p_at_n(ranked, i) == static_cast<double>(correct) / static_cast<double>(i));
    }
    if (positives > 0) {
      const double r = curve.back().recall;
      std::size_t first = 0;
      while (curve[first].recall < r) ++first;
      CHECK(precision_at_recall(curve, r) == curve[first].precision);
    }
  }
}

TEST_CASE("P@N and PR error cases") {
  Rng rng(2);
  const auto ranked = random_ranking(rng, 10);
  CHECK_THROWS_AS(p_at_n(ranked, 11), ValidationError);
  CHECK_THROWS_AS(p_at_n(ranked, 0), ValidationError);
  CHECK_THROWS_AS(pr_curve({}, 3), ValidationError);
  std::vector<RankedTriple> none(3);
  const PrCurve flat = pr_curve(none, 2);
  CHECK_THROWS_AS(precision_at_recall(flat, 0.1), ValidationError);
}

TEST_CASE("triple ranking aggregates per pair and breaks ties by pair then relation") {
  Corpus c;
  c.instances = {sentence(0, 5, 1, {2, 3}), sentence(1, 5, 1, {2, 3}),
                 sentence(2, 3, 2, {2, 3})};
  // scores[i][r]; column 0 (NA) is ignored
  const std::vector<std::vector<double>> scores = {
      {0.9, 0.25, 0.75}, {0.9, 0.5, 0.25}, {0.1, 0.5, 0.125}};
  const FactSet facts = {{5, 1}, {3, 2}};

  const auto by_max = rank_triples(c, scores, facts, Aggregation::kMax);
  REQUIRE(by_max.size() == 4);
  // pair 5: r1 max 0.5, r2 max 0.75; pair 3: r1 0.5, r2 0.125
  CHECK(by_max[0].pair_id == 5);
  CHECK(by_max[0].relation == 2);
  CHECK(by_max[1].pair_id == 3);  // 0.5 tie: lower pair id first
  CHECK(by_max[2].pair_id == 5);
  CHECK(by_max[2].is_correct);
  CHECK(by_max[3].score == 0.125);

  const auto by_mean = rank_triples(c, scores, facts, Aggregation::kMean);
  // pair 3 r1 and pair 5 r2 both average 0.5
  CHECK(by_mean[0].score == 0.5);
  CHECK(by_mean[0].pair_id == 3);
  CHECK(by_mean[1].pair_id == 5);
  CHECK(by_mean[1].relation == 2);

  CHECK(parse_aggregation("mean") == Aggregation::kMean);
  CHECK_THROWS_AS(parse_aggregation("median"), ConfigError);
}

TEST_CASE("ranking output is a stable total order") {
  Rng rng(3);
  Corpus c;
  std::vector<std::vector<double>> scores;
  for (InstanceId i = 0; i < 40; ++i) {
    c.instances.push_back(sentence(i, i % 13, 1, {2, 3}));
    // coarse scores force many ties
    scores.push_back({0.0, std::floor(rng.uniform() * 4) / 4, std::floor(rng.uniform() * 4) / 4});
  }
  const auto a = rank_triples(c, scores, {}, Aggregation::kMax);
  for (std::size_t i = 1; i < a.size(); ++i) {
    const bool ordered = a[i - 1].score > a[i].score ||
                         (a[i - 1].score == a[i].score &&
                          (a[i - 1].pair_id < a[i].pair_id ||
                           (a[i - 1].pair_id == a[i].pair_id && a[i - 1].relation < a[i].relation)));
    CHECK(ordered);
  }
  std::reverse(c.instances.begin(), c.instances.end());
  std::reverse(scores.begin(), scores.end());
  CHECK(rank_triples(c, scores, {}, Aggregation::kMax) == a);
}

TEST_CASE("score_triples ranks sigmoid relation scores") {
  Rng rng(4);
  const EncoderConfig ecfg = toy_encoder_config(Arch::kCnn);
  const Encoder encoder(ecfg);
  const EncoderParams params = toy_params(ecfg, 12, 3, rng);
  Corpus c;
  for (InstanceId i = 0; i < 6; ++i) {
    Instance inst = random_instance(rng, 12, 3, 3, 6, i);
    inst.pair_id = i / 2;
    c.instances.push_back(inst);
  }
  const auto ranked = score_triples(c, encoder, params, {{0, 1}}, Aggregation::kMax);
  CHECK(ranked.size() == 6);  // 3 pairs x 2 real relations
  for (const auto& t : ranked) {
    double best = 0.0;
    for (const Instance& inst : c.instances) {
      if (inst.pair_id != t.pair_id) continue;
      best = std::max(best, discriminator_score(encoder.embed(inst, params).data(), t.relation, params));
    }
    CHECK(t.score == best);
    CHECK(t.is_correct == (t.pair_id == 0 && t.relation == 1));
  }
  const auto all = few_sentence_eval(c, encoder, params, {{0, 1}}, SentenceMode::kAll, 1, {1, 2});
  CHECK(all.precision[0] == p_at_n(ranked, 1));
  CHECK(all.mean == doctest::Approx(0.5 * (p_at_n(ranked, 1) + p_at_n(ranked, 2))));
}

TEST_CASE("sentence restriction") {
  Corpus c;
  for (InstanceId i = 0; i < 20; ++i) c.instances.push_back(sentence(i, i < 2 ? 0 : 1 + i % 4, 1, {2, 3}));
  c.instances.push_back(sentence(20, 9, 1, {2, 3}));
  CHECK(restrict_sentences(c, SentenceMode::kAll, 1) == c);
  const Corpus one = restrict_sentences(c, SentenceMode::kOne, 1);
  for (const auto& [pair, members] : one.by_pair()) CHECK(members.size() == 1);
  CHECK(one.by_pair().size() == c.by_pair().size());
  bool has_single = false;
  for (const Instance& inst : one.instances) has_single = has_single || inst.id == 20;
  CHECK(has_single);
  const Corpus two = restrict_sentences(c, SentenceMode::kTwo, 1);
  for (const auto& [pair, members] : two.by_pair()) CHECK(members.size() <= 2);
  CHECK(restrict_sentences(c, SentenceMode::kOne, 1) == one);
  CHECK(parse_sentence_mode("ONE") == SentenceMode::kOne);
}

TEST_CASE("rank-sum AUC") {
  CHECK(rank_sum_auc({0.1, 0.2, 0.8, 0.9}, {false, false, true, true}) == 1.0);
  CHECK(rank_sum_auc({0.5, 0.5, 0.5}, {true, false, false}) == 0.5);
  CHECK_THROWS_AS(rank_sum_auc({0.1, 0.2}, {true, true}), ValidationError);

  Rng rng(5);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t n = 2 + rng.below(30);
    std::vector<double> s(n);
    std::vector<bool> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::floor(rng.uniform() * 6);  // plenty of ties
      pos[i] = i == 0 ? true : (i == 1 ? false : rng.bernoulli(0.5));
    }
    const double auc = rank_sum_auc(s, pos);
    CHECK(std::abs(auc - pairwise_auc(s, pos)) < 1e-12);
    std::vector<double> neg(n), warped(n);
    for (std::size_t i = 0; i < n; ++i) {
      neg[i] = -s[i];
      warped[i] = std::exp(3.0 * s[i]) + 7.0;
    }
    CHECK(std::abs(rank_sum_auc(neg, pos) - (1.0 - auc)) < 1e-12);
    CHECK(std::abs(rank_sum_auc(warped, pos) - auc) < 1e-12);
  }

  std::vector<double> s(1000);
  std::vector<bool> pos(1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    s[i] = rng.uniform();
    pos[i] = i % 2 == 0;
  }
  CHECK(std::abs(rank_sum_auc(s, pos) - 0.5) < 0.1);
}

TEST_CASE("inspect ranks instances of one relation by confusing score") {
  Rng rng(6);
  const EncoderConfig ecfg = toy_encoder_config(Arch::kCnn);
  const Encoder encoder(ecfg);
  const EncoderParams params = toy_params(ecfg, 12, 3, rng);
  Vocabulary vocab;
  for (int w = 2; w < 12; ++w) vocab.add("w" + std::to_string(w));
  const RelationSchema schema({"NA", "a", "b"});
  Corpus c;
  for (InstanceId i = 0; i < 9; ++i) {
    Instance inst = random_instance(rng, 12, 3, 3, 6, i);
    inst.label = i < 7 ? 1 : 2;
    inst.noise_flag = i % 2 == 0;
    c.instances.push_back(inst);
  }

  const InspectReport none = inspect(c, encoder, params, vocab, schema, 1, 0);
  CHECK(none.top.empty());
  CHECK(none.bottom.empty());

  const InspectReport two = inspect(c, encoder, params, vocab, schema, 1, 2);
  REQUIRE(two.top.size() == 2);
  REQUIRE(two.bottom.size() == 2);
  CHECK(two.top[0].confusing >= two.top[1].confusing);
  CHECK(two.top[1].confusing >= two.bottom[1].confusing);
  CHECK(two.bottom[0].confusing <= two.bottom[1].confusing);
  CHECK(two.note.empty());

  const InspectReport all = inspect(c, encoder, params, vocab, schema, 1, 10);
  CHECK(all.top.size() + all.bottom.size() == 7);
  CHECK_FALSE(all.note.empty());
  std::set<InstanceId> seen;
  for (const auto& e : all.top) seen.insert(e.id);
  for (const auto& e : all.bottom) seen.insert(e.id);
  CHECK(seen.size() == 7);

  std::ostringstream os;
  write_inspect_report(two, schema, os);
  CHECK(os.str().find("relation: a") != std::string::npos);
  CHECK(os.str().find("[[") != std::string::npos);
  CHECK_THROWS_AS(inspect(c, encoder, params, vocab, schema, 3, 1), ValidationError);
}

TEST_CASE("rendering wraps entities in markers") {
  Vocabulary vocab;
  vocab.add("obama");
  vocab.add("born");
  vocab.add("hawaii");
  Instance inst = sentence(0, 0, 1, {2, 3, 4});
  CHECK(render_instance(inst, vocab) == "[[obama]] born [[hawaii]]");
}

TEST_CASE("PR CSV layout") {
  std::ostringstream os;
  write_pr_csv({{0.5, 1.0}, {0.5, 0.5}}, os);
  CHECK(os.str() == "rank,recall,precision\n1,0.5,1\n2,0.5,0.5\n");
}
