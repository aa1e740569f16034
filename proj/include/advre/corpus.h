#ifndef ADVRE_CORPUS_H_
#define ADVRE_CORPUS_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace advre {

using InstanceId = std::int64_t;
using PairId = std::int64_t;
using RelationId = std::int32_t;
using WordId = std::int32_t;

inline constexpr RelationId kNa = 0;

class RelationSchema {
 public:
  // names[0] must be "NA"; names must be unique and at least two.
  explicit RelationSchema(std::vector<std::string> names);

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  const std::string& name(RelationId r) const { return names_.at(r); }
  RelationId id(const std::string& name) const;  // ValidationError if unknown

  bool operator==(const RelationSchema&) const = default;

 private:
  std::vector<std::string> names_;
};

class Vocabulary {
 public:
  static constexpr WordId kPad = 0;
  static constexpr WordId kUnk = 1;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  Vocabulary();  // just <pad> and <unk>
  explicit Vocabulary(std::vector<std::string> words);

  WordId add(const std::string& word);
  WordId id(const std::string& word) const;  // kUnk when absent
  const std::string& word(WordId id) const { return words_.at(id); }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  bool operator==(const Vocabulary& o) const { return words_ == o.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, WordId> index_;
};

struct Instance {
  InstanceId id = 0;
  std::vector<WordId> tokens;
  std::size_t e1_pos = 0;
  std::size_t e2_pos = 0;
  PairId pair_id = 0;
  RelationId label = kNa;
  std::optional<bool> noise_flag;  // synthetic corpora only

  bool operator==(const Instance&) const = default;
};

// Bounds a record has to respect. Unset limits are not checked.
struct CorpusLimits {
  std::optional<std::size_t> max_len;
  std::optional<std::size_t> n_relations;
  std::optional<std::size_t> vocab_size;
};

// Throws ValidationError describing the first violated invariant.
void validate_instance(const Instance& inst, const CorpusLimits& limits = {});

struct Corpus {
  std::vector<Instance> instances;

  std::size_t size() const { return instances.size(); }
  bool empty() const { return instances.empty(); }

  // id -> index into instances; ValidationError on duplicate ids.
  std::unordered_map<InstanceId, std::size_t> index() const;
  // pair_id -> indices of its sentences, in corpus order.
  std::map<PairId, std::vector<std::size_t>> by_pair() const;

  bool operator==(const Corpus&) const = default;
};

// Confident (I_c) / unconfident (I_u) partition of training instance ids.
struct CorpusSplit {
  std::set<InstanceId> confident;
  std::set<InstanceId> unconfident;

  void promote(InstanceId id);  // I_u -> I_c
  // Disjoint and together exactly `all_ids`; ValidationError otherwise.
  void check_partition(const std::set<InstanceId>& all_ids) const;
};

// Cuts tokens beyond max_len. ValidationError if an entity would be lost.
Instance truncate_instance(Instance inst, std::size_t max_len);

// Relative distance of each token to e1 and e2, clipped to
// [-max_len, max_len] and shifted by +max_len into [0, 2*max_len].
struct PositionIds {
  std::vector<std::size_t> to_e1;
  std::vector<std::size_t> to_e2;
};
PositionIds position_features(const Instance& inst, std::size_t max_len);

// JSON Lines, one instance per line.
Corpus load_corpus(const std::filesystem::path& path,
                   const CorpusLimits& limits = {});
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

// One name per line.
RelationSchema load_schema(const std::filesystem::path& path);
void save_schema(const RelationSchema& schema, const std::filesystem::path& path);
Vocabulary load_vocabulary(const std::filesystem::path& path);
void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path);

// Ground-truth (pair, relation) facts, NA excluded.
using FactSet = std::set<std::pair<PairId, RelationId>>;
FactSet facts_from_labels(const Corpus& corpus);

struct SyntheticConfig {
  std::size_t n_relations = 8;  // excluding NA
  std::size_t n_entity_pairs = 2000;  // training pairs
  std::size_t n_test_pairs = 500;
  double na_pair_fraction = 0.3;
  std::size_t min_sentences_per_pair = 1;
  std::size_t max_sentences_per_pair = 4;
  std::size_t templates_per_relation = 3;
  std::size_t template_length = 2;  // cue words per template
  std::size_t n_entities = 400;
  std::size_t max_filler = 3;  // per gap
  std::size_t vocab_size = 2000;
  double noise_rate = 0.3;
  std::size_t max_len = 120;
  std::uint64_t seed = 1;

  void validate() const;  // ConfigError
};

struct SyntheticData {
  Corpus train;
  Corpus test;
  RelationSchema schema{{"NA", "r1"}};
  Vocabulary vocab;
  // Template relation each sentence was actually drawn from, by instance id.
  std::unordered_map<InstanceId, RelationId> source_relation;
};

SyntheticData generate_synthetic(const SyntheticConfig& cfg);

}  // namespace advre

#endif  // ADVRE_CORPUS_H_
