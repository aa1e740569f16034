#include "advre/corpus.h"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>

#include "advre/errors.h"
#include "advre/rng.h"

namespace advre {

namespace {

using ordered_json = nlohmann::ordered_json;

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

void write_lines(const std::vector<std::string>& lines,
                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

RelationSchema::RelationSchema(std::vector<std::string> names)
    : names_(std::move(names)) {
  if (names_.size() < 2) {
    throw ValidationError("relation schema needs NA plus at least one relation");
  }
  if (names_[kNa] != "NA") {
    throw ValidationError("relation 0 must be NA, got '" + names_[0] + "'");
  }
  std::set<std::string> seen(names_.begin(), names_.end());
  if (seen.size() != names_.size()) {
    throw ValidationError("relation names must be unique");
  }
}

RelationId RelationSchema::id(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ValidationError("unknown relation '" + name + "'");
  return static_cast<RelationId>(it - names_.begin());
}

Vocabulary::Vocabulary() {
  add(kPadToken);
  add(kUnkToken);
}

Vocabulary::Vocabulary(std::vector<std::string> words) {
  if (words.size() < 2 || words[kPad] != kPadToken || words[kUnk] != kUnkToken) {
    throw ValidationError("vocabulary must start with <pad> and <unk>");
  }
  for (const auto& w : words) {
    if (index_.count(w)) throw ValidationError("duplicate vocabulary word '" + w + "'");
    add(w);
  }
}

WordId Vocabulary::add(const std::string& word) {
  auto [it, inserted] =
      index_.emplace(word, static_cast<WordId>(words_.size()));
  if (inserted) words_.push_back(word);
  return it->second;
}

WordId Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

void validate_instance(const Instance& inst, const CorpusLimits& limits) {
  const std::string where = "instance " + std::to_string(inst.id) + ": ";
  const std::size_t n = inst.tokens.size();
  if (!(inst.e1_pos < inst.e2_pos && inst.e2_pos < n)) {
    throw ValidationError(where + "entity positions e1=" +
                          std::to_string(inst.e1_pos) +
                          " e2=" + std::to_string(inst.e2_pos) +
                          " invalid for " + std::to_string(n) + " tokens");
  }
  if (limits.max_len && n > *limits.max_len) {
    throw ValidationError(where + std::to_string(n) + " tokens exceeds max_len " +
                          std::to_string(*limits.max_len));
  }
  if (inst.label < 0 ||
      (limits.n_relations &&
       static_cast<std::size_t>(inst.label) >= *limits.n_relations)) {
    throw ValidationError(where + "label " + std::to_string(inst.label) +
                          " out of range");
  }
  for (WordId w : inst.tokens) {
    if (w < 0 || (limits.vocab_size &&
                  static_cast<std::size_t>(w) >= *limits.vocab_size)) {
      throw ValidationError(where + "token id " + std::to_string(w) +
                            " out of vocabulary");
    }
  }
}

std::unordered_map<InstanceId, std::size_t> Corpus::index() const {
  std::unordered_map<InstanceId, std::size_t> idx;
  idx.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (!idx.emplace(instances[i].id, i).second) {
      throw ValidationError("duplicate instance id " +
                            std::to_string(instances[i].id));
    }
  }
  return idx;
}

std::map<PairId, std::vector<std::size_t>> Corpus::by_pair() const {
  std::map<PairId, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    groups[instances[i].pair_id].push_back(i);
  }
  return groups;
}

void CorpusSplit::promote(InstanceId id) {
  if (unconfident.erase(id) == 0) {
    throw ValidationError("instance " + std::to_string(id) +
                          " is not in the unconfident set");
  }
  confident.insert(id);
}

void CorpusSplit::check_partition(const std::set<InstanceId>& all_ids) const {
  std::size_t seen = 0;
  for (const auto* part : {&confident, &unconfident}) {
    for (InstanceId id : *part) {
      if (!all_ids.count(id)) {
        throw ValidationError("split holds unknown instance " + std::to_string(id));
      }
      ++seen;
    }
  }
  for (InstanceId id : confident) {
    if (unconfident.count(id)) {
      throw ValidationError("instance " + std::to_string(id) +
                            " is both confident and unconfident");
    }
  }
  if (seen != all_ids.size()) {
    throw ValidationError("split does not cover every training instance");
  }
}

Instance truncate_instance(Instance inst, std::size_t max_len) {
  if (inst.tokens.size() > max_len) {
    inst.tokens.resize(max_len);
    validate_instance(inst);
  }
  return inst;
}

PositionIds position_features(const Instance& inst, std::size_t max_len) {
  const auto lim = static_cast<std::ptrdiff_t>(max_len);
  auto encode = [lim](std::ptrdiff_t d) {
    return static_cast<std::size_t>(std::clamp(d, -lim, lim) + lim);
  };
  PositionIds ids;
  ids.to_e1.reserve(inst.tokens.size());
  ids.to_e2.reserve(inst.tokens.size());
  for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
    const auto pos = static_cast<std::ptrdiff_t>(i);
    ids.to_e1.push_back(encode(pos - static_cast<std::ptrdiff_t>(inst.e1_pos)));
    ids.to_e2.push_back(encode(pos - static_cast<std::ptrdiff_t>(inst.e2_pos)));
  }
  return ids;
}

Corpus load_corpus(const std::filesystem::path& path,
                   const CorpusLimits& limits) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open corpus " + path.string());
  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Instance inst;
    try {
      const auto j = nlohmann::json::parse(line);
      inst.id = j.at("id").get<InstanceId>();
      inst.tokens = j.at("tokens").get<std::vector<WordId>>();
      const auto e1 = j.at("e1_pos").get<std::int64_t>();
      const auto e2 = j.at("e2_pos").get<std::int64_t>();
      if (e1 < 0 || e2 < 0) {
        throw ValidationError("negative entity position");
      }
      inst.e1_pos = static_cast<std::size_t>(e1);
      inst.e2_pos = static_cast<std::size_t>(e2);
      inst.pair_id = j.at("pair_id").get<PairId>();
      inst.label = j.at("label").get<RelationId>();
      if (j.contains("noise_flag") && !j["noise_flag"].is_null()) {
        inst.noise_flag = j["noise_flag"].get<bool>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), lineno);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      validate_instance(inst, limits);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
    }
    corpus.instances.push_back(std::move(inst));
  }
  corpus.index();  // rejects duplicate ids
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write corpus " + path.string());
  for (const Instance& inst : corpus.instances) {
    ordered_json j;
    j["id"] = inst.id;
    j["tokens"] = inst.tokens;
    j["e1_pos"] = inst.e1_pos;
    j["e2_pos"] = inst.e2_pos;
    j["pair_id"] = inst.pair_id;
    j["label"] = inst.label;
    if (inst.noise_flag) j["noise_flag"] = *inst.noise_flag;
    out << j.dump() << '\n';
  }
}

RelationSchema load_schema(const std::filesystem::path& path) {
  return RelationSchema(read_lines(path));
}

void save_schema(const RelationSchema& schema, const std::filesystem::path& path) {
  write_lines(schema.names(), path);
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  return Vocabulary(read_lines(path));
}

void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path) {
  write_lines(vocab.words(), path);
}

FactSet facts_from_labels(const Corpus& corpus) {
  FactSet facts;
  for (const Instance& inst : corpus.instances) {
    if (inst.label != kNa) facts.emplace(inst.pair_id, inst.label);
  }
  return facts;
}

void SyntheticConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (n_relations < 1) fail("n_relations must be at least 1");
  if (n_entity_pairs < 1 || n_test_pairs < 1) fail("pair counts must be positive");
  if (min_sentences_per_pair < 1 || max_sentences_per_pair < min_sentences_per_pair) {
    fail("sentences per pair must satisfy 1 <= min <= max");
  }
  if (templates_per_relation < 1 || template_length < 1) {
    fail("templates_per_relation and template_length must be positive");
  }
  if (!(noise_rate >= 0.0 && noise_rate < 1.0)) {
    fail("noise_rate must be in [0, 1), got " + std::to_string(noise_rate));
  }
  if (!(na_pair_fraction >= 0.0 && na_pair_fraction < 1.0)) {
    fail("na_pair_fraction must be in [0, 1)");
  }
  if (n_entities < 2) fail("n_entities must be at least 2");
  const std::size_t possible_pairs = n_entities * (n_entities - 1);
  if (n_entity_pairs + n_test_pairs > possible_pairs) {
    fail("n_entities too small for the requested number of distinct pairs");
  }
  const std::size_t cue_words =
      (n_relations + 1) * templates_per_relation * template_length;
  if (vocab_size < 2 + cue_words + n_entities + 1) {
    fail("vocab_size " + std::to_string(vocab_size) + " too small: need " +
         std::to_string(2 + cue_words + n_entities + 1) +
         " for templates, entities and at least one filler word");
  }
  const std::size_t longest =
      2 * max_filler + 2 + template_length + (template_length + 1);
  if (max_len < longest) {
    fail("max_len " + std::to_string(max_len) +
         " shorter than the longest generated sentence (" +
         std::to_string(longest) + ")");
  }
}

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng = Rng::stream(cfg.seed, "data");

  SyntheticData out;
  std::vector<std::string> names{"NA"};
  for (std::size_t r = 1; r <= cfg.n_relations; ++r) {
    names.push_back("rel" + std::to_string(r));
  }
  out.schema = RelationSchema(names);
  const std::size_t n_rel = names.size();

  // Disjoint cue words per relation and template; NA gets its own.
  Vocabulary& vocab = out.vocab;
  std::vector<std::vector<std::vector<WordId>>> templates(n_rel);
  for (std::size_t r = 0; r < n_rel; ++r) {
    for (std::size_t t = 0; t < cfg.templates_per_relation; ++t) {
      std::vector<WordId> cues;
      for (std::size_t j = 0; j < cfg.template_length; ++j) {
        cues.push_back(vocab.add("cue_" + names[r] + "_t" + std::to_string(t) +
                                 "_" + std::to_string(j)));
      }
      templates[r].push_back(std::move(cues));
    }
  }
  std::vector<WordId> entities;
  for (std::size_t e = 0; e < cfg.n_entities; ++e) {
    entities.push_back(vocab.add("ent" + std::to_string(e)));
  }
  std::vector<WordId> fillers;
  for (std::size_t f = 0; vocab.size() < cfg.vocab_size; ++f) {
    fillers.push_back(vocab.add("w" + std::to_string(f)));
  }

  auto filler = [&] { return fillers[rng.below(fillers.size())]; };

  auto sentence = [&](WordId head, WordId tail, RelationId rel,
                      Instance& inst) {
    const auto& cues = templates[rel][rng.below(templates[rel].size())];
    inst.tokens.clear();
    for (auto k = rng.below(cfg.max_filler + 1); k > 0; --k) {
      inst.tokens.push_back(filler());
    }
    inst.e1_pos = inst.tokens.size();
    inst.tokens.push_back(head);
    for (WordId c : cues) {
      if (rng.bernoulli(0.5)) inst.tokens.push_back(filler());
      inst.tokens.push_back(c);
    }
    if (rng.bernoulli(0.5)) inst.tokens.push_back(filler());
    inst.e2_pos = inst.tokens.size();
    inst.tokens.push_back(tail);
    for (auto k = rng.below(cfg.max_filler + 1); k > 0; --k) {
      inst.tokens.push_back(filler());
    }
  };

  std::set<std::pair<WordId, WordId>> used_pairs;
  InstanceId next_id = 0;
  PairId next_pair = 0;

  auto make_pairs = [&](std::size_t count, double noise_rate, Corpus& corpus) {
    for (std::size_t p = 0; p < count; ++p) {
      WordId head, tail;
      do {
        head = entities[rng.below(entities.size())];
        tail = entities[rng.below(entities.size())];
      } while (head == tail || used_pairs.count({head, tail}));
      used_pairs.emplace(head, tail);

      const RelationId truth =
          rng.bernoulli(cfg.na_pair_fraction)
              ? kNa
              : static_cast<RelationId>(1 + rng.below(cfg.n_relations));
      const PairId pair = next_pair++;
      const auto n_sent = static_cast<std::size_t>(
          rng.between(static_cast<std::int64_t>(cfg.min_sentences_per_pair),
                      static_cast<std::int64_t>(cfg.max_sentences_per_pair)));
      for (std::size_t s = 0; s < n_sent; ++s) {
        Instance inst;
        inst.id = next_id++;
        inst.pair_id = pair;
        inst.label = truth;
        RelationId source = truth;
        const bool noisy = noise_rate > 0.0 && rng.bernoulli(noise_rate);
        if (noisy) {
          // Uniform over every relation other than the true one.
          auto other = static_cast<RelationId>(rng.below(n_rel - 1));
          source = other >= truth ? other + 1 : other;
        }
        inst.noise_flag = noisy;
        sentence(head, tail, source, inst);
        out.source_relation[inst.id] = source;
        corpus.instances.push_back(std::move(inst));
      }
    }
  };

  make_pairs(cfg.n_entity_pairs, cfg.noise_rate, out.train);
  make_pairs(cfg.n_test_pairs, 0.0, out.test);
  return out;
}

}  // namespace advre
