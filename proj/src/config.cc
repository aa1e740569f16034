#include "advre/config.h"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "advre/errors.h"

namespace advre {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(to_u64(key, v));
}

double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string fmt_opt(const std::optional<double>& x) { return x ? fmt(*x) : "none"; }
std::string fmt_opt(const std::optional<std::size_t>& x) {
  return x ? std::to_string(*x) : "auto";
}

std::optional<double> opt_double(const std::string& key, const std::string& v) {
  if (v == "none" || v == "off") return std::nullopt;
  return to_double(key, v);
}

std::optional<std::size_t> opt_size(const std::string& key, const std::string& v) {
  if (v == "auto") return std::nullopt;
  return to_size(key, v);
}

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SIZE_KEY(name, field)                                                   \
  Key{name, [](RunConfig& c, const std::string& v) { c.field = to_size(name, v); }, \
      [](const RunConfig& c) { return std::to_string(c.field); }}
#define DOUBLE_KEY(name, field)                                                   \
  Key{name, [](RunConfig& c, const std::string& v) { c.field = to_double(name, v); }, \
      [](const RunConfig& c) { return fmt(c.field); }}

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = {
      Key{"seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64("seed", v); },
          [](const RunConfig& c) { return std::to_string(c.seed); }},
      SIZE_KEY("n_relations", data.n_relations),
      SIZE_KEY("n_entity_pairs", data.n_entity_pairs),
      SIZE_KEY("n_test_pairs", data.n_test_pairs),
      DOUBLE_KEY("na_pair_fraction", data.na_pair_fraction),
      SIZE_KEY("min_sentences_per_pair", data.min_sentences_per_pair),
      SIZE_KEY("max_sentences_per_pair", data.max_sentences_per_pair),
      SIZE_KEY("templates_per_relation", data.templates_per_relation),
      SIZE_KEY("template_length", data.template_length),
      SIZE_KEY("n_entities", data.n_entities),
      SIZE_KEY("max_filler", data.max_filler),
      SIZE_KEY("vocab_size", data.vocab_size),
      DOUBLE_KEY("noise_rate", data.noise_rate),
      SIZE_KEY("max_len", data.max_len),
      Key{"arch", [](RunConfig& c, const std::string& v) { c.arch = parse_arch(v); },
          [](const RunConfig& c) { return arch_name(c.arch); }},
      SIZE_KEY("word_dim", word_dim),
      Key{"position_dim",
          [](RunConfig& c, const std::string& v) { c.position_dim = opt_size("position_dim", v); },
          [](const RunConfig& c) { return fmt_opt(c.position_dim); }},
      Key{"hidden_dim",
          [](RunConfig& c, const std::string& v) { c.hidden_dim = opt_size("hidden_dim", v); },
          [](const RunConfig& c) { return fmt_opt(c.hidden_dim); }},
      SIZE_KEY("window", window),
      DOUBLE_KEY("dropout", dropout),
      Key{"word_vectors", [](RunConfig& c, const std::string& v) { c.word_vectors = v; },
          [](const RunConfig& c) { return c.word_vectors; }},
      SIZE_KEY("pretrain_epochs", pretrain.epochs),
      DOUBLE_KEY("pretrain_lr", pretrain.learning_rate),
      SIZE_KEY("pretrain_batch", pretrain.batch_size),
      Key{"pretrain_clip_norm",
          [](RunConfig& c, const std::string& v) {
            c.pretrain.clip_norm = opt_double("pretrain_clip_norm", v);
          },
          [](const RunConfig& c) { return fmt_opt(c.pretrain.clip_norm); }},
      DOUBLE_KEY("alpha_d", train.alpha_d),
      DOUBLE_KEY("alpha_s", train.alpha_s),
      DOUBLE_KEY("alpha", train.adv.alpha),
      DOUBLE_KEY("lambda", train.adv.lambda),
      SIZE_KEY("confident_batch", train.adv.confident_batch),
      SIZE_KEY("unconfident_batch", train.adv.unconfident_batch),
      SIZE_KEY("epochs", train.epochs),
      SIZE_KEY("promotion_period", train.promotion_period),
      DOUBLE_KEY("promotion_threshold", train.promotion_threshold),
      DOUBLE_KEY("confident_fraction", train.confident_fraction),
      Key{"clip_norm",
          [](RunConfig& c, const std::string& v) { c.train.clip_norm = opt_double("clip_norm", v); },
          [](const RunConfig& c) { return fmt_opt(c.train.clip_norm); }},
      DOUBLE_KEY("divergence_limit", train.divergence_limit),
      Key{"aggregation",
          [](RunConfig& c, const std::string& v) { c.aggregation = parse_aggregation(v); },
          [](const RunConfig& c) { return aggregation_name(c.aggregation); }},
      Key{"eval_n",
          [](RunConfig& c, const std::string& v) {
            c.eval_n.clear();
            if (v == "auto") return;
            std::stringstream ss(v);
            std::string item;
            while (std::getline(ss, item, ',')) {
              const std::size_t n = to_size("eval_n", trim(item));
              if (n == 0) throw ConfigError("eval_n: N must be positive");
              c.eval_n.push_back(n);
            }
            if (c.eval_n.empty()) throw ConfigError("eval_n: empty list");
          },
          [](const RunConfig& c) {
            if (c.eval_n.empty()) return std::string("auto");
            std::string s;
            for (std::size_t i = 0; i < c.eval_n.size(); ++i) {
              if (i) s += ',';
              s += std::to_string(c.eval_n[i]);
            }
            return s;
          }},
      Key{"inspect_relation",
          [](RunConfig& c, const std::string& v) { c.inspect_relation = v; },
          [](const RunConfig& c) { return c.inspect_relation; }},
      SIZE_KEY("inspect_k", inspect_k),
  };
  return keys;
}

#undef SIZE_KEY
#undef DOUBLE_KEY

}  // namespace

EncoderConfig RunConfig::encoder() const {
  EncoderConfig e = EncoderConfig::defaults(arch);
  e.word_dim = word_dim;
  if (position_dim) e.position_dim = *position_dim;
  if (hidden_dim) e.hidden_dim = *hidden_dim;
  e.window = window;
  e.dropout = dropout;
  e.max_len = data.max_len;
  return e;
}

void RunConfig::finalize() {
  data.seed = seed;
  pretrain.seed = seed;
  train.seed = seed;
  data.validate();
  encoder().validate();
  pretrain.validate();
  train.validate();
  if (inspect_k == 0) throw ConfigError("inspect_k must be positive");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const Key& k : registry()) out.push_back(k.name);
    return out;
  }();
  return names;
}

RunConfig default_run_config() { return RunConfig{}; }

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const Key& k : registry()) {
    if (k.name == key) {
      k.set(cfg, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply_config_text(RunConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    try {
      apply_setting(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str());
}

void apply_env_overrides(RunConfig& cfg, const std::string& prefix) {
  for (const Key& k : registry()) {
    std::string var = prefix;
    for (char c : k.name) var.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (const char* v = std::getenv(var.c_str())) {
      try {
        k.set(cfg, trim(v));
      } catch (const ConfigError& e) {
        throw ConfigError(var + ": " + e.what());
      }
    }
  }
}

std::string config_to_text(const RunConfig& cfg) {
  std::string out;
  for (const Key& k : registry()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

}  // namespace advre
