#include "advre/encoder.h"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "advre/errors.h"

namespace advre {

std::string arch_name(Arch arch) {
  switch (arch) {
    case Arch::kCnn: return "cnn";
    case Arch::kPcnn: return "pcnn";
    case Arch::kRnn: return "rnn";
    case Arch::kBirnn: return "birnn";
  }
  return "?";
}

Arch parse_arch(const std::string& name) {
  std::string lower;
  for (char c : name) lower.push_back(static_cast<char>(std::tolower(c)));
  if (lower == "cnn") return Arch::kCnn;
  if (lower == "pcnn") return Arch::kPcnn;
  if (lower == "rnn") return Arch::kRnn;
  if (lower == "birnn") return Arch::kBirnn;
  throw ConfigError("unknown architecture '" + name +
                    "' (expected cnn, pcnn, rnn or birnn)");
}

EncoderConfig EncoderConfig::defaults(Arch arch) {
  EncoderConfig cfg;
  cfg.arch = arch;
  const bool conv = arch == Arch::kCnn || arch == Arch::kPcnn;
  cfg.position_dim = conv ? 5 : 3;
  cfg.hidden_dim = conv ? 230 : 150;
  return cfg;
}

std::size_t EncoderConfig::output_dim() const {
  switch (arch) {
    case Arch::kPcnn: return 3 * hidden_dim;
    case Arch::kBirnn: return 2 * hidden_dim;
    default: return hidden_dim;
  }
}

void EncoderConfig::validate() const {
  if (word_dim == 0 || position_dim == 0 || hidden_dim == 0 || max_len == 0) {
    throw ConfigError("encoder dimensions must be positive");
  }
  if (window % 2 == 0) {
    throw ConfigError("convolution window must be odd, got " +
                      std::to_string(window));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("dropout must be in [0, 1)");
  }
}

namespace {

bool uses_conv(Arch a) { return a == Arch::kCnn || a == Arch::kPcnn; }

void add_gru(std::vector<std::pair<std::string, Tensor*>>& out,
             const std::string& prefix, GruParams& g) {
  static const char* kNames[] = {"wz", "uz", "bz", "wr", "ur",
                                 "br", "wh", "uh", "bh"};
  auto ts = g.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    out.emplace_back(prefix + "." + kNames[i], ts[i]);
  }
}

template <typename T>
std::vector<std::pair<std::string, const Tensor*>> as_const(
    std::vector<std::pair<std::string, T*>> v) {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [n, t] : v) out.emplace_back(n, t);
  return out;
}

void fill_uniform(Tensor& t, double bound, Rng& rng) {
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
}

double xavier(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> EncoderParams::encoder_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("word_emb", &word_emb);
  out.emplace_back("pos1_emb", &pos1_emb);
  out.emplace_back("pos2_emb", &pos2_emb);
  if (!conv_kernel.empty()) {
    out.emplace_back("conv_kernel", &conv_kernel);
    out.emplace_back("conv_bias", &conv_bias);
  }
  if (!gru_fwd.wz.empty()) add_gru(out, "gru_fwd", gru_fwd);
  if (!gru_bwd.wz.empty()) add_gru(out, "gru_bwd", gru_bwd);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>>
EncoderParams::encoder_tensors() const {
  return as_const(const_cast<EncoderParams*>(this)->encoder_tensors());
}

std::vector<std::pair<std::string, Tensor*>> EncoderParams::named_tensors() {
  auto out = encoder_tensors();
  out.emplace_back("relation_emb", &relation_emb);
  out.emplace_back("sampler_w", &sampler_w);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>>
EncoderParams::named_tensors() const {
  return as_const(const_cast<EncoderParams*>(this)->named_tensors());
}

std::vector<Tensor*> EncoderParams::discriminator_tensors() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : encoder_tensors()) out.push_back(t);
  out.push_back(&relation_emb);
  return out;
}

void EncoderParams::zero_grad() {
  for (auto& [name, t] : named_tensors()) t->zero_grad();
}

bool EncoderParams::same_values(const EncoderParams& other) const {
  auto a = named_tensors();
  auto b = other.named_tensors();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].first != b[i].first || !a[i].second->same_values(*b[i].second)) {
      return false;
    }
  }
  return true;
}

EncoderParams init_params(const EncoderConfig& cfg, std::size_t vocab_size,
                          std::size_t n_relations, Rng& rng) {
  cfg.validate();
  EncoderParams p;
  const std::size_t n_pos = 2 * cfg.max_len + 1;
  p.word_emb = Tensor({vocab_size, cfg.word_dim});
  fill_uniform(p.word_emb, 0.25, rng);
  std::fill(p.word_emb.row(Vocabulary::kPad).begin(),
            p.word_emb.row(Vocabulary::kPad).end(), 0.0);
  p.pos1_emb = Tensor({n_pos, cfg.position_dim});
  p.pos2_emb = Tensor({n_pos, cfg.position_dim});
  fill_uniform(p.pos1_emb, 0.25, rng);
  fill_uniform(p.pos2_emb, 0.25, rng);

  const std::size_t in = cfg.input_dim(), h = cfg.hidden_dim;
  if (uses_conv(cfg.arch)) {
    p.conv_kernel = Tensor({h, cfg.window * in});
    fill_uniform(p.conv_kernel, xavier(cfg.window * in, h), rng);
    p.conv_bias = Tensor({h});
  } else {
    auto init_gru = [&](GruParams& g) {
      g = GruParams::zeros(in, h);
      for (Tensor* w : {&g.wz, &g.wr, &g.wh}) fill_uniform(*w, xavier(in, h), rng);
      for (Tensor* u : {&g.uz, &g.ur, &g.uh}) fill_uniform(*u, xavier(h, h), rng);
    };
    init_gru(p.gru_fwd);
    if (cfg.arch == Arch::kBirnn) init_gru(p.gru_bwd);
  }
  const std::size_t dy = cfg.output_dim();
  p.relation_emb = Tensor({n_relations, dy});
  fill_uniform(p.relation_emb, xavier(n_relations, dy), rng);
  p.sampler_w = Tensor({dy});
  return p;
}

std::size_t load_pretrained_vectors(EncoderParams& params,
                                    const Vocabulary& vocab,
                                    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open word vectors " + path.string());
  const std::size_t dim = params.word_emb.cols();
  std::size_t replaced = 0, lineno = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream is(line);
    std::string word;
    if (!(is >> word)) continue;
    std::vector<double> v;
    double x;
    while (is >> x) v.push_back(x);
    if (v.size() != dim) {
      // word2vec text files start with a "count dim" header line
      if (lineno == 1 && v.size() == 1) continue;
      throw ParseError("expected " + std::to_string(dim) + " values for '" +
                           word + "', got " + std::to_string(v.size()),
                       lineno);
    }
    const WordId id = vocab.id(word);
    if (id == Vocabulary::kUnk && word != Vocabulary::kUnkToken) continue;
    std::copy(v.begin(), v.end(), params.word_emb.row(id).begin());
    ++replaced;
  }
  return replaced;
}

Tensor Encoder::embed_input(const Instance& inst,
                            const EncoderParams& params) const {
  const std::size_t n = inst.tokens.size();
  if (n == 0) throw ValidationError("cannot encode an empty sentence");
  const std::size_t kw = cfg_.word_dim, kp = cfg_.position_dim;
  const PositionIds pos = position_features(inst, cfg_.max_len);
  Tensor x({n, cfg_.input_dim()});
  for (std::size_t i = 0; i < n; ++i) {
    const WordId w = inst.tokens[i];
    if (w < 0 || static_cast<std::size_t>(w) >= params.word_emb.rows()) {
      throw ValidationError("token id " + std::to_string(w) +
                            " outside vocabulary of size " +
                            std::to_string(params.word_emb.rows()));
    }
    auto row = x.row(i);
    auto wr = params.word_emb.row(static_cast<std::size_t>(w));
    auto p1 = params.pos1_emb.row(pos.to_e1[i]);
    auto p2 = params.pos2_emb.row(pos.to_e2[i]);
    std::copy(wr.begin(), wr.end(), row.begin());
    std::copy(p1.begin(), p1.end(), row.begin() + kw);
    std::copy(p2.begin(), p2.end(), row.begin() + kw + kp);
  }
  return x;
}

void Encoder::embed_input_backward(const Instance& inst, const Tensor& input,
                                   EncoderParams& params) const {
  const std::size_t kw = cfg_.word_dim, kp = cfg_.position_dim;
  const PositionIds pos = position_features(inst, cfg_.max_len);
  for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
    auto g = input.grad_row(i);
    auto wg = params.word_emb.grad_row(static_cast<std::size_t>(inst.tokens[i]));
    auto p1 = params.pos1_emb.grad_row(pos.to_e1[i]);
    auto p2 = params.pos2_emb.grad_row(pos.to_e2[i]);
    for (std::size_t j = 0; j < kw; ++j) wg[j] += g[j];
    for (std::size_t j = 0; j < kp; ++j) {
      p1[j] += g[kw + j];
      p2[j] += g[kw + kp + j];
    }
  }
}

void encode_cnn(Encoding& enc, const EncoderParams& params, std::size_t window) {
  enc.conv = conv1d(enc.input, params.conv_kernel, window);
  enc.hidden = add_row_bias(enc.conv, params.conv_bias);
  enc.segments = {{0, enc.hidden.rows()}};
  enc.pooled = {max_pool_cols(enc.hidden)};
  enc.joined = enc.pooled[0];
  enc.activated = tanh(enc.joined);
}

void encode_pcnn(Encoding& enc, const EncoderParams& params, std::size_t window,
                 std::size_t e1_pos, std::size_t e2_pos) {
  const std::size_t n = enc.input.rows();
  if (!(e1_pos < e2_pos && e2_pos < n)) {
    throw ValidationError("PCNN needs e1 < e2 < sentence length");
  }
  enc.conv = conv1d(enc.input, params.conv_kernel, window);
  enc.hidden = add_row_bias(enc.conv, params.conv_bias);
  // [0, e1], (e1, e2], (e2, n): the entity closes its segment.
  enc.segments = {{0, e1_pos + 1}, {e1_pos + 1, e2_pos + 1}, {e2_pos + 1, n}};
  enc.pooled.clear();
  for (auto [b, e] : enc.segments) {
    // An empty segment pools an implicit zero row.
    enc.pooled.push_back(b < e ? max_pool_cols(enc.hidden, b, e)
                               : Tensor({enc.hidden.cols()}));
  }
  const Tensor* parts[] = {&enc.pooled[0], &enc.pooled[1], &enc.pooled[2]};
  enc.joined = concat(parts);
  enc.activated = tanh(enc.joined);
}

namespace {

Tensor step_input(const Tensor& input, std::size_t i) {
  auto r = input.row(i);
  return Tensor({input.cols()}, std::vector<double>(r.begin(), r.end()));
}

// Scans `order` with g, filling states[0] = 0, states[k+1] = g(x, states[k]).
void gru_scan(const std::vector<Tensor>& steps, const GruParams& g,
              bool reverse, std::vector<Tensor>& states) {
  const std::size_t n = steps.size();
  states.assign(1, Tensor({g.hidden_dim()}));
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = reverse ? n - 1 - k : k;
    states.push_back(gru_cell(steps[i], states.back(), g));
  }
}

void gru_scan_backward(std::vector<Tensor>& steps, GruParams& g, bool reverse,
                       std::vector<Tensor>& states) {
  const std::size_t n = steps.size();
  for (std::size_t k = n; k-- > 0;) {
    const std::size_t i = reverse ? n - 1 - k : k;
    gru_cell_backward(steps[i], states[k], g, states[k + 1]);
  }
}

}  // namespace

void encode_rnn(Encoding& enc, const EncoderParams& params) {
  enc.steps.clear();
  for (std::size_t i = 0; i < enc.input.rows(); ++i) {
    enc.steps.push_back(step_input(enc.input, i));
  }
  gru_scan(enc.steps, params.gru_fwd, false, enc.fwd_states);
  enc.rnn_out = enc.fwd_states.back();
  enc.rnn_out.zero_grad();
}

void encode_birnn(Encoding& enc, const EncoderParams& params) {
  enc.steps.clear();
  for (std::size_t i = 0; i < enc.input.rows(); ++i) {
    enc.steps.push_back(step_input(enc.input, i));
  }
  gru_scan(enc.steps, params.gru_fwd, false, enc.fwd_states);
  gru_scan(enc.steps, params.gru_bwd, true, enc.bwd_states);
  // [forward h_n ; backward h_1]
  const Tensor* parts[] = {&enc.fwd_states.back(), &enc.bwd_states.back()};
  enc.rnn_out = concat(parts);
}

Encoding Encoder::encode(const Instance& inst, const EncoderParams& params,
                         bool training, Rng* rng) const {
  Encoding enc;
  enc.input = embed_input(inst, params);
  const Tensor* pre = nullptr;
  switch (cfg_.arch) {
    case Arch::kCnn:
      encode_cnn(enc, params, cfg_.window);
      pre = &enc.activated;
      break;
    case Arch::kPcnn:
      encode_pcnn(enc, params, cfg_.window, inst.e1_pos, inst.e2_pos);
      pre = &enc.activated;
      break;
    case Arch::kRnn:
      encode_rnn(enc, params);
      pre = &enc.rnn_out;
      break;
    case Arch::kBirnn:
      encode_birnn(enc, params);
      pre = &enc.rnn_out;
      break;
  }
  Rng unused(0);
  DropoutResult d = dropout(*pre, cfg_.dropout, training && rng != nullptr,
                            rng ? *rng : unused);
  enc.y = std::move(d.out);
  enc.dropout_scale = std::move(d.scale);
  return enc;
}

void Encoder::backward(const Instance& inst, Encoding& enc,
                       EncoderParams& params) const {
  const bool conv = uses_conv(cfg_.arch);
  Tensor& pre = conv ? enc.activated : enc.rnn_out;
  dropout_backward(pre, enc.dropout_scale, enc.y);
  if (conv) {
    tanh_backward(enc.joined, enc.activated);
    std::vector<Tensor*> parts;
    for (Tensor& t : enc.pooled) parts.push_back(&t);
    concat_backward(parts, enc.joined);
    for (std::size_t s = 0; s < enc.segments.size(); ++s) {
      auto [b, e] = enc.segments[s];
      if (b < e) max_pool_cols_backward(enc.hidden, b, e, enc.pooled[s]);
    }
    add_row_bias_backward(enc.conv, params.conv_bias, enc.hidden);
    conv1d_backward(enc.input, params.conv_kernel, cfg_.window, enc.conv);
  } else {
    Tensor& h_fwd = enc.fwd_states.back();
    const std::size_t kh = cfg_.hidden_dim;
    for (std::size_t k = 0; k < kh; ++k) h_fwd.grad()[k] += enc.rnn_out.grad()[k];
    gru_scan_backward(enc.steps, params.gru_fwd, false, enc.fwd_states);
    if (cfg_.arch == Arch::kBirnn) {
      Tensor& h_bwd = enc.bwd_states.back();
      for (std::size_t k = 0; k < kh; ++k) {
        h_bwd.grad()[k] += enc.rnn_out.grad()[kh + k];
      }
      gru_scan_backward(enc.steps, params.gru_bwd, true, enc.bwd_states);
    }
    for (std::size_t i = 0; i < enc.steps.size(); ++i) {
      auto g = enc.input.grad_row(i);
      auto sg = enc.steps[i].grad();
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += sg[j];
    }
  }
  embed_input_backward(inst, enc.input, params);
}

Tensor Encoder::embed(const Instance& inst, const EncoderParams& params) const {
  return encode(inst, params, false, nullptr).y;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'A', 'D', 'V', 'R', 'E', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <typename T>
void put(std::ostream& os, T v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw ValidationError("checkpoint truncated");
  }
  return to_little(v);
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const auto n = get<std::uint64_t>(is);
  if (n > (1u << 20)) throw ValidationError("checkpoint string too long");
  std::string s(n, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(n))) {
    throw ValidationError("checkpoint truncated");
  }
  return s;
}

std::string config_block(const EncoderConfig& cfg) {
  char dropout[64];
  std::snprintf(dropout, sizeof dropout, "%.17g", cfg.dropout);
  std::ostringstream os;
  os << "arch=" << arch_name(cfg.arch) << '\n'
     << "word_dim=" << cfg.word_dim << '\n'
     << "position_dim=" << cfg.position_dim << '\n'
     << "hidden_dim=" << cfg.hidden_dim << '\n'
     << "window=" << cfg.window << '\n'
     << "dropout=" << dropout << '\n'
     << "max_len=" << cfg.max_len << '\n';
  return os.str();
}

EncoderConfig parse_config_block(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const char* k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) {
      throw ValidationError(std::string("checkpoint config lacks ") + k);
    }
    return it->second;
  };
  EncoderConfig cfg;
  cfg.arch = parse_arch(need("arch"));
  cfg.word_dim = std::stoul(need("word_dim"));
  cfg.position_dim = std::stoul(need("position_dim"));
  cfg.hidden_dim = std::stoul(need("hidden_dim"));
  cfg.window = std::stoul(need("window"));
  cfg.dropout = std::stod(need("dropout"));
  cfg.max_len = std::stoul(need("max_len"));
  cfg.validate();
  return cfg;
}

}  // namespace

void save_checkpoint(const EncoderConfig& cfg, const EncoderParams& params,
                     const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kVersion);
  put_string(os, config_block(cfg));
  const auto tensors = params.named_tensors();
  put<std::uint64_t>(os, tensors.size());
  for (const auto& [name, t] : tensors) {
    put_string(os, name);
    put<std::uint64_t>(os, t->rank());
    for (std::size_t d : t->shape()) put<std::uint64_t>(os, d);
    for (double v : t->data()) put<double>(os, v);
  }
  if (!os) throw ValidationError("failed writing checkpoint " + path.string());
}

std::pair<EncoderConfig, EncoderParams> load_checkpoint(
    const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  if (!is.read(magic, sizeof magic) ||
      std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw ValidationError(path.string() + " is not a checkpoint");
  }
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion) {
    throw ValidationError("unsupported checkpoint version " +
                          std::to_string(version));
  }
  EncoderConfig cfg = parse_config_block(get_string(is));

  EncoderParams params;
  if (uses_conv(cfg.arch)) {
    params.conv_kernel = Tensor({1});
    params.conv_bias = Tensor({1});
  } else {
    params.gru_fwd = GruParams::zeros(1, 1);
    if (cfg.arch == Arch::kBirnn) params.gru_bwd = GruParams::zeros(1, 1);
  }
  params.word_emb = params.pos1_emb = params.pos2_emb = Tensor({1});
  std::map<std::string, Tensor*> slots;
  for (auto& [name, t] : params.named_tensors()) slots[name] = t;

  const auto count = get<std::uint64_t>(is);
  if (count != slots.size()) {
    throw ValidationError("checkpoint holds " + std::to_string(count) +
                          " tensors, expected " + std::to_string(slots.size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = get_string(is);
    auto it = slots.find(name);
    if (it == slots.end()) {
      throw ValidationError("unexpected tensor '" + name + "' in checkpoint");
    }
    const auto rank = get<std::uint64_t>(is);
    if (rank == 0 || rank > 4) throw ValidationError("bad tensor rank");
    Shape shape;
    for (std::uint64_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<std::size_t>(get<std::uint64_t>(is)));
    }
    Tensor t(shape);
    for (double& v : t.data()) v = get<double>(is);
    *it->second = std::move(t);
    slots.erase(it);
  }
  if (!slots.empty()) {
    throw ValidationError("checkpoint is missing tensor '" +
                          slots.begin()->first + "'");
  }
  if (params.sampler_w.size() != cfg.output_dim() ||
      params.relation_emb.cols() != cfg.output_dim()) {
    throw ValidationError("checkpoint tensors do not match its encoder config");
  }
  return {cfg, std::move(params)};
}

}  // namespace advre
