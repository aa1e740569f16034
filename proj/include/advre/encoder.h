#ifndef ADVRE_ENCODER_H_
#define ADVRE_ENCODER_H_

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "advre/corpus.h"
#include "advre/rng.h"
#include "advre/tensor.h"

namespace advre {

enum class Arch { kCnn, kPcnn, kRnn, kBirnn };

std::string arch_name(Arch arch);
Arch parse_arch(const std::string& name);  // ConfigError on unknown names

struct EncoderConfig {
  Arch arch = Arch::kPcnn;
  std::size_t word_dim = 50;
  std::size_t position_dim = 5;
  std::size_t hidden_dim = 230;
  std::size_t window = 3;
  double dropout = 0.5;
  std::size_t max_len = 120;

  // Table defaults: CNN/PCNN k_p=5, k_h=230; RNN/BiRNN k_p=3, k_h=150.
  static EncoderConfig defaults(Arch arch);

  std::size_t input_dim() const { return word_dim + 2 * position_dim; }
  // 3*k_h for PCNN, 2*k_h for BiRNN, k_h otherwise.
  std::size_t output_dim() const;
  void validate() const;  // ConfigError

  bool operator==(const EncoderConfig&) const = default;
};

// All trainable weights. Tensors an architecture does not use stay empty.
struct EncoderParams {
  Tensor word_emb;      // vocab x k_w
  Tensor pos1_emb;      // (2*max_len+1) x k_p
  Tensor pos2_emb;
  Tensor conv_kernel;   // k_h x (m*k_i)
  Tensor conv_bias;     // k_h
  GruParams gru_fwd;
  GruParams gru_bwd;
  Tensor relation_emb;  // |R| x d_y
  Tensor sampler_w;     // d_y

  // Encoder weights only (input layer and architecture).
  std::vector<std::pair<std::string, Tensor*>> encoder_tensors();
  std::vector<std::pair<std::string, const Tensor*>> encoder_tensors() const;
  // Every non-empty tensor, in a fixed order.
  std::vector<std::pair<std::string, Tensor*>> named_tensors();
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;

  // Parameters updated by the discriminator: encoder + relation embeddings.
  std::vector<Tensor*> discriminator_tensors();
  std::vector<Tensor*> sampler_tensors() { return {&sampler_w}; }

  void zero_grad();
  bool same_values(const EncoderParams& other) const;
};

EncoderParams init_params(const EncoderConfig& cfg, std::size_t vocab_size,
                          std::size_t n_relations, Rng& rng);

// Overwrites word embedding rows from a whitespace-separated text file
// ("word v1 ... v_kw" per line). Returns the number of rows replaced.
std::size_t load_pretrained_vectors(EncoderParams& params,
                                    const Vocabulary& vocab,
                                    const std::filesystem::path& path);

// Forward intermediates, kept for the backward pass.
struct Encoding {
  Tensor input;                  // n x k_i
  // CNN / PCNN
  Tensor conv;                   // n x k_h
  Tensor hidden;                 // conv + bias
  std::vector<Tensor> pooled;    // one per segment
  std::vector<std::pair<std::size_t, std::size_t>> segments;
  Tensor joined;                 // concatenated pools
  Tensor activated;              // tanh(joined)
  // RNN / BiRNN
  std::vector<Tensor> steps;     // per-token input rows
  std::vector<Tensor> fwd_states;  // h_0 .. h_n
  std::vector<Tensor> bwd_states;  // h_{n+1} .. h_1 (scan order)
  Tensor rnn_out;
  // output
  std::vector<double> dropout_scale;
  Tensor y;
};

class Encoder {
 public:
  explicit Encoder(EncoderConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const EncoderConfig& config() const { return cfg_; }

  // x_i = [word_i; pos_e1_i; pos_e2_i]
  Tensor embed_input(const Instance& inst, const EncoderParams& params) const;
  void embed_input_backward(const Instance& inst, const Tensor& input,
                            EncoderParams& params) const;

  // Full forward. `rng` drives dropout and may be null when !training.
  Encoding encode(const Instance& inst, const EncoderParams& params,
                  bool training, Rng* rng) const;
  // Backpropagates enc.y.grad() into params. Consumes enc's buffers.
  void backward(const Instance& inst, Encoding& enc,
                EncoderParams& params) const;

  // Evaluation-mode embedding.
  Tensor embed(const Instance& inst, const EncoderParams& params) const;

 private:
  EncoderConfig cfg_;
};

// Architecture-level building blocks over an already-embedded input.
// `enc.input` must be set; these fill the remaining fields up to
// `activated` / `rnn_out`.
void encode_cnn(Encoding& enc, const EncoderParams& params, std::size_t window);
void encode_pcnn(Encoding& enc, const EncoderParams& params, std::size_t window,
                 std::size_t e1_pos, std::size_t e2_pos);
void encode_rnn(Encoding& enc, const EncoderParams& params);
void encode_birnn(Encoding& enc, const EncoderParams& params);

// Binary checkpoint: magic, format version, config block, named tensors as
// raw little-endian doubles.
void save_checkpoint(const EncoderConfig& cfg, const EncoderParams& params,
                     const std::filesystem::path& path);
std::pair<EncoderConfig, EncoderParams> load_checkpoint(
    const std::filesystem::path& path);

}  // namespace advre

#endif  // ADVRE_ENCODER_H_
