#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "titlegen/corpus/corpus.hpp"
#include "titlegen/tensor/ops.hpp"
#include "titlegen/tensor/tensor.hpp"

namespace titlegen::models {

enum class Arch { kRnn, kTransformer };

std::string_view arch_name(Arch arch);
Arch parse_arch(std::string_view name);  // ConfigError on unknown names

struct ModelConfig {
  Arch architecture = Arch::kTransformer;
  std::size_t num_layers = 2;
  std::size_t embed_dim = 128;
  std::size_t hidden_dim = 256;   // FFN inner size / GRU state size
  std::size_t num_heads = 4;      // transformer only
  bool encoder_positional_encoding = true;
  double dropout_rate = 0.0;
  std::size_t source_vocab_size = 0;
  std::size_t target_vocab_size = 0;
  std::size_t max_positions = 512;

  void validate() const;  // throws ConfigError
};

// Named parameter tensors in a stable registration order; the checkpoint
// format and the flat optimizer state both follow this order.
struct ModelParams {
  std::vector<std::pair<std::string, tensor::Tensor>> items;

  tensor::Tensor& at(std::string_view name);
  const tensor::Tensor& at(std::string_view name) const;
  std::size_t total_size() const;
  void zero_grads();
  ModelParams clone() const;  // deep copy with fresh nodes

  std::vector<double> flat_values() const;
  std::vector<double> flat_grads() const;
  void set_flat_values(std::span<const double> values);
};

// Seeded, deterministic initialization. Weights are uniform(-k, k) with
// k = 1/sqrt(fan_in); embeddings use k = 1/sqrt(embed_dim) and a zeroed PAD
// row; layer-norm scales start at 1, shifts at 0.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// Closed-form parameter count for a config (kept in sync with init_params by
// a unit test; the derivation is written out in the README).
std::size_t parameter_count(const ModelConfig& config);

// Row pos, even column 2i:  sin(pos / 10000^(2i/d))
// Row pos, odd  column 2i+1: cos(pos / 10000^(2i/d))
tensor::Tensor sinusoidal_positional_encoding(std::size_t max_positions,
                                              std::size_t d);

// Collects post-softmax attention rows for inspection in tests.
struct ForwardTrace {
  std::vector<tensor::Tensor> attention;
};

// softmax(Q K^T / sqrt(dk) + mask) V. mask, when present, is an additive
// [a x b] tensor with 0 on visible keys and -1e9 on masked ones; a row with
// every key masked is a degenerate input.
tensor::Tensor scaled_dot_product_attention(const tensor::Tensor& q,
                                            const tensor::Tensor& k,
                                            const tensor::Tensor& v,
                                            const tensor::Tensor* mask = nullptr,
                                            ForwardTrace* trace = nullptr);

struct MhaParams {
  tensor::Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  std::size_t num_heads = 1;
};

tensor::Tensor multi_head_attention(const MhaParams& p, const tensor::Tensor& q,
                                    const tensor::Tensor& k,
                                    const tensor::Tensor& v,
                                    const tensor::Tensor* mask = nullptr,
                                    ForwardTrace* trace = nullptr);

struct GruCellParams {
  tensor::Tensor w_ih, w_hh, b_ih, b_hh;  // [in x 3H], [H x 3H], [3H], [3H]
};

// Gate layout along the 3H axis: reset, update, candidate.
// h' = (1 - z) * n + z * h_prev.
tensor::Tensor gru_cell(const GruCellParams& p, const tensor::Tensor& x,
                        const tensor::Tensor& h_prev);

// Everything decode() needs about an encoded source batch.
struct EncoderState {
  std::size_t batch_size = 0;
  std::size_t source_len = 0;             // padded
  std::vector<std::size_t> source_lens;   // real lengths
  tensor::Tensor memory;      // [B*S x width]; transformer memory or RNN z
  tensor::Tensor attn_keys;   // RNN: W_k z + b precomputed  [B*S x H]
  tensor::Tensor dec_state;   // RNN: initial decoder state  [B x H]
};

// Dropout draws from rng when provided; evaluation passes nullptr which
// disables dropout regardless of the configured rate.
EncoderState encode(const ModelParams& params, const ModelConfig& config,
                    const corpus::Batch& batch, tensor::Rng* rng = nullptr,
                    ForwardTrace* trace = nullptr);

// Teacher-forced decoder logits over dec_inputs [B x t_in] (flattened
// example-major). Output row b*t_in + j holds the distribution of the token
// following dec_inputs[b][0..j].
tensor::Tensor decode(const ModelParams& params, const ModelConfig& config,
                      const EncoderState& enc, std::span<const int> dec_inputs,
                      std::size_t t_in, tensor::Rng* rng = nullptr,
                      ForwardTrace* trace = nullptr);

// encode + decode over target[:, 0..T-2]; logits align with target[:, 1..].
tensor::Tensor model_forward(const ModelParams& params,
                             const ModelConfig& config,
                             const corpus::Batch& batch,
                             tensor::Rng* rng = nullptr,
                             ForwardTrace* trace = nullptr);

// Architecture-specific entry points behind model_forward.
tensor::Tensor rnn_forward(const ModelParams& params, const ModelConfig& config,
                           const corpus::Batch& batch,
                           tensor::Rng* rng = nullptr,
                           ForwardTrace* trace = nullptr);
tensor::Tensor transformer_forward(const ModelParams& params,
                                   const ModelConfig& config,
                                   const corpus::Batch& batch,
                                   tensor::Rng* rng = nullptr,
                                   ForwardTrace* trace = nullptr);

// Flattened targets aligned with model_forward logits: element b*(T-1)+j is
// target[b][j+1], PAD where beyond the example's real length.
std::vector<int> shifted_targets(const corpus::Batch& batch);

}  // namespace titlegen::models
