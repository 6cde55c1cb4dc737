#pragma once

// Helpers shared by the rnn/transformer translation units only.

#include <cstdint>
#include <span>
#include <vector>

#include "titlegen/corpus/corpus.hpp"
#include "titlegen/models/model.hpp"
#include "titlegen/tensor/tensor.hpp"

namespace titlegen::models::internal {

inline constexpr double kMaskValue = -1e9;

// Additive [rows x src_len] mask hiding key positions >= real_len.
tensor::Tensor source_key_mask(std::size_t rows, std::size_t src_len,
                               std::size_t real_len);

// Additive lower-triangular [n x n] mask (position j sees keys <= j).
tensor::Tensor causal_mask(std::size_t n);

// Per-example real source lengths; throws DegenerateInputError on an all-PAD
// row.
std::vector<std::size_t> checked_source_lens(const corpus::Batch& batch);

// Constant [B x 1]-style column vectors marking batch rows active at step t
// (time-major helpers for the GRU carry).
tensor::Tensor step_active_mask(const std::vector<std::size_t>& lens,
                                std::size_t t);
tensor::Tensor step_inactive_mask(const std::vector<std::size_t>& lens,
                                  std::size_t t);

// PE rows tiled example-major: row (b * len + pos) = pe[pos].
tensor::Tensor tiled_positional_rows(const tensor::Tensor& pe,
                                     std::size_t batch, std::size_t len);

EncoderState rnn_encode(const ModelParams& params, const ModelConfig& config,
                        const corpus::Batch& batch, tensor::Rng* rng,
                        ForwardTrace* trace);
tensor::Tensor rnn_decode(const ModelParams& params, const ModelConfig& config,
                          const EncoderState& enc,
                          std::span<const int> dec_inputs, std::size_t t_in,
                          tensor::Rng* rng, ForwardTrace* trace);

EncoderState transformer_encode(const ModelParams& params,
                                const ModelConfig& config,
                                const corpus::Batch& batch, tensor::Rng* rng,
                                ForwardTrace* trace);
tensor::Tensor transformer_decode(const ModelParams& params,
                                  const ModelConfig& config,
                                  const EncoderState& enc,
                                  std::span<const int> dec_inputs,
                                  std::size_t t_in, tensor::Rng* rng,
                                  ForwardTrace* trace);

}  // namespace titlegen::models::internal
