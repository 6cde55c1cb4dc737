#include <cmath>

#include "internal.hpp"
#include "titlegen/errors.hpp"
#include "titlegen/tensor/ops.hpp"

// Post-norm transformer encoder-decoder. Attention runs per example over
// row slices of the flattened [B*len x d] activations; everything
// position-wise (projections, FFN, layer norm) runs batched.

namespace titlegen::models::internal {

using tensor::Tensor;

namespace {

MhaParams mha_params(const ModelParams& p, const std::string& prefix,
                     std::size_t num_heads) {
  return {p.at(prefix + ".q.w"), p.at(prefix + ".q.b"), p.at(prefix + ".k.w"),
          p.at(prefix + ".k.b"), p.at(prefix + ".v.w"), p.at(prefix + ".v.b"),
          p.at(prefix + ".o.w"), p.at(prefix + ".o.b"), num_heads};
}

Tensor layer_norm_named(const ModelParams& p, const std::string& prefix,
                        const Tensor& x) {
  return tensor::layer_norm(x, p.at(prefix + ".gamma"), p.at(prefix + ".beta"));
}

Tensor ffn(const ModelParams& p, const std::string& prefix, const Tensor& x) {
  const Tensor inner = tensor::relu(tensor::add_rowvec(
      tensor::matmul(x, p.at(prefix + ".ffn1.w")), p.at(prefix + ".ffn1.b")));
  return tensor::add_rowvec(tensor::matmul(inner, p.at(prefix + ".ffn2.w")),
                            p.at(prefix + ".ffn2.b"));
}

Tensor maybe_dropout(const Tensor& x, const ModelConfig& config,
                     tensor::Rng* rng) {
  if (rng && config.dropout_rate > 0.0)
    return tensor::dropout(x, config.dropout_rate, *rng);
  return x;
}

// Applies per-example self/cross attention over row blocks of x.
Tensor blockwise_attention(const MhaParams& mha, const Tensor& x,
                           std::size_t rows_per_example, const Tensor& kv,
                           std::size_t kv_rows_per_example,
                           std::span<const Tensor> masks, ForwardTrace* trace) {
  const std::size_t batch = x.dim(0) / rows_per_example;
  std::vector<Tensor> outs;
  outs.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const Tensor xb = tensor::slice_rows(x, b * rows_per_example,
                                         (b + 1) * rows_per_example);
    const Tensor kvb = tensor::slice_rows(kv, b * kv_rows_per_example,
                                          (b + 1) * kv_rows_per_example);
    const Tensor* mask = masks.size() == 1 ? &masks[0] : &masks[b];
    outs.push_back(multi_head_attention(mha, xb, kvb, kvb, mask, trace));
  }
  return tensor::concat_rows(outs);
}

}  // namespace

EncoderState transformer_encode(const ModelParams& params,
                                const ModelConfig& config,
                                const corpus::Batch& batch, tensor::Rng* rng,
                                ForwardTrace* trace) {
  const std::size_t batch_size = batch.batch_size;
  const std::size_t src_len = batch.source_len;
  const std::size_t d = config.embed_dim;
  const std::vector<std::size_t> lens = checked_source_lens(batch);

  Tensor x = tensor::scalar_mul(
      tensor::embedding_lookup(params.at("src_embed"), batch.source),
      std::sqrt(static_cast<double>(d)));
  if (config.encoder_positional_encoding) {
    if (src_len > config.max_positions)
      throw ConfigError("source length " + std::to_string(src_len) +
                        " exceeds max_positions " +
                        std::to_string(config.max_positions));
    const Tensor pe = sinusoidal_positional_encoding(src_len, d);
    x = tensor::add(x, tiled_positional_rows(pe, batch_size, src_len));
  }
  x = maybe_dropout(x, config, rng);

  std::vector<Tensor> key_masks;
  key_masks.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b)
    key_masks.push_back(source_key_mask(src_len, src_len, lens[b]));

  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const std::string prefix = "enc" + std::to_string(l);
    const Tensor attn = blockwise_attention(
        mha_params(params, prefix + ".attn", config.num_heads), x, src_len, x,
        src_len, key_masks, trace);
    x = layer_norm_named(params, prefix + ".ln1",
                         tensor::add(x, maybe_dropout(attn, config, rng)));
    const Tensor ff = ffn(params, prefix, x);
    x = layer_norm_named(params, prefix + ".ln2",
                         tensor::add(x, maybe_dropout(ff, config, rng)));
  }

  EncoderState enc;
  enc.batch_size = batch_size;
  enc.source_len = src_len;
  enc.source_lens = lens;
  enc.memory = x;  // example-major [B*S x d]
  return enc;
}

Tensor transformer_decode(const ModelParams& params, const ModelConfig& config,
                          const EncoderState& enc,
                          std::span<const int> dec_inputs, std::size_t t_in,
                          tensor::Rng* rng, ForwardTrace* trace) {
  const std::size_t batch_size = enc.batch_size;
  const std::size_t d = config.embed_dim;
  if (t_in > config.max_positions)
    throw ConfigError("target length " + std::to_string(t_in) +
                      " exceeds max_positions " +
                      std::to_string(config.max_positions));

  Tensor x = tensor::scalar_mul(
      tensor::embedding_lookup(params.at("tgt_embed"), dec_inputs),
      std::sqrt(static_cast<double>(d)));
  const Tensor pe = sinusoidal_positional_encoding(t_in, d);
  x = tensor::add(x, tiled_positional_rows(pe, batch_size, t_in));
  x = maybe_dropout(x, config, rng);

  const std::vector<Tensor> causal{causal_mask(t_in)};
  std::vector<Tensor> cross_masks;
  cross_masks.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b)
    cross_masks.push_back(
        source_key_mask(t_in, enc.source_len, enc.source_lens[b]));

  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const std::string prefix = "dec" + std::to_string(l);
    const Tensor self = blockwise_attention(
        mha_params(params, prefix + ".self", config.num_heads), x, t_in, x,
        t_in, causal, trace);
    x = layer_norm_named(params, prefix + ".ln1",
                         tensor::add(x, maybe_dropout(self, config, rng)));
    const Tensor cross = blockwise_attention(
        mha_params(params, prefix + ".cross", config.num_heads), x, t_in,
        enc.memory, enc.source_len, cross_masks, trace);
    x = layer_norm_named(params, prefix + ".ln2",
                         tensor::add(x, maybe_dropout(cross, config, rng)));
    const Tensor ff = ffn(params, prefix, x);
    x = layer_norm_named(params, prefix + ".ln3",
                         tensor::add(x, maybe_dropout(ff, config, rng)));
  }

  return tensor::add_rowvec(tensor::matmul(x, params.at("out.w")),
                            params.at("out.b"));
}

}  // namespace titlegen::models::internal
