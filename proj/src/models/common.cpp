#include <algorithm>
#include <cmath>

#include "internal.hpp"
#include "titlegen/errors.hpp"
#include "titlegen/models/model.hpp"
#include "titlegen/tensor/ops.hpp"

namespace titlegen::models {

using tensor::Tensor;

std::string_view arch_name(Arch arch) {
  return arch == Arch::kRnn ? "rnn" : "transformer";
}

Arch parse_arch(std::string_view name) {
  if (name == "rnn") return Arch::kRnn;
  if (name == "transformer") return Arch::kTransformer;
  throw ConfigError("unknown architecture '" + std::string(name) +
                    "' (expected rnn or transformer)");
}

void ModelConfig::validate() const {
  if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
  if (embed_dim == 0 || hidden_dim == 0)
    throw ConfigError("embed_dim and hidden_dim must be positive");
  if (architecture == Arch::kTransformer) {
    if (num_heads == 0 || embed_dim % num_heads != 0)
      throw ConfigError("embed_dim " + std::to_string(embed_dim) +
                        " must be divisible by num_heads " +
                        std::to_string(num_heads));
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ConfigError("dropout_rate must be in [0,1)");
  if (source_vocab_size < 4 || target_vocab_size < 4)
    throw ConfigError("vocab sizes must include the reserved tokens");
  if (max_positions == 0) throw ConfigError("max_positions must be positive");
}

tensor::Tensor& ModelParams::at(std::string_view name) {
  for (auto& [n, t] : items)
    if (n == name) return t;
  throw ContractError("ModelParams: no parameter named '" + std::string(name) +
                      "'");
}

const tensor::Tensor& ModelParams::at(std::string_view name) const {
  for (const auto& [n, t] : items)
    if (n == name) return t;
  throw ContractError("ModelParams: no parameter named '" + std::string(name) +
                      "'");
}

std::size_t ModelParams::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items) n += t.numel();
  return n;
}

void ModelParams::zero_grads() {
  for (auto& [name, t] : items) t.zero_grad();
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  out.items.reserve(items.size());
  for (const auto& [name, t] : items)
    out.items.emplace_back(
        name, tensor::Tensor::from_values(t.shape(), t.values(), true));
  return out;
}

std::vector<double> ModelParams::flat_values() const {
  std::vector<double> out;
  out.reserve(total_size());
  for (const auto& [name, t] : items)
    out.insert(out.end(), t.values().begin(), t.values().end());
  return out;
}

std::vector<double> ModelParams::flat_grads() const {
  std::vector<double> out;
  out.reserve(total_size());
  for (const auto& [name, t] : items) {
    const auto g = t.grad();
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

void ModelParams::set_flat_values(std::span<const double> values) {
  if (values.size() != total_size())
    throw ContractError("ModelParams: flat value length mismatch");
  std::size_t off = 0;
  for (auto& [name, t] : items) {
    auto& v = t.values_mut();
    std::copy(values.begin() + static_cast<std::ptrdiff_t>(off),
              values.begin() + static_cast<std::ptrdiff_t>(off + v.size()),
              v.begin());
    off += v.size();
  }
}

namespace {

// Registers parameters in a fixed order; the draw order defines the
// deterministic initialization for a given seed.
class ParamBuilder {
 public:
  ParamBuilder(ModelParams& params, tensor::Rng& rng)
      : params_(params), rng_(rng) {}

  void matrix(const std::string& name, std::size_t rows, std::size_t cols,
              double k) {
    params_.items.emplace_back(
        name, Tensor::uniform({rows, cols}, rng_, -k, k, true));
  }

  void vec(const std::string& name, std::size_t n, double k) {
    params_.items.emplace_back(name,
                               Tensor::uniform({n}, rng_, -k, k, true));
  }

  void linear(const std::string& name, std::size_t in, std::size_t out) {
    const double k = 1.0 / std::sqrt(static_cast<double>(in));
    matrix(name + ".w", in, out, k);
    vec(name + ".b", out, k);
  }

  void layer_norm(const std::string& name, std::size_t n) {
    params_.items.emplace_back(name + ".gamma",
                               Tensor::full({n}, 1.0, true));
    params_.items.emplace_back(name + ".beta", Tensor::zeros({n}, true));
  }

  void embedding(const std::string& name, std::size_t vocab, std::size_t d) {
    const double k = 1.0 / std::sqrt(static_cast<double>(d));
    Tensor e = Tensor::uniform({vocab, d}, rng_, -k, k, true);
    auto& v = e.values_mut();
    std::fill(v.begin() + corpus::Vocab::kPad * static_cast<long>(d),
              v.begin() + (corpus::Vocab::kPad + 1) * static_cast<long>(d),
              0.0);
    params_.items.emplace_back(name, std::move(e));
  }

  void gru(const std::string& name, std::size_t in, std::size_t hidden) {
    const double k = 1.0 / std::sqrt(static_cast<double>(hidden));
    matrix(name + ".w_ih", in, 3 * hidden, k);
    matrix(name + ".w_hh", hidden, 3 * hidden, k);
    vec(name + ".b_ih", 3 * hidden, k);
    vec(name + ".b_hh", 3 * hidden, k);
  }

  void mha(const std::string& name, std::size_t d) {
    linear(name + ".q", d, d);
    linear(name + ".k", d, d);
    linear(name + ".v", d, d);
    linear(name + ".o", d, d);
  }

 private:
  ModelParams& params_;
  tensor::Rng& rng_;
};

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams params;
  tensor::Rng rng(seed);
  ParamBuilder b(params, rng);
  const std::size_t d = config.embed_dim;
  const std::size_t h = config.hidden_dim;

  b.embedding("src_embed", config.source_vocab_size, d);
  b.embedding("tgt_embed", config.target_vocab_size, d);

  if (config.architecture == Arch::kTransformer) {
    for (std::size_t l = 0; l < config.num_layers; ++l) {
      const std::string enc = "enc" + std::to_string(l);
      b.mha(enc + ".attn", d);
      b.layer_norm(enc + ".ln1", d);
      b.linear(enc + ".ffn1", d, h);
      b.linear(enc + ".ffn2", h, d);
      b.layer_norm(enc + ".ln2", d);
    }
    for (std::size_t l = 0; l < config.num_layers; ++l) {
      const std::string dec = "dec" + std::to_string(l);
      b.mha(dec + ".self", d);
      b.layer_norm(dec + ".ln1", d);
      b.mha(dec + ".cross", d);
      b.layer_norm(dec + ".ln2", d);
      b.linear(dec + ".ffn1", d, h);
      b.linear(dec + ".ffn2", h, d);
      b.layer_norm(dec + ".ln3", d);
    }
    b.linear("out", d, config.target_vocab_size);
  } else {
    b.gru("enc.fwd", d, h);
    b.gru("enc.bwd", d, h);
    b.linear("enc.proj", 2 * h, h);
    b.linear("dec.init", 2 * h, h);
    b.gru("dec.gru", d, h);
    b.linear("attn.key", h, h);
    b.matrix("attn.query", h, h, 1.0 / std::sqrt(static_cast<double>(h)));
    b.matrix("attn.v", h, 1, 1.0 / std::sqrt(static_cast<double>(h)));
    b.linear("out", 2 * h, config.target_vocab_size);
  }
  return params;
}

std::size_t parameter_count(const ModelConfig& config) {
  const std::size_t d = config.embed_dim;
  const std::size_t h = config.hidden_dim;
  const std::size_t vs = config.source_vocab_size;
  const std::size_t vt = config.target_vocab_size;
  const std::size_t l = config.num_layers;
  if (config.architecture == Arch::kTransformer) {
    const std::size_t mha = 4 * (d * d + d);
    const std::size_t ffn = d * h + h + h * d + d;
    const std::size_t ln = 2 * d;
    const std::size_t enc_layer = mha + ffn + 2 * ln;
    const std::size_t dec_layer = 2 * mha + ffn + 3 * ln;
    return d * (vs + vt) + l * (enc_layer + dec_layer) + (d * vt + vt);
  }
  const std::size_t gru = d * 3 * h + h * 3 * h + 6 * h;
  return d * (vs + vt)           // embeddings
         + 2 * gru               // bidirectional encoder
         + (2 * h * h + h) * 2   // enc.proj + dec.init
         + gru                   // decoder cell
         + (h * h + h)           // attn.key
         + h * h + h             // attn.query + attn.v
         + 2 * h * vt + vt;      // output
}

Tensor sinusoidal_positional_encoding(std::size_t max_positions,
                                      std::size_t d) {
  if (d == 0 || d % 2 != 0)
    throw ConfigError("positional encoding requires an even dimension, got " +
                      std::to_string(d));
  std::vector<double> v(max_positions * d);
  for (std::size_t pos = 0; pos < max_positions; ++pos) {
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double rate =
          std::pow(10000.0, 2.0 * static_cast<double>(i) /
                                static_cast<double>(d));
      const double angle = static_cast<double>(pos) / rate;
      v[pos * d + 2 * i] = std::sin(angle);
      v[pos * d + 2 * i + 1] = std::cos(angle);
    }
  }
  return Tensor::from_values({max_positions, d}, std::move(v));
}

Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k,
                                    const Tensor& v, const Tensor* mask,
                                    ForwardTrace* trace) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
    throw ShapeError("attention expects rank-2 q/k/v");
  if (q.dim(1) != k.dim(1))
    throw ShapeError("attention: query dim " + std::to_string(q.dim(1)) +
                     " != key dim " + std::to_string(k.dim(1)));
  if (k.dim(0) != v.dim(0))
    throw ShapeError("attention: key count " + std::to_string(k.dim(0)) +
                     " != value count " + std::to_string(v.dim(0)));
  const std::size_t a = q.dim(0), b = k.dim(0);
  if (mask) {
    if (mask->rank() != 2 || mask->dim(0) != a || mask->dim(1) != b)
      throw ShapeError("attention: mask must be [queries x keys]");
    const auto& mv = mask->values();
    for (std::size_t i = 0; i < a; ++i) {
      bool any_visible = false;
      for (std::size_t j = 0; j < b && !any_visible; ++j)
        any_visible = mv[i * b + j] > internal::kMaskValue / 2;
      if (!any_visible)
        throw DegenerateInputError("attention: query row " +
                                   std::to_string(i) + " has no visible keys");
    }
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  Tensor scores = tensor::scalar_mul(tensor::matmul(q, tensor::transpose(k)),
                                     scale);
  if (mask) scores = tensor::add(scores, *mask);
  Tensor weights = tensor::softmax(scores, 1);
  if (trace) trace->attention.push_back(weights);
  return tensor::matmul(weights, v);
}

Tensor multi_head_attention(const MhaParams& p, const Tensor& q,
                            const Tensor& k, const Tensor& v,
                            const Tensor* mask, ForwardTrace* trace) {
  const std::size_t d = p.wq.dim(1);
  if (p.num_heads == 0 || d % p.num_heads != 0)
    throw ConfigError("multi_head_attention: dim " + std::to_string(d) +
                      " not divisible by " + std::to_string(p.num_heads) +
                      " heads");
  const Tensor qp = tensor::add_rowvec(tensor::matmul(q, p.wq), p.bq);
  const Tensor kp = tensor::add_rowvec(tensor::matmul(k, p.wk), p.bk);
  const Tensor vp = tensor::add_rowvec(tensor::matmul(v, p.wv), p.bv);
  const std::size_t dk = d / p.num_heads;
  std::vector<Tensor> heads;
  heads.reserve(p.num_heads);
  for (std::size_t h = 0; h < p.num_heads; ++h) {
    const std::size_t c0 = h * dk, c1 = (h + 1) * dk;
    heads.push_back(scaled_dot_product_attention(
        tensor::slice_cols(qp, c0, c1), tensor::slice_cols(kp, c0, c1),
        tensor::slice_cols(vp, c0, c1), mask, trace));
  }
  const Tensor merged = tensor::concat_cols(heads);
  return tensor::add_rowvec(tensor::matmul(merged, p.wo), p.bo);
}

Tensor gru_cell(const GruCellParams& p, const Tensor& x,
                const Tensor& h_prev) {
  const std::size_t hidden = p.w_hh.dim(0);
  if (x.rank() != 2 || h_prev.rank() != 2 || x.dim(0) != h_prev.dim(0) ||
      x.dim(1) != p.w_ih.dim(0) || h_prev.dim(1) != hidden)
    throw ShapeError("gru_cell: input/state shapes do not match the weights");
  const Tensor gi = tensor::add_rowvec(tensor::matmul(x, p.w_ih), p.b_ih);
  const Tensor gh = tensor::add_rowvec(tensor::matmul(h_prev, p.w_hh), p.b_hh);
  const Tensor r = tensor::sigmoid(
      tensor::add(tensor::slice_cols(gi, 0, hidden),
                  tensor::slice_cols(gh, 0, hidden)));
  const Tensor z = tensor::sigmoid(
      tensor::add(tensor::slice_cols(gi, hidden, 2 * hidden),
                  tensor::slice_cols(gh, hidden, 2 * hidden)));
  const Tensor n = tensor::tanh(
      tensor::add(tensor::slice_cols(gi, 2 * hidden, 3 * hidden),
                  tensor::mul(r, tensor::slice_cols(gh, 2 * hidden,
                                                    3 * hidden))));
  // (1 - z) * n + z * h = n + z * (h - n)
  return tensor::add(n, tensor::mul(z, tensor::sub(h_prev, n)));
}

namespace internal {

tensor::Tensor source_key_mask(std::size_t rows, std::size_t src_len,
                               std::size_t real_len) {
  std::vector<double> v(rows * src_len, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = real_len; j < src_len; ++j)
      v[i * src_len + j] = kMaskValue;
  return Tensor::from_values({rows, src_len}, std::move(v));
}

tensor::Tensor causal_mask(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) v[i * n + j] = kMaskValue;
  return Tensor::from_values({n, n}, std::move(v));
}

std::vector<std::size_t> checked_source_lens(const corpus::Batch& batch) {
  std::vector<std::size_t> lens = batch.source_lens;
  for (std::size_t b = 0; b < lens.size(); ++b)
    if (lens[b] == 0)
      throw DegenerateInputError("batch row " + std::to_string(b) +
                                 " has an all-PAD source");
  return lens;
}

tensor::Tensor step_active_mask(const std::vector<std::size_t>& lens,
                                std::size_t t) {
  std::vector<double> v(lens.size());
  for (std::size_t b = 0; b < lens.size(); ++b) v[b] = t < lens[b] ? 1.0 : 0.0;
  return Tensor::from_values({lens.size()}, std::move(v));
}

tensor::Tensor step_inactive_mask(const std::vector<std::size_t>& lens,
                                  std::size_t t) {
  std::vector<double> v(lens.size());
  for (std::size_t b = 0; b < lens.size(); ++b) v[b] = t < lens[b] ? 0.0 : 1.0;
  return Tensor::from_values({lens.size()}, std::move(v));
}

tensor::Tensor tiled_positional_rows(const tensor::Tensor& pe,
                                     std::size_t batch, std::size_t len) {
  const std::size_t d = pe.dim(1);
  std::vector<double> v(batch * len * d);
  const auto& pv = pe.values();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t pos = 0; pos < len; ++pos)
      std::copy(pv.begin() + static_cast<std::ptrdiff_t>(pos * d),
                pv.begin() + static_cast<std::ptrdiff_t>((pos + 1) * d),
                v.begin() + static_cast<std::ptrdiff_t>((b * len + pos) * d));
  return Tensor::from_values({batch * len, d}, std::move(v));
}

}  // namespace internal

EncoderState encode(const ModelParams& params, const ModelConfig& config,
                    const corpus::Batch& batch, tensor::Rng* rng,
                    ForwardTrace* trace) {
  config.validate();
  return config.architecture == Arch::kRnn
             ? internal::rnn_encode(params, config, batch, rng, trace)
             : internal::transformer_encode(params, config, batch, rng, trace);
}

Tensor decode(const ModelParams& params, const ModelConfig& config,
              const EncoderState& enc, std::span<const int> dec_inputs,
              std::size_t t_in, tensor::Rng* rng, ForwardTrace* trace) {
  if (t_in == 0 || dec_inputs.size() != enc.batch_size * t_in)
    throw ShapeError("decode: dec_inputs must be [batch x t_in]");
  return config.architecture == Arch::kRnn
             ? internal::rnn_decode(params, config, enc, dec_inputs, t_in, rng,
                                    trace)
             : internal::transformer_decode(params, config, enc, dec_inputs,
                                            t_in, rng, trace);
}

Tensor model_forward(const ModelParams& params, const ModelConfig& config,
                     const corpus::Batch& batch, tensor::Rng* rng,
                     ForwardTrace* trace) {
  if (batch.target_len < 2)
    throw ShapeError("model_forward: targets must hold BOS plus a token");
  const EncoderState enc = encode(params, config, batch, rng, trace);
  const std::size_t t_in = batch.target_len - 1;
  std::vector<int> dec_inputs(batch.batch_size * t_in);
  for (std::size_t b = 0; b < batch.batch_size; ++b)
    for (std::size_t j = 0; j < t_in; ++j)
      dec_inputs[b * t_in + j] = batch.target[b * batch.target_len + j];
  return decode(params, config, enc, dec_inputs, t_in, rng, trace);
}

Tensor rnn_forward(const ModelParams& params, const ModelConfig& config,
                   const corpus::Batch& batch, tensor::Rng* rng,
                   ForwardTrace* trace) {
  if (config.architecture != Arch::kRnn)
    throw ConfigError("rnn_forward: config.architecture is not rnn");
  return model_forward(params, config, batch, rng, trace);
}

Tensor transformer_forward(const ModelParams& params,
                           const ModelConfig& config,
                           const corpus::Batch& batch, tensor::Rng* rng,
                           ForwardTrace* trace) {
  if (config.architecture != Arch::kTransformer)
    throw ConfigError("transformer_forward: config.architecture is not "
                      "transformer");
  return model_forward(params, config, batch, rng, trace);
}

std::vector<int> shifted_targets(const corpus::Batch& batch) {
  if (batch.target_len < 2)
    throw ShapeError("shifted_targets: targets must hold BOS plus a token");
  const std::size_t t_out = batch.target_len - 1;
  std::vector<int> out(batch.batch_size * t_out, corpus::Vocab::kPad);
  for (std::size_t b = 0; b < batch.batch_size; ++b)
    for (std::size_t j = 0; j < t_out; ++j) {
      const std::size_t src = b * batch.target_len + j + 1;
      if (batch.target_mask[src]) out[b * t_out + j] = batch.target[src];
    }
  return out;
}

}  // namespace titlegen::models
