#include <cmath>

#include "internal.hpp"
#include "titlegen/errors.hpp"
#include "titlegen/tensor/ops.hpp"

// Bahdanau-style recurrent encoder-decoder: bidirectional GRU encoder whose
// per-position states are projected to hidden_dim, a unidirectional GRU
// decoder initialized from the final encoder states, and additive attention
// over the projected encoder states at every decoder step.

namespace titlegen::models::internal {

using tensor::Tensor;

namespace {

GruCellParams gru_params(const ModelParams& p, const std::string& prefix) {
  return {p.at(prefix + ".w_ih"), p.at(prefix + ".w_hh"), p.at(prefix + ".b_ih"),
          p.at(prefix + ".b_hh")};
}

// Time-major token matrix: row (t * B + b) = embedding of ids[b * len + t].
Tensor embed_time_major(const Tensor& embeddings, std::span<const int> ids,
                        std::size_t batch, std::size_t len) {
  std::vector<int> tm(ids.size());
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t b = 0; b < batch; ++b)
      tm[t * batch + b] = ids[b * len + t];
  return tensor::embedding_lookup(embeddings, tm);
}

}  // namespace

EncoderState rnn_encode(const ModelParams& params, const ModelConfig& config,
                        const corpus::Batch& batch, tensor::Rng* rng,
                        ForwardTrace* trace) {
  (void)trace;
  const std::size_t batch_size = batch.batch_size;
  const std::size_t src_len = batch.source_len;
  const std::size_t hidden = config.hidden_dim;
  const std::vector<std::size_t> lens = checked_source_lens(batch);

  Tensor emb = embed_time_major(params.at("src_embed"), batch.source,
                                batch_size, src_len);
  if (rng && config.dropout_rate > 0.0)
    emb = tensor::dropout(emb, config.dropout_rate, *rng);

  const GruCellParams fwd = gru_params(params, "enc.fwd");
  const GruCellParams bwd = gru_params(params, "enc.bwd");

  // Forward direction carries the last real state through PAD steps so the
  // final state is the state at each example's last token.
  std::vector<Tensor> fwd_states(src_len), bwd_states(src_len);
  Tensor h = Tensor::zeros({batch_size, hidden});
  for (std::size_t t = 0; t < src_len; ++t) {
    const Tensor x_t =
        tensor::slice_rows(emb, t * batch_size, (t + 1) * batch_size);
    const Tensor cand = gru_cell(fwd, x_t, h);
    h = tensor::add(tensor::mul_colvec(cand, step_active_mask(lens, t)),
                    tensor::mul_colvec(h, step_inactive_mask(lens, t)));
    fwd_states[t] = h;
  }
  const Tensor fwd_final = h;

  // Backward direction starts from zero at each example's last real token.
  Tensor hb = Tensor::zeros({batch_size, hidden});
  for (std::size_t t = src_len; t-- > 0;) {
    const Tensor x_t =
        tensor::slice_rows(emb, t * batch_size, (t + 1) * batch_size);
    const Tensor cand = gru_cell(bwd, x_t, hb);
    hb = tensor::add(tensor::mul_colvec(cand, step_active_mask(lens, t)),
                     tensor::mul_colvec(hb, step_inactive_mask(lens, t)));
    bwd_states[t] = hb;
  }
  const Tensor bwd_final = hb;  // state at t = 0

  const Tensor fwd_all = tensor::concat_rows(fwd_states);  // [S*B x H]
  const Tensor bwd_all = tensor::concat_rows(bwd_states);
  const Tensor both = tensor::concat_cols(std::vector<Tensor>{fwd_all, bwd_all});
  const Tensor z = tensor::add_rowvec(
      tensor::matmul(both, params.at("enc.proj.w")), params.at("enc.proj.b"));

  const Tensor finals =
      tensor::concat_cols(std::vector<Tensor>{fwd_final, bwd_final});
  const Tensor dec_init = tensor::tanh(tensor::add_rowvec(
      tensor::matmul(finals, params.at("dec.init.w")), params.at("dec.init.b")));

  EncoderState enc;
  enc.batch_size = batch_size;
  enc.source_len = src_len;
  enc.source_lens = lens;
  enc.memory = z;  // time-major [S*B x H]
  enc.attn_keys = tensor::add_rowvec(
      tensor::matmul(z, params.at("attn.key.w")), params.at("attn.key.b"));
  enc.dec_state = dec_init;
  return enc;
}

Tensor rnn_decode(const ModelParams& params, const ModelConfig& config,
                  const EncoderState& enc, std::span<const int> dec_inputs,
                  std::size_t t_in, tensor::Rng* rng, ForwardTrace* trace) {
  const std::size_t batch_size = enc.batch_size;
  const std::size_t src_len = enc.source_len;

  Tensor emb = embed_time_major(params.at("tgt_embed"), dec_inputs, batch_size,
                                t_in);
  if (rng && config.dropout_rate > 0.0)
    emb = tensor::dropout(emb, config.dropout_rate, *rng);

  // Additive attention mask, time-major [S x B].
  std::vector<double> mask_v(src_len * batch_size, 0.0);
  for (std::size_t t = 0; t < src_len; ++t)
    for (std::size_t b = 0; b < batch_size; ++b)
      if (t >= enc.source_lens[b]) mask_v[t * batch_size + b] = kMaskValue;
  const Tensor attn_mask =
      Tensor::from_values({src_len, batch_size}, std::move(mask_v));

  const GruCellParams dec_gru = gru_params(params, "dec.gru");
  const Tensor& wq = params.at("attn.query");
  const Tensor& v_attn = params.at("attn.v");

  Tensor state = enc.dec_state;
  std::vector<Tensor> step_logits(t_in);
  for (std::size_t j = 0; j < t_in; ++j) {
    const Tensor x_j =
        tensor::slice_rows(emb, j * batch_size, (j + 1) * batch_size);
    state = gru_cell(dec_gru, x_j, state);

    // score(t, b) = v . tanh(W_k z_tb + W_q s_b)
    const Tensor query = tensor::matmul(state, wq);  // [B x H]
    std::vector<Tensor> tiled(src_len, query);
    const Tensor u =
        tensor::tanh(tensor::add(enc.attn_keys, tensor::concat_rows(tiled)));
    const Tensor scores_col = tensor::matmul(u, v_attn);  // [S*B x 1]
    Tensor scores = tensor::reshape(scores_col, {src_len, batch_size});
    scores = tensor::add(scores, attn_mask);
    const Tensor weights =
        tensor::softmax(tensor::transpose(scores), 1);  // [B x S]
    if (trace) trace->attention.push_back(weights);

    Tensor context;  // [B x H]
    for (std::size_t t = 0; t < src_len; ++t) {
      const Tensor z_t =
          tensor::slice_rows(enc.memory, t * batch_size, (t + 1) * batch_size);
      const Tensor w_t = tensor::reshape(
          tensor::slice_cols(weights, t, t + 1), {batch_size});
      const Tensor term = tensor::mul_colvec(z_t, w_t);
      context = context.defined() ? tensor::add(context, term) : term;
    }

    const Tensor combined =
        tensor::concat_cols(std::vector<Tensor>{state, context});
    step_logits[j] = tensor::add_rowvec(
        tensor::matmul(combined, params.at("out.w")), params.at("out.b"));
  }

  // Reorder time-major step logits into example-major rows.
  const Tensor logits_tm = tensor::concat_rows(step_logits);  // [T*B x V]
  std::vector<std::size_t> order(batch_size * t_in);
  for (std::size_t b = 0; b < batch_size; ++b)
    for (std::size_t j = 0; j < t_in; ++j)
      order[b * t_in + j] = j * batch_size + b;
  return tensor::gather_rows(logits_tm, order);
}

}  // namespace titlegen::models::internal
