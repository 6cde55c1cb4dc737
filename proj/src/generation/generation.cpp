#include "titlegen/generation/generation.hpp"

#include <algorithm>
#include <cmath>

#include "titlegen/errors.hpp"
#include "titlegen/tensor/ops.hpp"

namespace titlegen::generation {

using corpus::Vocab;

namespace {

std::vector<double> log_softmax_row(std::span<const double> row) {
  double mx = row[0];
  for (double x : row) mx = std::max(mx, x);
  double z = 0.0;
  for (double x : row) z += std::exp(x - mx);
  const double lse = mx + std::log(z);
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = row[i] - lse;
  return out;
}

}  // namespace

GeneratedTitle greedy_decode(const training::Checkpoint& checkpoint,
                             const GenerationRequest& request,
                             const GenerateOptions& options) {
  if (request.tracks.empty())
    throw DegenerateInputError("greedy_decode: request has no tracks");
  if (request.max_length == 0)
    throw ConfigError("greedy_decode: max_length must be >= 1");

  const models::ModelConfig& config = checkpoint.config;
  corpus::Batch batch;
  batch.batch_size = 1;
  batch.source_len = std::min(request.tracks.size(), config.max_positions);
  for (std::size_t i = 0; i < batch.source_len; ++i)
    batch.source.push_back(checkpoint.track_vocab.id_of(request.tracks[i]));
  batch.source_mask.assign(batch.source_len, 1);
  batch.source_lens = {batch.source_len};
  batch.target = {Vocab::kBos};
  batch.target_len = 1;
  batch.target_mask = {1};
  batch.target_lens = {1};

  const models::EncoderState enc =
      models::encode(checkpoint.params, config, batch);

  const std::size_t vocab = config.target_vocab_size;
  GeneratedTitle title;
  std::vector<int> prefix{Vocab::kBos};
  for (;;) {
    const tensor::Tensor logits = models::decode(
        checkpoint.params, config, enc, prefix, prefix.size());
    const std::span<const double> last_row(
        logits.values().data() + (prefix.size() - 1) * vocab, vocab);
    const std::vector<double> logprob = log_softmax_row(last_row);
    if (title.tokens.size() >= request.max_length) {
      title.total_logprob += logprob[Vocab::kEos];
      break;
    }
    int best = -1;
    for (std::size_t j = 0; j < vocab; ++j) {
      const int id = static_cast<int>(j);
      if (id == Vocab::kPad || id == Vocab::kBos) continue;
      if (options.suppress_unk && id == Vocab::kUnk) continue;
      if (best < 0 || logprob[j] > logprob[static_cast<std::size_t>(best)])
        best = id;
    }
    if (best == Vocab::kEos) {
      title.total_logprob += logprob[Vocab::kEos];
      break;
    }
    title.tokens.push_back(checkpoint.word_vocab.token_of(best));
    title.token_logprobs.push_back(logprob[static_cast<std::size_t>(best)]);
    title.total_logprob += logprob[static_cast<std::size_t>(best)];
    prefix.push_back(best);
  }
  return title;
}

std::vector<GenerationOutcome> batch_generate(
    const training::Checkpoint& checkpoint,
    std::span<const GenerationRequest> requests,
    const GenerateOptions& options) {
  if (requests.empty())
    throw DegenerateInputError("batch_generate: no requests");
  std::vector<GenerationOutcome> out;
  out.reserve(requests.size());
  for (const GenerationRequest& r : requests) {
    GenerationOutcome o;
    try {
      o.title = greedy_decode(checkpoint, r, options);
    } catch (const std::exception& e) {
      o.error = e.what();
    }
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace titlegen::generation
