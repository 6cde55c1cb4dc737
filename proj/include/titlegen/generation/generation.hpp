#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "titlegen/training/training.hpp"

namespace titlegen::generation {

struct GenerationRequest {
  std::vector<std::string> tracks;  // must be non-empty
  std::size_t max_length = 16;      // cap on emitted words
};

struct GeneratedTitle {
  std::vector<std::string> tokens;        // words only; no BOS/EOS/PAD
  std::vector<double> token_logprobs;     // one per emitted token
  double total_logprob = 0.0;             // token logprobs + EOS logprob
};

struct GenerateOptions {
  bool suppress_unk = false;  // mask <unk> before the argmax
};

// Greedy autoregressive decoding from BOS until EOS or max_length, ties
// broken toward the lowest index. PAD and BOS are never candidates, keeping
// the emitted token list free of markers. When the cap cuts generation short
// the EOS term in total_logprob is the EOS probability after the last emitted
// token.
GeneratedTitle greedy_decode(const training::Checkpoint& checkpoint,
                             const GenerationRequest& request,
                             const GenerateOptions& options = {});

struct GenerationOutcome {
  std::optional<GeneratedTitle> title;
  std::string error;  // set when this request failed
};

// Elementwise greedy_decode; failures are reported per index and do not
// abort the rest of the batch.
std::vector<GenerationOutcome> batch_generate(
    const training::Checkpoint& checkpoint,
    std::span<const GenerationRequest> requests,
    const GenerateOptions& options = {});

}  // namespace titlegen::generation
