#pragma once

#include <cstdint>
#include <vector>

#include "titlegen/corpus/corpus.hpp"
#include "titlegen/training/training.hpp"

// Synthetic corpora and rigged checkpoints shared by the unit and acceptance
// suites.

namespace titlegen::testsupport {

// Order-free corpus: each playlist draws its tracks from one of `topics`
// latent topic pools, its title is a fixed 4-6 word phrase per topic, and
// the track order is a seeded random permutation. Every playlist passes the
// corpus filter.
std::vector<corpus::TokenizedPlaylist> topic_corpus(std::size_t count,
                                                    std::size_t topics,
                                                    std::uint64_t seed,
                                                    std::size_t min_tracks = 12,
                                                    std::size_t max_tracks = 17,
                                                    std::size_t pool_per_topic = 40);

struct PreparedCorpus {
  training::FitData fit;
  std::vector<corpus::EncodedExample> test;
};

// filter -> stratified split -> vocabs -> encoded splits.
PreparedCorpus prepare_corpus(const std::vector<corpus::TokenizedPlaylist>& raw,
                              std::uint64_t split_seed,
                              std::size_t max_source_len = 256);

// Vocab of the reserved tokens plus generic entries up to `size`.
corpus::Vocab generic_vocab(std::size_t size);

// Transformer checkpoint whose output projection is zeroed: every logit row
// is uniform over the target vocabulary.
training::Checkpoint uniform_checkpoint(std::size_t source_vocab,
                                        std::size_t target_vocab);

// Checkpoint rigged so EOS dominates every distribution.
training::Checkpoint eos_checkpoint(std::size_t source_vocab,
                                    std::size_t target_vocab);

// Small model configs keeping the finite-difference suites fast.
models::ModelConfig tiny_transformer_config(std::size_t source_vocab,
                                            std::size_t target_vocab);
models::ModelConfig tiny_rnn_config(std::size_t source_vocab,
                                    std::size_t target_vocab);

// Random padded batch with the given maximum lengths (every example gets a
// random real length between 1 and the maximum).
corpus::Batch random_batch(std::size_t batch, std::size_t src_len,
                           std::size_t tgt_len, std::size_t source_vocab,
                           std::size_t target_vocab, std::uint64_t seed);

}  // namespace titlegen::testsupport
