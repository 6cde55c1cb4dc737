#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "titlegen/tensor/rng.hpp"

namespace titlegen::corpus {

// Raw playlist record as it appears in the canonical JSONL corpus.
struct Playlist {
  std::string id;
  std::string title;                // UTF-8
  std::vector<std::string> tracks;  // opaque track ids
};

struct TokenizedPlaylist {
  std::string id;
  std::vector<std::string> title_tokens;  // lowercased, whitespace-split
  std::vector<std::string> tracks;
};

// Lowercases ASCII letters and splits on runs of Unicode whitespace.
// Non-ASCII characters pass through verbatim.
std::vector<std::string> normalize_and_tokenize(const std::string& title);

TokenizedPlaylist tokenize_playlist(const Playlist& p);

// Number of Unicode scalar values in a UTF-8 string.
std::size_t codepoint_count(const std::string& s);

enum class FilterReason {
  kNone = 0,
  kTooFewTitleTokens,   // token count must be > 3
  kTooFewTracks,        // track count must be > 10
  kShortTitleTokens,    // mean codepoints per token must be > 3
};

struct FilterDecision {
  bool pass = false;
  FilterReason reason = FilterReason::kNone;  // first failed criterion
};

FilterDecision passes_filter(const TokenizedPlaylist& p);

// Corpus-level statistics in the shape of the dataset comparison table.
struct CorpusStats {
  std::size_t playlist_count = 0;
  std::size_t unique_track_count = 0;
  std::size_t unique_title_count = 0;
  std::size_t unique_word_count = 0;
  double average_char_length = 0.0;   // mean codepoints per title token
  double average_title_length = 0.0;  // mean tokens per playlist
  double average_track_length = 0.0;  // mean tracks per playlist
};

CorpusStats compute_stats(const std::vector<TokenizedPlaylist>& playlists);

struct FilterReport {
  std::size_t input_count = 0;
  std::size_t kept_count = 0;
  std::size_t rejected_too_few_title_tokens = 0;
  std::size_t rejected_too_few_tracks = 0;
  std::size_t rejected_short_title_tokens = 0;
  CorpusStats before;
  CorpusStats after;
};

struct FilterResult {
  std::vector<TokenizedPlaylist> kept;  // input order preserved
  FilterReport report;
};

FilterResult filter_corpus(const std::vector<TokenizedPlaylist>& playlists);

struct SplitCorpus {
  std::vector<TokenizedPlaylist> train;
  std::vector<TokenizedPlaylist> validation;
  std::vector<TokenizedPlaylist> test;
  std::uint64_t split_seed = 0;
};

// Groups playlists by title token count and splits each stratum 8:1:1 with a
// seeded shuffle. Validation and test each receive floor(n/10) playlists
// (at least 1 once n >= 3); strata with fewer than 3 go wholly to train.
SplitCorpus stratified_split(const std::vector<TokenizedPlaylist>& filtered,
                             std::uint64_t seed);

// Token <-> index map with fixed reserved entries.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Vocab();
  explicit Vocab(std::vector<std::string> index_to_token);

  int id_of(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token_of(int id) const;
  std::size_t size() const { return index_to_token_.size(); }
  const std::vector<std::string>& tokens() const { return index_to_token_; }

 private:
  std::vector<std::string> index_to_token_;
  std::unordered_map<std::string, int> token_to_index_;
};

struct VocabPair {
  Vocab tracks;
  Vocab words;
};

// Counts tokens over the train split only. Tokens with frequency >= min_count
// enter the vocab ordered by descending frequency, ties broken
// lexicographically.
VocabPair build_vocabs(const std::vector<TokenizedPlaylist>& train,
                       std::size_t min_count_track = 1,
                       std::size_t min_count_word = 1);

struct EncodedExample {
  std::vector<int> source;  // track indices, truncated to max_source_len
  std::vector<int> target;  // BOS, word indices..., EOS; never truncated
};

EncodedExample encode_pair(const TokenizedPlaylist& p, const VocabPair& vocabs,
                           std::size_t max_source_len = 256);

// Returns a copy whose source is a seeded uniform permutation of the input
// source; the target is untouched.
EncodedExample shuffle_tracks(const EncodedExample& e, std::uint64_t seed);

// One padded batch. Padding trails the real tokens; masks mark real
// positions.
struct Batch {
  std::size_t batch_size = 0;
  std::size_t source_len = 0;  // padded length
  std::size_t target_len = 0;
  std::vector<int> source;           // [batch_size * source_len]
  std::vector<int> target;           // [batch_size * target_len]
  std::vector<std::uint8_t> source_mask;
  std::vector<std::uint8_t> target_mask;
  std::vector<std::size_t> source_lens;
  std::vector<std::size_t> target_lens;
};

// Seeded shuffle of the examples followed by grouping into padded batches of
// at most batch_size.
std::vector<Batch> make_batches(const std::vector<EncodedExample>& examples,
                                std::size_t batch_size,
                                std::uint64_t epoch_seed);

// Order-preserving batching without shuffling, for evaluation.
std::vector<Batch> make_eval_batches(const std::vector<EncodedExample>& examples,
                                     std::size_t batch_size);

}  // namespace titlegen::corpus
