#include "titlegen/corpus/corpus.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <span>
#include <unordered_set>

#include "titlegen/errors.hpp"

namespace titlegen::corpus {

namespace {

constexpr const char* kReserved[] = {"<pad>", "<bos>", "<eos>", "<unk>"};

bool is_unicode_space(char32_t c) {
  switch (c) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D:
    case 0x20: case 0x85: case 0xA0: case 0x1680:
    case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

// Decodes one UTF-8 sequence at s[i]; malformed bytes pass through as
// single-byte units so no input can fail tokenization.
std::pair<char32_t, std::size_t> decode_utf8(const std::string& s,
                                             std::size_t i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) return {b0, 1};
  std::size_t len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return {b0, 1};
  }
  if (i + len > s.size()) return {b0, 1};
  for (std::size_t k = 1; k < len; ++k) {
    const auto bk = static_cast<unsigned char>(s[i + k]);
    if ((bk & 0xC0) != 0x80) return {b0, 1};
    cp = (cp << 6) | (bk & 0x3F);
  }
  return {cp, len};
}

}  // namespace

std::vector<std::string> normalize_and_tokenize(const std::string& title) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t i = 0;
  while (i < title.size()) {
    const auto [cp, len] = decode_utf8(title, i);
    if (is_unicode_space(cp)) {
      if (!current.empty()) {
        tokens.push_back(std::move(current));
        current.clear();
      }
    } else if (cp >= 'A' && cp <= 'Z') {
      current.push_back(static_cast<char>(cp - 'A' + 'a'));
    } else {
      current.append(title, i, len);
    }
    i += len;
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

TokenizedPlaylist tokenize_playlist(const Playlist& p) {
  return {p.id, normalize_and_tokenize(p.title), p.tracks};
}

std::size_t codepoint_count(const std::string& s) {
  std::size_t n = 0;
  for (char c : s)
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  return n;
}

FilterDecision passes_filter(const TokenizedPlaylist& p) {
  if (p.title_tokens.size() <= 3)
    return {false, FilterReason::kTooFewTitleTokens};
  if (p.tracks.size() <= 10) return {false, FilterReason::kTooFewTracks};
  std::size_t chars = 0;
  for (const auto& tok : p.title_tokens) chars += codepoint_count(tok);
  const double avg =
      static_cast<double>(chars) / static_cast<double>(p.title_tokens.size());
  if (!(avg > 3.0)) return {false, FilterReason::kShortTitleTokens};
  return {true, FilterReason::kNone};
}

CorpusStats compute_stats(const std::vector<TokenizedPlaylist>& playlists) {
  CorpusStats s;
  s.playlist_count = playlists.size();
  if (playlists.empty()) return s;
  std::unordered_set<std::string> tracks, titles, words;
  std::size_t total_tokens = 0, total_chars = 0, total_tracks = 0;
  for (const auto& p : playlists) {
    std::string joined;
    for (std::size_t i = 0; i < p.title_tokens.size(); ++i) {
      if (i) joined.push_back(' ');
      joined += p.title_tokens[i];
      words.insert(p.title_tokens[i]);
      total_chars += codepoint_count(p.title_tokens[i]);
    }
    titles.insert(std::move(joined));
    total_tokens += p.title_tokens.size();
    total_tracks += p.tracks.size();
    for (const auto& t : p.tracks) tracks.insert(t);
  }
  s.unique_track_count = tracks.size();
  s.unique_title_count = titles.size();
  s.unique_word_count = words.size();
  s.average_char_length =
      total_tokens == 0
          ? 0.0
          : static_cast<double>(total_chars) / static_cast<double>(total_tokens);
  s.average_title_length = static_cast<double>(total_tokens) /
                           static_cast<double>(playlists.size());
  s.average_track_length = static_cast<double>(total_tracks) /
                           static_cast<double>(playlists.size());
  return s;
}

FilterResult filter_corpus(const std::vector<TokenizedPlaylist>& playlists) {
  FilterResult r;
  r.report.input_count = playlists.size();
  for (const auto& p : playlists) {
    const FilterDecision d = passes_filter(p);
    if (d.pass) {
      r.kept.push_back(p);
    } else if (d.reason == FilterReason::kTooFewTitleTokens) {
      ++r.report.rejected_too_few_title_tokens;
    } else if (d.reason == FilterReason::kTooFewTracks) {
      ++r.report.rejected_too_few_tracks;
    } else {
      ++r.report.rejected_short_title_tokens;
    }
  }
  r.report.kept_count = r.kept.size();
  r.report.before = compute_stats(playlists);
  r.report.after = compute_stats(r.kept);
  return r;
}

SplitCorpus stratified_split(const std::vector<TokenizedPlaylist>& filtered,
                             std::uint64_t seed) {
  // Strata keyed by title token count, processed in ascending key order.
  std::map<std::size_t, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < filtered.size(); ++i)
    strata[filtered[i].title_tokens.size()].push_back(i);

  SplitCorpus out;
  out.split_seed = seed;
  for (auto& [token_count, members] : strata) {
    const std::size_t n = members.size();
    if (n < 3) {
      for (std::size_t idx : members) out.train.push_back(filtered[idx]);
      continue;
    }
    tensor::Rng rng(tensor::Rng::mix(seed, token_count));
    rng.shuffle(members);
    const std::size_t k = std::max<std::size_t>(n / 10, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const TokenizedPlaylist& p = filtered[members[i]];
      if (i < k) {
        out.validation.push_back(p);
      } else if (i < 2 * k) {
        out.test.push_back(p);
      } else {
        out.train.push_back(p);
      }
    }
  }
  return out;
}

Vocab::Vocab() : Vocab({kReserved[0], kReserved[1], kReserved[2], kReserved[3]}) {}

Vocab::Vocab(std::vector<std::string> index_to_token)
    : index_to_token_(std::move(index_to_token)) {
  if (index_to_token_.size() < 4)
    throw ContractError("Vocab: reserved entries missing");
  for (int i = 0; i < 4; ++i)
    if (index_to_token_[static_cast<std::size_t>(i)] != kReserved[i])
      throw ContractError("Vocab: reserved token mismatch at index " +
                          std::to_string(i));
  for (std::size_t i = 0; i < index_to_token_.size(); ++i) {
    const auto [it, inserted] =
        token_to_index_.emplace(index_to_token_[i], static_cast<int>(i));
    if (!inserted)
      throw ContractError("Vocab: duplicate token '" + index_to_token_[i] +
                          "'");
  }
}

int Vocab::id_of(const std::string& token) const {
  const auto it = token_to_index_.find(token);
  return it == token_to_index_.end() ? kUnk : it->second;
}

bool Vocab::contains(const std::string& token) const {
  return token_to_index_.count(token) != 0;
}

const std::string& Vocab::token_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= index_to_token_.size())
    throw IndexError("Vocab: id " + std::to_string(id) + " out of range");
  return index_to_token_[static_cast<std::size_t>(id)];
}

namespace {

Vocab vocab_from_counts(
    const std::unordered_map<std::string, std::size_t>& counts,
    std::size_t min_count) {
  std::vector<std::pair<std::string, std::size_t>> entries;
  entries.reserve(counts.size());
  for (const auto& [token, count] : counts) {
    if (count < min_count) continue;
    // A raw token spelled like a reserved marker would break bijectivity;
    // it keeps resolving through the reserved index instead.
    bool reserved = false;
    for (const char* r : kReserved) reserved = reserved || token == r;
    if (!reserved) entries.emplace_back(token, count);
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> index_to_token = {kReserved[0], kReserved[1],
                                             kReserved[2], kReserved[3]};
  index_to_token.reserve(entries.size() + 4);
  for (auto& [token, count] : entries) index_to_token.push_back(std::move(token));
  return Vocab(std::move(index_to_token));
}

}  // namespace

VocabPair build_vocabs(const std::vector<TokenizedPlaylist>& train,
                       std::size_t min_count_track,
                       std::size_t min_count_word) {
  if (train.empty())
    throw DegenerateInputError("build_vocabs: empty train split");
  std::unordered_map<std::string, std::size_t> track_counts, word_counts;
  for (const auto& p : train) {
    for (const auto& t : p.tracks) ++track_counts[t];
    for (const auto& w : p.title_tokens) ++word_counts[w];
  }
  return {vocab_from_counts(track_counts, std::max<std::size_t>(1, min_count_track)),
          vocab_from_counts(word_counts, std::max<std::size_t>(1, min_count_word))};
}

EncodedExample encode_pair(const TokenizedPlaylist& p, const VocabPair& vocabs,
                           std::size_t max_source_len) {
  if (p.tracks.empty())
    throw DegenerateInputError("encode_pair: playlist '" + p.id +
                               "' has no tracks");
  if (max_source_len == 0)
    throw ContractError("encode_pair: max_source_len must be >= 1");
  EncodedExample e;
  const std::size_t keep = std::min(max_source_len, p.tracks.size());
  e.source.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i)
    e.source.push_back(vocabs.tracks.id_of(p.tracks[i]));
  e.target.reserve(p.title_tokens.size() + 2);
  e.target.push_back(Vocab::kBos);
  for (const auto& w : p.title_tokens) e.target.push_back(vocabs.words.id_of(w));
  e.target.push_back(Vocab::kEos);
  return e;
}

EncodedExample shuffle_tracks(const EncodedExample& e, std::uint64_t seed) {
  EncodedExample out = e;
  tensor::Rng rng(seed);
  rng.shuffle(out.source);
  return out;
}

namespace {

Batch pad_batch(const std::vector<EncodedExample>& examples,
                std::span<const std::size_t> idx) {
  Batch b;
  b.batch_size = idx.size();
  for (std::size_t i : idx) {
    b.source_len = std::max(b.source_len, examples[i].source.size());
    b.target_len = std::max(b.target_len, examples[i].target.size());
  }
  b.source.assign(b.batch_size * b.source_len, Vocab::kPad);
  b.target.assign(b.batch_size * b.target_len, Vocab::kPad);
  b.source_mask.assign(b.batch_size * b.source_len, 0);
  b.target_mask.assign(b.batch_size * b.target_len, 0);
  for (std::size_t row = 0; row < idx.size(); ++row) {
    const EncodedExample& e = examples[idx[row]];
    b.source_lens.push_back(e.source.size());
    b.target_lens.push_back(e.target.size());
    for (std::size_t j = 0; j < e.source.size(); ++j) {
      b.source[row * b.source_len + j] = e.source[j];
      b.source_mask[row * b.source_len + j] = 1;
    }
    for (std::size_t j = 0; j < e.target.size(); ++j) {
      b.target[row * b.target_len + j] = e.target[j];
      b.target_mask[row * b.target_len + j] = 1;
    }
  }
  return b;
}

std::vector<Batch> batch_indices(const std::vector<EncodedExample>& examples,
                                 std::vector<std::size_t> order,
                                 std::size_t batch_size) {
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batches.push_back(pad_batch(
        examples, std::span<const std::size_t>(order).subspan(start, end - start)));
  }
  return batches;
}

}  // namespace

std::vector<Batch> make_batches(const std::vector<EncodedExample>& examples,
                                std::size_t batch_size,
                                std::uint64_t epoch_seed) {
  if (examples.empty())
    throw DegenerateInputError("make_batches: no examples");
  if (batch_size == 0)
    throw ContractError("make_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  tensor::Rng rng(epoch_seed);
  rng.shuffle(order);
  return batch_indices(examples, std::move(order), batch_size);
}

std::vector<Batch> make_eval_batches(const std::vector<EncodedExample>& examples,
                                     std::size_t batch_size) {
  if (examples.empty())
    throw DegenerateInputError("make_eval_batches: no examples");
  if (batch_size == 0)
    throw ContractError("make_eval_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  return batch_indices(examples, std::move(order), batch_size);
}

}  // namespace titlegen::corpus
