#pragma once

#include <optional>
#include <string>
#include <vector>

#include "titlegen/corpus/corpus.hpp"

namespace titlegen::corpus {

// Field mapping that converts third-party playlist dumps to the canonical
// JSONL layout ({"id","title","tracks"}). track_id_subfield is used when the
// tracks array holds objects instead of plain strings.
struct AdapterConfig {
  std::string id_field = "id";
  std::string title_field = "title";
  std::string tracks_field = "tracks";
  std::string track_id_subfield;  // empty: tracks are strings
};

AdapterConfig load_adapter_config(const std::string& path);

// Reads one playlist per line. With a nullopt adapter the canonical field
// names are required.
std::vector<Playlist> read_jsonl(const std::string& path,
                                 const std::optional<AdapterConfig>& adapter);

// Canonical JSONL, one playlist per line, keys id/title/tracks.
void write_jsonl(const std::string& path,
                 const std::vector<TokenizedPlaylist>& playlists);

std::string filter_report_json(const FilterReport& report);

void write_vocab_json(const std::string& path, const Vocab& vocab);
Vocab read_vocab_json(const std::string& path);

}  // namespace titlegen::corpus
