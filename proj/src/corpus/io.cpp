#include "titlegen/corpus/io.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "titlegen/errors.hpp"

namespace titlegen::corpus {

using nlohmann::json;

namespace {

json parse_line(const std::string& line, const std::string& path,
                std::size_t line_no) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw IoError(path + ":" + std::to_string(line_no) +
                  ": not a JSON object");
  return j;
}

std::string require_string(const json& j, const std::string& field,
                           const std::string& where) {
  if (!j.contains(field) || !j.at(field).is_string())
    throw IoError(where + ": missing string field '" + field + "'");
  return j.at(field).get<std::string>();
}

}  // namespace

AdapterConfig load_adapter_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open adapter config '" + path + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw IoError("adapter config '" + path + "' is not a JSON object");
  AdapterConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "id_field") {
      cfg.id_field = value.get<std::string>();
    } else if (key == "title_field") {
      cfg.title_field = value.get<std::string>();
    } else if (key == "tracks_field") {
      cfg.tracks_field = value.get<std::string>();
    } else if (key == "track_id_subfield") {
      cfg.track_id_subfield = value.get<std::string>();
    } else {
      throw IoError("adapter config: unknown key '" + key + "'");
    }
  }
  return cfg;
}

std::vector<Playlist> read_jsonl(const std::string& path,
                                 const std::optional<AdapterConfig>& adapter) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file '" + path + "'");
  const AdapterConfig cfg = adapter.value_or(AdapterConfig{});
  std::vector<Playlist> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    json j = parse_line(line, path, line_no);
    Playlist p;
    if (j.contains(cfg.id_field) && j.at(cfg.id_field).is_number()) {
      p.id = std::to_string(j.at(cfg.id_field).get<long long>());
    } else {
      p.id = require_string(j, cfg.id_field, where);
    }
    if (j.contains(cfg.title_field) && j.at(cfg.title_field).is_null()) {
      p.title.clear();
    } else {
      p.title = require_string(j, cfg.title_field, where);
    }
    if (!j.contains(cfg.tracks_field) || !j.at(cfg.tracks_field).is_array())
      throw IoError(where + ": missing array field '" + cfg.tracks_field + "'");
    for (const auto& entry : j.at(cfg.tracks_field)) {
      if (cfg.track_id_subfield.empty()) {
        if (entry.is_string()) {
          p.tracks.push_back(entry.get<std::string>());
        } else if (entry.is_number()) {
          p.tracks.push_back(std::to_string(entry.get<long long>()));
        } else {
          throw IoError(where + ": track entry is not a string");
        }
      } else {
        if (!entry.is_object() || !entry.contains(cfg.track_id_subfield))
          throw IoError(where + ": track entry lacks '" +
                        cfg.track_id_subfield + "'");
        const auto& id = entry.at(cfg.track_id_subfield);
        p.tracks.push_back(id.is_string() ? id.get<std::string>()
                                          : std::to_string(id.get<long long>()));
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

void write_jsonl(const std::string& path,
                 const std::vector<TokenizedPlaylist>& playlists) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  for (const auto& p : playlists) {
    std::string title;
    for (std::size_t i = 0; i < p.title_tokens.size(); ++i) {
      if (i) title.push_back(' ');
      title += p.title_tokens[i];
    }
    json j{{"id", p.id}, {"title", title}, {"tracks", p.tracks}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

namespace {

json stats_json(const CorpusStats& s) {
  return json{{"playlist_count", s.playlist_count},
              {"unique_track_count", s.unique_track_count},
              {"unique_title_count", s.unique_title_count},
              {"unique_word_count", s.unique_word_count},
              {"average_char_length", s.average_char_length},
              {"average_title_length", s.average_title_length},
              {"average_track_length", s.average_track_length}};
}

}  // namespace

std::string filter_report_json(const FilterReport& report) {
  json j{{"input_count", report.input_count},
         {"kept_count", report.kept_count},
         {"rejected",
          {{"too_few_title_tokens", report.rejected_too_few_title_tokens},
           {"too_few_tracks", report.rejected_too_few_tracks},
           {"short_title_tokens", report.rejected_short_title_tokens}}},
         {"before", stats_json(report.before)},
         {"after", stats_json(report.after)}};
  return j.dump(2);
}

void write_vocab_json(const std::string& path, const Vocab& vocab) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  json j{{"tokens", vocab.tokens()}};
  out << j.dump() << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

Vocab read_vocab_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocab file '" + path + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("tokens") ||
      !j.at("tokens").is_array())
    throw IoError("vocab file '" + path + "' is malformed");
  return Vocab(j.at("tokens").get<std::vector<std::string>>());
}

}  // namespace titlegen::corpus
