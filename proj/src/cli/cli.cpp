#include "titlegen/cli/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "titlegen/corpus/io.hpp"
#include "titlegen/errors.hpp"
#include "titlegen/generation/generation.hpp"
#include "titlegen/training/checkpoint.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace titlegen::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Union of the model, training and corpus options plus file paths. Every
// field has its module default; a JSON config file and then explicit flags
// override it (flags win).
struct RunConfig {
  std::string arch = "transformer";
  std::size_t num_layers = 2;
  std::size_t embed_dim = 128;
  std::size_t hidden_dim = 256;
  std::size_t num_heads = 4;
  bool encoder_positional_encoding = true;
  double dropout_rate = 0.0;
  std::size_t max_positions = 512;

  double base_lr = 0.005;
  double lr_decay = 0.0001;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  bool shuffle_augment = false;
  std::size_t augment_copies = 0;
  double grad_clip_norm = 5.0;
  double weight_decay = 0.0;

  std::uint64_t split_seed = 7;
  std::uint64_t init_seed = 1;
  std::uint64_t epoch_seed_base = 1000;

  std::size_t min_count_track = 1;
  std::size_t min_count_word = 1;
  std::size_t max_source_len = 256;

  std::string data_dir;
  std::string out_dir;
  std::string checkpoint;
  std::string input;
  std::string adapter;
  std::size_t max_length = 16;
  bool suppress_unk = false;
  int threads = 0;  // 0: leave the OpenMP default alone
};

json run_config_json(const RunConfig& c) {
  return json{{"arch", c.arch},
              {"num_layers", c.num_layers},
              {"embed_dim", c.embed_dim},
              {"hidden_dim", c.hidden_dim},
              {"num_heads", c.num_heads},
              {"encoder_positional_encoding", c.encoder_positional_encoding},
              {"dropout_rate", c.dropout_rate},
              {"max_positions", c.max_positions},
              {"base_lr", c.base_lr},
              {"lr_decay", c.lr_decay},
              {"batch_size", c.batch_size},
              {"max_epochs", c.max_epochs},
              {"patience", c.patience},
              {"shuffle_augment", c.shuffle_augment},
              {"augment_copies", c.augment_copies},
              {"grad_clip_norm", c.grad_clip_norm},
              {"weight_decay", c.weight_decay},
              {"split_seed", c.split_seed},
              {"init_seed", c.init_seed},
              {"epoch_seed_base", c.epoch_seed_base},
              {"min_count_track", c.min_count_track},
              {"min_count_word", c.min_count_word},
              {"max_source_len", c.max_source_len},
              {"data_dir", c.data_dir},
              {"out_dir", c.out_dir},
              {"checkpoint", c.checkpoint},
              {"input", c.input},
              {"adapter", c.adapter},
              {"max_length", c.max_length},
              {"suppress_unk", c.suppress_unk},
              {"threads", c.threads}};
}

void apply_config_object(RunConfig& c, const json& j,
                         const std::string& path) {
  for (const auto& [key, v] : j.items()) {
    if (key == "arch") c.arch = v.get<std::string>();
    else if (key == "num_layers") c.num_layers = v.get<std::size_t>();
    else if (key == "embed_dim") c.embed_dim = v.get<std::size_t>();
    else if (key == "hidden_dim") c.hidden_dim = v.get<std::size_t>();
    else if (key == "num_heads") c.num_heads = v.get<std::size_t>();
    else if (key == "encoder_positional_encoding")
      c.encoder_positional_encoding = v.get<bool>();
    else if (key == "dropout_rate") c.dropout_rate = v.get<double>();
    else if (key == "max_positions") c.max_positions = v.get<std::size_t>();
    else if (key == "base_lr") c.base_lr = v.get<double>();
    else if (key == "lr_decay") c.lr_decay = v.get<double>();
    else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
    else if (key == "max_epochs") c.max_epochs = v.get<std::size_t>();
    else if (key == "patience") c.patience = v.get<std::size_t>();
    else if (key == "shuffle_augment") c.shuffle_augment = v.get<bool>();
    else if (key == "augment_copies") c.augment_copies = v.get<std::size_t>();
    else if (key == "grad_clip_norm") c.grad_clip_norm = v.get<double>();
    else if (key == "weight_decay") c.weight_decay = v.get<double>();
    else if (key == "split_seed") c.split_seed = v.get<std::uint64_t>();
    else if (key == "init_seed") c.init_seed = v.get<std::uint64_t>();
    else if (key == "epoch_seed_base")
      c.epoch_seed_base = v.get<std::uint64_t>();
    else if (key == "min_count_track") c.min_count_track = v.get<std::size_t>();
    else if (key == "min_count_word") c.min_count_word = v.get<std::size_t>();
    else if (key == "max_source_len") c.max_source_len = v.get<std::size_t>();
    else if (key == "data_dir") c.data_dir = v.get<std::string>();
    else if (key == "out_dir") c.out_dir = v.get<std::string>();
    else if (key == "checkpoint") c.checkpoint = v.get<std::string>();
    else if (key == "input") c.input = v.get<std::string>();
    else if (key == "adapter") c.adapter = v.get<std::string>();
    else if (key == "max_length") c.max_length = v.get<std::size_t>();
    else if (key == "suppress_unk") c.suppress_unk = v.get<bool>();
    else if (key == "threads") c.threads = v.get<int>();
    else
      throw ConfigError("config file '" + path + "': unknown key '" + key +
                        "'");
  }
}

void apply_config_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw ConfigError("config file '" + path + "' is not a JSON object");
  apply_config_object(c, j, path);
}

void echo_config(const RunConfig& c) {
  std::cerr << "resolved config: " << run_config_json(c).dump() << "\n";
}

void apply_threads(const RunConfig& c) {
#ifdef _OPENMP
  if (c.threads > 0) omp_set_num_threads(c.threads);
#else
  (void)c;
#endif
}

models::ModelConfig model_config_from(const RunConfig& c,
                                      std::size_t source_vocab,
                                      std::size_t target_vocab) {
  models::ModelConfig m;
  m.architecture = models::parse_arch(c.arch);
  m.num_layers = c.num_layers;
  m.embed_dim = c.embed_dim;
  m.hidden_dim = c.hidden_dim;
  m.num_heads = c.num_heads;
  m.encoder_positional_encoding = c.encoder_positional_encoding;
  m.dropout_rate = c.dropout_rate;
  m.source_vocab_size = source_vocab;
  m.target_vocab_size = target_vocab;
  m.max_positions = c.max_positions;
  m.validate();
  return m;
}

training::TrainConfig train_config_from(const RunConfig& c) {
  training::TrainConfig t;
  t.base_lr = c.base_lr;
  t.lr_decay = c.lr_decay;
  t.batch_size = c.batch_size;
  t.max_epochs = c.max_epochs;
  t.patience = c.patience;
  t.init_seed = c.init_seed;
  t.epoch_seed_base = c.epoch_seed_base;
  t.shuffle_augment = c.shuffle_augment;
  t.augment_copies = c.augment_copies;
  t.grad_clip_norm = c.grad_clip_norm;
  t.weight_decay = c.weight_decay;
  t.validate();
  return t;
}

std::vector<corpus::TokenizedPlaylist> read_tokenized(
    const std::string& path) {
  std::vector<corpus::TokenizedPlaylist> out;
  for (const corpus::Playlist& p : corpus::read_jsonl(path, std::nullopt))
    out.push_back(corpus::tokenize_playlist(p));
  return out;
}

std::vector<corpus::EncodedExample> encode_split(
    const std::vector<corpus::TokenizedPlaylist>& playlists,
    const corpus::VocabPair& vocabs, std::size_t max_source_len) {
  std::vector<corpus::EncodedExample> out;
  out.reserve(playlists.size());
  for (const auto& p : playlists)
    out.push_back(corpus::encode_pair(p, vocabs, max_source_len));
  return out;
}

int cmd_prepare(const RunConfig& cfg, const std::string& raw_path) {
  echo_config(cfg);
  if (cfg.out_dir.empty()) throw ConfigError("prepare: --out is required");
  std::optional<corpus::AdapterConfig> adapter;
  if (!cfg.adapter.empty())
    adapter = corpus::load_adapter_config(cfg.adapter);

  const std::vector<corpus::Playlist> raw = corpus::read_jsonl(raw_path, adapter);
  std::vector<corpus::TokenizedPlaylist> tokenized;
  tokenized.reserve(raw.size());
  for (const auto& p : raw) tokenized.push_back(corpus::tokenize_playlist(p));

  const corpus::FilterResult filtered = corpus::filter_corpus(tokenized);
  if (filtered.kept.empty()) {
    std::cerr << "prepare: no playlist passed the filter\n";
    return kExitEmptyResult;
  }
  const corpus::SplitCorpus split =
      corpus::stratified_split(filtered.kept, cfg.split_seed);
  const corpus::VocabPair vocabs = corpus::build_vocabs(
      split.train, cfg.min_count_track, cfg.min_count_word);

  fs::create_directories(cfg.out_dir);
  const fs::path out(cfg.out_dir);
  corpus::write_jsonl((out / "train.jsonl").string(), split.train);
  corpus::write_jsonl((out / "val.jsonl").string(), split.validation);
  corpus::write_jsonl((out / "test.jsonl").string(), split.test);
  {
    std::ofstream report(out / "report.json", std::ios::trunc);
    report << corpus::filter_report_json(filtered.report) << "\n";
    if (!report) throw IoError("failed writing report.json");
  }
  corpus::write_vocab_json((out / "vocab_tracks.json").string(), vocabs.tracks);
  corpus::write_vocab_json((out / "vocab_words.json").string(), vocabs.words);

  std::cout << "prepare: kept " << filtered.report.kept_count << "/"
            << filtered.report.input_count << " playlists; train/val/test = "
            << split.train.size() << "/" << split.validation.size() << "/"
            << split.test.size() << "; track vocab " << vocabs.tracks.size()
            << ", word vocab " << vocabs.words.size() << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& cfg) {
  echo_config(cfg);
  if (cfg.data_dir.empty()) throw ConfigError("train: --data is required");
  if (cfg.out_dir.empty()) throw ConfigError("train: --out is required");
  const fs::path data(cfg.data_dir);

  training::FitData fit_data;
  fit_data.track_vocab =
      corpus::read_vocab_json((data / "vocab_tracks.json").string());
  fit_data.word_vocab =
      corpus::read_vocab_json((data / "vocab_words.json").string());
  const corpus::VocabPair vocabs{fit_data.track_vocab, fit_data.word_vocab};

  fit_data.train = encode_split(read_tokenized((data / "train.jsonl").string()),
                                vocabs, cfg.max_source_len);
  fit_data.validation = encode_split(
      read_tokenized((data / "val.jsonl").string()), vocabs,
      cfg.max_source_len);
  fit_data.split_seed = cfg.split_seed;

  const models::ModelConfig model_config = model_config_from(
      cfg, fit_data.track_vocab.size(), fit_data.word_vocab.size());
  const training::TrainConfig train_config = train_config_from(cfg);

  const training::FitResult result =
      training::fit(model_config, train_config, fit_data);

  fs::create_directories(cfg.out_dir);
  const fs::path out(cfg.out_dir);
  training::save_checkpoint(result.checkpoint,
                            (out / "checkpoint.ssq").string());
  {
    std::ofstream log(out / "train_log.jsonl", std::ios::trunc);
    log << training::train_log_jsonl(result.log);
    if (!log) throw IoError("failed writing train_log.jsonl");
  }
  std::cout << "train: best validation NLL " << result.checkpoint.meta.best_val_nll
            << " at epoch " << result.checkpoint.meta.best_epoch << " ("
            << result.checkpoint.meta.epochs_run << " epochs run)\n";
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
             const std::string& split_path) {
  echo_config(cfg);
  const training::Checkpoint ckpt =
      training::load_checkpoint(checkpoint_path);
  const corpus::VocabPair vocabs{ckpt.track_vocab, ckpt.word_vocab};
  const std::vector<corpus::EncodedExample> examples = encode_split(
      read_tokenized(split_path), vocabs, cfg.max_source_len);
  const double nll = training::evaluate_nll(ckpt.params, ckpt.config, examples,
                                            cfg.batch_size);
  std::size_t tokens = 0;
  for (const auto& e : examples) tokens += e.target.size() - 1;
  const json j{{"nll", nll}, {"tokens", tokens}, {"examples", examples.size()}};
  std::cout << j.dump() << "\n";
  return kExitOk;
}

int cmd_generate(const RunConfig& cfg, const std::string& checkpoint_path,
                 const std::string& input_path, bool shuffle_check) {
  echo_config(cfg);
  const training::Checkpoint ckpt =
      training::load_checkpoint(checkpoint_path);
  std::ifstream in(input_path);
  if (!in) throw IoError("cannot open input '" + input_path + "'");

  generation::GenerateOptions options;
  options.suppress_unk = cfg.suppress_unk;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    json tracks_json;
    if (j.is_array()) {
      tracks_json = j;
    } else if (j.is_object() && j.contains("tracks") &&
               j.at("tracks").is_array()) {
      tracks_json = j.at("tracks");
    } else {
      throw IoError(input_path + ":" + std::to_string(line_no) +
                    ": expected {\"tracks\": [...]} or a JSON array");
    }
    generation::GenerationRequest request;
    request.max_length = cfg.max_length;
    for (const auto& t : tracks_json)
      request.tracks.push_back(t.is_string() ? t.get<std::string>()
                                             : t.dump());

    json out;
    try {
      const generation::GeneratedTitle title =
          generation::greedy_decode(ckpt, request, options);
      out = json{{"tokens", title.tokens}, {"logprob", title.total_logprob}};
      if (shuffle_check) {
        generation::GenerationRequest permuted = request;
        tensor::Rng rng(tensor::Rng::mix(cfg.split_seed, line_no));
        rng.shuffle(permuted.tracks);
        const generation::GeneratedTitle other =
            generation::greedy_decode(ckpt, permuted, options);
        out["shuffle_match"] = other.tokens == title.tokens;
      }
    } catch (const std::exception& e) {
      out = json{{"error", e.what()}};
    }
    std::cout << out.dump() << "\n";
  }
  return kExitOk;
}

}  // namespace

namespace {

struct ParsedArgs {
  RunConfig cfg;
  std::string config_path;
  std::string raw_path;
  std::string checkpoint_path;
  std::string split_path;
  std::string input_path;
  bool shuffle_check = false;
  std::string command;
};

struct ExitWith {
  int code;
};

// CLI11 assigns bound variables only for options actually present, so
// parsing the same argv onto a config pre-filled from the file makes
// explicit flags win over file values.
void parse_into(ParsedArgs& out, const std::vector<std::string>& args) {
  CLI::App app{"playlist title generation toolkit"};
  app.require_subcommand(1);
  RunConfig& cfg = out.cfg;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", out.config_path, "JSON config file");
    cmd->add_option("--arch", cfg.arch, "rnn or transformer");
    cmd->add_flag_callback(
        "--no-encoder-pos",
        [&cfg] { cfg.encoder_positional_encoding = false; },
        "drop the encoder positional encoding");
    cmd->add_flag("--shuffle-augment", cfg.shuffle_augment,
                  "reshuffle each source sequence every epoch");
    cmd->add_option("--seed", cfg.split_seed, "split seed");
    cmd->add_option("--init-seed", cfg.init_seed, "parameter init seed");
    cmd->add_option("--epoch-seed-base", cfg.epoch_seed_base,
                    "epoch seed = base + epoch index");
    cmd->add_option("--max-epochs", cfg.max_epochs, "epoch budget");
    cmd->add_option("--patience", cfg.patience, "early stopping patience");
    cmd->add_option("--batch-size", cfg.batch_size, "batch size");
    cmd->add_option("--out", cfg.out_dir, "output directory");
    cmd->add_option("--threads", cfg.threads, "OpenMP thread count");
    cmd->add_option("--max-source-len", cfg.max_source_len,
                    "source truncation length");
    cmd->add_option("--augment-copies", cfg.augment_copies,
                    "materialized shuffled copies of the train set");
    return cmd;
  };

  CLI::App* prepare = add_common(app.add_subcommand(
      "prepare", "filter, split and index a raw playlist corpus"));
  prepare->add_option("input", out.raw_path, "raw corpus JSONL")->required();
  prepare->add_option("--adapter", cfg.adapter,
                      "field-mapping JSON for third-party dumps");
  prepare->add_option("--min-count-track", cfg.min_count_track,
                      "track vocab frequency cutoff");
  prepare->add_option("--min-count-word", cfg.min_count_word,
                      "word vocab frequency cutoff");

  CLI::App* train = add_common(
      app.add_subcommand("train", "train a model on a prepared corpus"));
  train->add_option("--data", cfg.data_dir, "prepared corpus directory");

  CLI::App* eval = add_common(
      app.add_subcommand("eval", "teacher-forced NLL of a checkpoint"));
  eval->add_option("checkpoint", out.checkpoint_path, "checkpoint file")
      ->required();
  eval->add_option("split", out.split_path, "canonical JSONL split")
      ->required();

  CLI::App* generate = add_common(
      app.add_subcommand("generate", "greedy titles for track lists"));
  generate->add_option("checkpoint", out.checkpoint_path, "checkpoint file")
      ->required();
  generate->add_option("input", out.input_path, "JSONL of track lists")
      ->required();
  generate->add_option("--max-length", cfg.max_length, "title length cap");
  generate->add_flag("--suppress-unk", cfg.suppress_unk,
                     "mask <unk> before the argmax");
  generate->add_flag("--shuffle-check", out.shuffle_check,
                     "also decode a permuted copy and report a match flag");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    throw ExitWith{app.exit(e)};  // prints the help text
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message
    throw ExitWith{kExitConfigError};
  }
  for (const CLI::App* sub : {prepare, train, eval, generate})
    if (sub->parsed()) out.command = sub->get_name();
}

}  // namespace

int run(const std::vector<std::string>& args) {
  ParsedArgs parsed;
  try {
    parse_into(parsed, args);
  } catch (const ExitWith& e) {
    return e.code;
  }

  try {
    if (!parsed.config_path.empty()) {
      ParsedArgs merged;
      apply_config_file(merged.cfg, parsed.config_path);
      parse_into(merged, args);  // flags win over the file
      parsed = std::move(merged);
    }
    apply_threads(parsed.cfg);

    if (parsed.command == "prepare")
      return cmd_prepare(parsed.cfg, parsed.raw_path);
    if (parsed.command == "train") return cmd_train(parsed.cfg);
    if (parsed.command == "eval")
      return cmd_eval(parsed.cfg, parsed.checkpoint_path, parsed.split_path);
    if (parsed.command == "generate")
      return cmd_generate(parsed.cfg, parsed.checkpoint_path,
                          parsed.input_path, parsed.shuffle_check);
    return kExitConfigError;
  } catch (const ExitWith& e) {
    return e.code;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumericError;
  } catch (const DegenerateInputError& e) {
    std::cerr << "empty result: " << e.what() << "\n";
    return kExitEmptyResult;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfigError;
  }
}

}  // namespace titlegen::cli
