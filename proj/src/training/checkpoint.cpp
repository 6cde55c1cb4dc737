#include "titlegen/training/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "titlegen/errors.hpp"

namespace titlegen::training {

using nlohmann::json;

namespace {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  put_u64(out, bits);
}

json config_json(const models::ModelConfig& c) {
  return json{{"architecture", std::string(models::arch_name(c.architecture))},
              {"num_layers", c.num_layers},
              {"embed_dim", c.embed_dim},
              {"hidden_dim", c.hidden_dim},
              {"num_heads", c.num_heads},
              {"encoder_positional_encoding", c.encoder_positional_encoding},
              {"dropout_rate", c.dropout_rate},
              {"source_vocab_size", c.source_vocab_size},
              {"target_vocab_size", c.target_vocab_size},
              {"max_positions", c.max_positions}};
}

models::ModelConfig config_from_json(const json& j) {
  models::ModelConfig c;
  c.architecture = models::parse_arch(j.at("architecture").get<std::string>());
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.encoder_positional_encoding =
      j.at("encoder_positional_encoding").get<bool>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.source_vocab_size = j.at("source_vocab_size").get<std::size_t>();
  c.target_vocab_size = j.at("target_vocab_size").get<std::size_t>();
  c.max_positions = j.at("max_positions").get<std::size_t>();
  return c;
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  json manifest = json::array();
  for (const auto& [name, t] : checkpoint.params.items)
    manifest.push_back(json{{"name", name}, {"shape", t.shape()}});
  const json meta{
      {"model_config", config_json(checkpoint.config)},
      {"params", manifest},
      {"track_vocab", checkpoint.track_vocab.tokens()},
      {"word_vocab", checkpoint.word_vocab.tokens()},
      {"training",
       {{"best_epoch", checkpoint.meta.best_epoch},
        {"best_val_nll", checkpoint.meta.best_val_nll},
        {"epochs_run", checkpoint.meta.epochs_run},
        {"split_seed", checkpoint.meta.split_seed},
        {"init_seed", checkpoint.meta.init_seed},
        {"epoch_seed_base", checkpoint.meta.epoch_seed_base}}}};
  const std::string meta_str = meta.dump();

  std::string out;
  out.append(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_u16(out, kCheckpointVersion);
  put_u64(out, meta_str.size());
  out += meta_str;
  for (const auto& [name, t] : checkpoint.params.items)
    for (double x : t.values()) put_f64(out, x);

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write checkpoint '" + path + "'");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(file)),
                    std::istreambuf_iterator<char>());
  if (file.bad()) throw IoError("failed reading checkpoint '" + path + "'");

  std::size_t off = 0;
  if (bytes.size() < sizeof(kCheckpointMagic) + 2 + 8)
    throw CheckpointTruncatedError("checkpoint '" + path +
                                   "' is shorter than its header");
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) !=
      0)
    throw CheckpointCorruptError("checkpoint '" + path +
                                 "' has a bad magic value");
  off += sizeof(kCheckpointMagic);

  const std::uint16_t version =
      static_cast<std::uint16_t>(static_cast<unsigned char>(bytes[off])) |
      static_cast<std::uint16_t>(
          static_cast<std::uint16_t>(static_cast<unsigned char>(bytes[off + 1]))
          << 8);
  off += 2;
  if (version != kCheckpointVersion)
    throw CheckpointVersionError("checkpoint '" + path + "' has version " +
                                 std::to_string(version) + ", expected " +
                                 std::to_string(kCheckpointVersion));

  std::uint64_t meta_len = 0;
  for (int i = 0; i < 8; ++i)
    meta_len |= static_cast<std::uint64_t>(
                    static_cast<unsigned char>(bytes[off + static_cast<std::size_t>(i)]))
                << (8 * i);
  off += 8;
  if (off + meta_len > bytes.size())
    throw CheckpointTruncatedError("checkpoint '" + path +
                                   "' ends inside its metadata block");

  json meta = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(off),
                          bytes.begin() + static_cast<std::ptrdiff_t>(off + meta_len),
                          nullptr, false);
  if (meta.is_discarded())
    throw CheckpointCorruptError("checkpoint '" + path +
                                 "' has unparsable metadata");
  off += meta_len;

  Checkpoint out;
  try {
    out.config = config_from_json(meta.at("model_config"));
    out.track_vocab =
        corpus::Vocab(meta.at("track_vocab").get<std::vector<std::string>>());
    out.word_vocab =
        corpus::Vocab(meta.at("word_vocab").get<std::vector<std::string>>());
    const json& training = meta.at("training");
    out.meta.best_epoch = training.at("best_epoch").get<std::size_t>();
    out.meta.best_val_nll = training.at("best_val_nll").get<double>();
    out.meta.epochs_run = training.at("epochs_run").get<std::size_t>();
    out.meta.split_seed = training.at("split_seed").get<std::uint64_t>();
    out.meta.init_seed = training.at("init_seed").get<std::uint64_t>();
    out.meta.epoch_seed_base =
        training.at("epoch_seed_base").get<std::uint64_t>();

    for (const json& entry : meta.at("params")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      std::size_t numel = 1;
      for (std::size_t d : shape) numel *= d;
      if (off + numel * 8 > bytes.size())
        throw CheckpointTruncatedError("checkpoint '" + path +
                                       "' ends inside parameter '" + name +
                                       "'");
      std::vector<double> values(numel);
      for (std::size_t i = 0; i < numel; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
          bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(
                      bytes[off + i * 8 + static_cast<std::size_t>(b)]))
                  << (8 * b);
        values[i] = std::bit_cast<double>(bits);
      }
      off += numel * 8;
      out.params.items.emplace_back(
          name, tensor::Tensor::from_values(shape, std::move(values), true));
    }
  } catch (const json::exception& e) {
    throw CheckpointCorruptError("checkpoint '" + path +
                                 "' metadata is malformed: " + e.what());
  }
  if (off != bytes.size())
    throw CheckpointCorruptError("checkpoint '" + path + "' carries " +
                                 std::to_string(bytes.size() - off) +
                                 " trailing bytes");
  return out;
}

}  // namespace titlegen::training
