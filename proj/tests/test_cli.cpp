#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "support/synthetic.hpp"
#include "titlegen/cli/cli.hpp"
#include "titlegen/corpus/io.hpp"
#include "titlegen/training/checkpoint.hpp"

using namespace titlegen;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CapturedRun {
  int exit_code = 0;
  std::string out;
};

// Runs the CLI in-process, capturing stdout (the config echo goes to
// stderr and is left alone).
CapturedRun run_cli(const std::vector<std::string>& args) {
  std::ostringstream captured;
  std::streambuf* old = std::cout.rdbuf(captured.rdbuf());
  CapturedRun r;
  try {
    r.exit_code = cli::run(args);
  } catch (...) {
    std::cout.rdbuf(old);
    throw;
  }
  std::cout.rdbuf(old);
  r.out = captured.str();
  return r;
}

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() /
                       ("titlegen_cli_" + tag + "_" + std::to_string(getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// A raw corpus file the prepare command can ingest.
fs::path write_raw_corpus(const fs::path& dir, std::size_t count,
                          std::size_t topics) {
  const auto playlists = testsupport::topic_corpus(count, topics, 4242);
  const fs::path path = dir / "raw.jsonl";
  corpus::write_jsonl(path.string(), playlists);
  return path;
}

}  // namespace

TEST_CASE("prepare writes all artifacts deterministically") {
  const fs::path dir = fresh_dir("prepare");
  const fs::path raw = write_raw_corpus(dir, 60, 6);

  const auto r1 = run_cli({"prepare", raw.string(), "--out",
                           (dir / "out1").string(), "--seed", "7"});
  CHECK(r1.exit_code == 0);
  for (const char* name : {"train.jsonl", "val.jsonl", "test.jsonl",
                           "report.json", "vocab_tracks.json",
                           "vocab_words.json"})
    CHECK(fs::exists(dir / "out1" / name));

  const auto r2 = run_cli({"prepare", raw.string(), "--out",
                           (dir / "out2").string(), "--seed", "7"});
  CHECK(r2.exit_code == 0);
  for (const char* name : {"train.jsonl", "val.jsonl", "test.jsonl",
                           "report.json", "vocab_tracks.json",
                           "vocab_words.json"})
    CHECK(slurp(dir / "out1" / name) == slurp(dir / "out2" / name));

  const json report = json::parse(slurp(dir / "out1" / "report.json"));
  CHECK(report.at("kept_count").get<int>() == 60);
  CHECK(report.at("before").contains("average_title_length"));
  fs::remove_all(dir);
}

TEST_CASE("prepare exit codes: unreadable input and empty result") {
  const fs::path dir = fresh_dir("prepare_err");
  CHECK(run_cli({"prepare", (dir / "missing.jsonl").string(), "--out",
                 (dir / "out").string()})
            .exit_code == cli::kExitConfigError);

  // Nothing passes the filter: tag-level titles.
  const fs::path bad = dir / "bad.jsonl";
  {
    std::ofstream out(bad);
    out << R"({"id":"1","title":"pop","tracks":["a","b"]})" << "\n";
    out << R"({"id":"2","title":"jazz","tracks":["c"]})" << "\n";
  }
  CHECK(run_cli({"prepare", bad.string(), "--out", (dir / "out").string()})
            .exit_code == cli::kExitEmptyResult);
  fs::remove_all(dir);
}

TEST_CASE("prepare accepts third-party dumps through an adapter") {
  const fs::path dir = fresh_dir("adapter");
  const fs::path raw = dir / "dump.jsonl";
  {
    std::ofstream out(raw);
    for (int i = 0; i < 12; ++i) {
      json tracks = json::array();
      for (int t = 0; t < 12; ++t)
        tracks.push_back({{"track_uri", "uri:" + std::to_string(100 * i + t)}});
      const json row{{"pid", i},
                     {"name", "late night drive mix vol " + std::to_string(i)},
                     {"songs", tracks}};
      out << row.dump() << "\n";
    }
  }
  const fs::path adapter = dir / "adapter.json";
  {
    std::ofstream out(adapter);
    out << R"({"id_field":"pid","title_field":"name","tracks_field":"songs",
               "track_id_subfield":"track_uri"})";
  }
  const auto r = run_cli({"prepare", raw.string(), "--adapter",
                          adapter.string(), "--out", (dir / "out").string(),
                          "--seed", "7"});
  CHECK(r.exit_code == 0);
  const json report = json::parse(slurp(dir / "out" / "report.json"));
  CHECK(report.at("kept_count").get<int>() == 12);
  fs::remove_all(dir);
}

TEST_CASE("the filter fixture reproduces its frozen counts through prepare") {
  const fs::path dir = fresh_dir("fixture");
  const std::string fixture =
      std::string(TITLEGEN_FIXTURE_DIR) + "/filter_fixture.jsonl";
  const auto r = run_cli({"prepare", fixture, "--out",
                          (dir / "out").string(), "--seed", "7"});
  CHECK(r.exit_code == 0);
  const json report = json::parse(slurp(dir / "out" / "report.json"));
  CHECK(report.at("input_count").get<int>() == 200);
  CHECK(report.at("kept_count").get<int>() == 117);
  CHECK(report.at("rejected").at("too_few_title_tokens").get<int>() == 40);
  CHECK(report.at("rejected").at("too_few_tracks").get<int>() == 25);
  CHECK(report.at("rejected").at("short_title_tokens").get<int>() == 18);
  CHECK(report.at("after").at("average_title_length").get<double>() >
        report.at("before").at("average_title_length").get<double>());
  fs::remove_all(dir);
}

namespace {

// Prepares a tiny corpus and trains a toy model once for the command tests.
struct TrainedFixture {
  fs::path dir;
  fs::path data;
  fs::path out;
  fs::path checkpoint;

  explicit TrainedFixture(const std::string& tag,
                          const std::vector<std::string>& extra = {}) {
    dir = fresh_dir(tag);
    const fs::path raw = write_raw_corpus(dir, 48, 6);
    data = dir / "data";
    REQUIRE(run_cli({"prepare", raw.string(), "--out", data.string(), "--seed",
                     "7"})
                .exit_code == 0);
    out = dir / "run";
    std::vector<std::string> args{
        "train",          "--data",      data.string(), "--out",
        out.string(),     "--max-epochs", "2",          "--patience",
        "2",              "--batch-size", "16"};
    // Tiny dims keep the test quick.
    const fs::path cfg = dir / "model.json";
    {
      std::ofstream f(cfg);
      f << R"({"embed_dim":16,"hidden_dim":24,"num_heads":2})";
    }
    args.push_back("--config");
    args.push_back(cfg.string());
    for (const auto& a : extra) args.push_back(a);
    REQUIRE(run_cli(args).exit_code == 0);
    checkpoint = out / "checkpoint.ssq";
    REQUIRE(fs::exists(checkpoint));
    REQUIRE(fs::exists(out / "train_log.jsonl"));
  }
  ~TrainedFixture() { fs::remove_all(dir); }
};

}  // namespace

TEST_CASE("train, eval and generate round trip through the CLI") {
  TrainedFixture fx("roundtrip");

  // Rerun with the same seeds: checkpoint bytes identical.
  const fs::path out2 = fx.dir / "run2";
  const fs::path cfg = fx.dir / "model.json";
  REQUIRE(run_cli({"train", "--data", fx.data.string(), "--out", out2.string(),
                   "--max-epochs", "2", "--patience", "2", "--batch-size",
                   "16", "--config", cfg.string()})
              .exit_code == 0);
  CHECK(slurp(fx.checkpoint) == slurp(out2 / "checkpoint.ssq"));

  // The two train logs agree on everything but wall time.
  auto strip_seconds = [](const std::string& jsonl) {
    std::vector<json> rows;
    std::istringstream in(jsonl);
    std::string line;
    while (std::getline(in, line)) {
      json j = json::parse(line);
      j.erase("seconds");
      rows.push_back(j);
    }
    return rows;
  };
  CHECK(strip_seconds(slurp(fx.out / "train_log.jsonl")) ==
        strip_seconds(slurp(out2 / "train_log.jsonl")));

  // eval prints a JSON summary.
  const auto ev = run_cli({"eval", fx.checkpoint.string(),
                           (fx.data / "val.jsonl").string()});
  CHECK(ev.exit_code == 0);
  const json summary = json::parse(ev.out);
  CHECK(summary.at("nll").get<double>() > 0.0);
  CHECK(summary.at("examples").get<int>() > 0);
  CHECK(summary.at("tokens").get<int>() > 0);

  // eval twice: identical output.
  const auto ev2 = run_cli({"eval", fx.checkpoint.string(),
                            (fx.data / "val.jsonl").string()});
  CHECK(ev.out == ev2.out);

  // generate: one JSON object per input line, in order.
  const fs::path req = fx.dir / "requests.jsonl";
  {
    std::ofstream f(req);
    f << R"({"tracks":["trk1_1","trk1_2","trk1_3"]})" << "\n";
    f << R"(["trk2_1","trk2_2"])" << "\n";
    f << R"({"tracks":["unknown-a","unknown-b"]})" << "\n";
  }
  const auto gen = run_cli({"generate", fx.checkpoint.string(), req.string(),
                            "--max-length", "8"});
  CHECK(gen.exit_code == 0);
  std::istringstream lines(gen.out);
  std::string line;
  int rows = 0;
  while (std::getline(lines, line)) {
    const json j = json::parse(line);
    CHECK(j.contains("tokens"));
    CHECK(j.contains("logprob"));
    CHECK(j.at("tokens").size() <= 8);
    ++rows;
  }
  CHECK(rows == 3);

  // Empty input produces empty output with exit 0.
  const fs::path empty = fx.dir / "empty.jsonl";
  std::ofstream(empty).close();
  const auto gen_empty =
      run_cli({"generate", fx.checkpoint.string(), empty.string()});
  CHECK(gen_empty.exit_code == 0);
  CHECK(gen_empty.out.empty());
}

TEST_CASE("shuffle-check reports invariance for delete-pos checkpoints") {
  TrainedFixture fx("shufflecheck", {"--no-encoder-pos"});
  const fs::path req = fx.dir / "requests.jsonl";
  {
    std::ofstream f(req);
    f << R"({"tracks":["trk1_1","trk1_2","trk1_3","trk1_4","trk1_5"]})"
      << "\n";
    f << R"({"tracks":["trk3_1","trk3_2","trk3_7","trk3_9"]})" << "\n";
  }
  const auto gen = run_cli({"generate", fx.checkpoint.string(), req.string(),
                            "--shuffle-check"});
  CHECK(gen.exit_code == 0);
  std::istringstream lines(gen.out);
  std::string line;
  int rows = 0;
  while (std::getline(lines, line)) {
    const json j = json::parse(line);
    REQUIRE(j.contains("shuffle_match"));
    CHECK(j.at("shuffle_match").get<bool>());
    ++rows;
  }
  CHECK(rows == 2);
}

TEST_CASE("uniform checkpoint evaluates to ln vocab-size through the CLI") {
  const fs::path dir = fresh_dir("uniform");
  const std::size_t v = 57;
  training::Checkpoint ckpt = testsupport::uniform_checkpoint(40, v);
  const fs::path path = dir / "uniform.ssq";
  training::save_checkpoint(ckpt, path.string());

  // A little split whose words all sit in the vocab.
  const fs::path split = dir / "split.jsonl";
  {
    std::ofstream f(split);
    f << R"({"id":"a","title":"t4 t5 t6 t7","tracks":["t4","t5","t6","t7","t8","t9","t10","t11","t12","t13","t14","t15"]})"
      << "\n";
  }
  const auto ev = run_cli({"eval", path.string(), split.string()});
  CHECK(ev.exit_code == 0);
  const json j = json::parse(ev.out);
  CHECK(j.at("nll").get<double>() ==
        doctest::Approx(std::log(static_cast<double>(v))).epsilon(1e-9));
  fs::remove_all(dir);
}

TEST_CASE("config file merging: unknown keys rejected, flags win") {
  const fs::path dir = fresh_dir("config");
  const fs::path raw = write_raw_corpus(dir, 40, 5);

  const fs::path bad = dir / "bad.json";
  {
    std::ofstream f(bad);
    f << R"({"embed_dim":16,"no_such_key":1})";
  }
  CHECK(run_cli({"prepare", raw.string(), "--out", (dir / "o").string(),
                 "--config", bad.string()})
            .exit_code == cli::kExitConfigError);

  // Config asks for 3 epochs; the flag forces 1.
  const fs::path data = dir / "data";
  REQUIRE(run_cli({"prepare", raw.string(), "--out", data.string(), "--seed",
                   "7"})
              .exit_code == 0);
  const fs::path cfg = dir / "train.json";
  {
    std::ofstream f(cfg);
    f << R"({"embed_dim":16,"hidden_dim":24,"num_heads":2,"max_epochs":3,)"
      << R"("patience":3,"batch_size":16})";
  }
  const fs::path out = dir / "run";
  REQUIRE(run_cli({"train", "--data", data.string(), "--out", out.string(),
                   "--config", cfg.string(), "--max-epochs", "1",
                   "--patience", "1"})
              .exit_code == 0);
  std::istringstream log(slurp(out / "train_log.jsonl"));
  std::string line;
  int epochs = 0;
  while (std::getline(log, line))
    if (!line.empty()) ++epochs;
  CHECK(epochs == 1);
  fs::remove_all(dir);
}

TEST_CASE("train rejects unknown architectures and missing corpora") {
  const fs::path dir = fresh_dir("trainerr");
  CHECK(run_cli({"train", "--data", (dir / "nope").string(), "--out",
                 (dir / "out").string()})
            .exit_code == cli::kExitConfigError);

  const fs::path raw = write_raw_corpus(dir, 40, 5);
  const fs::path data = dir / "data";
  REQUIRE(run_cli({"prepare", raw.string(), "--out", data.string()})
              .exit_code == 0);
  CHECK(run_cli({"train", "--data", data.string(), "--out",
                 (dir / "out").string(), "--arch", "cnn"})
            .exit_code == cli::kExitConfigError);
  fs::remove_all(dir);
}

TEST_CASE("the installed binary answers --help") {
  const std::string cmd = std::string(TITLEGEN_BIN) + " --help > /dev/null";
  CHECK(std::system(cmd.c_str()) == 0);
  const std::string bad =
      std::string(TITLEGEN_BIN) + " frobnicate 2> /dev/null";
  CHECK(std::system(bad.c_str()) != 0);
}
