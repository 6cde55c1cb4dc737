#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "support/synthetic.hpp"
#include "titlegen/errors.hpp"
#include "titlegen/training/checkpoint.hpp"
#include "titlegen/training/training.hpp"

using namespace titlegen;
using corpus::EncodedExample;
using models::ModelConfig;
using models::ModelParams;
using training::TrainConfig;

namespace {

namespace fs = std::filesystem;

fs::path temp_dir() {
  const fs::path dir =
      fs::temp_directory_path() / ("titlegen_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

std::vector<EncodedExample> small_examples(std::size_t n, std::uint64_t seed,
                                           std::size_t src_vocab = 20,
                                           std::size_t tgt_vocab = 15) {
  tensor::Rng rng(seed);
  std::vector<EncodedExample> out(n);
  for (auto& e : out) {
    const std::size_t sl = 2 + rng.bounded(4);
    for (std::size_t i = 0; i < sl; ++i)
      e.source.push_back(static_cast<int>(4 + rng.bounded(src_vocab - 4)));
    const std::size_t words = 1 + rng.bounded(3);
    e.target.push_back(corpus::Vocab::kBos);
    for (std::size_t i = 0; i < words; ++i)
      e.target.push_back(static_cast<int>(4 + rng.bounded(tgt_vocab - 4)));
    e.target.push_back(corpus::Vocab::kEos);
  }
  return out;
}

TrainConfig fast_train_config() {
  TrainConfig t;
  t.batch_size = 8;
  t.max_epochs = 3;
  t.patience = 3;
  return t;
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig t;
  t.patience = 200;
  t.max_epochs = 100;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.base_lr = 0.0;  // frozen parameters are allowed
  CHECK_NOTHROW(t.validate());
}

TEST_CASE("early stopper follows the patience rule exactly") {
  // Non-improving run: best at epoch 2, stop after epoch 7.
  training::EarlyStopper s(5);
  const std::vector<double> seq{3.0, 2.5, 2.6, 2.7, 2.8, 2.9, 3.0};
  std::size_t stopped_after = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    s.observe(i + 1, seq[i]);
    if (s.should_stop()) {
      stopped_after = i + 1;
      break;
    }
  }
  CHECK(stopped_after == 7);
  CHECK(s.best_epoch() == 2);
  CHECK(s.best() == 2.5);

  // Monotone decreasing with patience >= epochs: never stops, best = last.
  training::EarlyStopper m(10);
  for (std::size_t e = 1; e <= 10; ++e) {
    m.observe(e, 5.0 - static_cast<double>(e) * 0.1);
    CHECK_FALSE(m.should_stop());
  }
  CHECK(m.best_epoch() == 10);
}

TEST_CASE("evaluate_nll of a uniform model is ln vocab size") {
  const std::size_t v = 50;
  const training::Checkpoint ckpt = testsupport::uniform_checkpoint(30, v);
  const auto examples = small_examples(12, 5, 30, v);
  const double nll =
      training::evaluate_nll(ckpt.params, ckpt.config, examples, 4);
  CHECK(nll == doctest::Approx(std::log(static_cast<double>(v))).epsilon(1e-12));
}

TEST_CASE("evaluate_nll is independent of batch partition and example order") {
  const ModelConfig config = testsupport::tiny_transformer_config(20, 15);
  const ModelParams params = models::init_params(config, 9);
  const auto examples = small_examples(13, 6);

  const double full = training::evaluate_nll(params, config, examples, 64);
  const double single = training::evaluate_nll(params, config, examples, 1);
  const double odd = training::evaluate_nll(params, config, examples, 5);
  CHECK(std::abs(full - single) <= 1e-10);
  CHECK(std::abs(full - odd) <= 1e-10);

  auto reordered = examples;
  std::reverse(reordered.begin(), reordered.end());
  const double rev = training::evaluate_nll(params, config, reordered, 4);
  CHECK(std::abs(full - rev) <= 1e-10);

  CHECK_THROWS_AS(training::evaluate_nll(params, config, {}, 4),
                  DegenerateInputError);
}

TEST_CASE("train_epoch with lr 0 keeps parameters and reproduces eval NLL") {
  const ModelConfig config = testsupport::tiny_transformer_config(20, 15);
  ModelParams params = models::init_params(config, 4);
  const std::vector<double> before = params.flat_values();
  const auto examples = small_examples(10, 8);

  tensor::AdamState opt = tensor::AdamState::init(params.total_size(), 0.0,
                                                  0.0001);
  TrainConfig t = fast_train_config();
  t.base_lr = 0.0;
  const double train_nll = training::train_epoch(params, config, opt,
                                                 examples, t, 1);
  CHECK(params.flat_values() == before);
  const double eval_nll =
      training::evaluate_nll(params, config, examples, t.batch_size);
  CHECK(train_nll == doctest::Approx(eval_nll).epsilon(1e-9));
}

TEST_CASE("one batch, one step: train NLL equals the pre-step eval NLL") {
  const ModelConfig config = testsupport::tiny_transformer_config(18, 12);
  ModelParams params = models::init_params(config, 14);
  const auto examples = small_examples(6, 3, 18, 12);
  const double before =
      training::evaluate_nll(params, config, examples, 64);

  tensor::AdamState opt = tensor::AdamState::init(params.total_size(), 0.005,
                                                  0.0001);
  TrainConfig t;
  t.batch_size = 64;  // single batch
  const double train_nll =
      training::train_epoch(params, config, opt, examples, t, 1);
  CHECK(train_nll == doctest::Approx(before).epsilon(1e-9));
  CHECK(opt.t == 1);
}

TEST_CASE("train NLL decreases over the first epochs of a small corpus") {
  const auto corpus32 = testsupport::topic_corpus(32, 8, 77);
  const auto prepared = testsupport::prepare_corpus(corpus32, 7);
  // Train on everything to mirror a pure-optimization check.
  std::vector<EncodedExample> all = prepared.fit.train;
  all.insert(all.end(), prepared.fit.validation.begin(),
             prepared.fit.validation.end());
  ModelConfig config = testsupport::tiny_transformer_config(
      prepared.fit.track_vocab.size(), prepared.fit.word_vocab.size());
  config.embed_dim = 16;
  config.hidden_dim = 32;
  ModelParams params = models::init_params(config, 5);
  tensor::AdamState opt = tensor::AdamState::init(params.total_size(), 0.005,
                                                  0.0001);
  TrainConfig t;
  t.batch_size = 64;
  std::vector<double> nll;
  for (std::size_t epoch = 1; epoch <= 5; ++epoch)
    nll.push_back(training::train_epoch(params, config, opt, all, t, epoch));
  for (std::size_t i = 1; i < nll.size(); ++i) CHECK(nll[i] < nll[i - 1]);
}

TEST_CASE("fit returns the best-validation parameters and a consistent log") {
  const auto corpus64 = testsupport::topic_corpus(64, 8, 123);
  const auto prepared = testsupport::prepare_corpus(corpus64, 7);
  ModelConfig config = testsupport::tiny_transformer_config(
      prepared.fit.track_vocab.size(), prepared.fit.word_vocab.size());
  TrainConfig t;
  t.batch_size = 16;
  t.max_epochs = 6;
  t.patience = 2;

  const training::FitResult result = training::fit(config, t, prepared.fit);
  REQUIRE_FALSE(result.log.epochs.empty());

  double best = result.log.epochs.front().val_nll;
  for (const auto& r : result.log.epochs) best = std::min(best, r.val_nll);
  CHECK(result.checkpoint.meta.best_val_nll == best);

  // The checkpoint really holds the best epoch's parameters.
  const double reeval = training::evaluate_nll(
      result.checkpoint.params, config, prepared.fit.validation, t.batch_size);
  CHECK(reeval == doctest::Approx(best).epsilon(1e-12));

  // Early stopping never returns params worse than any recorded epoch.
  for (const auto& r : result.log.epochs)
    CHECK(result.checkpoint.meta.best_val_nll <= r.val_nll);

  // Epochs strictly increasing, lr positive and non-increasing.
  for (std::size_t i = 1; i < result.log.epochs.size(); ++i) {
    CHECK(result.log.epochs[i].epoch == result.log.epochs[i - 1].epoch + 1);
    CHECK(result.log.epochs[i].lr <= result.log.epochs[i - 1].lr);
    CHECK(result.log.epochs[i].lr > 0.0);
  }

  // The JSONL log parses per line with the expected fields.
  const std::string jsonl = training::train_log_jsonl(result.log);
  std::istringstream lines(jsonl);
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("epoch"));
    CHECK(j.contains("train_nll"));
    CHECK(j.contains("val_nll"));
    CHECK(j.contains("lr"));
    CHECK(j.contains("seconds"));
    ++count;
  }
  CHECK(count == result.log.epochs.size());
}

TEST_CASE("fit is reproducible given fixed seeds") {
  const auto corpus48 = testsupport::topic_corpus(48, 6, 55);
  const auto prepared = testsupport::prepare_corpus(corpus48, 3);
  ModelConfig config = testsupport::tiny_transformer_config(
      prepared.fit.track_vocab.size(), prepared.fit.word_vocab.size());
  TrainConfig t;
  t.batch_size = 16;
  t.max_epochs = 3;
  t.patience = 3;
  t.shuffle_augment = true;

  const training::FitResult a = training::fit(config, t, prepared.fit);
  const training::FitResult b = training::fit(config, t, prepared.fit);
  CHECK(a.checkpoint.params.flat_values() == b.checkpoint.params.flat_values());
  REQUIRE(a.log.epochs.size() == b.log.epochs.size());
  for (std::size_t i = 0; i < a.log.epochs.size(); ++i) {
    CHECK(a.log.epochs[i].train_nll == b.log.epochs[i].train_nll);
    CHECK(a.log.epochs[i].val_nll == b.log.epochs[i].val_nll);
    CHECK(a.log.epochs[i].lr == b.log.epochs[i].lr);
  }
}

TEST_CASE("delete-pos evaluation is invariant under source shuffling") {
  const auto corpus40 = testsupport::topic_corpus(40, 5, 99);
  const auto prepared = testsupport::prepare_corpus(corpus40, 7);
  ModelConfig config = testsupport::tiny_transformer_config(
      prepared.fit.track_vocab.size(), prepared.fit.word_vocab.size());
  config.encoder_positional_encoding = false;
  const ModelParams params = models::init_params(config, 17);

  std::vector<EncodedExample> shuffled;
  for (std::size_t i = 0; i < prepared.fit.validation.size(); ++i)
    shuffled.push_back(
        corpus::shuffle_tracks(prepared.fit.validation[i], 1000 + i));
  const double base = training::evaluate_nll(params, config,
                                             prepared.fit.validation, 8);
  const double perm = training::evaluate_nll(params, config, shuffled, 8);
  CHECK(std::abs(base - perm) <= 1e-9);
}

TEST_CASE("non-finite loss aborts with a diagnostic naming the batch") {
  const ModelConfig config = testsupport::tiny_transformer_config(16, 12);
  ModelParams params = models::init_params(config, 2);
  auto& w = params.at("out.w").values_mut();
  for (auto& x : w) x = 1e308;  // force overflow in the logits
  const auto examples = small_examples(4, 2, 16, 12);
  tensor::AdamState opt = tensor::AdamState::init(params.total_size());
  TrainConfig t = fast_train_config();
  try {
    training::train_epoch(params, config, opt, examples, t, 3);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("batch") != std::string::npos);
    CHECK(msg.find("epoch 3") != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  const auto corpus30 = testsupport::topic_corpus(30, 5, 31);
  const auto prepared = testsupport::prepare_corpus(corpus30, 7);
  ModelConfig config = testsupport::tiny_rnn_config(
      prepared.fit.track_vocab.size(), prepared.fit.word_vocab.size());
  TrainConfig t;
  t.batch_size = 8;
  t.max_epochs = 2;
  t.patience = 2;
  const training::FitResult result = training::fit(config, t, prepared.fit);

  const fs::path dir = temp_dir();
  const std::string path = (dir / "model.ssq").string();
  training::save_checkpoint(result.checkpoint, path);
  const training::Checkpoint loaded = training::load_checkpoint(path);

  CHECK(loaded.params.flat_values() ==
        result.checkpoint.params.flat_values());
  CHECK(loaded.track_vocab.tokens() ==
        result.checkpoint.track_vocab.tokens());
  CHECK(loaded.word_vocab.tokens() == result.checkpoint.word_vocab.tokens());
  CHECK(loaded.meta.best_epoch == result.checkpoint.meta.best_epoch);
  CHECK(loaded.config.architecture == config.architecture);

  const double a = training::evaluate_nll(result.checkpoint.params, config,
                                          prepared.fit.validation, 8);
  const double b = training::evaluate_nll(loaded.params, loaded.config,
                                          prepared.fit.validation, 8);
  CHECK(std::abs(a - b) <= 1e-12);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint loading fails loudly on damage") {
  const training::Checkpoint ckpt = testsupport::uniform_checkpoint(12, 10);
  const fs::path dir = temp_dir();
  const std::string path = (dir / "ok.ssq").string();
  training::save_checkpoint(ckpt, path);

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  in.close();

  {  // truncation: no partial checkpoint comes back
    const std::string cut = (dir / "cut.ssq").string();
    std::ofstream out(cut, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 37));
    out.close();
    CHECK_THROWS_AS(training::load_checkpoint(cut), CheckpointTruncatedError);
  }
  {  // bad magic
    std::string bad = bytes;
    bad[0] = 'X';
    const std::string p = (dir / "magic.ssq").string();
    std::ofstream out(p, std::ios::binary);
    out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
    out.close();
    CHECK_THROWS_AS(training::load_checkpoint(p), CheckpointCorruptError);
  }
  {  // version bump
    std::string bad = bytes;
    bad[4] = 9;
    const std::string p = (dir / "version.ssq").string();
    std::ofstream out(p, std::ios::binary);
    out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
    out.close();
    CHECK_THROWS_AS(training::load_checkpoint(p), CheckpointVersionError);
  }
  {  // trailing garbage
    std::string bad = bytes + "zzz";
    const std::string p = (dir / "trail.ssq").string();
    std::ofstream out(p, std::ios::binary);
    out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
    out.close();
    CHECK_THROWS_AS(training::load_checkpoint(p), CheckpointCorruptError);
  }
  fs::remove_all(dir);
}

TEST_CASE("augment copies extend the train set deterministically") {
  const auto corpus20 = testsupport::topic_corpus(20, 4, 66);
  const auto prepared = testsupport::prepare_corpus(corpus20, 7);
  ModelConfig config = testsupport::tiny_transformer_config(
      prepared.fit.track_vocab.size(), prepared.fit.word_vocab.size());
  TrainConfig t;
  t.batch_size = 64;
  t.max_epochs = 1;
  t.patience = 1;
  t.augment_copies = 2;
  const training::FitResult a = training::fit(config, t, prepared.fit);
  const training::FitResult b = training::fit(config, t, prepared.fit);
  CHECK(a.checkpoint.params.flat_values() == b.checkpoint.params.flat_values());
}
