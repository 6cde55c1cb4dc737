#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <vector>

#include "support/synthetic.hpp"
#include "titlegen/errors.hpp"
#include "titlegen/generation/generation.hpp"
#include "titlegen/tensor/ops.hpp"

using namespace titlegen;
using generation::GeneratedTitle;
using generation::GenerationRequest;

namespace {

GenerationRequest request_of(std::vector<std::string> tracks,
                             std::size_t max_length = 16) {
  GenerationRequest r;
  r.tracks = std::move(tracks);
  r.max_length = max_length;
  return r;
}

training::Checkpoint trained_checkpoint(bool encoder_pos, std::uint64_t seed) {
  const auto corpus = testsupport::topic_corpus(48, 6, 2024);
  const auto prepared = testsupport::prepare_corpus(corpus, 7);
  models::ModelConfig config = testsupport::tiny_transformer_config(
      prepared.fit.track_vocab.size(), prepared.fit.word_vocab.size());
  config.encoder_positional_encoding = encoder_pos;
  training::TrainConfig t;
  t.batch_size = 16;
  t.max_epochs = 4;
  t.patience = 4;
  t.init_seed = seed;
  return training::fit(config, t, prepared.fit).checkpoint;
}

}  // namespace

TEST_CASE("eos-rigged model emits an empty title whose total is log p(eos)") {
  const training::Checkpoint ckpt = testsupport::eos_checkpoint(16, 12);
  const GeneratedTitle title =
      generation::greedy_decode(ckpt, request_of({"t4", "t5", "t6"}));
  CHECK(title.tokens.empty());
  CHECK(title.token_logprobs.empty());
  CHECK(title.total_logprob < 0.0);
  // log p(eos) must dominate: with +40 on the EOS logit it is almost 0.
  CHECK(title.total_logprob > -1e-10);
}

TEST_CASE("greedy decoding is deterministic") {
  const training::Checkpoint ckpt = trained_checkpoint(true, 3);
  const GenerationRequest r =
      request_of({"trk2_1", "trk2_5", "trk2_9", "trk2_12"});
  const GeneratedTitle a = generation::greedy_decode(ckpt, r);
  const GeneratedTitle b = generation::greedy_decode(ckpt, r);
  CHECK(a.tokens == b.tokens);
  CHECK(a.total_logprob == b.total_logprob);
}

TEST_CASE("generation respects the length cap and never emits markers") {
  const training::Checkpoint ckpt = testsupport::uniform_checkpoint(16, 12);
  const GeneratedTitle t =
      generation::greedy_decode(ckpt, request_of({"t4", "t5"}, 3));
  CHECK(t.tokens.size() <= 3);
  for (const auto& tok : t.tokens) {
    CHECK(tok != "<eos>");
    CHECK(tok != "<bos>");
    CHECK(tok != "<pad>");
  }
  // Total always includes the EOS continuation term.
  double sum = 0.0;
  for (double lp : t.token_logprobs) sum += lp;
  CHECK(t.total_logprob < sum);  // the extra EOS term is negative
}

TEST_CASE("unknown tracks decode through UNK") {
  const training::Checkpoint ckpt = trained_checkpoint(true, 5);
  const GeneratedTitle t = generation::greedy_decode(
      ckpt, request_of({"never-seen-1", "never-seen-2"}));
  CHECK(t.tokens.size() <= 16);  // just has to produce a valid title
}

TEST_CASE("suppress-unk masks the unk token before the argmax") {
  // Rig UNK to dominate.
  training::Checkpoint ckpt = testsupport::uniform_checkpoint(16, 12);
  ckpt.params.at("out.b").values_mut()[corpus::Vocab::kUnk] = 40.0;
  ckpt.params.at("out.b").values_mut()[corpus::Vocab::kEos] = 20.0;
  const GenerationRequest r = request_of({"t4"}, 4);
  const GeneratedTitle with_unk = generation::greedy_decode(ckpt, r);
  CHECK(with_unk.tokens.size() == 4);
  CHECK(with_unk.tokens[0] == "<unk>");
  generation::GenerateOptions opt;
  opt.suppress_unk = true;
  const GeneratedTitle no_unk = generation::greedy_decode(ckpt, r, opt);
  CHECK(no_unk.tokens.empty());  // EOS is the next best
}

TEST_CASE("greedy property: each emitted token maximizes the step logprob") {
  const training::Checkpoint ckpt = trained_checkpoint(true, 11);
  const GenerationRequest r =
      request_of({"trk1_3", "trk1_7", "trk1_11", "trk1_2"});
  const GeneratedTitle title = generation::greedy_decode(ckpt, r);
  REQUIRE_FALSE(title.tokens.empty());

  // Teacher-force the emitted prefix and re-check the argmax at every step.
  corpus::Batch batch;
  batch.batch_size = 1;
  batch.source_len = r.tracks.size();
  for (const auto& t : r.tracks)
    batch.source.push_back(ckpt.track_vocab.id_of(t));
  batch.source_mask.assign(batch.source_len, 1);
  batch.source_lens = {batch.source_len};
  batch.target = {corpus::Vocab::kBos};
  for (const auto& tok : title.tokens)
    batch.target.push_back(ckpt.word_vocab.id_of(tok));
  batch.target.push_back(corpus::Vocab::kEos);
  batch.target_len = batch.target.size();
  batch.target_mask.assign(batch.target_len, 1);
  batch.target_lens = {batch.target_len};

  const tensor::Tensor logits =
      models::model_forward(ckpt.params, ckpt.config, batch);
  const std::size_t v = ckpt.config.target_vocab_size;
  for (std::size_t step = 0; step < title.tokens.size(); ++step) {
    const int emitted = ckpt.word_vocab.id_of(title.tokens[step]);
    double best = -1e300;
    int best_id = -1;
    for (std::size_t j = 0; j < v; ++j) {
      const int id = static_cast<int>(j);
      if (id == corpus::Vocab::kPad || id == corpus::Vocab::kBos) continue;
      if (logits.at(step, j) > best) {
        best = logits.at(step, j);
        best_id = static_cast<int>(j);
      }
    }
    CHECK(best_id == emitted);
  }
}

TEST_CASE("delete-pos checkpoints decode permutation-invariantly") {
  const training::Checkpoint ckpt = trained_checkpoint(false, 9);
  GenerationRequest r =
      request_of({"trk3_1", "trk3_4", "trk3_8", "trk3_13", "trk3_21"});
  const GeneratedTitle base = generation::greedy_decode(ckpt, r);
  for (int rot = 1; rot < 5; ++rot) {
    std::rotate(r.tracks.begin(), r.tracks.begin() + 1, r.tracks.end());
    const GeneratedTitle other = generation::greedy_decode(ckpt, r);
    CHECK(other.tokens == base.tokens);
    CHECK(other.total_logprob ==
          doctest::Approx(base.total_logprob).epsilon(1e-9));
  }
}

TEST_CASE("batch_generate maps requests and isolates failures") {
  const training::Checkpoint ckpt = testsupport::uniform_checkpoint(16, 12);
  const GenerationRequest good = request_of({"t4", "t5"}, 4);
  const GeneratedTitle single = generation::greedy_decode(ckpt, good);

  std::vector<GenerationRequest> requests{good, request_of({}, 4), good};
  const auto outcomes = generation::batch_generate(ckpt, requests);
  REQUIRE(outcomes.size() == 3);
  REQUIRE(outcomes[0].title.has_value());
  CHECK(outcomes[0].title->tokens == single.tokens);
  CHECK_FALSE(outcomes[1].title.has_value());
  CHECK_FALSE(outcomes[1].error.empty());
  REQUIRE(outcomes[2].title.has_value());
  CHECK(outcomes[2].title->tokens == outcomes[0].title->tokens);
  CHECK(outcomes[2].title->total_logprob == outcomes[0].title->total_logprob);

  CHECK_THROWS_AS(generation::batch_generate(ckpt, {}), DegenerateInputError);
  CHECK_THROWS_AS(generation::greedy_decode(ckpt, request_of({})),
                  DegenerateInputError);
}

TEST_CASE("a hundred requests on the paper-sized transformer fit the budget") {
  models::ModelConfig config;
  config.architecture = models::Arch::kTransformer;
  config.num_layers = 2;
  config.embed_dim = 128;
  config.hidden_dim = 256;
  config.num_heads = 4;
  config.source_vocab_size = 1000;
  config.target_vocab_size = 200;
  training::Checkpoint ckpt;
  ckpt.config = config;
  ckpt.params = models::init_params(config, 4);
  ckpt.track_vocab = testsupport::generic_vocab(1000);
  ckpt.word_vocab = testsupport::generic_vocab(200);

  tensor::Rng rng(31);
  std::vector<GenerationRequest> requests;
  for (int i = 0; i < 100; ++i) {
    GenerationRequest r;
    r.max_length = 16;
    const std::size_t n = 10 + rng.bounded(20);
    for (std::size_t j = 0; j < n; ++j)
      r.tracks.push_back("t" + std::to_string(4 + rng.bounded(996)));
    requests.push_back(std::move(r));
  }
  const auto start = std::chrono::steady_clock::now();
  const auto outcomes = generation::batch_generate(ckpt, requests);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  CHECK(outcomes.size() == 100);
  for (const auto& o : outcomes) CHECK(o.title.has_value());
  MESSAGE("100 requests took ", seconds, " s");
  CHECK(seconds < 10.0);
}
