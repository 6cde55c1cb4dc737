#include "titlegen/training/training.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "titlegen/errors.hpp"
#include "titlegen/tensor/ops.hpp"

namespace titlegen::training {

using corpus::EncodedExample;
using models::ModelConfig;
using models::ModelParams;
using tensor::Rng;

namespace {

// Neumaier-compensated accumulator; keeps evaluation sums independent of
// example order well below the contract tolerances.
struct KahanSum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + comp; }
};

}  // namespace

void TrainConfig::validate() const {
  if (base_lr < 0.0) throw ConfigError("base_lr must be >= 0");
  if (lr_decay < 0.0) throw ConfigError("lr_decay must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (max_epochs == 0) throw ConfigError("max_epochs must be >= 1");
  if (patience == 0) throw ConfigError("patience must be >= 1");
  if (patience > max_epochs)
    throw ConfigError("patience must not exceed max_epochs");
  if (grad_clip_norm < 0.0) throw ConfigError("grad_clip_norm must be >= 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
}

std::string train_log_jsonl(const TrainLog& log) {
  std::ostringstream out;
  for (const EpochRecord& r : log.epochs) {
    nlohmann::json j{{"epoch", r.epoch},
                     {"train_nll", r.train_nll},
                     {"val_nll", r.val_nll},
                     {"lr", r.lr},
                     {"seconds", r.seconds}};
    out << j.dump() << '\n';
  }
  return out.str();
}

void EarlyStopper::observe(std::size_t epoch, double val_nll) {
  if (best_epoch_ == 0 || val_nll < best_) {
    best_ = val_nll;
    best_epoch_ = epoch;
    since_best_ = 0;
  } else {
    ++since_best_;
  }
}

double evaluate_nll(const ModelParams& params, const ModelConfig& config,
                    const std::vector<EncodedExample>& examples,
                    std::size_t batch_size) {
  if (examples.empty())
    throw DegenerateInputError("evaluate_nll: no examples");
  KahanSum total;
  std::size_t tokens = 0;
  for (const corpus::Batch& batch :
       corpus::make_eval_batches(examples, batch_size)) {
    const tensor::Tensor logits = models::model_forward(params, config, batch);
    const std::vector<int> targets = models::shifted_targets(batch);
    const tensor::NllSum part =
        tensor::cross_entropy_sum(logits, targets, corpus::Vocab::kPad);
    total.add(part.sum);
    tokens += part.count;
  }
  if (tokens == 0)
    throw DegenerateInputError("evaluate_nll: no target tokens");
  return total.value() / static_cast<double>(tokens);
}

double train_epoch(ModelParams& params, const ModelConfig& model_config,
                   tensor::AdamState& opt_state,
                   const std::vector<EncodedExample>& train,
                   const TrainConfig& config, std::size_t epoch_index) {
  if (train.empty()) throw DegenerateInputError("train_epoch: no examples");
  const std::uint64_t epoch_seed = config.epoch_seed_base + epoch_index;

  const std::vector<EncodedExample>* examples = &train;
  std::vector<EncodedExample> shuffled;
  if (config.shuffle_augment) {
    shuffled.reserve(train.size());
    for (std::size_t i = 0; i < train.size(); ++i)
      shuffled.push_back(
          corpus::shuffle_tracks(train[i], Rng::mix(epoch_seed, i + 1)));
    examples = &shuffled;
  }

  Rng dropout_rng(Rng::mix(epoch_seed, 0xd70));
  Rng* rng = model_config.dropout_rate > 0.0 ? &dropout_rng : nullptr;

  KahanSum total;
  std::size_t tokens = 0;
  std::size_t batch_index = 0;
  for (const corpus::Batch& batch :
       corpus::make_batches(*examples, config.batch_size, epoch_seed)) {
    tensor::Tape tape;
    const tensor::Tensor logits =
        models::model_forward(params, model_config, batch, rng);
    const std::vector<int> targets = models::shifted_targets(batch);
    const tensor::Tensor loss =
        tensor::cross_entropy_nll(logits, targets, corpus::Vocab::kPad);
    if (!std::isfinite(loss.item())) {
      std::ostringstream msg;
      msg << "non-finite training loss in epoch " << epoch_index << ", batch "
          << batch_index;
      throw NumericError(msg.str());
    }
    std::size_t batch_tokens = 0;
    for (int t : targets)
      if (t != corpus::Vocab::kPad) ++batch_tokens;
    total.add(loss.item() * static_cast<double>(batch_tokens));
    tokens += batch_tokens;

    params.zero_grads();
    tape.backward(loss);

    std::vector<double> grads = params.flat_grads();
    if (config.grad_clip_norm > 0.0) {
      double sq = 0.0;
      for (double g : grads) sq += g * g;
      const double norm = std::sqrt(sq);
      if (norm > config.grad_clip_norm) {
        const double scale = config.grad_clip_norm / norm;
        for (double& g : grads) g *= scale;
      }
    }
    std::vector<double> flat = params.flat_values();
    tensor::adam_step(flat, grads, opt_state);
    params.set_flat_values(flat);
    ++batch_index;
  }
  return total.value() / static_cast<double>(tokens);
}

FitResult fit(const ModelConfig& model_config, const TrainConfig& train_config,
              const FitData& data) {
  model_config.validate();
  train_config.validate();
  if (data.train.empty() || data.validation.empty())
    throw DegenerateInputError("fit: train and validation must be non-empty");

  std::vector<EncodedExample> train = data.train;
  for (std::size_t c = 1; c <= train_config.augment_copies; ++c)
    for (std::size_t i = 0; i < data.train.size(); ++i)
      train.push_back(corpus::shuffle_tracks(
          data.train[i],
          Rng::mix(train_config.init_seed, c * data.train.size() + i)));

  ModelParams params = models::init_params(model_config,
                                           train_config.init_seed);
  tensor::AdamState opt = tensor::AdamState::init(
      params.total_size(), train_config.base_lr, train_config.lr_decay);
  opt.weight_decay = train_config.weight_decay;

  EarlyStopper stopper(train_config.patience);
  TrainLog log;
  std::vector<double> best_flat = params.flat_values();
  double best_val = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;

  for (std::size_t epoch = 1; epoch <= train_config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double train_nll = train_epoch(params, model_config, opt, train,
                                         train_config, epoch);
    const double val_nll = evaluate_nll(params, model_config, data.validation,
                                        train_config.batch_size);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    log.epochs.push_back(
        {epoch, train_nll, val_nll, opt.current_lr(), seconds});
    epochs_run = epoch;

    stopper.observe(epoch, val_nll);
    if (stopper.best_epoch() == epoch) {
      best_flat = params.flat_values();
      best_val = val_nll;
      best_epoch = epoch;
    }
    if (stopper.should_stop()) break;
  }

  FitResult result;
  result.checkpoint.config = model_config;
  result.checkpoint.params = params.clone();
  result.checkpoint.params.set_flat_values(best_flat);
  result.checkpoint.track_vocab = data.track_vocab;
  result.checkpoint.word_vocab = data.word_vocab;
  result.checkpoint.meta = {best_epoch,
                            best_val,
                            epochs_run,
                            data.split_seed,
                            train_config.init_seed,
                            train_config.epoch_seed_base};
  result.log = std::move(log);
  return result;
}

}  // namespace titlegen::training
