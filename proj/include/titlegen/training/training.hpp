#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "titlegen/corpus/corpus.hpp"
#include "titlegen/models/model.hpp"
#include "titlegen/tensor/adam.hpp"

namespace titlegen::training {

struct TrainConfig {
  double base_lr = 0.005;
  double lr_decay = 0.0001;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  std::uint64_t init_seed = 1;
  std::uint64_t epoch_seed_base = 1000;
  bool shuffle_augment = false;     // fresh source permutation every epoch
  std::size_t augment_copies = 0;   // static shuffled copies, for ablation
  double grad_clip_norm = 5.0;      // global-norm clip; 0 disables
  double weight_decay = 0.0;        // decoupled; off by default

  // base_lr == 0 is allowed (frozen parameters, used by tests).
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_nll = 0.0;
  double val_nll = 0.0;
  double lr = 0.0;  // effective lr after the epoch's last step
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

// One record per line: {"epoch":..,"train_nll":..,"val_nll":..,"lr":..,
// "seconds":..}
std::string train_log_jsonl(const TrainLog& log);

// Tracks the best validation NLL; stop() turns true once `patience`
// consecutive epochs failed to improve on the best.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  void observe(std::size_t epoch, double val_nll);
  bool should_stop() const { return since_best_ >= patience_; }
  bool has_best() const { return best_epoch_ != 0; }
  double best() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }

 private:
  std::size_t patience_;
  double best_ = 0.0;
  std::size_t best_epoch_ = 0;  // 0: nothing observed yet
  std::size_t since_best_ = 0;
};

// Teacher-forced mean NLL per non-PAD target token (words and EOS; BOS is
// input only). Deterministic and independent of the batch partition.
double evaluate_nll(const models::ModelParams& params,
                    const models::ModelConfig& config,
                    const std::vector<corpus::EncodedExample>& examples,
                    std::size_t batch_size = 64);

// One pass over the training set: seeded batch shuffle, optional per-epoch
// source shuffling, one Adam step per batch. Returns the token-weighted mean
// training NLL (losses measured before each step). Throws NumericError
// naming the batch when the loss turns non-finite.
double train_epoch(models::ModelParams& params,
                   const models::ModelConfig& model_config,
                   tensor::AdamState& opt_state,
                   const std::vector<corpus::EncodedExample>& train,
                   const TrainConfig& config, std::size_t epoch_index);

struct CheckpointMeta {
  std::size_t best_epoch = 0;
  double best_val_nll = 0.0;
  std::size_t epochs_run = 0;
  std::uint64_t split_seed = 0;
  std::uint64_t init_seed = 0;
  std::uint64_t epoch_seed_base = 0;
};

struct Checkpoint {
  models::ModelConfig config;
  models::ModelParams params;
  corpus::Vocab track_vocab;
  corpus::Vocab word_vocab;
  CheckpointMeta meta;
};

struct FitData {
  std::vector<corpus::EncodedExample> train;
  std::vector<corpus::EncodedExample> validation;
  corpus::Vocab track_vocab;
  corpus::Vocab word_vocab;
  std::uint64_t split_seed = 0;
};

struct FitResult {
  Checkpoint checkpoint;  // parameters of the best validation epoch
  TrainLog log;
};

FitResult fit(const models::ModelConfig& model_config,
              const TrainConfig& train_config, const FitData& data);

}  // namespace titlegen::training
