#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "debias/corpus.hpp"
#include "debias/encoder.hpp"
#include "debias/geometry.hpp"
#include "debias/tokenizer.hpp"

namespace debias {

struct TuneConfig {
  double lambda = 7.0 / 3.0;
  double rho = 15.0;
  double learning_rate = 5e-5;
  std::size_t batch_size = 32;
  std::size_t prefix_length = 40;
  std::size_t max_epochs = 10;
  std::size_t checkpoint_every_steps = 500;
  std::uint64_t seed = 0;
  LayerSelector layer = LayerSelector::kFinal;
  RepresentationMode representation = RepresentationMode::kBatchNeighbors;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm clip; 0 disables clipping.
  double clip_norm = 0.0;
  /// Fraction of every slice held out for the evaluation batch.
  double heldout_fraction = 0.05;
  /// Hard stop after this many steps; 0 means run all epochs.
  std::size_t max_steps = 0;

  /// Throws InvalidConfig. `d` is the number of attributes.
  void validate(std::size_t d) const;

  /// Sentences drawn per attribute slice; the rest of the batch is neutral.
  std::size_t per_attribute(std::size_t d) const;

  /// "key = value" lines, one per field.
  std::string describe() const;
};

/// Training pools: neutral records and, per attribute, the records of all its
/// buckets in bucket order.
struct SlicePools {
  std::vector<SentenceRecord> neutral;
  std::vector<std::vector<SentenceRecord>> attributes;
};

SlicePools pools_from(const CorpusSlices& slices);

/// Splits `fraction` of every pool (at least one record when the pool has two
/// or more) into the held-out side, chosen by seed.
std::pair<SlicePools, SlicePools> split_heldout(const SlicePools& pools, double fraction,
                                                std::uint64_t seed);

/// A batch entry: a record and the slice it was drawn from (-1 = neutral).
struct BatchItem {
  const SentenceRecord* record = nullptr;
  int slice = -1;
};

/// Deterministic stratified sampler: the batch for a given step depends only
/// on (seed, pools, config, step). Each pool is consumed as a sequence of
/// seeded permutations, restarted every epoch.
class BatchSampler {
 public:
  /// Throws InsufficientCorpus if any pool is empty.
  BatchSampler(const SlicePools& pools, const TuneConfig& config);

  std::vector<BatchItem> batch(std::size_t step) const;

  /// One epoch is one pass over the smallest attribute pool.
  std::size_t steps_per_epoch() const { return steps_per_epoch_; }

 private:
  std::size_t draw(int pool, std::size_t epoch, std::size_t index) const;

  const SlicePools& pools_;
  std::uint64_t seed_;
  std::size_t per_attribute_;
  std::size_t neutral_count_;
  std::size_t steps_per_epoch_;
  mutable std::map<std::tuple<int, std::size_t, std::size_t>, std::vector<std::size_t>> perms_;
};

/// assemble_batch as a free function over the sampler.
std::vector<BatchItem> assemble_batch(const SlicePools& pools, const TuneConfig& config,
                                      std::size_t step);

struct TrainState {
  std::size_t step = 0;
  std::size_t epoch = 0;
  PromptParameters prompt;
  Eigen::VectorXd adam_m;
  Eigen::VectorXd adam_v;
  LossBreakdown last_loss;
  double last_grad_norm = 0.0;

  static TrainState initial(const EncoderSpec& spec, const TuneConfig& config);
};

/// Binary resume state (prompt and optimizer moments at full precision).
void write_train_state(const std::filesystem::path& path, const TrainState& state);
TrainState read_train_state(const std::filesystem::path& path);

struct StepResult {
  LossBreakdown loss;
  double grad_norm = 0.0;
  Eigen::VectorXd gradient;
};

/// Runs the debiasing objective over batches for one encoder/tokenizer pair.
/// Frozen-encoder occurrence embeddings are cached per record.
class PromptTuner {
 public:
  PromptTuner(const DifferentiableEncoder& encoder, const Tokenizer& tokenizer,
              TuneConfig config);

  const TuneConfig& config() const { return config_; }

  /// Loss and gradient of the objective at `prompt` (no update).
  StepResult evaluate(const std::vector<BatchItem>& batch, const PromptParameters& prompt,
                      bool with_gradient) const;

  /// One Adam update of the prompt. Throws NonFiniteLoss.
  LossBreakdown train_step(TrainState& state, const std::vector<BatchItem>& batch) const;

 private:
  struct Occurrence {
    std::size_t item;
    std::size_t match;
    int slice;          // -1 neutral
    std::size_t group;  // neutral word index or attribute index
  };

  const TokenizedSentence& tokens(const SentenceRecord& record) const;
  const RowMatrix& frozen_embeddings(const SentenceRecord& record) const;

  const DifferentiableEncoder& encoder_;
  const Tokenizer& tokenizer_;
  TuneConfig config_;
  mutable std::map<const SentenceRecord*, TokenizedSentence> token_cache_;
  mutable std::map<const SentenceRecord*, RowMatrix> frozen_cache_;
};

struct TrailEntry {
  std::size_t step = 0;
  std::filesystem::path path;
  LossBreakdown eval;
};

struct CheckpointTrail {
  std::vector<TrailEntry> entries;
};

struct TuneIo {
  std::filesystem::path checkpoint_dir;
  std::ostream* metrics = nullptr;  // one line per step
  /// Resume from this train-state file instead of a fresh prompt.
  std::optional<std::filesystem::path> resume_state;
};

/// Full run: held-out split, initial checkpoint, epochs of train_step with
/// checkpoints every `checkpoint_every_steps` and at each epoch end. Writes
/// trail.tsv into the checkpoint directory.
CheckpointTrail tune(const CorpusSlices& slices, const DifferentiableEncoder& encoder,
                     const Tokenizer& tokenizer, const TuneConfig& config, const TuneIo& io);

/// Steps at which tune() writes checkpoints, given the total step count.
std::vector<std::size_t> checkpoint_schedule(std::size_t total_steps, std::size_t every,
                                             std::size_t steps_per_epoch);

enum class CheckpointPolicy { kEarly, kFinal };

/// kEarly: first entry at or after `early_step` (else the last entry);
/// kFinal: last entry. Throws EmptyTrail.
const TrailEntry& select_checkpoint(const CheckpointTrail& trail, CheckpointPolicy policy,
                                    std::size_t early_step = 500);

void write_trail(const std::filesystem::path& path, const CheckpointTrail& trail);
CheckpointTrail read_trail(const std::filesystem::path& path);

}  // namespace debias
