#pragma once

// Optimisation and the walk-forward protocol: Adam, shuffled mini-batches,
// early stopping on a chronological validation tail, random search over a
// hyperparameter grid and yearly expanding-window retraining.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pt/benchmarks.hpp"
#include "pt/data.hpp"
#include "pt/metrics.hpp"
#include "pt/model/sequence_model.hpp"
#include "pt/objective.hpp"

namespace pt {

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;  // first moments, one per parameter
  std::vector<std::vector<double>> v;  // second moments
};

// One bias-corrected Adam update of every parameter from its accumulated
// gradient (a parameter without a gradient is treated as zero gradient).
// Moments are sized on the first call; later shape changes throw
// DimensionError.
void adam_step(std::span<const Tensor> params, AdamState& state);

// Shuffled index batches of [0, count); the last batch may be short.
std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size,
                                                   std::uint64_t seed);

// Per-asset multipliers applied to model inputs (never to realized returns).
// Daily returns are ~1e-2 in size; rescaling them to unit variance keeps the
// input projection from being swamped by the positional features.
struct InputScaling {
  std::vector<double> factor;

  // 1 / population sd of each column over rows [0, end); 1 for a flat column.
  static InputScaling from_rows(const ReturnTable& table, std::size_t end);
  static InputScaling identity(std::size_t n_assets);
};

// One training example. The decision is taken at the close of return row t:
// x_dec holds rows t-window+1..t, x_enc the window before that, and the
// target's realized rows are t-window+2..t+1, so decoder row j is scored
// against the day after its own last input.
struct Sample {
  std::size_t decision_row = 0;
  Tensor x_enc;
  Tensor x_dec;
  ReturnsWindow target;
};

Sample make_sample(const ReturnTable& table, std::size_t decision_row, std::size_t window,
                   const InputScaling* scaling = nullptr);

// Encoder and decoder inputs for a decision at row t.
std::pair<Tensor, Tensor> model_inputs(const ReturnTable& table, std::size_t decision_row,
                                       std::size_t window, const InputScaling* scaling = nullptr);

// Stride-one samples whose realized rows all fall inside [begin, end).
std::vector<Sample> samples_between(const ReturnTable& table, std::size_t window,
                                    std::size_t begin, std::size_t end,
                                    const InputScaling* scaling = nullptr);

struct TrainConfig {
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  double validation_fraction = 0.10;
  std::uint64_t seed = 0;
  CostModel costs;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 0 is the untrained model
  double train_loss = 0.0;
  double valid_loss = 0.0;
};

struct FitResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_valid_loss = 0.0;
  bool stopped_early = false;
};

// Mean Sharpe loss over samples, inference mode, no graph.
double evaluate_loss(const SequenceModel& model, std::span<const Sample> samples,
                     const CostModel& costs);

// Trains in place. After every epoch the full train and validation losses are
// recorded; training stops after `patience` epochs without a validation
// improvement or at max_epochs, and the parameters of the best epoch (>= 1)
// are restored. A non-finite batch loss throws NumericError naming the epoch
// and batch.
FitResult fit(SequenceModel& model, std::span<const Sample> train, std::span<const Sample> valid,
              const TrainConfig& cfg);

struct HyperParams {
  std::size_t d_model = 8;
  std::size_t n_heads = 1;
  std::size_t t2v_k = 1;
  std::size_t n_layers = 1;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double dropout = 0.0;

  bool operator==(const HyperParams&) const = default;
};

struct HyperparamSpace {
  std::vector<std::size_t> d_model{8, 16, 32};
  std::vector<std::size_t> n_heads{1, 2, 4};
  std::vector<std::size_t> t2v_k{1, 2, 4};
  std::vector<std::size_t> n_layers{1, 2, 4};
  std::vector<std::size_t> batch_size{32, 64, 128};
  std::vector<double> learning_rate{1e-2, 1e-3, 1e-4};
  std::vector<double> dropout{0.0, 0.1, 0.2};
  std::size_t budget = 100;

  static HyperparamSpace single(const HyperParams& hp, std::size_t budget = 1);
  // Every combination must make a valid model of `kind`; throws ContractError.
  void validate(const std::string& kind) const;
  std::size_t combinations() const;
  // Keys as the member names; missing keys keep their defaults.
  static HyperparamSpace from_json(std::istream& in);
};

// Model spec for `kind` built from sampled hyperparameters.
ModelSpec spec_for(const std::string& kind, std::size_t n_assets, std::size_t window,
                   const HyperParams& hp, AttentionScale scale, std::uint64_t seed);

struct TrialRecord {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  HyperParams params;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double seconds = 0.0;
};

struct SearchConfig {
  std::string kind = "pt";
  std::size_t n_assets = 0;
  std::size_t window = 0;
  AttentionScale scale = AttentionScale::d_model;
  TrainConfig train;  // batch_size, learning_rate and seed are per trial
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

struct SearchResult {
  HyperParams best;
  std::size_t best_index = 0;
  std::vector<TrialRecord> trials;
  std::unique_ptr<SequenceModel> model;  // the winning trial's trained model
  FitResult fit;
};

// Samples space.budget combinations uniformly with replacement, trains each
// with seed = cfg.seed + trial index and keeps the lowest validation loss
// (earliest trial on ties). Trials run on up to cfg.jobs threads.
SearchResult random_grid_search(const HyperparamSpace& space, std::span<const Sample> train,
                                std::span<const Sample> valid, const SearchConfig& cfg);

void write_trials_csv(std::ostream& out, std::span<const TrialRecord> trials, int test_year = 0);

inline const std::vector<std::string>& strategy_names() {
  static const std::vector<std::string> names{"pt", "lstm", "mlp", "mv", "equal_weight"};
  return names;
}
bool is_trained_strategy(const std::string& name);

struct WalkForwardConfig {
  std::string strategy = "pt";
  std::size_t window = 20;
  int first_test_year = 0;
  AttentionScale scale = AttentionScale::d_model;
  HyperparamSpace space;
  TrainConfig train;  // costs also drive the backtest
  MVConfig mv;
  std::uint64_t seed = 0;
  bool search_every_split = true;
  std::size_t jobs = 1;
};

struct SplitOutcome {
  Split split;
  HyperParams params;
  std::vector<TrialRecord> trials;  // empty when reusing an earlier search
  FitResult fit;
  InputScaling scaling;
  std::shared_ptr<const SequenceModel> model;  // null for untrained strategies
};

struct WalkForwardResult {
  WeightStream weights;
  EquityCurve curve;
  std::vector<SplitOutcome> splits;
};

// Yearly expanding-window protocol: for each split, standardise inputs with
// statistics of the rows before the test year, search and fit on them, then emit one weight row per test day from the last decoder
// position, and backtest the concatenated stream with cfg.train.costs.
WalkForwardResult walk_forward(const ReturnTable& table, const WalkForwardConfig& cfg,
                               const std::function<void(const SplitOutcome&)>& on_split = {});

}  // namespace pt
