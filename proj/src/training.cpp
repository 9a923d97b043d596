#include "pt/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "pt/errors.hpp"
#include "pt/model/portfolio_transformer.hpp"

namespace pt {
namespace {

Tensor rows_tensor(const ReturnTable& table, std::size_t begin, std::size_t end,
                   const InputScaling* scaling = nullptr) {
  const auto block = table.block(begin, end);
  std::vector<double> v(block.begin(), block.end());
  if (scaling) {
    const std::size_t n = table.cols();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= scaling->factor[i % n];
  }
  return Tensor::from({end - begin, table.cols()}, std::move(v));
}

using Snapshot = std::vector<std::vector<double>>;

Snapshot snapshot(const std::vector<NamedTensor>& params) {
  Snapshot s;
  s.reserve(params.size());
  for (const auto& p : params) s.emplace_back(p.value.data().begin(), p.value.data().end());
  return s;
}

void restore(const std::vector<NamedTensor>& params, const Snapshot& s) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i].value;
    std::copy(s[i].begin(), s[i].end(), p.mutable_data().begin());
  }
}

template <typename T>
void require_nonempty(const std::vector<T>& v, const char* name) {
  if (v.empty()) throw ContractError(std::string("hyperparameter space: no candidates for ") + name);
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  std::uniform_int_distribution<std::size_t> u(0, v.size() - 1);
  return v[u(rng)];
}

}  // namespace

void adam_step(std::span<const Tensor> params, AdamState& state) {
  if (state.m.empty()) {
    for (const Tensor& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) +
                         " parameters but state tracks " + std::to_string(state.m.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].size() ||
        (params[i].has_grad() && params[i].grad().size() != params[i].size())) {
      throw DimensionError("adam_step: shape mismatch for parameter " + std::to_string(i));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    const auto g = p.grad();
    const bool has = p.has_grad();
    auto w = p.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = has ? g[j] : 0.0;
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
      w[j] -= state.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + state.eps);
    }
  }
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size,
                                                   std::uint64_t seed) {
  if (count == 0) throw ContractError("make_batches: no samples");
  if (batch_size == 0) throw ContractError("make_batches: batch size must be at least 1");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < count; i += batch_size)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(count, i + batch_size)));
  return out;
}

InputScaling InputScaling::from_rows(const ReturnTable& table, std::size_t end) {
  if (end < 2 || end > table.rows()) throw ContractError("input scaling needs at least two rows");
  const std::size_t n = table.cols();
  InputScaling s;
  for (std::size_t c = 0; c < n; ++c) {
    double mean = 0.0, ss = 0.0;
    for (std::size_t r = 0; r < end; ++r) mean += table.at(r, c);
    mean /= static_cast<double>(end);
    for (std::size_t r = 0; r < end; ++r) ss += (table.at(r, c) - mean) * (table.at(r, c) - mean);
    const double sd = std::sqrt(ss / static_cast<double>(end));
    s.factor.push_back(sd > 0.0 ? 1.0 / sd : 1.0);
  }
  return s;
}

InputScaling InputScaling::identity(std::size_t n_assets) {
  return InputScaling{std::vector<double>(n_assets, 1.0)};
}

std::pair<Tensor, Tensor> model_inputs(const ReturnTable& table, std::size_t t, std::size_t window,
                                       const InputScaling* scaling) {
  if (window < 1 || t + 1 < 2 * window || t >= table.rows()) {
    throw ContractError("decision row " + std::to_string(t) + " lacks " +
                        std::to_string(2 * window) + " rows of history");
  }
  if (scaling && scaling->factor.size() != table.cols()) {
    throw DimensionError("input scaling width differs from the return table");
  }
  return {rows_tensor(table, t + 1 - 2 * window, t + 1 - window, scaling),
          rows_tensor(table, t + 1 - window, t + 1, scaling)};
}

Sample make_sample(const ReturnTable& table, std::size_t t, std::size_t window,
                   const InputScaling* scaling) {
  if (t + 1 >= table.rows()) {
    throw ContractError("make_sample: decision row " + std::to_string(t) + " has no next day");
  }
  Sample s;
  s.decision_row = t;
  std::tie(s.x_enc, s.x_dec) = model_inputs(table, t, window, scaling);
  s.target.realized = rows_tensor(table, t + 2 - window, t + 2);
  return s;
}

std::vector<Sample> samples_between(const ReturnTable& table, std::size_t window,
                                    std::size_t begin, std::size_t end,
                                    const InputScaling* scaling) {
  std::vector<Sample> out;
  if (window == 0) return out;
  // realized rows t-window+2 .. t+1 inside [begin, end)
  const std::size_t first = std::max(2 * window - 1, begin + window >= 2 ? begin + window - 2 : 0);
  for (std::size_t t = first; t + 2 <= end && t + 1 < table.rows(); ++t)
    out.push_back(make_sample(table, t, window, scaling));
  return out;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ContractError("batch_size must be at least 1");
  if (!(learning_rate >= 0.0)) throw ContractError("learning_rate must be non-negative");
  if (max_epochs < 1) throw ContractError("max_epochs must be at least 1");
  if (patience < 1) throw ContractError("patience must be at least 1");
  if (!(validation_fraction > 0.0 && validation_fraction < 0.5)) {
    throw ContractError("validation_fraction must be in (0, 0.5)");
  }
  costs.validate();
}

double evaluate_loss(const SequenceModel& model, std::span<const Sample> samples,
                     const CostModel& costs) {
  if (samples.empty()) throw ContractError("evaluate_loss: no samples");
  NoGradGuard guard;
  double total = 0.0;
  for (const Sample& s : samples)
    total += sharpe_loss(model.forward(s.x_enc, s.x_dec), s.target, costs).item();
  return total / static_cast<double>(samples.size());
}

FitResult fit(SequenceModel& model, std::span<const Sample> train, std::span<const Sample> valid,
              const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw ContractError("fit: empty training set");
  if (valid.empty()) throw ContractError("fit: empty validation set");

  const auto named = model.parameters();
  std::vector<Tensor> params;
  for (const auto& p : named) params.push_back(p.value);

  AdamState adam;
  adam.learning_rate = cfg.learning_rate;
  Rng dropout_rng(cfg.seed);
  const ForwardMode mode{true, &dropout_rng};

  FitResult result;
  result.history.push_back({0, evaluate_loss(model, train, cfg.costs),
                            evaluate_loss(model, valid, cfg.costs)});
  Snapshot best;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto batches = make_batches(train.size(), cfg.batch_size, cfg.seed + epoch);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      for (Tensor& p : params) p.zero_grad();
      const double inv = 1.0 / static_cast<double>(batches[b].size());
      for (std::size_t idx : batches[b]) {
        const Sample& s = train[idx];
        const Tensor loss =
            scale(sharpe_loss(model.forward(s.x_enc, s.x_dec, mode), s.target, cfg.costs), inv);
        if (!std::isfinite(loss.item())) {
          throw NumericError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(b) + " (sample at row " +
                             std::to_string(s.decision_row) + ")");
        }
        backward(loss);
      }
      adam_step(params, adam);
    }
    EpochRecord rec{epoch, evaluate_loss(model, train, cfg.costs),
                    evaluate_loss(model, valid, cfg.costs)};
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.valid_loss)) {
      throw NumericError("non-finite evaluation loss after epoch " + std::to_string(epoch));
    }
    result.history.push_back(rec);
    if (epoch == 1 || rec.valid_loss < result.best_valid_loss) {
      result.best_epoch = epoch;
      result.best_valid_loss = rec.valid_loss;
      best = snapshot(named);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  restore(named, best);
  for (Tensor& p : params) p.zero_grad();
  return result;
}

HyperparamSpace HyperparamSpace::single(const HyperParams& hp, std::size_t budget) {
  HyperparamSpace s;
  s.d_model = {hp.d_model};
  s.n_heads = {hp.n_heads};
  s.t2v_k = {hp.t2v_k};
  s.n_layers = {hp.n_layers};
  s.batch_size = {hp.batch_size};
  s.learning_rate = {hp.learning_rate};
  s.dropout = {hp.dropout};
  s.budget = budget;
  return s;
}

void HyperparamSpace::validate(const std::string& kind) const {
  require_nonempty(d_model, "d_model");
  require_nonempty(n_heads, "n_heads");
  require_nonempty(t2v_k, "t2v_k");
  require_nonempty(n_layers, "n_layers");
  require_nonempty(batch_size, "batch_size");
  require_nonempty(learning_rate, "learning_rate");
  require_nonempty(dropout, "dropout");
  if (budget < 1) throw ContractError("hyperparameter space: budget must be at least 1");
  for (auto b : batch_size)
    if (b < 1) throw ContractError("hyperparameter space: batch_size must be at least 1");
  for (double lr : learning_rate)
    if (!(lr >= 0.0)) throw ContractError("hyperparameter space: learning_rate must be >= 0");
  for (double d : dropout)
    if (!(d >= 0.0 && d < 1.0)) throw ContractError("hyperparameter space: dropout must be in [0, 1)");
  for (auto d : d_model)
    if (d < 1) throw ContractError("hyperparameter space: d_model must be at least 1");
  if (kind != "pt") return;
  for (auto d : d_model)
    for (auto h : n_heads)
      for (auto k : t2v_k)
        for (auto l : n_layers) {
          PTConfig c;
          c.n_assets = 2;
          c.window = 2;
          c.d_model = d;
          c.n_heads = h;
          c.t2v_k = k;
          c.n_layers = l;
          try {
            c.validate();
          } catch (const ContractError& e) {
            throw ContractError("hyperparameter space has an invalid combination (d_model " +
                                std::to_string(d) + ", n_heads " + std::to_string(h) +
                                "): " + e.what());
          }
        }
}

std::size_t HyperparamSpace::combinations() const {
  return d_model.size() * n_heads.size() * t2v_k.size() * n_layers.size() * batch_size.size() *
         learning_rate.size() * dropout.size();
}

HyperparamSpace HyperparamSpace::from_json(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("hyperparameter space: ") + e.what());
  }
  if (!j.is_object()) throw DataError("hyperparameter space: expected a JSON object");
  HyperparamSpace s;
  static const std::vector<std::string> known{"d_model",       "n_heads",    "t2v_k",
                                              "n_layers",      "batch_size", "learning_rate",
                                              "dropout",       "budget"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw DataError("hyperparameter space: unknown key '" + key + "'");
    }
  }
  try {
    auto read = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    read("d_model", s.d_model);
    read("n_heads", s.n_heads);
    read("t2v_k", s.t2v_k);
    read("n_layers", s.n_layers);
    read("batch_size", s.batch_size);
    read("learning_rate", s.learning_rate);
    read("dropout", s.dropout);
    read("budget", s.budget);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("hyperparameter space: ") + e.what());
  }
  return s;
}

ModelSpec spec_for(const std::string& kind, std::size_t n_assets, std::size_t window,
                   const HyperParams& hp, AttentionScale scale, std::uint64_t seed) {
  ModelSpec s;
  s.kind = kind;
  s.n_assets = n_assets;
  s.window = window;
  s.d_model = hp.d_model;
  s.n_heads = hp.n_heads;
  s.t2v_k = hp.t2v_k;
  s.n_layers = hp.n_layers;
  s.dropout = hp.dropout;
  s.scale = scale;
  s.seed = seed;
  return s;
}

SearchResult random_grid_search(const HyperparamSpace& space, std::span<const Sample> train,
                                std::span<const Sample> valid, const SearchConfig& cfg) {
  space.validate(cfg.kind);
  Rng sampler(cfg.seed);
  std::vector<HyperParams> combos(space.budget);
  for (HyperParams& hp : combos) {
    hp.d_model = pick(space.d_model, sampler);
    hp.n_heads = pick(space.n_heads, sampler);
    hp.t2v_k = pick(space.t2v_k, sampler);
    hp.n_layers = pick(space.n_layers, sampler);
    hp.batch_size = pick(space.batch_size, sampler);
    hp.learning_rate = pick(space.learning_rate, sampler);
    hp.dropout = pick(space.dropout, sampler);
  }

  struct Outcome {
    TrialRecord record;
    std::unique_ptr<SequenceModel> model;
    FitResult fit;
    std::exception_ptr error;
  };
  std::vector<Outcome> outcomes(combos.size());
  auto run_trial = [&](std::size_t i) {
    Outcome& out = outcomes[i];
    try {
      const auto start = std::chrono::steady_clock::now();
      const std::uint64_t seed = cfg.seed + i;
      TrainConfig tc = cfg.train;
      tc.batch_size = combos[i].batch_size;
      tc.learning_rate = combos[i].learning_rate;
      tc.seed = seed;
      out.model = make_model(spec_for(cfg.kind, cfg.n_assets, cfg.window, combos[i], cfg.scale, seed));
      out.fit = fit(*out.model, train, valid, tc);
      out.record.index = i;
      out.record.seed = seed;
      out.record.params = combos[i];
      out.record.train_loss = out.fit.history[out.fit.best_epoch].train_loss;
      out.record.valid_loss = out.fit.best_valid_loss;
      out.record.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    } catch (...) {
      out.error = std::current_exception();
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.jobs, combos.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < combos.size(); ++i) run_trial(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < combos.size(); i = next++) run_trial(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const Outcome& o : outcomes)
    if (o.error) std::rethrow_exception(o.error);

  SearchResult result;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    result.trials.push_back(outcomes[i].record);
    if (outcomes[i].record.valid_loss < outcomes[result.best_index].record.valid_loss)
      result.best_index = i;
  }
  result.best = combos[result.best_index];
  result.model = std::move(outcomes[result.best_index].model);
  result.fit = std::move(outcomes[result.best_index].fit);
  return result;
}

void write_trials_csv(std::ostream& out, std::span<const TrialRecord> trials, int test_year) {
  for (const TrialRecord& t : trials) {
    out << test_year << ',' << t.index << ',' << t.seed << ',' << t.params.d_model << ','
        << t.params.n_heads << ',' << t.params.t2v_k << ',' << t.params.n_layers << ','
        << t.params.batch_size << ',' << format_double(t.params.learning_rate) << ','
        << format_double(t.params.dropout) << ',' << format_double(t.train_loss) << ','
        << format_double(t.valid_loss) << ',' << format_double(t.seconds) << '\n';
  }
}

bool is_trained_strategy(const std::string& name) {
  return name == "pt" || name == "lstm" || name == "mlp";
}

WalkForwardResult walk_forward(const ReturnTable& table, const WalkForwardConfig& cfg,
                               const std::function<void(const SplitOutcome&)>& on_split) {
  const auto& names = strategy_names();
  if (std::find(names.begin(), names.end(), cfg.strategy) == names.end()) {
    throw ContractError("unknown strategy '" + cfg.strategy + "'");
  }
  cfg.train.validate();
  const bool trained = is_trained_strategy(cfg.strategy);
  if (trained) {
    cfg.space.validate(cfg.strategy);
    if (cfg.window < 2) throw ContractError("window must be at least 2");
  }
  const std::size_t n = table.cols();
  const auto schedule = yearly_splits(table, cfg.first_test_year, cfg.train.validation_fraction);

  WalkForwardResult result;
  result.weights.tickers = table.tickers;
  std::optional<HyperParams> chosen;
  std::uint64_t chosen_seed = 0;

  for (const Split& split : schedule.splits) {
    SplitOutcome outcome;
    outcome.split = split;
    const std::size_t first_decision = split.test_begin - 1;
    if (split.test_begin == 0) throw DataError("no history before the first test day");

    if (trained) {
      if (first_decision + 1 < 2 * cfg.window) {
        throw DataError("test year " + std::to_string(split.test_year) + " starts with only " +
                        std::to_string(split.test_begin) + " rows of history; window " +
                        std::to_string(cfg.window) + " needs " + std::to_string(2 * cfg.window));
      }
      outcome.scaling = InputScaling::from_rows(table, split.train_end);
      const auto train = samples_between(table, cfg.window, 0, split.valid_begin, &outcome.scaling);
      const auto valid =
          samples_between(table, cfg.window, split.valid_begin, split.train_end, &outcome.scaling);
      if (train.empty() || valid.empty()) {
        throw DataError("test year " + std::to_string(split.test_year) +
                        ": too little data for window " + std::to_string(cfg.window) + " (" +
                        std::to_string(train.size()) + " training and " +
                        std::to_string(valid.size()) + " validation samples)");
      }
      SearchConfig sc;
      sc.kind = cfg.strategy;
      sc.n_assets = n;
      sc.window = cfg.window;
      sc.scale = cfg.scale;
      sc.train = cfg.train;
      sc.seed = cfg.seed;
      sc.jobs = cfg.jobs;
      if (cfg.search_every_split || !chosen) {
        auto search = random_grid_search(cfg.space, train, valid, sc);
        outcome.params = search.best;
        outcome.trials = std::move(search.trials);
        outcome.fit = std::move(search.fit);
        outcome.model = std::move(search.model);
        chosen = search.best;
        chosen_seed = cfg.seed + search.best_index;
      } else {
        TrainConfig tc = cfg.train;
        tc.batch_size = chosen->batch_size;
        tc.learning_rate = chosen->learning_rate;
        tc.seed = chosen_seed;
        auto model = make_model(spec_for(cfg.strategy, n, cfg.window, *chosen, cfg.scale, chosen_seed));
        outcome.params = *chosen;
        outcome.fit = fit(*model, train, valid, tc);
        outcome.model = std::move(model);
      }
    } else if (cfg.strategy == "mv" && first_decision + 1 < cfg.mv.lookback) {
      throw DataError("test year " + std::to_string(split.test_year) + " has " +
                      std::to_string(split.test_begin) + " rows of history; mv lookback needs " +
                      std::to_string(cfg.mv.lookback));
    }

    NoGradGuard guard;
    for (std::size_t d = split.test_begin; d < split.test_end; ++d) {
      const std::size_t t = d - 1;
      std::vector<double> w;
      if (cfg.strategy == "equal_weight") {
        w = equal_weights(n);
      } else if (cfg.strategy == "mv") {
        w = mv_weights(table.block(0, t + 1), n, cfg.mv);
      } else {
        const auto [x_enc, x_dec] = model_inputs(table, t, cfg.window, &outcome.scaling);
        const Tensor out = outcome.model->forward(x_enc, x_dec);
        const auto last = out.data().subspan((cfg.window - 1) * n, n);
        w.assign(last.begin(), last.end());
      }
      result.weights.append(table.dates[t], w);
    }
    if (on_split) on_split(outcome);
    result.splits.push_back(std::move(outcome));
  }
  result.curve = run_backtest(result.weights, table, cfg.train.costs);
  return result;
}

}  // namespace pt
