#include "pt/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pt/checkpoint.hpp"
#include "pt/data.hpp"
#include "pt/errors.hpp"
#include "pt/simd/kernels.hpp"
#include "pt/training.hpp"

#ifndef PT_VERSION
#define PT_VERSION "unknown"
#endif

namespace pt::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SynthOptions {
  std::size_t assets = 4;
  std::size_t days = 2500;
  std::uint64_t seed = 0;
  double momentum = 0.0;
  std::string start = "2010-01-01";
  fs::path out;
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  return f;
}

void prepare_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !force) {
    throw UsageError("output directory " + dir.string() + " already exists (use --force)");
  }
  if (fs::exists(dir) && !fs::is_directory(dir)) {
    throw UsageError(dir.string() + " exists and is not a directory");
  }
  fs::create_directories(dir);
}

Json params_json(const HyperParams& hp) {
  return Json{{"d_model", hp.d_model},   {"n_heads", hp.n_heads},
              {"t2v_k", hp.t2v_k},       {"n_layers", hp.n_layers},
              {"batch_size", hp.batch_size}, {"learning_rate", hp.learning_rate},
              {"dropout", hp.dropout}};
}

Json space_json(const HyperparamSpace& s) {
  return Json{{"d_model", s.d_model},       {"n_heads", s.n_heads},
              {"t2v_k", s.t2v_k},           {"n_layers", s.n_layers},
              {"batch_size", s.batch_size}, {"learning_rate", s.learning_rate},
              {"dropout", s.dropout},       {"budget", s.budget}};
}

HyperparamSpace load_space(const RunConfig& rc) {
  HyperparamSpace space;
  if (!rc.space.empty()) {
    std::ifstream in(rc.space);
    if (!in) throw DataError("cannot open " + rc.space.string());
    space = HyperparamSpace::from_json(in);
  }
  if (rc.budget) space.budget = *rc.budget;
  if (rc.t2v_k) space.t2v_k = {*rc.t2v_k};
  return space;
}

WalkForwardConfig walk_config(const RunConfig& rc, const std::string& strategy,
                              const ReturnTable& table, const HyperparamSpace& space) {
  WalkForwardConfig wf;
  wf.strategy = strategy;
  wf.window = rc.window;
  wf.first_test_year =
      rc.first_test_year.value_or(static_cast<int>(table.dates.front().year()) + 2);
  wf.space = space;
  wf.train.max_epochs = rc.max_epochs;
  wf.train.patience = rc.patience;
  wf.train.costs.rate = rc.cost;
  wf.mv.lookback = rc.mv_lookback;
  wf.seed = rc.seed;
  wf.search_every_split = !rc.search_once;
  wf.jobs = rc.jobs;
  return wf;
}

void write_weights_csv(std::ostream& out, const WeightStream& w) {
  out << "date";
  for (const auto& t : w.tickers) out << ',' << t;
  out << '\n';
  for (std::size_t r = 0; r < w.rows(); ++r) {
    out << format_date(w.dates[r]);
    for (double v : w.row(r)) out << ',' << format_double(v);
    out << '\n';
  }
}

struct RunOutcome {
  MetricsReport metrics;
  EquityCurve curve;
};

// One strategy through the walk-forward pipeline, every artefact into `dir`.
RunOutcome execute(const RunConfig& rc, const std::string& strategy, const ReturnTable& table,
                   const std::string& checksum, const std::string& seed_source,
                   const fs::path& dir, std::ostream& log) {
  const HyperparamSpace space = load_space(rc);
  const WalkForwardConfig wf = walk_config(rc, strategy, table, space);
  const bool trained = is_trained_strategy(strategy);

  std::ofstream trials = open_out(dir / "trials.csv");
  trials << "test_year,trial,seed,d_model,n_heads,t2v_k,n_layers,batch_size,learning_rate,"
            "dropout,train_loss,valid_loss,seconds\n";
  std::ofstream history = open_out(dir / "history.csv");
  history << "test_year,epoch,train_loss,valid_loss\n";
  if (trained) fs::create_directories(dir / "checkpoints");

  Json splits = Json::array();
  const auto result = walk_forward(table, wf, [&](const SplitOutcome& s) {
    const Split& sp = s.split;
    Json j{{"test_year", sp.test_year},
           {"train_rows", sp.valid_begin},
           {"valid_rows", sp.train_end - sp.valid_begin},
           {"test_rows", sp.test_end - sp.test_begin},
           {"first_test_date", format_date(table.dates[sp.test_begin])},
           {"last_test_date", format_date(table.dates[sp.test_end - 1])}};
    log << strategy << ' ' << sp.test_year << ": train " << format_date(table.dates.front())
        << ".." << format_date(table.dates[sp.train_end - 1]) << ", test "
        << format_date(table.dates[sp.test_begin]) << ".." << format_date(table.dates[sp.test_end - 1]);
    if (trained) {
      write_trials_csv(trials, s.trials, sp.test_year);
      for (const auto& e : s.fit.history) {
        history << sp.test_year << ',' << e.epoch << ',' << format_double(e.train_loss) << ','
                << format_double(e.valid_loss) << '\n';
      }
      const std::string ckpt = "checkpoints/" + std::to_string(sp.test_year) + ".ckpt";
      save_checkpoint(dir / ckpt, *s.model, s.scaling);
      j["params"] = params_json(s.params);
      j["trials"] = s.trials.size();
      j["best_epoch"] = s.fit.best_epoch;
      j["best_valid_loss"] = s.fit.best_valid_loss;
      j["checkpoint"] = ckpt;
      log << ", best epoch " << s.fit.best_epoch << ", valid loss "
          << format_double(s.fit.best_valid_loss);
    }
    log << '\n';
    splits.push_back(std::move(j));
  });

  const MetricsReport metrics = compute_metrics(result.curve);
  {
    auto f = open_out(dir / "metrics.json");
    write_metrics_json(f, metrics);
  }
  {
    auto f = open_out(dir / "equity.csv");
    write_series_csv(f, equity_series(result.curve));
  }
  {
    auto f = open_out(dir / "rolling_sharpe.csv");
    if (result.curve.size() >= 252) {
      write_series_csv(f, rolling_sharpe(result.curve, 252));
    } else {
      f << "date,value\n";
      log << strategy << ": fewer than 252 test days, rolling_sharpe.csv left empty\n";
    }
  }
  {
    auto f = open_out(dir / "weights.csv");
    write_weights_csv(f, result.weights);
  }

  Json manifest{{"command", "run"},
                {"version", PT_VERSION},
                {"strategy", strategy},
                {"seed", rc.seed},
                {"seed_source", seed_source},
                {"data", {{"path", rc.data.string()}, {"fnv1a64", checksum}}},
                {"config",
                 {{"cost", rc.cost},
                  {"first_test_year", wf.first_test_year},
                  {"window", rc.window},
                  {"max_epochs", rc.max_epochs},
                  {"patience", rc.patience},
                  {"validation_fraction", wf.train.validation_fraction},
                  {"mv_lookback", rc.mv_lookback},
                  {"search_once", rc.search_once},
                  {"jobs", rc.jobs}}},
                {"kernels", std::string(simd::isa_name(simd::active_isa()))}};
  if (trained) manifest["space"] = space_json(space);
  manifest["splits"] = std::move(splits);
  {
    auto f = open_out(dir / "manifest.json");
    f << manifest.dump(2) << '\n';
  }
  return {metrics, result.curve};
}

std::string apply_seed_env(RunConfig& rc) {
  const char* env = std::getenv("PT_SEED");
  if (!env || !*env) return "flag";
  std::uint64_t v = 0;
  const std::string_view s(env);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw UsageError("PT_SEED must be a non-negative integer, got '" + std::string(s) + "'");
  }
  rc.seed = v;
  return "PT_SEED";
}

ReturnTable load_returns(const RunConfig& rc) {
  return clean_and_return(load_csv(rc.data));
}

int cmd_synth(const SynthOptions& o, std::ostream& log) {
  SynthConfig cfg;
  cfg.n_assets = o.assets;
  cfg.n_days = o.days;
  cfg.seed = o.seed;
  cfg.momentum = o.momentum;
  try {
    cfg.start = parse_date(o.start);
  } catch (const DataError& e) {
    throw UsageError(std::string("--start: ") + e.what());
  }
  save_csv(o.out, synth_generate(cfg));
  log << "wrote " << o.days << " days x " << o.assets << " assets to " << o.out.string() << '\n';
  return kOk;
}

int cmd_run(RunConfig rc, std::ostream& log) {
  const std::string seed_source = apply_seed_env(rc);
  if (rc.out.empty()) rc.out = "run-" + rc.strategy;
  const ReturnTable table = load_returns(rc);
  const std::string checksum = file_checksum(rc.data);
  load_space(rc).validate(is_trained_strategy(rc.strategy) ? rc.strategy : "mlp");
  prepare_dir(rc.out, rc.force);
  const auto r = execute(rc, rc.strategy, table, checksum, seed_source, rc.out, log);
  log << render_comparison({{rc.strategy, r.metrics}});
  return kOk;
}

int cmd_compare(RunConfig rc, const std::vector<std::string>& strategies, std::ostream& log) {
  if (strategies.size() < 2) throw UsageError("compare needs at least two strategies");
  for (std::size_t i = 0; i < strategies.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (strategies[i] == strategies[j]) throw UsageError("strategy listed twice: " + strategies[i]);
  const std::string seed_source = apply_seed_env(rc);
  if (rc.out.empty()) rc.out = "compare";
  const ReturnTable table = load_returns(rc);
  const std::string checksum = file_checksum(rc.data);
  load_space(rc).validate("pt");
  prepare_dir(rc.out, rc.force);

  std::vector<ComparisonRow> rows;
  std::vector<EquityCurve> curves;
  for (const auto& s : strategies) {
    fs::create_directories(rc.out / s);
    auto r = execute(rc, s, table, checksum, seed_source, rc.out / s, log);
    rows.push_back({s, r.metrics});
    curves.push_back(std::move(r.curve));
  }
  for (const auto& c : curves) {
    if (c.dates != curves.front().dates) {
      throw AlignmentError("strategies produced different test calendars");
    }
  }
  {
    auto f = open_out(rc.out / "comparison.csv");
    write_comparison_csv(f, rows);
  }
  const std::string table_text = render_comparison(rows);
  {
    auto f = open_out(rc.out / "comparison.txt");
    f << table_text;
  }
  {
    auto f = open_out(rc.out / "equity_curves.csv");
    f << "date";
    for (const auto& s : strategies) f << ',' << s;
    f << '\n';
    for (std::size_t d = 0; d < curves.front().size(); ++d) {
      f << format_date(curves.front().dates[d]);
      for (const auto& c : curves) f << ',' << format_double(c.cumulative[d]);
      f << '\n';
    }
  }
  {
    Json m{{"command", "compare"},
           {"version", PT_VERSION},
           {"strategies", strategies},
           {"seed", rc.seed},
           {"seed_source", seed_source},
           {"data", {{"path", rc.data.string()}, {"fnv1a64", checksum}}}};
    auto f = open_out(rc.out / "manifest.json");
    f << m.dump(2) << '\n';
  }
  log << table_text;
  return kOk;
}

void add_run_options(CLI::App* sub, RunConfig& rc) {
  sub->add_option("--data", rc.data, "price CSV (date,<TICKER>,...)")->required();
  sub->add_option("--out", rc.out, "output directory");
  sub->add_option("--seed", rc.seed, "master seed (PT_SEED overrides)");
  sub->add_option("--cost", rc.cost, "transaction cost per unit turnover")
      ->check(CLI::Range(0.0, 1.0));
  sub->add_option("--first-test-year", rc.first_test_year,
                  "first out-of-sample year (default: third year of data)");
  sub->add_option("--t2v-k", rc.t2v_k, "pin the periodic Time2Vec components")
      ->check(CLI::PositiveNumber);
  sub->add_option("--window", rc.window, "positions per encoder and decoder block")
      ->check(CLI::Range(std::size_t{2}, std::size_t{10000}));
  sub->add_option("--space", rc.space, "hyperparameter space JSON")->check(CLI::ExistingFile);
  sub->add_option("--budget", rc.budget, "random search trials per split")
      ->check(CLI::PositiveNumber);
  sub->add_option("--max-epochs", rc.max_epochs)->check(CLI::PositiveNumber);
  sub->add_option("--patience", rc.patience, "epochs without validation improvement")
      ->check(CLI::PositiveNumber);
  sub->add_option("--jobs", rc.jobs, "parallel search trials")->check(CLI::PositiveNumber);
  sub->add_option("--mv-lookback", rc.mv_lookback, "days of history for mv")
      ->check(CLI::Range(std::size_t{2}, std::size_t{100000}));
  sub->add_flag("--search-once", rc.search_once, "search on the first split only");
  sub->add_flag("--force", rc.force, "write into an existing output directory");
}

}  // namespace

std::string file_checksum(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::uint64_t h = 14695981039346656037ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

std::vector<std::vector<bool>> best_flags(const std::vector<ComparisonRow>& rows) {
  const auto& names = metric_names();
  std::vector<std::vector<bool>> flags(rows.size(), std::vector<bool>(names.size(), false));
  for (std::size_t m = 0; m < names.size(); ++m) {
    const bool lower = names[m] == "vol" || names[m] == "mdd";
    std::optional<double> best;
    for (const auto& r : rows) {
      const double v = metric_values(r.metrics)[m];
      if (std::isnan(v)) continue;
      if (!best || (lower ? v < *best : v > *best)) best = v;
    }
    for (std::size_t i = 0; i < rows.size(); ++i)
      flags[i][m] = best && metric_values(rows[i].metrics)[m] == *best;
  }
  return flags;
}

void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows) {
  out << "strategy";
  for (const auto& n : metric_names()) out << ',' << n;
  out << '\n';
  for (const auto& r : rows) {
    out << r.strategy;
    for (double v : metric_values(r.metrics)) out << ',' << format_double(v);
    out << '\n';
  }
}

std::string render_comparison(const std::vector<ComparisonRow>& rows) {
  const auto flags = best_flags(rows);
  std::size_t first = 8;
  for (const auto& r : rows) first = std::max(first, r.strategy.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(first)) << "strategy";
  for (const auto& n : metric_names()) out << "  " << std::right << std::setw(13) << n;
  out << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << std::left << std::setw(static_cast<int>(first)) << rows[i].strategy;
    const auto values = metric_values(rows[i].metrics);
    for (std::size_t m = 0; m < values.size(); ++m) {
      char cell[32];
      std::snprintf(cell, sizeof cell, "%.4f%s", values[m], flags[i][m] ? "*" : " ");
      out << "  " << std::right << std::setw(13) << cell;
    }
    out << '\n';
  }
  return out.str();
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Portfolio Transformer: train, backtest and compare allocation strategies", "pt"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "write a seeded synthetic price CSV");
  s->add_option("--assets", synth.assets)->check(CLI::PositiveNumber);
  s->add_option("--days", synth.days, "price rows")
      ->check(CLI::Range(std::size_t{2}, std::size_t{10000000}));
  s->add_option("--seed", synth.seed);
  s->add_option("--momentum", synth.momentum, "planted trailing-mean coefficient")
      ->check(CLI::Range(-0.99, 0.99));
  s->add_option("--start", synth.start, "first calendar day, YYYY-MM-DD");
  s->add_option("--out", synth.out)->required();

  RunConfig run_cfg;
  auto* r = app.add_subcommand("run", "walk-forward backtest of one strategy");
  add_run_options(r, run_cfg);
  r->add_option("--strategy", run_cfg.strategy)->check(CLI::IsMember(strategy_names()));

  RunConfig cmp_cfg;
  std::vector<std::string> strategies{"pt", "lstm", "mlp", "mv", "equal_weight"};
  auto* c = app.add_subcommand("compare", "run several strategies through one pipeline");
  add_run_options(c, cmp_cfg);
  c->add_option("--strategies", strategies, "comma separated list")
      ->delimiter(',')
      ->check(CLI::IsMember(strategy_names()));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    if (s->parsed()) {
      const char* env = std::getenv("PT_SEED");
      if (env && *env) {
        RunConfig tmp;
        apply_seed_env(tmp);
        synth.seed = tmp.seed;
      }
      return cmd_synth(synth, out);
    }
    if (r->parsed()) return cmd_run(run_cfg, out);
    return cmd_compare(cmp_cfg, strategies, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ContractError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kNumericError;
  }
}

}  // namespace pt::cli
