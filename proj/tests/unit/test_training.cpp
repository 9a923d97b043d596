#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "pt/errors.hpp"
#include "pt/model/portfolio_transformer.hpp"
#include "pt/training.hpp"
#include "support/fixtures.hpp"

using namespace pt;
using namespace std::chrono;
using pt::testing::values;

namespace {

ReturnTable planted_returns(std::size_t days, std::size_t assets, std::uint64_t seed,
                            double momentum = 0.6) {
  SynthConfig cfg;
  cfg.n_assets = assets;
  cfg.n_days = days;
  cfg.seed = seed;
  cfg.momentum = momentum;
  return clean_and_return(synth_generate(cfg));
}

ReturnTable negated(ReturnTable t) {
  for (double& x : t.returns) x = -x;
  return t;
}

// Scalar Adam for one coordinate, written out from the update rule.
struct ScalarAdam {
  double lr, m = 0, v = 0;
  int t = 0;
  double step(double x, double g) {
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    return x - lr * mh / (std::sqrt(vh) + 1e-8);
  }
};

HyperParams tiny_params() {
  HyperParams hp;
  hp.d_model = 8;
  hp.n_heads = 2;
  hp.t2v_k = 2;
  hp.n_layers = 1;
  hp.batch_size = 32;
  hp.learning_rate = 5e-3;
  return hp;
}

TrainConfig quick_train(std::size_t epochs) {
  TrainConfig c;
  c.max_epochs = epochs;
  c.patience = epochs;
  c.batch_size = 32;
  c.learning_rate = 5e-3;
  return c;
}

std::vector<double> flat_parameters(const SequenceModel& m) {
  std::vector<double> out;
  for (const auto& p : m.parameters()) out.insert(out.end(), p.value.data().begin(), p.value.data().end());
  return out;
}

}  // namespace

TEST_CASE("first adam step moves by the learning rate against the gradient") {
  for (double g : {3.0, -0.25, 1e-3}) {
    Tensor x = Tensor::scalar(1.0, true);
    backward(scale(x, g));
    AdamState st;
    st.learning_rate = 0.1;
    adam_step(std::span<const Tensor>(&x, 1), st);
    CHECK(x.item() - 1.0 == doctest::Approx(-0.1 * (g > 0 ? 1 : -1)).epsilon(1e-4));
    CHECK(st.step == 1);
  }
}

TEST_CASE("zero gradient leaves parameters unchanged") {
  Tensor x = Tensor::vector({1.0, -2.0}, true);
  backward(sum(scale(x, 0.0)));
  AdamState st;
  adam_step(std::span<const Tensor>(&x, 1), st);
  CHECK(x.at(0) == 1.0);
  CHECK(x.at(1) == -2.0);
}

TEST_CASE("adam on x^2 converges and matches the scalar rule") {
  Tensor x = Tensor::scalar(1.0, true);
  AdamState st;
  st.learning_rate = 0.05;
  ScalarAdam oracle{0.05};
  double y = 1.0;
  for (int i = 0; i < 200; ++i) {
    x.zero_grad();
    backward(mul(x, x));
    adam_step(std::span<const Tensor>(&x, 1), st);
    y = oracle.step(y, 2 * y);
    REQUIRE(x.item() == doctest::Approx(y).epsilon(1e-12));
  }
  CHECK(std::fabs(x.item()) < 0.05);
}

TEST_CASE("adam rejects a changed parameter set") {
  Tensor a = Tensor::vector({1.0, 2.0}, true);
  AdamState st;
  backward(sum(a));
  adam_step(std::span<const Tensor>(&a, 1), st);
  Tensor b = Tensor::vector({1.0, 2.0, 3.0}, true);
  CHECK_THROWS_AS(adam_step(std::span<const Tensor>(&b, 1), st), DimensionError);
}

TEST_CASE("batches") {
  const auto b = make_batches(10, 4, 1);
  REQUIRE(b.size() == 3);
  CHECK(b[0].size() == 4);
  CHECK(b[1].size() == 4);
  CHECK(b[2].size() == 2);
  std::set<std::size_t> all;
  for (const auto& batch : b) all.insert(batch.begin(), batch.end());
  CHECK(all.size() == 10);
  CHECK(make_batches(10, 4, 1) == b);
  std::set<std::vector<std::vector<std::size_t>>> orders;
  for (std::uint64_t s = 0; s < 5; ++s) orders.insert(make_batches(10, 4, 100 + s));
  CHECK(orders.size() == 5);
  CHECK_THROWS_AS(make_batches(0, 4, 1), ContractError);
  CHECK_THROWS_AS(make_batches(3, 0, 1), ContractError);
}

TEST_CASE("samples line decoder rows up with the next day's returns") {
  const auto t = planted_returns(60, 2, 1);
  const std::size_t w = 4;
  const Sample s = make_sample(t, 10, w);
  for (std::size_t j = 0; j < w; ++j) {
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(s.x_enc.at(j, c) == t.at(10 - 2 * w + 1 + j, c));
      CHECK(s.x_dec.at(j, c) == t.at(10 - w + 1 + j, c));
      // decoder row j ends at day 10-w+1+j and earns the day after it
      CHECK(s.target.realized.at(j, c) == t.at(10 - w + 2 + j, c));
    }
  }
  CHECK_THROWS_AS(make_sample(t, 2 * w - 2, w), ContractError);
  CHECK_THROWS_AS(make_sample(t, t.rows() - 1, w), ContractError);
}

TEST_CASE("input scaling uses only the given rows") {
  auto t = planted_returns(100, 2, 9);
  const auto s = InputScaling::from_rows(t, 50);
  for (std::size_t r = 50; r < t.rows(); ++r) t.returns[r * 2] *= 7.0;
  CHECK(InputScaling::from_rows(t, 50).factor == s.factor);
  const Sample scaled = make_sample(t, 20, 4, &s);
  const Sample raw = make_sample(t, 20, 4);
  CHECK(scaled.x_dec.at(1, 1) == doctest::Approx(raw.x_dec.at(1, 1) * s.factor[1]).epsilon(1e-15));
  CHECK(values(scaled.target.realized) == values(raw.target.realized));
}

TEST_CASE("sample ranges keep realized rows inside the range") {
  const auto t = planted_returns(100, 2, 2);
  const std::size_t w = 5;
  const auto inside = samples_between(t, w, 40, 70);
  REQUIRE(!inside.empty());
  for (const auto& s : inside) {
    CHECK(s.decision_row + 2 - w >= 40);
    CHECK(s.decision_row + 1 < 70);
  }
  CHECK(inside.front().decision_row + 2 - w == 40);
  CHECK(inside.back().decision_row + 1 == 69);
  const auto head = samples_between(t, w, 0, 30);
  CHECK(head.front().decision_row == 2 * w - 1);
  CHECK(head.back().decision_row == 28);
}

TEST_CASE("patience 1 with worsening validation stops after two epochs") {
  // validation on negated returns: with no costs its loss is exactly minus
  // the training loss, so every training improvement worsens validation
  const auto t = planted_returns(200, 3, 3);
  const auto train = samples_between(t, 6, 0, t.rows());
  const auto flipped_table = negated(t);
  const auto valid = samples_between(flipped_table, 6, 0, t.rows());

  auto cfg = pt::testing::tiny_pt_config();
  cfg.window = 6;
  PortfolioTransformer model(cfg);
  TrainConfig tc = quick_train(20);
  tc.patience = 1;
  tc.batch_size = train.size();  // one full-batch step per epoch
  tc.learning_rate = 1e-3;
  tc.costs.rate = 0.0;
  const auto r = fit(model, train, valid, tc);
  REQUIRE(r.history.size() == 3);
  CHECK(r.history[1].train_loss < r.history[0].train_loss);
  CHECK(r.history[2].train_loss < r.history[1].train_loss);
  CHECK(r.history[2].valid_loss > r.history[1].valid_loss);
  CHECK(r.best_epoch == 1);
  CHECK(r.stopped_early);
  CHECK(evaluate_loss(model, valid, tc.costs) == doctest::Approx(r.history[1].valid_loss).epsilon(1e-12));
  CHECK(evaluate_loss(model, train, tc.costs) == doctest::Approx(r.history[1].train_loss).epsilon(1e-12));
}

TEST_CASE("training on a planted signal lowers the training loss, deterministically") {
  const auto t = planted_returns(400, 3, 4);
  const std::size_t split = 340;
  const auto train = samples_between(t, 6, 0, split);
  const auto valid = samples_between(t, 6, split, t.rows());
  auto cfg = pt::testing::tiny_pt_config(11);
  cfg.window = 6;
  cfg.dropout = 0.1;
  const TrainConfig tc = quick_train(6);

  PortfolioTransformer a(cfg), b(cfg);
  const auto ra = fit(a, train, valid, tc);
  const auto rb = fit(b, train, valid, tc);
  CHECK(ra.history.back().train_loss < ra.history.front().train_loss);
  REQUIRE(ra.history.size() == rb.history.size());
  for (std::size_t i = 0; i < ra.history.size(); ++i) {
    CHECK(ra.history[i].train_loss == rb.history[i].train_loss);
    CHECK(ra.history[i].valid_loss == rb.history[i].valid_loss);
  }
  CHECK(flat_parameters(a) == flat_parameters(b));
  // the restored epoch is the best one seen
  for (std::size_t i = 1; i < ra.history.size(); ++i) CHECK(ra.best_valid_loss <= ra.history[i].valid_loss);
}

TEST_CASE("a non-finite loss names the batch") {
  const auto t = planted_returns(80, 2, 5);
  auto train = samples_between(t, 4, 0, 60);
  const auto valid = samples_between(t, 4, 60, t.rows());
  auto cfg = pt::testing::tiny_pt_config();
  cfg.n_assets = 2;
  cfg.window = 4;
  PortfolioTransformer model(cfg);
  TrainConfig tc = quick_train(2);
  tc.batch_size = 1000;
  // poison one sample only during training, keep the initial evaluation finite
  train[3].target.realized = Tensor::full(train[3].target.realized.shape(), std::nan(""));
  try {
    fit(model, train, valid, tc);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("batch") != std::string::npos);
  }
}

TEST_CASE("hyperparameter space validation and parsing") {
  HyperparamSpace s;
  CHECK_NOTHROW(s.validate("pt"));
  s.n_heads = {3};
  s.d_model = {8};
  CHECK_THROWS_AS(s.validate("pt"), ContractError);
  CHECK_NOTHROW(s.validate("lstm"));
  s = HyperparamSpace{};
  s.learning_rate.clear();
  CHECK_THROWS_AS(s.validate("mlp"), ContractError);

  std::istringstream in(R"({"d_model":[4,8],"n_heads":[2],"budget":7})");
  const auto parsed = HyperparamSpace::from_json(in);
  CHECK(parsed.d_model == std::vector<std::size_t>{4, 8});
  CHECK(parsed.budget == 7);
  CHECK(parsed.dropout == HyperparamSpace{}.dropout);
  std::istringstream bad(R"({"depth":[1]})");
  CHECK_THROWS_AS(HyperparamSpace::from_json(bad), DataError);
}

TEST_CASE("random search bookkeeping") {
  const auto t = planted_returns(160, 2, 6);
  const auto train = samples_between(t, 4, 0, 130);
  const auto valid = samples_between(t, 4, 130, t.rows());
  SearchConfig sc;
  sc.kind = "mlp";
  sc.n_assets = 2;
  sc.window = 4;
  sc.train = quick_train(2);
  sc.seed = 40;

  HyperparamSpace space;
  space.d_model = {4, 6};
  space.learning_rate = {1e-2, 1e-3};
  space.batch_size = {16};
  space.dropout = {0.0};
  space.budget = 1;
  const auto one = random_grid_search(space, train, valid, sc);
  REQUIRE(one.trials.size() == 1);
  CHECK(one.best == one.trials[0].params);
  CHECK(one.trials[0].seed == 40);

  const auto single = HyperparamSpace::single(tiny_params(), 3);
  const auto r = random_grid_search(single, train, valid, sc);
  CHECK(r.trials.size() == 3);
  CHECK(r.best == tiny_params());
  CHECK(r.trials[2].seed == 42);
}

TEST_CASE("a rigged zero learning rate loses the search") {
  const auto t = planted_returns(700, 3, 8, 0.8);
  const auto scaling = InputScaling::from_rows(t, 600);
  const auto train = samples_between(t, 6, 0, 600, &scaling);
  const auto valid = samples_between(t, 6, 600, t.rows(), &scaling);
  SearchConfig sc;
  sc.kind = "pt";
  sc.n_assets = 3;
  sc.window = 6;
  sc.train = quick_train(4);
  sc.seed = 3;
  HyperparamSpace space = HyperparamSpace::single(tiny_params(), 6);
  space.learning_rate = {0.0, 1e-2};
  const auto r = random_grid_search(space, train, valid, sc);

  std::set<double> seen;
  std::size_t argmin = 0;
  for (const auto& trial : r.trials) {
    seen.insert(trial.params.learning_rate);
    if (trial.valid_loss < r.trials[argmin].valid_loss) argmin = trial.index;
  }
  REQUIRE(seen.size() == 2);
  CHECK(r.best_index == argmin);
  CHECK(r.best.learning_rate == 1e-2);

  // parallel trials give the same log
  sc.jobs = 3;
  const auto p = random_grid_search(space, train, valid, sc);
  REQUIRE(p.trials.size() == r.trials.size());
  for (std::size_t i = 0; i < p.trials.size(); ++i) CHECK(p.trials[i].valid_loss == r.trials[i].valid_loss);
  CHECK(flat_parameters(*p.model) == flat_parameters(*r.model));
}

TEST_CASE("trial log rows") {
  TrialRecord t;
  t.index = 2;
  t.seed = 9;
  t.params = tiny_params();
  t.train_loss = -0.5;
  t.valid_loss = -0.25;
  t.seconds = 1.5;
  std::ostringstream out;
  write_trials_csv(out, std::span<const TrialRecord>(&t, 1), 2017);
  CHECK(out.str() == "2017,2,9,8,2,2,1,32,0.005,0,-0.5,-0.25,1.5\n");
}

namespace {

ReturnTable calendar_2014_2018(std::size_t assets, double momentum = 0.0) {
  SynthConfig cfg;
  cfg.n_assets = assets;
  cfg.momentum = momentum;
  cfg.start = Date{year{2014}, January, day{1}};
  cfg.n_days = 0;
  for (auto d : business_days(cfg.start, 2000))
    if (static_cast<int>(d.year()) <= 2018) ++cfg.n_days;
  return clean_and_return(synth_generate(cfg));
}

}  // namespace

TEST_CASE("walk forward covers the test years exactly once") {
  const auto t = calendar_2014_2018(3);
  for (const std::string strategy : {"equal_weight", "mv"}) {
    WalkForwardConfig cfg;
    cfg.strategy = strategy;
    cfg.first_test_year = 2016;
    const auto r = walk_forward(t, cfg);
    REQUIRE(r.splits.size() == 3);

    std::vector<Date> expected;
    for (auto d : business_days(Date{year{2016}, January, day{1}}, 800))
      if (static_cast<int>(d.year()) <= 2018) expected.push_back(d);
    CHECK(r.curve.dates == expected);

    for (const auto& s : r.splits) {
      CHECK(t.dates[s.split.train_end - 1] < t.dates[s.split.test_begin]);
      CHECK(s.split.valid_begin < s.split.train_end);
    }
    for (std::size_t k = 0; k < r.weights.rows(); ++k) {
      double gross = 0;
      for (double w : r.weights.row(k)) gross += std::fabs(w);
      CHECK(gross == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("walk forward with a trained model") {
  const auto t = calendar_2014_2018(2, 0.5);
  WalkForwardConfig cfg;
  cfg.strategy = "lstm";
  cfg.first_test_year = 2017;
  cfg.window = 5;
  cfg.space = HyperparamSpace::single(tiny_params(), 2);
  cfg.train = quick_train(2);
  cfg.search_every_split = false;
  std::size_t callbacks = 0;
  const auto r = walk_forward(t, cfg, [&](const SplitOutcome& s) {
    ++callbacks;
    CHECK(s.model != nullptr);
  });
  CHECK(callbacks == 2);
  CHECK(r.splits[0].trials.size() == 2);
  CHECK(r.splits[1].trials.empty());
  CHECK(r.splits[1].params == r.splits[0].params);
  CHECK(r.curve.size() == r.splits[0].split.test_end - r.splits[0].split.test_begin +
                              r.splits[1].split.test_end - r.splits[1].split.test_begin);

  cfg.strategy = "nosuch";
  CHECK_THROWS_AS(walk_forward(t, cfg), ContractError);
  cfg.strategy = "pt";
  cfg.window = 200;
  cfg.first_test_year = 2015;
  CHECK_THROWS_AS(walk_forward(t, cfg), DataError);
}
