#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "pt/errors.hpp"
#include "pt/model/layers.hpp"
#include "pt/model/portfolio_transformer.hpp"
#include "pt/objective.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

using namespace pt;
using pt::testing::check_gradients;
using pt::testing::random_returns;
using pt::testing::random_tensor;
using pt::testing::tiny_pt_config;
using pt::testing::values;

TEST_CASE("time2vec_encode components") {
  Rng rng(1);
  Time2VecLayer layer(2, rng);
  auto omega = layer.omega.mutable_data();
  auto phi = layer.phi.mutable_data();
  omega[0] = 1.0;
  phi[0] = 0.0;
  omega[1] = std::numbers::pi / 2;
  phi[1] = 0.0;

  CHECK(time2vec_encode(3, layer).at(0) == 3.0);
  CHECK(std::abs(time2vec_encode(1, layer).at(1) - 1.0) < 1e-12);

  for (int trial = 0; trial < 100; ++trial) {
    Time2VecLayer random_layer(5, rng);
    const Tensor e = time2vec_encode(static_cast<std::size_t>(trial), random_layer);
    CHECK(e.size() == 6);
    for (std::size_t i = 1; i < e.size(); ++i) {
      CHECK(e.at(i) >= -1.0);
      CHECK(e.at(i) <= 1.0);
    }
  }
}

TEST_CASE("embed_window is a row-wise map with position dependence") {
  PTConfig cfg = tiny_pt_config();
  const PortfolioTransformer model(cfg);
  std::mt19937_64 rng(2);
  const Tensor x = random_returns(cfg.window, cfg.n_assets, rng);
  const Tensor e = model.embed_window(x);
  CHECK(e.shape() == Shape{cfg.window, cfg.d_model});

  std::vector<double> changed = values(x);
  const std::size_t j = 5;
  changed[j * cfg.n_assets + 1] += 0.5;
  const Tensor e2 = model.embed_window(Tensor::from({cfg.window, cfg.n_assets}, changed));
  for (std::size_t r = 0; r < cfg.window; ++r) {
    bool row_same = true;
    for (std::size_t c = 0; c < cfg.d_model; ++c) row_same &= e.at(r, c) == e2.at(r, c);
    CHECK(row_same == (r != j));
  }

  const Tensor zero = model.embed_window(Tensor::zeros({cfg.window, cfg.n_assets}));
  for (std::size_t r = 1; r < cfg.window; ++r) {
    double diff = 0.0;
    for (std::size_t c = 0; c < cfg.d_model; ++c) diff += std::abs(zero.at(r, c) - zero.at(0, c));
    CHECK(diff > 1e-6);
  }

  CHECK_THROWS_AS(model.embed_window(Tensor::zeros({cfg.window, cfg.n_assets + 1})),
                  DimensionError);
}

TEST_CASE("attention degenerate cases") {
  std::mt19937_64 rng(4);
  SUBCASE("single position returns V") {
    const Tensor q = random_tensor({1, 3}, rng, -1, 1, false);
    const Tensor k = random_tensor({1, 3}, rng, -1, 1, false);
    const Tensor v = random_tensor({1, 4}, rng, -1, 1, false);
    const Tensor out = attention(q, k, v, nullptr, std::sqrt(3.0));
    CHECK(values(out) == values(v));
  }
  SUBCASE("equal scores average the values") {
    const Tensor q = Tensor::zeros({3, 2});
    const Tensor k = random_tensor({4, 2}, rng, -1, 1, false);
    const Tensor v = random_tensor({4, 3}, rng, -1, 1, false);
    const Tensor out = attention(q, k, v, nullptr, 1.0);
    const Tensor col_mean = mean(v, 0);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c)
        CHECK(out.at(r, c) == doctest::Approx(col_mean.at(c)).epsilon(1e-14));
  }
  SUBCASE("causal row 0 sees only itself") {
    const Tensor q = random_tensor({5, 2}, rng, -1, 1, false);
    const Tensor k = random_tensor({5, 2}, rng, -1, 1, false);
    const Tensor v = random_tensor({5, 3}, rng, -1, 1, false);
    const Tensor mask = causal_mask(5);
    const Tensor out = attention(q, k, v, &mask, 1.0);
    for (std::size_t c = 0; c < 3; ++c) CHECK(out.at(0, c) == v.at(0, c));
  }
  SUBCASE("fully masked row is rejected") {
    const Tensor q = Tensor::zeros({2, 2});
    const Tensor mask = Tensor::matrix({{0, 0}, {kMaskBlocked, kMaskBlocked}});
    CHECK_THROWS_AS(attention(q, q, q, &mask, 1.0), ContractError);
  }
}

TEST_CASE("multi-head attention") {
  Rng init(5);
  std::mt19937_64 rng(6);
  const MHALayer one(4, 1, init);
  const Tensor q = random_tensor({3, 4}, rng, -1, 1, false);
  const Tensor kv = random_tensor({5, 4}, rng, -1, 1, false);

  SUBCASE("one head is attention between linear maps") {
    const Tensor out = multi_head_attention(q, kv, kv, one, nullptr, AttentionScale::d_model);
    const Tensor manual = matmul(attention(matmul(q, one.w_query[0]), matmul(kv, one.w_key[0]),
                                           matmul(kv, one.w_value[0]), nullptr, 2.0),
                                 one.w_out);
    CHECK(out.shape() == Shape{3, 4});
    for (std::size_t i = 0; i < out.size(); ++i)
      CHECK(out.data()[i] == doctest::Approx(manual.data()[i]).epsilon(1e-14));
  }

  SUBCASE("scale mode switches the divisor") {
    const MHALayer two(4, 2, init);
    const Tensor a = multi_head_attention(q, kv, kv, two, nullptr, AttentionScale::d_model);
    const Tensor b = multi_head_attention(q, kv, kv, two, nullptr, AttentionScale::d_k);
    CHECK(a.shape() == b.shape());
    CHECK(values(a) != values(b));
  }

  SUBCASE("gradient matches finite differences") {
    const MHALayer two(4, 2, init);
    Tensor qg = random_tensor({3, 4}, rng);
    Tensor kg = random_tensor({5, 4}, rng);
    const Tensor w = random_tensor({3, 4}, rng, -1, 1, false);
    std::vector<Tensor> inputs{qg, kg, two.w_out};
    for (const auto& t : two.w_query) inputs.push_back(t);
    for (const auto& t : two.w_value) inputs.push_back(t);
    const auto r = check_gradients(
        [&] {
          return sum(mul(multi_head_attention(qg, kg, kg, two, nullptr, AttentionScale::d_k), w));
        },
        inputs);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("gated residual network") {
  Rng init(8);
  std::mt19937_64 rng(9);
  GRNLayer layer(6, init);
  const Tensor z = random_tensor({4, 6}, rng, -1, 1, false);

  SUBCASE("closed gate leaves layer norm of the input") {
    for (double& b : layer.gate.bias.mutable_data()) b = -1e3;
    const Tensor out = grn(z, layer);
    const Tensor expected = layer_norm(z, layer.norm.gain, layer.norm.bias);
    CHECK(out.shape() == z.shape());
    for (std::size_t i = 0; i < out.size(); ++i)
      CHECK(out.data()[i] == doctest::Approx(expected.data()[i]).epsilon(1e-12));
  }

  SUBCASE("gradient matches finite differences") {
    Tensor zg = random_tensor({4, 6}, rng);
    const Tensor w = random_tensor({4, 6}, rng, -1, 1, false);
    std::vector<Tensor> inputs{zg};
    std::vector<NamedTensor> params;
    layer.collect("grn", params);
    for (auto& p : params) inputs.push_back(p.value);
    const auto r = check_gradients([&] { return sum(mul(grn(zg, layer), w)); }, inputs);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("allocation head values") {
  const Tensor w = allocation_head(Tensor::matrix({{2, -1}}));
  CHECK(std::abs(w.at(0, 0) - 0.9526) < 1e-4);
  CHECK(std::abs(w.at(0, 1) + 0.0474) < 1e-4);
  CHECK(std::abs(w.at(0, 0)) + std::abs(w.at(0, 1)) == doctest::Approx(1.0).epsilon(1e-15));

  for (double c : {0.0, 0.7, 12.0}) {
    const Tensor e = allocation_head(Tensor::matrix({{c, c}}));
    CHECK(e.at(0, 0) == 0.5);
    CHECK(e.at(0, 1) == 0.5);
  }
  // Negative equal scores are an equal-weight short.
  const Tensor shorted = allocation_head(Tensor::matrix({{-3.0, -3.0}}));
  CHECK(shorted.at(0, 0) == -0.5);
  CHECK(shorted.at(0, 1) == -0.5);
}

TEST_CASE("pt_forward shape, constraint, and causality") {
  PTConfig cfg = tiny_pt_config(11);
  cfg.n_layers = 2;
  const PortfolioTransformer model(cfg);
  std::mt19937_64 rng(12);
  const Tensor x_enc = random_returns(cfg.window, cfg.n_assets, rng);
  const Tensor x_dec = random_returns(cfg.window, cfg.n_assets, rng);
  const Tensor w = model.forward(x_enc, x_dec);
  CHECK(w.shape() == Shape{cfg.window, cfg.n_assets});
  for (std::size_t r = 0; r < cfg.window; ++r) {
    double gross = 0.0;
    for (std::size_t c = 0; c < cfg.n_assets; ++c) gross += std::abs(w.at(r, c));
    CHECK(std::abs(gross - 1.0) <= 1e-9);
  }

  for (std::size_t j = 0; j < cfg.window; ++j) {
    std::vector<double> perturbed = values(x_dec);
    for (std::size_t c = 0; c < cfg.n_assets; ++c) perturbed[j * cfg.n_assets + c] += 0.3;
    const Tensor w2 = model.forward(x_enc, Tensor::from(x_dec.shape(), perturbed));
    for (std::size_t r = 0; r < j; ++r)
      for (std::size_t c = 0; c < cfg.n_assets; ++c)
        CHECK(std::abs(w.at(r, c) - w2.at(r, c)) < 1e-12);
    if (j + 1 < cfg.window) {
      double diff = 0.0;
      for (std::size_t c = 0; c < cfg.n_assets; ++c) diff += std::abs(w.at(j, c) - w2.at(j, c));
      CHECK(diff > 0.0);
    }
  }

  CHECK_THROWS_AS(model.forward(x_enc, Tensor::zeros({cfg.window - 1, cfg.n_assets})),
                  DimensionError);
}

TEST_CASE("config invariants are enforced") {
  PTConfig cfg = tiny_pt_config();
  cfg.window = 1;
  CHECK_THROWS_AS(PortfolioTransformer{cfg}, ContractError);
  cfg = tiny_pt_config();
  cfg.n_heads = 3;
  CHECK_THROWS_AS(PortfolioTransformer{cfg}, ContractError);
  cfg = tiny_pt_config();
  cfg.n_assets = 1;
  CHECK_THROWS_AS(PortfolioTransformer{cfg}, ContractError);
  cfg = tiny_pt_config();
  cfg.t2v_k = 0;
  CHECK_THROWS_AS(PortfolioTransformer{cfg}, ContractError);
}

TEST_CASE("fixed seed gives identical initialisation and outputs") {
  const PTConfig cfg = tiny_pt_config(99);
  const PortfolioTransformer a(cfg), b(cfg);
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(values(pa[i].value) == values(pb[i].value));

  std::mt19937_64 rng(1);
  const Tensor x = random_returns(cfg.window, cfg.n_assets, rng);
  CHECK(values(a.forward(x, x)) == values(b.forward(x, x)));

  PTConfig other = cfg;
  other.seed = 100;
  CHECK(values(PortfolioTransformer(other).parameters()[0].value) != values(pa[0].value));
}

TEST_CASE("clone is a deep copy") {
  const PortfolioTransformer model(tiny_pt_config());
  auto copy = model.clone();
  auto params = copy->parameters();
  params[0].value.mutable_data()[0] += 1.0;
  CHECK(model.parameters()[0].value.at(0) != params[0].value.at(0));
}

TEST_CASE("permuting assets permutes the weights") {
  const PTConfig cfg = tiny_pt_config(21);
  const PortfolioTransformer base(cfg);
  PortfolioTransformer permuted(cfg);
  const std::vector<std::size_t> perm{2, 0, 1};
  const std::size_t n = cfg.n_assets, d = cfg.d_model;

  // input projection rows for the asset columns
  {
    const auto src = base.input_projection().weight.data();
    auto dst = permuted.parameters()[0].value.mutable_data();
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c) dst[j * d + c] = src[perm[j] * d + c];
  }
  // output head columns and bias
  {
    const auto src_w = base.output_head().weight.data();
    const auto src_b = base.output_head().bias.data();
    auto params = permuted.parameters();
    auto dst_w = params[params.size() - 2].value.mutable_data();
    auto dst_b = params[params.size() - 1].value.mutable_data();
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t j = 0; j < n; ++j) dst_w[r * n + j] = src_w[r * n + perm[j]];
    for (std::size_t j = 0; j < n; ++j) dst_b[j] = src_b[perm[j]];
  }

  std::mt19937_64 rng(22);
  const Tensor x_enc = random_returns(cfg.window, n, rng);
  const Tensor x_dec = random_returns(cfg.window, n, rng);
  auto permute_cols = [&](const Tensor& x) {
    std::vector<double> v(x.size());
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t j = 0; j < n; ++j) v[r * n + j] = x.at(r, perm[j]);
    return Tensor::from(x.shape(), v);
  };
  const Tensor w = base.forward(x_enc, x_dec);
  const Tensor wp = permuted.forward(permute_cols(x_enc), permute_cols(x_dec));
  for (std::size_t r = 0; r < cfg.window; ++r)
    for (std::size_t j = 0; j < n; ++j)
      CHECK(wp.at(r, j) == doctest::Approx(w.at(r, perm[j])).epsilon(1e-12));
}

TEST_CASE("loss gradient matches finite differences for every parameter group") {
  const PTConfig cfg = tiny_pt_config();
  const PortfolioTransformer model(cfg);
  std::mt19937_64 rng(31);
  const Tensor x_enc = random_returns(cfg.window, cfg.n_assets, rng);
  const Tensor x_dec = random_returns(cfg.window, cfg.n_assets, rng);
  const ReturnsWindow window{random_returns(cfg.window, cfg.n_assets, rng), {}};
  const CostModel costs{0.0002};
  std::vector<Tensor> params;
  for (const auto& p : model.parameters()) params.push_back(p.value);
  const auto r = check_gradients(
      [&] { return sharpe_loss(model.forward(x_enc, x_dec), window, costs); }, params);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("dropout only acts in training mode") {
  PTConfig cfg = tiny_pt_config();
  cfg.dropout = 0.3;
  const PortfolioTransformer model(cfg);
  std::mt19937_64 rng(41);
  const Tensor x = random_returns(cfg.window, cfg.n_assets, rng);
  const Tensor eval1 = model.forward(x, x);
  const Tensor eval2 = model.forward(x, x);
  CHECK(values(eval1) == values(eval2));
  Rng drop_rng(3);
  const Tensor train = model.forward(x, x, ForwardMode{true, &drop_rng});
  CHECK(values(train) != values(eval1));
  CHECK_THROWS_AS(model.forward(x, x, ForwardMode{true, nullptr}), ContractError);
}
