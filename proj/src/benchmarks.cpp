#include "pt/benchmarks.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "pt/errors.hpp"

namespace pt {
namespace {

void check_block(const Tensor& x, std::size_t n_assets, const char* who) {
  if (x.rank() != 2 || x.cols() != n_assets || x.rows() == 0) {
    throw DimensionError(std::string(who) + ": input " + shape_str(x.shape()) + " needs " +
                         std::to_string(n_assets) + " columns");
  }
}

void check_spec(const ModelSpec& spec, const char* who) {
  if (spec.n_assets < 2 || spec.window < 1 || spec.d_model < 1) {
    throw ContractError(std::string(who) + ": n_assets >= 2, window >= 1, hidden >= 1 required");
  }
}

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace

// ---- LSTM -----------------------------------------------------------------

LSTMModel::LSTMModel(const ModelSpec& spec) : spec_(spec) {
  check_spec(spec_, "LSTMModel");
  spec_.kind = "lstm";
  Rng rng(spec_.seed);
  const std::size_t n = spec_.n_assets, h = spec_.d_model;
  w_input = uniform_param({n, 4 * h}, std::sqrt(1.0 / static_cast<double>(n)), rng);
  w_hidden = uniform_param({h, 4 * h}, std::sqrt(1.0 / static_cast<double>(h)), rng);
  bias = Tensor::zeros({4 * h}, true);
  head = Dense(h, n, rng);
}

Tensor LSTMModel::lstm_forward(const Tensor& x, const ForwardMode& mode) const {
  check_block(x, spec_.n_assets, "lstm_forward");
  const std::size_t h = spec_.d_model;
  const Tensor projected = add_row(matmul(x, w_input), bias);
  Tensor hidden_state = Tensor::zeros({1, h});
  Tensor cell = Tensor::zeros({1, h});
  std::vector<Tensor> states;
  states.reserve(x.rows());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    const Tensor z = add(slice_rows(projected, t, t + 1), matmul(hidden_state, w_hidden));
    const Tensor in_gate = sigmoid(slice_cols(z, 0, h));
    const Tensor forget_gate = sigmoid(slice_cols(z, h, 2 * h));
    const Tensor candidate = tanh(slice_cols(z, 2 * h, 3 * h));
    const Tensor out_gate = sigmoid(slice_cols(z, 3 * h, 4 * h));
    cell = add(mul(forget_gate, cell), mul(in_gate, candidate));
    hidden_state = mul(out_gate, tanh(cell));
    states.push_back(hidden_state);
  }
  const Tensor stacked = states.size() == 1 ? states[0] : concat(states, 0);
  return allocation_head(head(train_dropout(stacked, spec_.dropout, mode)));
}

Tensor LSTMModel::forward(const Tensor& x_enc, const Tensor& x_dec,
                          const ForwardMode& mode) const {
  check_block(x_enc, spec_.n_assets, "LSTMModel encoder window");
  check_block(x_dec, spec_.n_assets, "LSTMModel decoder window");
  const Tensor w = lstm_forward(concat({x_enc, x_dec}, 0), mode);
  return slice_rows(w, x_enc.rows(), x_enc.rows() + x_dec.rows());
}

std::vector<NamedTensor> LSTMModel::parameters() const {
  std::vector<NamedTensor> out{{"lstm.w_input", w_input},
                               {"lstm.w_hidden", w_hidden},
                               {"lstm.bias", bias}};
  head.collect("head", out);
  return out;
}

std::unique_ptr<SequenceModel> LSTMModel::clone() const {
  auto copy = std::make_unique<LSTMModel>(spec_);
  copy_parameters(*this, *copy);
  return copy;
}

// ---- MLP ------------------------------------------------------------------

MLPModel::MLPModel(const ModelSpec& spec) : spec_(spec) {
  check_spec(spec_, "MLPModel");
  spec_.kind = "mlp";
  Rng rng(spec_.seed);
  hidden = Dense(spec_.window * spec_.n_assets, spec_.d_model, rng);
  output = Dense(spec_.d_model, spec_.n_assets, rng);
}

Tensor MLPModel::score_rows(const Tensor& flat, const ForwardMode& mode) const {
  const Tensor h = train_dropout(elu(hidden(flat)), spec_.dropout, mode);
  return output(h);
}

Tensor MLPModel::mlp_forward(const Tensor& x, const ForwardMode& mode) const {
  check_block(x, spec_.n_assets, "mlp_forward");
  if (x.rows() != spec_.window) {
    throw DimensionError("mlp_forward: expected " + std::to_string(spec_.window) + " rows, got " +
                         shape_str(x.shape()));
  }
  const Tensor flat = reshape(x, {1, x.size()});
  return reshape(allocation_head(score_rows(flat, mode)), {spec_.n_assets});
}

Tensor MLPModel::forward(const Tensor& x_enc, const Tensor& x_dec,
                         const ForwardMode& mode) const {
  check_block(x_enc, spec_.n_assets, "MLPModel encoder window");
  check_block(x_dec, spec_.n_assets, "MLPModel decoder window");
  const std::size_t w = spec_.window;
  if (x_enc.rows() + 1 < w) {
    throw DimensionError("MLPModel: encoder window shorter than lookback - 1");
  }
  const Tensor full = concat({x_enc, x_dec}, 0);
  const std::size_t offset = x_enc.rows();
  std::vector<Tensor> rows;
  rows.reserve(x_dec.rows());
  for (std::size_t j = 0; j < x_dec.rows(); ++j) {
    const std::size_t end = offset + j + 1;
    rows.push_back(reshape(slice_rows(full, end - w, end), {1, w * spec_.n_assets}));
  }
  const Tensor flat = rows.size() == 1 ? rows[0] : concat(rows, 0);
  return allocation_head(score_rows(flat, mode));
}

std::vector<NamedTensor> MLPModel::parameters() const {
  std::vector<NamedTensor> out;
  hidden.collect("mlp.hidden", out);
  output.collect("mlp.output", out);
  return out;
}

std::unique_ptr<SequenceModel> MLPModel::clone() const {
  auto copy = std::make_unique<MLPModel>(spec_);
  copy_parameters(*this, *copy);
  return copy;
}

// ---- mean-variance and equal weight ---------------------------------------

std::vector<double> mv_weights(std::span<const double> history, std::size_t n_assets,
                               const MVConfig& cfg) {
  if (n_assets == 0 || history.size() % n_assets != 0) {
    throw DimensionError("mv_weights: history is not a multiple of n_assets");
  }
  if (cfg.lookback < 2 || !(cfg.ridge > 0.0)) {
    throw ContractError("mv_weights: lookback >= 2 and ridge > 0 required");
  }
  const std::size_t rows = history.size() / n_assets;
  if (rows < cfg.lookback) {
    throw ContractError("mv_weights: " + std::to_string(rows) + " rows of history, need " +
                        std::to_string(cfg.lookback));
  }
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMatrix> window(
      history.data() + (rows - cfg.lookback) * n_assets, static_cast<Eigen::Index>(cfg.lookback),
      static_cast<Eigen::Index>(n_assets));
  const Eigen::VectorXd mu = window.colwise().mean().transpose();
  const RowMatrix centered = window.rowwise() - mu.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(cfg.lookback - 1);
  cov.diagonal().array() += cfg.ridge;

  return tangency_weights(std::span<const double>(mu.data(), n_assets),
                          std::span<const double>(cov.data(), n_assets * n_assets));
}

std::vector<double> tangency_weights(std::span<const double> mu, std::span<const double> cov) {
  const std::size_t n = mu.size();
  if (n == 0 || cov.size() != n * n) {
    throw DimensionError("tangency_weights: covariance must be n x n for n = " +
                         std::to_string(n));
  }
  const auto idx = static_cast<Eigen::Index>(n);
  const Eigen::Map<const Eigen::MatrixXd> sigma(cov.data(), idx, idx);
  const Eigen::Map<const Eigen::VectorXd> mean(mu.data(), idx);
  const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw NumericError("tangency_weights: covariance is not positive definite");
  }
  const Eigen::VectorXd raw = llt.solve(mean);
  const double gross = raw.cwiseAbs().sum();
  if (!std::isfinite(gross)) throw NumericError("tangency_weights: non-finite direction");
  if (gross == 0.0) return equal_weights(n);
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = raw[static_cast<Eigen::Index>(i)] / gross;
  return w;
}

std::vector<double> equal_weights(std::size_t n_assets) {
  if (n_assets == 0) throw ContractError("equal_weights: no assets");
  return std::vector<double>(n_assets, 1.0 / static_cast<double>(n_assets));
}

}  // namespace pt
