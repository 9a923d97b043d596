#include "pt/model/layers.hpp"

#include <cmath>

#include "pt/errors.hpp"

namespace pt {
namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor fan_in_uniform(std::size_t in, std::size_t out, Rng& rng) {
  return uniform_tensor({in, out}, std::sqrt(1.0 / static_cast<double>(in)), rng);
}

}  // namespace

Tensor train_dropout(const Tensor& x, double rate, const ForwardMode& mode) {
  if (!mode.training || rate <= 0.0) return x;
  if (mode.rng == nullptr) throw ContractError("dropout in training mode needs an rng");
  return dropout(x, rate, *mode.rng);
}

Dense::Dense(std::size_t in, std::size_t out, Rng& rng)
    : weight(fan_in_uniform(in, out, rng)), bias(Tensor::zeros({out}, true)) {}

Tensor Dense::operator()(const Tensor& x) const { return add_row(matmul(x, weight), bias); }

void Dense::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

LayerNormParams::LayerNormParams(std::size_t width)
    : gain(Tensor::full({width}, 1.0, true)), bias(Tensor::zeros({width}, true)) {}

void LayerNormParams::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".bias", bias});
}

Time2VecLayer::Time2VecLayer(std::size_t k, Rng& rng)
    : omega(uniform_tensor({k + 1}, 1.0, rng)), phi(uniform_tensor({k + 1}, 1.0, rng)) {}

Tensor Time2VecLayer::encode_positions(std::size_t count) const {
  const std::size_t width = omega.size();
  std::vector<double> t(count);
  for (std::size_t i = 0; i < count; ++i) t[i] = static_cast<double>(i);
  const Tensor positions = Tensor::from({count, 1}, std::move(t));
  const Tensor linear = add_row(matmul(positions, reshape(omega, {1, width})), phi);
  if (width == 1) return linear;
  return concat({slice_cols(linear, 0, 1), sin(slice_cols(linear, 1, width))}, 1);
}

void Time2VecLayer::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".omega", omega});
  out.push_back({prefix + ".phi", phi});
}

Tensor time2vec_encode(std::size_t t, const Time2VecLayer& layer) {
  const std::size_t width = layer.width();
  return reshape(slice_rows(layer.encode_positions(t + 1), t, t + 1), {width});
}

MHALayer::MHALayer(std::size_t d_model, std::size_t n_heads, Rng& rng) {
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw ContractError("MHALayer: n_heads must divide d_model");
  }
  const std::size_t d_k = d_model / n_heads;
  for (std::size_t i = 0; i < n_heads; ++i) {
    w_query.push_back(fan_in_uniform(d_model, d_k, rng));
    w_key.push_back(fan_in_uniform(d_model, d_k, rng));
    w_value.push_back(fan_in_uniform(d_model, d_k, rng));
  }
  w_out = fan_in_uniform(n_heads * d_k, d_model, rng);
}

void MHALayer::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  for (std::size_t i = 0; i < w_query.size(); ++i) {
    const std::string head = prefix + ".head" + std::to_string(i);
    out.push_back({head + ".w_query", w_query[i]});
    out.push_back({head + ".w_key", w_key[i]});
    out.push_back({head + ".w_value", w_value[i]});
  }
  out.push_back({prefix + ".w_out", w_out});
}

Tensor causal_mask(std::size_t size) {
  std::vector<double> m(size * size, 0.0);
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = i + 1; j < size; ++j) m[i * size + j] = kMaskBlocked;
  return Tensor::from({size, size}, std::move(m));
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor* mask,
                 double scale) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.cols() != k.cols() ||
      k.rows() != v.rows()) {
    throw DimensionError("attention: incompatible Q " + shape_str(q.shape()) + ", K " +
                         shape_str(k.shape()) + ", V " + shape_str(v.shape()));
  }
  Tensor scores = pt::scale(matmul(q, transpose(k)), 1.0 / scale);
  if (mask != nullptr) {
    if (mask->shape() != scores.shape()) {
      throw DimensionError("attention: mask " + shape_str(mask->shape()) + " vs scores " +
                           shape_str(scores.shape()));
    }
    const std::size_t cols = scores.cols();
    const auto m = mask->data();
    for (std::size_t r = 0; r < scores.rows(); ++r) {
      bool any_open = false;
      for (std::size_t c = 0; c < cols && !any_open; ++c) any_open = m[r * cols + c] > 0.5 * kMaskBlocked;
      if (!any_open) {
        throw ContractError("attention: mask blocks every position of row " + std::to_string(r));
      }
    }
    scores = add(scores, *mask);
  }
  return matmul(softmax(scores, 1), v);
}

Tensor multi_head_attention(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                            const MHALayer& layer, const Tensor* mask,
                            AttentionScale scale_mode) {
  const std::size_t d_model = layer.w_out.cols();
  for (const Tensor* t : {&q_in, &k_in, &v_in}) {
    if (t->rank() != 2 || t->cols() != d_model) {
      throw DimensionError("multi_head_attention: input " + shape_str(t->shape()) +
                           " does not have width " + std::to_string(d_model));
    }
  }
  const double scale = std::sqrt(static_cast<double>(
      scale_mode == AttentionScale::d_model ? d_model : layer.key_width()));
  std::vector<Tensor> heads;
  heads.reserve(layer.n_heads());
  for (std::size_t i = 0; i < layer.n_heads(); ++i) {
    heads.push_back(attention(matmul(q_in, layer.w_query[i]), matmul(k_in, layer.w_key[i]),
                              matmul(v_in, layer.w_value[i]), mask, scale));
  }
  const Tensor joined = heads.size() == 1 ? heads[0] : concat(heads, 1);
  return matmul(joined, layer.w_out);
}

GRNLayer::GRNLayer(std::size_t d_model, Rng& rng)
    : inner(d_model, d_model, rng),
      outer(d_model, d_model, rng),
      value(d_model, d_model, rng),
      gate(d_model, d_model, rng),
      norm(d_model) {}

void GRNLayer::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  inner.collect(prefix + ".inner", out);
  outer.collect(prefix + ".outer", out);
  value.collect(prefix + ".glu_value", out);
  gate.collect(prefix + ".glu_gate", out);
  norm.collect(prefix + ".norm", out);
}

Tensor grn(const Tensor& z, const GRNLayer& layer, double drop_rate, const ForwardMode& mode) {
  const std::size_t width = layer.norm.gain.size();
  if (z.rank() != 2 || z.cols() != width) {
    throw DimensionError("grn: input " + shape_str(z.shape()) + " does not have width " +
                         std::to_string(width));
  }
  const Tensor g2 = elu(layer.inner(z));
  const Tensor g1 = layer.outer(g2);
  const Tensor glu = mul(layer.value(g1), sigmoid(layer.gate(g1)));
  return layer.norm(add(z, train_dropout(glu, drop_rate, mode)));
}

}  // namespace pt
