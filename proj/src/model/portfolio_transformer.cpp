#include "pt/model/portfolio_transformer.hpp"

#include "pt/errors.hpp"

namespace pt {

void PTConfig::validate() const {
  auto fail = [](const std::string& what) { throw ContractError("PTConfig: " + what); };
  if (n_assets < 2) fail("n_assets must be at least 2");
  if (window < 2) fail("window must be at least 2");
  if (n_heads < 1) fail("n_heads must be at least 1");
  if (d_model < n_heads) fail("d_model must be at least n_heads");
  if (d_model % n_heads != 0) fail("n_heads must divide d_model");
  if (t2v_k < 1) fail("t2v_k must be at least 1");
  if (n_layers < 1) fail("n_layers must be at least 1");
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout must be in [0, 1)");
}

ModelSpec PTConfig::to_spec() const {
  ModelSpec s;
  s.kind = "pt";
  s.n_assets = n_assets;
  s.window = window;
  s.d_model = d_model;
  s.n_heads = n_heads;
  s.t2v_k = t2v_k;
  s.n_layers = n_layers;
  s.dropout = dropout;
  s.scale = scale;
  s.seed = seed;
  return s;
}

PTConfig PTConfig::from_spec(const ModelSpec& s) {
  PTConfig c;
  c.n_assets = s.n_assets;
  c.window = s.window;
  c.d_model = s.d_model;
  c.n_heads = s.n_heads;
  c.t2v_k = s.t2v_k;
  c.n_layers = s.n_layers;
  c.dropout = s.dropout;
  c.scale = s.scale;
  c.seed = s.seed;
  return c;
}

PortfolioTransformer::PortfolioTransformer(const PTConfig& config)
    : config_(config), spec_(config.to_spec()) {
  config_.validate();
  Rng rng(config_.seed);
  const std::size_t d = config_.d_model;
  input_ = Dense(config_.n_assets + config_.t2v_k + 1, d, rng);
  time2vec_ = Time2VecLayer(config_.t2v_k, rng);
  for (std::size_t i = 0; i < config_.n_layers; ++i) {
    EncoderLayer layer;
    layer.self_attention = MHALayer(d, config_.n_heads, rng);
    layer.attention_norm = LayerNormParams(d);
    layer.gating = GRNLayer(d, rng);
    encoder_.push_back(std::move(layer));
  }
  for (std::size_t i = 0; i < config_.n_layers; ++i) {
    DecoderLayer layer;
    layer.self_attention = MHALayer(d, config_.n_heads, rng);
    layer.self_norm = LayerNormParams(d);
    layer.cross_attention = MHALayer(d, config_.n_heads, rng);
    layer.cross_norm = LayerNormParams(d);
    layer.gating = GRNLayer(d, rng);
    decoder_.push_back(std::move(layer));
  }
  head_ = Dense(d, config_.n_assets, rng);
}

void PortfolioTransformer::check_window(const Tensor& x, const char* which) const {
  if (x.rank() != 2 || x.rows() != config_.window || x.cols() != config_.n_assets) {
    throw DimensionError(std::string("PortfolioTransformer: ") + which + " window " +
                         shape_str(x.shape()) + ", expected [" + std::to_string(config_.window) +
                         ", " + std::to_string(config_.n_assets) + "]");
  }
}

Tensor PortfolioTransformer::embed_window(const Tensor& x) const {
  check_window(x, "input");
  return input_(concat({x, time2vec_.encode_positions(x.rows())}, 1));
}

Tensor PortfolioTransformer::encode(const Tensor& x_enc, const ForwardMode& mode) const {
  check_window(x_enc, "encoder");
  Tensor h = embed_window(x_enc);
  for (const EncoderLayer& layer : encoder_) {
    const Tensor a = multi_head_attention(h, h, h, layer.self_attention, nullptr, config_.scale);
    h = layer.attention_norm(add(h, train_dropout(a, config_.dropout, mode)));
    h = grn(h, layer.gating, config_.dropout, mode);
  }
  return h;
}

Tensor PortfolioTransformer::scores(const Tensor& x_enc, const Tensor& x_dec,
                                    const ForwardMode& mode) const {
  check_window(x_dec, "decoder");
  const Tensor memory = encode(x_enc, mode);
  const Tensor mask = causal_mask(config_.window);
  Tensor h = embed_window(x_dec);
  for (const DecoderLayer& layer : decoder_) {
    const Tensor a = multi_head_attention(h, h, h, layer.self_attention, &mask, config_.scale);
    h = layer.self_norm(add(h, train_dropout(a, config_.dropout, mode)));
    const Tensor c =
        multi_head_attention(h, memory, memory, layer.cross_attention, nullptr, config_.scale);
    h = layer.cross_norm(add(h, train_dropout(c, config_.dropout, mode)));
    h = grn(h, layer.gating, config_.dropout, mode);
  }
  return head_(h);
}

Tensor PortfolioTransformer::forward(const Tensor& x_enc, const Tensor& x_dec,
                                     const ForwardMode& mode) const {
  return allocation_head(scores(x_enc, x_dec, mode));
}

std::vector<NamedTensor> PortfolioTransformer::parameters() const {
  std::vector<NamedTensor> out;
  input_.collect("input", out);
  time2vec_.collect("time2vec", out);
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    const std::string p = "encoder" + std::to_string(i);
    encoder_[i].self_attention.collect(p + ".self_attention", out);
    encoder_[i].attention_norm.collect(p + ".attention_norm", out);
    encoder_[i].gating.collect(p + ".grn", out);
  }
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    const std::string p = "decoder" + std::to_string(i);
    decoder_[i].self_attention.collect(p + ".self_attention", out);
    decoder_[i].self_norm.collect(p + ".self_norm", out);
    decoder_[i].cross_attention.collect(p + ".cross_attention", out);
    decoder_[i].cross_norm.collect(p + ".cross_norm", out);
    decoder_[i].gating.collect(p + ".grn", out);
  }
  head_.collect("head", out);
  return out;
}

std::unique_ptr<SequenceModel> PortfolioTransformer::clone() const {
  auto copy = std::make_unique<PortfolioTransformer>(config_);
  copy_parameters(*this, *copy);
  return copy;
}

}  // namespace pt
