#include "pt/benchmarks.hpp"
#include "pt/errors.hpp"
#include "pt/model/portfolio_transformer.hpp"
#include "pt/model/sequence_model.hpp"

namespace pt {

std::unique_ptr<SequenceModel> make_model(const ModelSpec& spec) {
  if (spec.kind == "pt") return std::make_unique<PortfolioTransformer>(PTConfig::from_spec(spec));
  if (spec.kind == "lstm") return std::make_unique<LSTMModel>(spec);
  if (spec.kind == "mlp") return std::make_unique<MLPModel>(spec);
  throw ContractError("unknown model kind '" + spec.kind + "'");
}

Tensor allocation_head(const Tensor& scores) {
  if (scores.rank() != 2) {
    throw DimensionError("allocation_head: scores must be rows x assets, got " +
                         shape_str(scores.shape()));
  }
  return mul(sign_const(scores), softmax(scores, 1));
}

void copy_parameters(const SequenceModel& src, SequenceModel& dst) {
  const auto from = src.parameters();
  auto to = dst.parameters();
  if (from.size() != to.size()) throw DimensionError("copy_parameters: architectures differ");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].value.shape() != to[i].value.shape() || from[i].name != to[i].name) {
      throw DimensionError("copy_parameters: mismatch at " + from[i].name);
    }
    const auto s = from[i].value.data();
    std::copy(s.begin(), s.end(), to[i].value.mutable_data().begin());
  }
}

}  // namespace pt
