#include "pt/checkpoint.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "pt/errors.hpp"
#include "pt/metrics.hpp"

namespace pt {
namespace {

constexpr const char* kMagic = "PTCKPT1";

const char* scale_name(AttentionScale s) { return s == AttentionScale::d_k ? "d_k" : "d_model"; }

// Whitespace-separated token reader with a running line number for errors.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::string word() {
    std::string w;
    char c;
    while (in_.get(c)) {
      if (c == '\n') ++line_;
      if (!std::isspace(static_cast<unsigned char>(c))) {
        w.push_back(c);
        break;
      }
    }
    if (w.empty()) fail("unexpected end of file");
    while (in_.get(c)) {
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (c == '\n') ++line_;
        break;
      }
      w.push_back(c);
    }
    return w;
  }

  void expect(const std::string& key) {
    const auto w = word();
    if (w != key) fail("expected '" + key + "', found '" + w + "'");
  }

  template <typename T>
  T number() {
    const auto w = word();
    T v{};
    const auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc{} || ptr != w.data() + w.size()) fail("bad number '" + w + "'");
    return v;
  }

  template <typename T>
  T field(const std::string& key) {
    expect(key);
    return number<T>();
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("checkpoint line " + std::to_string(line_) + ": " + what);
  }

 private:
  std::istream& in_;
  std::size_t line_ = 1;
};

}  // namespace

void save_checkpoint(std::ostream& out, const SequenceModel& model, const InputScaling& scaling) {
  const ModelSpec& s = model.spec();
  out << kMagic << '\n'
      << "kind " << s.kind << '\n'
      << "n_assets " << s.n_assets << '\n'
      << "window " << s.window << '\n'
      << "d_model " << s.d_model << '\n'
      << "n_heads " << s.n_heads << '\n'
      << "t2v_k " << s.t2v_k << '\n'
      << "n_layers " << s.n_layers << '\n'
      << "dropout " << format_double(s.dropout) << '\n'
      << "scale " << scale_name(s.scale) << '\n'
      << "seed " << s.seed << '\n';
  out << "scaling " << scaling.factor.size();
  for (double f : scaling.factor) out << ' ' << format_double(f);
  out << '\n';
  const auto params = model.parameters();
  out << "params " << params.size() << '\n';
  for (const auto& p : params) {
    out << "param " << p.name << ' ' << p.value.rank();
    for (auto d : p.value.shape()) out << ' ' << d;
    out << '\n';
    const auto v = p.value.data();
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << format_double(v[i]);
    out << '\n';
  }
  out << "end\n";
}

void save_checkpoint(const std::filesystem::path& path, const SequenceModel& model,
                     const InputScaling& scaling) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  save_checkpoint(out, model, scaling);
  if (!out) throw DataError("failed writing " + path.string());
}

Checkpoint load_checkpoint(std::istream& in) {
  Reader r(in);
  r.expect(kMagic);
  ModelSpec spec;
  r.expect("kind");
  spec.kind = r.word();
  spec.n_assets = r.field<std::size_t>("n_assets");
  spec.window = r.field<std::size_t>("window");
  spec.d_model = r.field<std::size_t>("d_model");
  spec.n_heads = r.field<std::size_t>("n_heads");
  spec.t2v_k = r.field<std::size_t>("t2v_k");
  spec.n_layers = r.field<std::size_t>("n_layers");
  spec.dropout = r.field<double>("dropout");
  r.expect("scale");
  const auto scale = r.word();
  if (scale == "d_model") {
    spec.scale = AttentionScale::d_model;
  } else if (scale == "d_k") {
    spec.scale = AttentionScale::d_k;
  } else {
    r.fail("unknown attention scale '" + scale + "'");
  }
  spec.seed = r.field<std::uint64_t>("seed");

  Checkpoint ck;
  const auto width = r.field<std::size_t>("scaling");
  if (width != spec.n_assets) r.fail("scaling width differs from n_assets");
  for (std::size_t i = 0; i < width; ++i) ck.scaling.factor.push_back(r.number<double>());

  try {
    ck.model = make_model(spec);
  } catch (const std::logic_error& e) {
    r.fail(std::string("cannot rebuild model: ") + e.what());
  }
  auto params = ck.model->parameters();
  if (r.field<std::size_t>("params") != params.size()) r.fail("parameter count differs from architecture");
  for (auto& p : params) {
    r.expect("param");
    const auto name = r.word();
    if (name != p.name) r.fail("expected parameter " + p.name + ", found " + name);
    const auto rank = r.number<std::size_t>();
    Shape shape;
    for (std::size_t i = 0; i < rank; ++i) shape.push_back(r.number<std::size_t>());
    if (shape != p.value.shape()) r.fail("shape of " + name + " differs from architecture");
    for (double& v : p.value.mutable_data()) v = r.number<double>();
  }
  r.expect("end");
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return load_checkpoint(in);
}

}  // namespace pt
