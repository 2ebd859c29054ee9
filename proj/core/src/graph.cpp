#include "flowdeblur/graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace flowdeblur {

int LayerSpec::padding() const {
  if (kind == LayerKind::kDeconv) return (kernel - stride) / 2;
  return kernel / 2;
}

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kDeconv: return "deconv";
    case LayerKind::kRnn: return "rnn";
  }
  return "?";
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::kNone: return "";
    case Activation::kLeakyRelu: return "+ReLU";
    case Activation::kTanh: return "+tanh";
  }
  return "?";
}

const LayerSpec* LayerGraph::find(const std::string& layer) const {
  for (const auto& l : layers) {
    if (l.name == layer) return &l;
  }
  return nullptr;
}

int LayerGraph::channels_of(const std::string& value) const {
  for (const auto& [name, c] : sources) {
    if (name == value) return c;
  }
  if (const LayerSpec* l = find(value)) return l->out_channels;
  throw BuildError(name + ": unknown value '" + value + "'");
}

bool LayerGraph::has_kind(LayerKind kind) const { return count_kind(kind) > 0; }

std::size_t LayerGraph::count_kind(LayerKind kind) const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.kind == kind ? 1 : 0;
  return n;
}

void LayerGraph::validate() const {
  std::set<std::string> known;
  for (const auto& [src, c] : sources) {
    if (!known.insert(src).second) throw BuildError(name + ": duplicate source '" + src + "'");
    if (c <= 0) throw BuildError(name + ": source '" + src + "' has no channels");
  }
  for (const auto& l : layers) {
    auto fail = [&](const std::string& why) {
      throw BuildError(name + ": layer '" + l.name + "': " + why);
    };
    if (known.count(l.name)) fail("duplicate name");
    if (l.inputs.empty()) fail("no inputs");
    int in_sum = 0;
    for (const auto& in : l.inputs) {
      if (!known.count(in)) fail("input '" + in + "' is not defined before this layer");
      in_sum += channels_of(in);
    }
    if (in_sum != l.in_channels) {
      fail("declared " + std::to_string(l.in_channels) + " input channels but inputs provide " +
           std::to_string(in_sum));
    }
    if (l.out_channels <= 0) fail("no output channels");
    if (l.kind == LayerKind::kRnn) {
      if (l.inputs.size() != 2) fail("rnn takes exactly {features, gates}");
      const int c = channels_of(l.inputs[0]);
      const int gates = channels_of(l.inputs[1]);
      if (gates != kScanDirections * c || l.out_channels != kScanDirections * c) {
        fail("rnn needs " + std::to_string(4 * c) + " gate maps and outputs for " +
             std::to_string(c) + " feature channels");
      }
    } else {
      if (l.kernel <= 0 || l.stride <= 0) fail("invalid kernel/stride");
      if (l.kind == LayerKind::kDeconv && (l.kernel - l.stride) % 2 != 0) {
        fail("deconv kernel/stride cannot produce an exact upsampling");
      }
    }
    known.insert(l.name);
  }
  for (const auto& out : outputs) {
    if (!find(out)) throw BuildError(name + ": output '" + out + "' is not a layer");
  }
}

void LayerGraph::prune() {
  std::set<std::string> live(outputs.begin(), outputs.end());
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    if (live.count(it->name)) live.insert(it->inputs.begin(), it->inputs.end());
  }
  std::vector<LayerSpec> kept;
  for (auto& l : layers) {
    if (live.count(l.name)) kept.push_back(std::move(l));
  }
  layers = std::move(kept);
}

std::string LayerGraph::summary() const {
  std::ostringstream os;
  for (const auto& l : layers) {
    os << l.name << "\t" << to_string(l.kind) << to_string(l.activation) << "\t";
    if (l.kind == LayerKind::kRnn) {
      os << "/\t/\t";
    } else {
      os << l.kernel << "x" << l.kernel << "\t" << l.stride << "\t";
    }
    os << l.in_channels << "/" << l.out_channels << "\t";
    for (std::size_t i = 0; i < l.inputs.size(); ++i) os << (i ? "+" : "") << l.inputs[i];
    os << "\n";
  }
  return os.str();
}

template <typename T>
void init_params(const LayerGraph& graph, ParamMap<T>& params, Rng& rng) {
  for (const auto& l : graph.layers) {
    if (!l.has_params()) continue;
    auto p = make_layer_params<T>(l.out_channels, l.in_channels, l.kernel);
    xavier_init(p, rng);
    params[l.name] = std::move(p);
  }
}

namespace {

template <typename T>
const Tensor<T>& lookup(const ValueMap<T>& values, const std::string& name) {
  auto it = values.find(name);
  if (it == values.end()) throw Error("graph: value '" + name + "' not computed");
  return it->second;
}

template <typename T>
const LayerParams<T>& params_for(const ParamMap<T>& params, const LayerSpec& l) {
  auto it = params.find(l.name);
  if (it == params.end()) throw Error("graph: no parameters for layer '" + l.name + "'");
  return it->second;
}

template <typename T>
void add_into(ValueMap<T>& grads, const std::string& name, Tensor<T> g) {
  auto it = grads.find(name);
  if (it == grads.end()) {
    grads.emplace(name, std::move(g));
    return;
  }
  require_same_shape(it->second, g, "graph gradient accumulation");
  T* dst = it->second.data();
  const T* src = g.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

template <typename T>
void check_gates(const Tensor<T>& gates, const std::string& layer) {
  for (T v : gates.storage()) {
    if (!(std::abs(v) < T(1))) {
      throw NumericalError("rnn layer '" + layer + "': gate value outside (-1, 1)");
    }
  }
}

}  // namespace

template <typename T>
GraphState<T> graph_forward(const LayerGraph& graph, const ParamMap<T>& params,
                            ValueMap<T> sources) {
  GraphState<T> st;
  for (const auto& [name, channels] : graph.sources) {
    auto it = sources.find(name);
    if (it == sources.end()) throw Error(graph.name + ": missing source '" + name + "'");
    if (it->second.c() != channels) {
      throw ShapeError(graph.name + ": source '" + name + "' has " + std::to_string(it->second.c()) +
                       " channels, expected " + std::to_string(channels));
    }
    st.values.emplace(name, std::move(it->second));
  }
  for (const auto& l : graph.layers) {
    if (l.kind == LayerKind::kRnn) {
      const Tensor<T>& f = lookup(st.values, l.inputs[0]);
      const Tensor<T>& gates = lookup(st.values, l.inputs[1]);
      check_gates(gates, l.name);
      auto r = svrnn_forward(f, gates);
      st.rnn.emplace(l.name, std::move(r.cache));
      st.values.emplace(l.name, std::move(r.g));
      continue;
    }
    Tensor<T> x;
    if (l.inputs.size() == 1) {
      x = lookup(st.values, l.inputs[0]);
    } else {
      std::vector<const Tensor<T>*> parts;
      for (const auto& in : l.inputs) parts.push_back(&lookup(st.values, in));
      x = concat_channels<T>(std::span<const Tensor<T>* const>(parts));
    }
    const LayerParams<T>& p = params_for(params, l);
    Tensor<T> y = l.kind == LayerKind::kConv ? conv2d_forward(x, p, l.stride, l.padding())
                                             : deconv2d_forward(x, p, l.stride, l.padding());
    if (l.activation == Activation::kLeakyRelu) leaky_relu_inplace(y);
    if (l.activation == Activation::kTanh) {
      tanh_inplace(y);
      const T bound = std::nextafter(T(1), T(0));
      for (T& v : y.storage()) v = std::clamp(v, -bound, bound);
    }
    st.layer_inputs.emplace(l.name, std::move(x));
    st.values.emplace(l.name, std::move(y));
  }
  return st;
}

template <typename T>
GraphGrads<T> graph_backward(const LayerGraph& graph, const ParamMap<T>& params,
                             const GraphState<T>& state, ValueMap<T> output_grads,
                             const std::set<std::string>& source_grads) {
  ValueMap<T> grads = std::move(output_grads);
  GraphGrads<T> out;

  // A value needs a gradient if it is a requested source or a parameterized
  // layer output, or feeds something that does.
  std::set<std::string> needs(source_grads.begin(), source_grads.end());
  for (const auto& l : graph.layers) {
    for (const auto& in : l.inputs) {
      if (needs.count(in)) needs.insert(l.name);
    }
  }
  auto wants_grad = [&](const std::string& value) {
    return needs.count(value) > 0 || graph.find(value) != nullptr;
  };

  for (auto it = graph.layers.rbegin(); it != graph.layers.rend(); ++it) {
    const LayerSpec& l = *it;
    auto git = grads.find(l.name);
    if (git == grads.end()) {
      if (l.has_params()) {
        const LayerParams<T>& p = params_for(params, l);
        out.params[l.name] = ParamGrads<T>{Tensor<T>(p.weight.shape()),
                                           std::vector<T>(p.bias.size(), T(0))};
      }
      continue;
    }
    Tensor<T> gy = std::move(git->second);
    grads.erase(git);

    if (l.kind == LayerKind::kRnn) {
      const Tensor<T>& f = lookup(state.values, l.inputs[0]);
      const Tensor<T>& gates = lookup(state.values, l.inputs[1]);
      auto g = svrnn_backward(gy, f, gates, state.rnn.at(l.name));
      if (wants_grad(l.inputs[0])) add_into(grads, l.inputs[0], std::move(g.f));
      if (wants_grad(l.inputs[1])) add_into(grads, l.inputs[1], std::move(g.w));
      continue;
    }

    const Tensor<T>& y = lookup(state.values, l.name);
    if (l.activation == Activation::kLeakyRelu) leaky_relu_backward_inplace(gy, y);
    if (l.activation == Activation::kTanh) tanh_backward_inplace(gy, y);

    bool need_x = false;
    for (const auto& in : l.inputs) need_x = need_x || wants_grad(in);
    const Tensor<T>& x = lookup(state.layer_inputs, l.name);
    const LayerParams<T>& p = params_for(params, l);
    ConvGrads<T> g = l.kind == LayerKind::kConv
                         ? conv2d_backward(gy, x, p, l.stride, l.padding(), need_x)
                         : deconv2d_backward(gy, x, p, l.stride, l.padding(), need_x);
    out.params[l.name] = std::move(g.params);
    if (!need_x) continue;
    if (l.inputs.size() == 1) {
      if (wants_grad(l.inputs[0])) add_into(grads, l.inputs[0], std::move(g.x));
      continue;
    }
    std::vector<int> widths;
    for (const auto& in : l.inputs) widths.push_back(graph.channels_of(in));
    auto parts = split_channels(g.x, widths);
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (wants_grad(l.inputs[i])) add_into(grads, l.inputs[i], std::move(parts[i]));
    }
  }

  for (const auto& src : source_grads) {
    auto it = grads.find(src);
    if (it != grads.end()) {
      out.sources.emplace(src, std::move(it->second));
    } else {
      out.sources.emplace(src, Tensor<T>(lookup(state.values, src).shape()));
    }
  }
  return out;
}

#define FLOWDEBLUR_INSTANTIATE(T)                                                             \
  template void init_params(const LayerGraph&, ParamMap<T>&, Rng&);                            \
  template GraphState<T> graph_forward(const LayerGraph&, const ParamMap<T>&, ValueMap<T>);    \
  template GraphGrads<T> graph_backward(const LayerGraph&, const ParamMap<T>&,                 \
                                        const GraphState<T>&, ValueMap<T>,                     \
                                        const std::set<std::string>&);

FLOWDEBLUR_INSTANTIATE(float)
FLOWDEBLUR_INSTANTIATE(double)
#undef FLOWDEBLUR_INSTANTIATE

}  // namespace flowdeblur
