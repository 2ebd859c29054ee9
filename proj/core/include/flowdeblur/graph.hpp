#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "flowdeblur/layers.hpp"
#include "flowdeblur/svrnn.hpp"
#include "flowdeblur/tensor.hpp"

namespace flowdeblur {

enum class LayerKind { kConv, kDeconv, kRnn };
enum class Activation { kNone, kLeakyRelu, kTanh };

// One row of an architecture table. Inputs are concatenated along channels in
// order; an rnn layer takes exactly {features, gate maps}.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::kConv;
  int kernel = 0;
  int stride = 1;
  int in_channels = 0;
  int out_channels = 0;
  Activation activation = Activation::kNone;
  std::vector<std::string> inputs;

  int padding() const;
  bool has_params() const { return kind != LayerKind::kRnn; }
};

// Declarative network: named external sources, layers in topological order,
// and the layer outputs exposed to the caller.
struct LayerGraph {
  std::string name;
  std::vector<std::pair<std::string, int>> sources;
  std::vector<LayerSpec> layers;
  std::vector<std::string> outputs;

  const LayerSpec* find(const std::string& layer) const;
  // Channel count of a source or layer output; throws BuildError when unknown.
  int channels_of(const std::string& value) const;
  bool has_kind(LayerKind kind) const;
  std::size_t count_kind(LayerKind kind) const;

  // Checks name uniqueness, input resolution, declared input channels against
  // the concatenated inputs, and rnn channel arithmetic. Throws BuildError
  // naming the first offending layer.
  void validate() const;

  // Drops layers whose outputs reach no graph output.
  void prune();

  // One line per layer: name, kind, kernel/stride, in/out channels, inputs.
  std::string summary() const;
};

std::string to_string(LayerKind kind);
std::string to_string(Activation act);

template <typename T>
using ParamMap = std::map<std::string, LayerParams<T>>;

// Allocates and Xavier-initializes parameters for every conv/deconv layer,
// visiting layers in graph order.
template <typename T>
void init_params(const LayerGraph& graph, ParamMap<T>& params, Rng& rng);

template <typename T>
using ValueMap = std::map<std::string, Tensor<T>>;

// Everything the backward pass needs from one forward evaluation.
template <typename T>
struct GraphState {
  ValueMap<T> values;          // sources and post-activation layer outputs
  ValueMap<T> layer_inputs;    // concatenated input of each conv/deconv layer
  std::map<std::string, SvrnnCache<T>> rnn;
};

// Gate maps entering rnn layers are checked to lie strictly inside (-1, 1);
// tanh outputs are kept off +-1 so float saturation cannot violate that.
template <typename T>
GraphState<T> graph_forward(const LayerGraph& graph, const ParamMap<T>& params,
                            ValueMap<T> sources);

template <typename T>
struct GraphGrads {
  std::map<std::string, ParamGrads<T>> params;
  ValueMap<T> sources;  // only for sources listed in `source_grads`
};

// Reverse-mode pass. `output_grads` seeds gradients on any layer outputs;
// missing entries are treated as zero.
template <typename T>
GraphGrads<T> graph_backward(const LayerGraph& graph, const ParamMap<T>& params,
                             const GraphState<T>& state, ValueMap<T> output_grads,
                             const std::set<std::string>& source_grads);

}  // namespace flowdeblur
