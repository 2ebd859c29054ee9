#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowdeblur/graph.hpp"
#include "flowdeblur/layers.hpp"
#include "flowdeblur/tensor.hpp"

namespace flowdeblur {

// How the deblurring net consumes the gate maps estimated by the flow net.
enum class RnnMode {
  kRnn,     // spatially variant RNN driven by the gates
  kConcat,  // concatenate features and gates, 1x1 conv to the RNN's width
  kNone,    // no gates; a 3x3 conv widens features to the RNN's width
};
enum class RnnPlacement { kEncoder, kDecoder };

std::string to_string(RnnMode mode);
std::string to_string(RnnPlacement placement);
RnnMode parse_rnn_mode(const std::string& s);
RnnPlacement parse_rnn_placement(const std::string& s);

inline constexpr int kReferenceBaseChannels = 24;
inline constexpr int kMaxFlowScales = 5;
// Six stride-2 stages in the flow encoder.
inline constexpr int kInputMultiple = 64;
// Both subnets see images shifted to [-0.5, 0.5]; the restored image is shifted
// back. Flows and the photometric loss work on the unshifted frames.
inline constexpr double kInputOffset = 0.5;

struct ModelConfig {
  int base_channels = 8;
  int scales = kMaxFlowScales;
  RnnMode rnn_mode = RnnMode::kRnn;
  RnnPlacement rnn_placement = RnnPlacement::kEncoder;
  double duty_cycle = 1.0;
  int input_multiple = kInputMultiple;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Channel count of a reference-width (base 24) layer at `base` width, rounded
// up to a multiple of 4.
int scaled_channels(int reference_channels, int base);

// Flow estimation subnet. Sources image1/image2; outputs flow6..flow2 and,
// unless rnn_mode is kNone, the tanh-bounded gate maps rnnw1..rnnw3.
LayerGraph build_flow_net(const ModelConfig& cfg);

// Deblurring subnet. Sources image1 and (unless kNone) rnnw1..rnnw3; output d_conv0.
LayerGraph build_deblur_net(const ModelConfig& cfg);

// Names of the flow layers supervised at `scales` scales, coarse to fine.
std::vector<std::string> flow_output_names(int scales);
inline const std::vector<std::string> kGateNames = {"rnnw1", "rnnw2", "rnnw3"};

template <typename T>
struct ForwardPass {
  Tensor<T> restored;
  std::vector<FlowField<T>> flows;  // the supervised scales, coarse to fine
  std::vector<Tensor<T>> gates;     // rnnw1..rnnw3, empty for kNone
  GraphState<T> flow_state;
  GraphState<T> deblur_state;
};

template <typename T>
using ModelGrads = std::map<std::string, ParamGrads<T>>;

template <typename T>
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);
  // Adopts existing parameters; every layer of both graphs must be present.
  Model(const ModelConfig& cfg, ParamMap<T> params);

  const ModelConfig& config() const { return cfg_; }
  const LayerGraph& flow_net() const { return flow_net_; }
  const LayerGraph& deblur_net() const { return deblur_net_; }
  const ParamMap<T>& params() const { return params_; }
  ParamMap<T>& params() { return params_; }
  std::size_t parameter_count() const;

  // Inputs are (n, 3, h, w) in [0, 1] with h, w multiples of the configured
  // input multiple.
  ForwardPass<T> forward(const Tensor<T>& b1, const Tensor<T>& b2) const;

  // grad_flows pairs with pass.flows; empty tensors are treated as zero.
  ModelGrads<T> backward(const ForwardPass<T>& pass, const Tensor<T>& grad_restored,
                         const std::vector<FlowField<T>>& grad_flows) const;

  void apply_adam(const ModelGrads<T>& grads, const AdamConfig& cfg);

  // Graph summaries of both subnets.
  std::string summary() const;

  template <typename U>
  Model<U> cast() const;

 private:
  ModelConfig cfg_;
  LayerGraph flow_net_;
  LayerGraph deblur_net_;
  ParamMap<T> params_;
};

// Loss weights: scales[s] multiplies the photometric term of flow scale s
// (coarse to fine); empty means 1/S each.
struct LossWeights {
  double image = 1.0;
  std::vector<double> scales;
};

template <typename T>
struct LossResult {
  double total = 0.0;
  double flow = 0.0;   // weighted sum of per-scale photometric losses
  double image = 0.0;  // weighted sum of squared restoration error
  Tensor<T> grad_restored;
  std::vector<FlowField<T>> grad_flows;
};

// Averages `image` down by factors of two to each flow's resolution.
template <typename T>
std::vector<Tensor<T>> build_pyramid(const Tensor<T>& image, const std::vector<FlowField<T>>& flows);

// sum_s w_s * ||warp(B2_s, F_s) - B1_s||^2 + w_img * ||restored - sharp||^2
template <typename T>
LossResult<T> total_loss(const Tensor<T>& restored, const Tensor<T>& sharp,
                         const std::vector<Tensor<T>>& b1_pyramid,
                         const std::vector<Tensor<T>>& b2_pyramid,
                         const std::vector<FlowField<T>>& flows, const LossWeights& weights);

struct DeblurOutput {
  Tensor<float> image;
  // Finest flow upsampled to input resolution (values scaled to match).
  FlowField<float> flow;
};

// Inference on arbitrary sizes: reflection-pads to the input multiple, runs
// the model, crops back.
DeblurOutput deblur(const Model<float>& model, const Tensor<float>& b1, const Tensor<float>& b2);

}  // namespace flowdeblur
