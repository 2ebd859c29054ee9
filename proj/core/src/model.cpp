#include "flowdeblur/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flowdeblur/resample.hpp"
#include "flowdeblur/warp.hpp"

namespace flowdeblur {

std::string to_string(RnnMode mode) {
  switch (mode) {
    case RnnMode::kRnn: return "rnn";
    case RnnMode::kConcat: return "concat";
    case RnnMode::kNone: return "none";
  }
  return "?";
}

std::string to_string(RnnPlacement placement) {
  return placement == RnnPlacement::kEncoder ? "encoder" : "decoder";
}

RnnMode parse_rnn_mode(const std::string& s) {
  if (s == "rnn") return RnnMode::kRnn;
  if (s == "concat") return RnnMode::kConcat;
  if (s == "none") return RnnMode::kNone;
  throw ValueError("unknown rnn mode '" + s + "' (expected rnn, concat or none)");
}

RnnPlacement parse_rnn_placement(const std::string& s) {
  if (s == "encoder") return RnnPlacement::kEncoder;
  if (s == "decoder") return RnnPlacement::kDecoder;
  throw ValueError("unknown rnn placement '" + s + "' (expected encoder or decoder)");
}

void ModelConfig::validate() const {
  if (base_channels < 4 || base_channels % 4 != 0) {
    throw ValueError("base_channels must be >= 4 and divisible by 4, got " +
                     std::to_string(base_channels));
  }
  if (scales < 1 || scales > kMaxFlowScales) {
    throw ValueError("scales must lie in [1, 5], got " + std::to_string(scales));
  }
  if (!(duty_cycle > 0.0 && duty_cycle <= 1.0)) {
    throw ValueError("duty cycle must lie in (0, 1]");
  }
  if (input_multiple < kInputMultiple || input_multiple % kInputMultiple != 0) {
    throw ValueError("input multiple must be a positive multiple of 64");
  }
}

int scaled_channels(int reference_channels, int base) {
  const int scaled = (reference_channels * base + kReferenceBaseChannels - 1) / kReferenceBaseChannels;
  return std::max(4, (scaled + 3) / 4 * 4);
}

namespace {

LayerSpec conv(std::string name, int k, int stride, int in, int out, Activation act,
               std::vector<std::string> inputs) {
  return LayerSpec{std::move(name), LayerKind::kConv, k, stride, in, out, act, std::move(inputs)};
}

LayerSpec deconv(std::string name, int in, int out, Activation act, std::vector<std::string> inputs) {
  return LayerSpec{std::move(name), LayerKind::kDeconv, 4, 2, in, out, act, std::move(inputs)};
}

// The layer standing where a spatially variant RNN sits: maps `channels`
// feature maps to 4*channels outputs according to the configured mode.
LayerSpec rnn_block(const std::string& name, const std::string& features, const std::string& gates,
                    int channels, RnnMode mode) {
  const int out = kScanDirections * channels;
  switch (mode) {
    case RnnMode::kRnn:
      return LayerSpec{name, LayerKind::kRnn, 0, 1, channels + out, out, Activation::kNone,
                       {features, gates}};
    case RnnMode::kConcat:
      return conv(name, 1, 1, channels + out, out, Activation::kNone, {features, gates});
    case RnnMode::kNone:
      return conv(name, 3, 1, channels, out, Activation::kNone, {features});
  }
  throw BuildError("unknown rnn mode");
}

struct Widths {
  int c12, c24, c48, c96, c192, c384;
  explicit Widths(int base)
      : c12(scaled_channels(12, base)),
        c24(scaled_channels(24, base)),
        c48(scaled_channels(48, base)),
        c96(scaled_channels(96, base)),
        c192(scaled_channels(192, base)),
        c384(scaled_channels(384, base)) {}
};

}  // namespace

std::vector<std::string> flow_output_names(int scales) {
  static const std::vector<std::string> all = {"flow6", "flow5", "flow4", "flow3", "flow2"};
  if (scales < 1 || scales > kMaxFlowScales) throw ValueError("scales must lie in [1, 5]");
  return {all.end() - scales, all.end()};
}

LayerGraph build_flow_net(const ModelConfig& cfg) {
  cfg.validate();
  const Widths c(cfg.base_channels);
  const auto relu = Activation::kLeakyRelu;
  const auto none = Activation::kNone;
  LayerGraph g;
  g.name = "flow_net";
  g.sources = {{"image1", 3}, {"image2", 3}};
  g.layers = {
      conv("conv1", 7, 2, 6, c.c24, relu, {"image1", "image2"}),
      conv("conv2", 5, 2, c.c24, c.c48, relu, {"conv1"}),
      conv("conv3", 5, 2, c.c48, c.c96, relu, {"conv2"}),
      conv("conv3_1", 3, 1, c.c96, c.c96, relu, {"conv3"}),
      conv("conv4", 3, 2, c.c96, c.c192, relu, {"conv3_1"}),
      conv("conv4_1", 3, 1, c.c192, c.c192, relu, {"conv4"}),
      conv("conv5", 3, 2, c.c192, c.c192, relu, {"conv4_1"}),
      conv("conv5_1", 3, 1, c.c192, c.c192, relu, {"conv5"}),
      conv("conv6", 3, 2, c.c192, c.c384, relu, {"conv5_1"}),
      conv("conv6_1", 3, 1, c.c384, c.c384, relu, {"conv6"}),

      conv("flow6", 3, 1, c.c384, 2, none, {"conv6_1"}),
      deconv("up6to5", 2, 2, none, {"flow6"}),
      deconv("deconv6", c.c384, c.c192, relu, {"conv6_1"}),

      conv("flow5", 3, 1, c.c192 + c.c192 + 2, 2, none, {"conv5_1", "deconv6", "up6to5"}),
      deconv("up5to4", 2, 2, none, {"flow5"}),
      deconv("deconv5", c.c192 + c.c192 + 2, c.c96, relu, {"conv5_1", "deconv6", "up6to5"}),

      conv("flow4", 3, 1, c.c192 + c.c96 + 2, 2, none, {"conv4_1", "deconv5", "up5to4"}),
      deconv("up4to3", 2, 2, none, {"flow4"}),
      deconv("deconv4", c.c192 + c.c96 + 2, c.c48, relu, {"conv4_1", "deconv5", "up5to4"}),

      conv("flow3", 3, 1, c.c96 + c.c48 + 2, 2, none, {"conv3_1", "deconv4", "up4to3"}),
      deconv("up3to2", 2, 2, none, {"flow3"}),
      deconv("deconv3", c.c96 + c.c48 + 2, c.c24, relu, {"conv3_1", "deconv4", "up4to3"}),

      conv("flow2", 3, 1, c.c48 + c.c24 + 2, 2, none, {"conv2", "deconv3", "up3to2"}),
      deconv("up2to1", 2, 2, none, {"flow2"}),
      deconv("deconv2", c.c48 + c.c24 + 2, c.c12, relu, {"conv2", "deconv3", "up3to2"}),

      conv("rnnw1", 3, 1, c.c24 + c.c12 + 2, 4 * c.c24, Activation::kTanh,
           {"conv1", "deconv2", "up2to1"}),
      conv("rnnw2", 3, 1, c.c48 + c.c24 + 2, 4 * c.c48, Activation::kTanh,
           {"conv2", "deconv3", "up3to2"}),
      conv("rnnw3", 3, 1, c.c96 + c.c48 + 2, 4 * c.c96, Activation::kTanh,
           {"conv3_1", "deconv4", "up4to3"}),
  };
  g.outputs = flow_output_names(kMaxFlowScales);
  if (cfg.rnn_mode != RnnMode::kNone) {
    g.outputs.insert(g.outputs.end(), kGateNames.begin(), kGateNames.end());
  }
  g.prune();
  g.validate();
  return g;
}

LayerGraph build_deblur_net(const ModelConfig& cfg) {
  cfg.validate();
  const Widths c(cfg.base_channels);
  const int c1 = c.c24;
  const int c2 = c.c48;
  const int c3 = c.c96;
  const auto relu = Activation::kLeakyRelu;
  const auto none = Activation::kNone;
  const RnnMode mode = cfg.rnn_mode;

  LayerGraph g;
  g.name = "deblur_net";
  g.sources = {{"image1", 3}};
  if (mode != RnnMode::kNone) {
    g.sources.emplace_back("rnnw1", 4 * c1);
    g.sources.emplace_back("rnnw2", 4 * c2);
    g.sources.emplace_back("rnnw3", 4 * c3);
  }

  if (cfg.rnn_placement == RnnPlacement::kEncoder) {
    // No activations anywhere in the encoder.
    g.layers = {
        conv("d_conv1", 5, 2, 3, c1, none, {"image1"}),
        rnn_block("d_rnn1", "d_conv1", "rnnw1", c1, mode),
        conv("d_conv2", 5, 2, 4 * c1, c2, none, {"d_rnn1"}),
        rnn_block("d_rnn2", "d_conv2", "rnnw2", c2, mode),
        conv("d_conv3", 5, 2, 4 * c2, c3, none, {"d_rnn2"}),
        rnn_block("d_rnn3", "d_conv3", "rnnw3", c3, mode),

        conv("d_conv3_2", 5, 1, 4 * c3, c3, relu, {"d_rnn3"}),
        conv("d_conv3_3", 5, 1, c3, c2, relu, {"d_conv3_2"}),
        deconv("d_deconv3", c2 + 4 * c3, c2, relu, {"d_conv3_3", "d_rnn3"}),
        conv("d_deconv3_1", 5, 1, c2, c2, relu, {"d_deconv3"}),
        deconv("d_deconv2", c2 + 4 * c2, c1, relu, {"d_deconv3_1", "d_rnn2"}),
        conv("d_deconv2_1", 5, 1, c1, c1, relu, {"d_deconv2"}),
        deconv("d_deconv1", c1 + 4 * c1, c.c12, relu, {"d_deconv2_1", "d_rnn1"}),
        conv("d_deconv1_1", 5, 1, c.c12, c.c12, relu, {"d_deconv1"}),
        conv("d_conv0", 5, 1, c.c12 + 3, 3, none, {"d_deconv1_1", "image1"}),
    };
  } else {
    // Mirror layout: plain encoder, each RNN right after the decoder stage at
    // the matching scale, encoder features as skips.
    g.layers = {
        conv("d_conv1", 5, 2, 3, c1, none, {"image1"}),
        conv("d_conv2", 5, 2, c1, c2, none, {"d_conv1"}),
        conv("d_conv3", 5, 2, c2, c3, none, {"d_conv2"}),

        conv("d_conv3_2", 5, 1, c3, c3, relu, {"d_conv3"}),
        rnn_block("d_rnn3", "d_conv3_2", "rnnw3", c3, mode),
        conv("d_conv3_3", 5, 1, 4 * c3, c2, relu, {"d_rnn3"}),
        deconv("d_deconv3", c2 + c3, c2, relu, {"d_conv3_3", "d_conv3"}),
        conv("d_deconv3_1", 5, 1, c2, c2, relu, {"d_deconv3"}),
        rnn_block("d_rnn2", "d_deconv3_1", "rnnw2", c2, mode),
        deconv("d_deconv2", 4 * c2 + c2, c1, relu, {"d_rnn2", "d_conv2"}),
        conv("d_deconv2_1", 5, 1, c1, c1, relu, {"d_deconv2"}),
        rnn_block("d_rnn1", "d_deconv2_1", "rnnw1", c1, mode),
        deconv("d_deconv1", 4 * c1 + c1, c.c12, relu, {"d_rnn1", "d_conv1"}),
        conv("d_deconv1_1", 5, 1, c.c12, c.c12, relu, {"d_deconv1"}),
        conv("d_conv0", 5, 1, c.c12 + 3, 3, none, {"d_deconv1_1", "image1"}),
    };
  }
  g.outputs = {"d_conv0"};
  g.validate();
  return g;
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), flow_net_(build_flow_net(cfg)), deblur_net_(build_deblur_net(cfg)) {
  Rng rng(seed);
  init_params(flow_net_, params_, rng);
  init_params(deblur_net_, params_, rng);
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg, ParamMap<T> params)
    : cfg_(cfg),
      flow_net_(build_flow_net(cfg)),
      deblur_net_(build_deblur_net(cfg)),
      params_(std::move(params)) {
  for (const LayerGraph* g : {&flow_net_, &deblur_net_}) {
    for (const auto& l : g->layers) {
      if (!l.has_params()) continue;
      auto it = params_.find(l.name);
      if (it == params_.end()) throw BuildError("missing parameters for layer '" + l.name + "'");
      const Shape want{l.out_channels, l.in_channels, l.kernel, l.kernel};
      if (it->second.weight.shape() != want ||
          static_cast<int>(it->second.bias.size()) != l.out_channels) {
        throw BuildError("layer '" + l.name + "': parameter shape " +
                         it->second.weight.shape().str() + " does not match " + want.str());
      }
    }
  }
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.count();
  return n;
}

namespace {

template <typename T>
Tensor<T> shifted(const Tensor<T>& t, double offset) {
  Tensor<T> out = t;
  for (T& v : out.storage()) v += static_cast<T>(offset);
  return out;
}

}  // namespace

template <typename T>
ForwardPass<T> Model<T>::forward(const Tensor<T>& b1, const Tensor<T>& b2) const {
  require_same_shape(b1, b2, "model forward");
  if (b1.c() != 3) throw ShapeError("model forward: expected RGB inputs, got " + b1.shape().str());
  if (b1.h() % cfg_.input_multiple != 0 || b1.w() % cfg_.input_multiple != 0 || b1.h() == 0 ||
      b1.w() == 0) {
    throw ShapeError("model forward: extent " + b1.shape().str() + " is not a multiple of " +
                     std::to_string(cfg_.input_multiple));
  }
  require_finite(b1, "model forward");
  require_finite(b2, "model forward");

  ForwardPass<T> pass;
  const Tensor<T> c1 = shifted(b1, -kInputOffset);
  const Tensor<T> c2 = shifted(b2, -kInputOffset);
  pass.flow_state = graph_forward(flow_net_, params_, ValueMap<T>{{"image1", c1}, {"image2", c2}});
  ValueMap<T> deblur_sources{{"image1", c1}};
  if (cfg_.rnn_mode != RnnMode::kNone) {
    for (const auto& name : kGateNames) {
      const Tensor<T>& gate = pass.flow_state.values.at(name);
      pass.gates.push_back(gate);
      deblur_sources.emplace(name, gate);
    }
  }
  pass.deblur_state = graph_forward(deblur_net_, params_, std::move(deblur_sources));
  pass.restored = shifted(pass.deblur_state.values.at("d_conv0"), kInputOffset);
  for (const auto& name : flow_output_names(cfg_.scales)) {
    pass.flows.push_back(pass.flow_state.values.at(name));
  }
  return pass;
}

template <typename T>
ModelGrads<T> Model<T>::backward(const ForwardPass<T>& pass, const Tensor<T>& grad_restored,
                                 const std::vector<FlowField<T>>& grad_flows) const {
  if (grad_flows.size() != pass.flows.size()) {
    throw ShapeError("model backward: expected " + std::to_string(pass.flows.size()) +
                     " flow gradients, got " + std::to_string(grad_flows.size()));
  }
  std::set<std::string> gate_sources;
  if (cfg_.rnn_mode != RnnMode::kNone) gate_sources.insert(kGateNames.begin(), kGateNames.end());

  GraphGrads<T> deblur = graph_backward(deblur_net_, params_, pass.deblur_state,
                                        ValueMap<T>{{"d_conv0", grad_restored}}, gate_sources);
  ValueMap<T> flow_seeds;
  const auto names = flow_output_names(cfg_.scales);
  for (std::size_t s = 0; s < names.size(); ++s) {
    if (!grad_flows[s].empty()) flow_seeds.emplace(names[s], grad_flows[s]);
  }
  for (auto& [name, g] : deblur.sources) flow_seeds.emplace(name, std::move(g));
  GraphGrads<T> flow = graph_backward(flow_net_, params_, pass.flow_state, std::move(flow_seeds), {});

  ModelGrads<T> out = std::move(flow.params);
  for (auto& [name, g] : deblur.params) out.emplace(name, std::move(g));
  return out;
}

template <typename T>
void Model<T>::apply_adam(const ModelGrads<T>& grads, const AdamConfig& cfg) {
  for (auto& [name, p] : params_) {
    auto it = grads.find(name);
    if (it == grads.end()) throw Error("apply_adam: no gradient for layer '" + name + "'");
    adam_step(p, it->second, cfg);
  }
}

template <typename T>
std::string Model<T>::summary() const {
  std::ostringstream os;
  os << "# " << flow_net_.name << "\n" << flow_net_.summary();
  os << "# " << deblur_net_.name << "\n" << deblur_net_.summary();
  os << "# parameters " << parameter_count() << "\n";
  return os.str();
}

template <typename T>
template <typename U>
Model<U> Model<T>::cast() const {
  ParamMap<U> converted;
  for (const auto& [name, p] : params_) {
    LayerParams<U> q = make_layer_params<U>(p.out_channels(), p.in_channels(), p.kernel());
    q.weight = p.weight.template cast<U>();
    q.bias.assign(p.bias.begin(), p.bias.end());
    converted.emplace(name, std::move(q));
  }
  return Model<U>(cfg_, std::move(converted));
}

template <typename T>
std::vector<Tensor<T>> build_pyramid(const Tensor<T>& image, const std::vector<FlowField<T>>& flows) {
  // Flows run coarse to fine; halve from the finest level down.
  std::vector<Tensor<T>> out(flows.size());
  Tensor<T> level = image;
  for (std::size_t i = flows.size(); i-- > 0;) {
    const FlowField<T>& f = flows[i];
    while (level.h() > f.h() || level.w() > f.w()) level = avg_downsample2x(level);
    if (level.h() != f.h() || level.w() != f.w()) {
      throw ShapeError("build_pyramid: cannot reach flow extent " + f.shape().str() + " from " +
                       image.shape().str() + " by halving");
    }
    out[i] = level;
  }
  return out;
}

template <typename T>
LossResult<T> total_loss(const Tensor<T>& restored, const Tensor<T>& sharp,
                         const std::vector<Tensor<T>>& b1_pyramid,
                         const std::vector<Tensor<T>>& b2_pyramid,
                         const std::vector<FlowField<T>>& flows, const LossWeights& weights) {
  require_same_shape(restored, sharp, "total_loss");
  const std::size_t scales = flows.size();
  if (b1_pyramid.size() != scales || b2_pyramid.size() != scales) {
    throw ShapeError("total_loss: pyramid has " + std::to_string(b1_pyramid.size()) +
                     " levels for " + std::to_string(scales) + " flows");
  }
  if (!weights.scales.empty() && weights.scales.size() != scales) {
    throw ShapeError("total_loss: scale weight count mismatch");
  }
  LossResult<T> r;
  r.grad_flows.reserve(scales);
  for (std::size_t s = 0; s < scales; ++s) {
    require_same_spatial(b1_pyramid[s], flows[s], "total_loss pyramid level");
    const double lambda = weights.scales.empty() ? 1.0 / scales : weights.scales[s];
    PhotometricLoss<T> pl = photometric_loss(b1_pyramid[s], b2_pyramid[s], flows[s]);
    r.flow += lambda * pl.value;
    for (T& g : pl.grad_flow.storage()) g *= static_cast<T>(lambda);
    r.grad_flows.push_back(std::move(pl.grad_flow));
  }
  r.grad_restored = Tensor<T>(restored.shape());
  double sse = 0.0;
  for (std::size_t i = 0; i < restored.size(); ++i) {
    const T d = restored.storage()[i] - sharp.storage()[i];
    sse += static_cast<double>(d) * static_cast<double>(d);
    r.grad_restored.storage()[i] = static_cast<T>(2.0 * weights.image) * d;
  }
  r.image = weights.image * sse;
  r.total = r.flow + r.image;
  return r;
}

DeblurOutput deblur(const Model<float>& model, const Tensor<float>& b1, const Tensor<float>& b2) {
  require_same_shape(b1, b2, "deblur");
  const int m = model.config().input_multiple;
  const Tensor<float> p1 = reflect_pad_to_multiple(b1, m);
  const Tensor<float> p2 = reflect_pad_to_multiple(b2, m);
  const ForwardPass<float> pass = model.forward(p1, p2);
  DeblurOutput out;
  out.image = crop(pass.restored, 0, 0, b1.h(), b1.w());
  const FlowField<float>& finest = pass.flows.back();
  const float factor = static_cast<float>(p1.w()) / static_cast<float>(finest.w());
  FlowField<float> up = bilinear_resize(finest, p1.h(), p1.w());
  for (float& v : up.storage()) v *= factor;
  out.flow = crop(up, 0, 0, b1.h(), b1.w());
  return out;
}

template class Model<float>;
template class Model<double>;
template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Model<float> Model<float>::cast<float>() const;
template Model<double> Model<double>::cast<double>() const;

#define FLOWDEBLUR_INSTANTIATE(T)                                                            \
  template std::vector<Tensor<T>> build_pyramid(const Tensor<T>&,                             \
                                                const std::vector<FlowField<T>>&);            \
  template LossResult<T> total_loss(const Tensor<T>&, const Tensor<T>&,                       \
                                    const std::vector<Tensor<T>>&,                            \
                                    const std::vector<Tensor<T>>&,                            \
                                    const std::vector<FlowField<T>>&, const LossWeights&);

FLOWDEBLUR_INSTANTIATE(float)
FLOWDEBLUR_INSTANTIATE(double)
#undef FLOWDEBLUR_INSTANTIATE

}  // namespace flowdeblur
