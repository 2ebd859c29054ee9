#include "flowdeblur/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "flowdeblur/error.hpp"
#include "flowdeblur/layers.hpp"
#include "flowdeblur/model.hpp"
#include "flowdeblur/rng.hpp"
#include "flowdeblur/svrnn.hpp"
#include "flowdeblur/warp.hpp"

namespace flowdeblur {

const std::vector<std::string>& gradcheck_ops() {
  static const std::vector<std::string> ops = {"conv", "deconv", "svrnn", "warp", "pipeline"};
  return ops;
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return denom == 0.0 ? 0.0 : std::abs(analytic - numeric) / denom;
}

namespace {

using Td = Tensor<double>;
constexpr double kStep = 1e-6;

void fill_uniform(Td& t, Rng& rng, double lo, double hi) {
  for (double& v : t.storage()) v = rng.uniform(lo, hi);
}

double dot(const Td& a, const Td& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.storage()[i] * b.storage()[i];
  return s;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Compares analytic[i] with the central difference of loss() w.r.t. values[i]
// for every index in `indices` (all when empty).
void compare(std::vector<double>& values, const std::vector<double>& analytic,
             const std::function<double()>& loss, GradcheckReport& rep,
             const std::vector<std::size_t>& indices = {}) {
  const double floor = 1e-2 * max_abs(analytic);
  auto check = [&](std::size_t i) {
    const double saved = values[i];
    values[i] = saved + kStep;
    const double up = loss();
    values[i] = saved - kStep;
    const double down = loss();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * kStep);
    rep.worst_rel_err = std::max(rep.worst_rel_err, relative_error(analytic[i], numeric, floor));
    rep.checked += 1;
  };
  if (indices.empty()) {
    for (std::size_t i = 0; i < values.size(); ++i) check(i);
  } else {
    for (std::size_t i : indices) check(i);
  }
}

void check_conv(bool transposed, std::uint64_t seed, GradcheckReport& rep) {
  Rng rng(seed);
  const int stride = transposed ? 2 : static_cast<int>(rng.range(1, 2));
  const int kernel = transposed ? (rng.below(2) ? 4 : 3) : 2 * rng.range(0, 2) + 1;
  const int pad = transposed ? (kernel == 4 ? 1 : kernel / 2) : kernel / 2;
  const int in_c = rng.range(1, 4);
  const int out_c = rng.range(1, 4);
  Td x(rng.range(1, 2), in_c, rng.range(3, 7), rng.range(3, 7));
  fill_uniform(x, rng, -1.0, 1.0);
  // Transposed layers store the weight as (out, in, k, k) of the output map.
  LayerParams<double> p = make_layer_params<double>(out_c, in_c, kernel);
  fill_uniform(p.weight, rng, -1.0, 1.0);
  for (double& b : p.bias) b = rng.uniform(-1.0, 1.0);

  auto forward = [&] {
    return transposed ? deconv2d_forward(x, p, stride, pad) : conv2d_forward(x, p, stride, pad);
  };
  Td r = forward();
  fill_uniform(r, rng, -1.0, 1.0);
  auto loss = [&] { return dot(forward(), r); };
  const ConvGrads<double> g = transposed ? deconv2d_backward(r, x, p, stride, pad)
                                         : conv2d_backward(r, x, p, stride, pad);
  compare(x.storage(), g.x.storage(), loss, rep);
  compare(p.weight.storage(), g.params.weight.storage(), loss, rep);
  compare(p.bias, g.params.bias, loss, rep);
}

void check_svrnn(std::uint64_t seed, GradcheckReport& rep) {
  Rng rng(seed);
  const int n = rng.range(1, 2);
  const int c = rng.range(1, 3);
  const int h = rng.range(2, 7);
  const int w = rng.range(2, 7);
  Td f(n, c, h, w);
  fill_uniform(f, rng, -1.0, 1.0);
  Td gates(n, kScanDirections * c, h, w);
  fill_uniform(gates, rng, -0.95, 0.95);
  Td r(n, kScanDirections * c, h, w);
  fill_uniform(r, rng, -1.0, 1.0);
  auto loss = [&] { return dot(svrnn_forward(f, gates).g, r); };
  const SvrnnResult<double> fwd = svrnn_forward(f, gates);
  const SvrnnGrads<double> g = svrnn_backward(r, f, gates, fwd.cache);
  compare(f.storage(), g.f.storage(), loss, rep);
  compare(gates.storage(), g.w.storage(), loss, rep);
}

void check_warp(std::uint64_t seed, GradcheckReport& rep) {
  Rng rng(seed);
  const int n = rng.range(1, 2);
  const int c = rng.range(1, 3);
  const int h = rng.range(3, 8);
  const int w = rng.range(3, 8);
  Td img(n, c, h, w);
  fill_uniform(img, rng, 0.0, 1.0);
  // Targets stay inside the image and off the integer lattice, where the
  // bilinear gather is differentiable.
  Td flow(n, 2, h, w);
  for (int b = 0; b < n; ++b) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double tx = rng.range(0, w - 2) + rng.uniform(0.1, 0.9);
        const double ty = rng.range(0, h - 2) + rng.uniform(0.1, 0.9);
        flow.at(b, 0, y, x) = tx - x;
        flow.at(b, 1, y, x) = ty - y;
      }
    }
  }
  Td r(n, c, h, w);
  fill_uniform(r, rng, -1.0, 1.0);
  auto loss = [&] { return dot(bilinear_warp(img, flow).warped, r); };
  const WarpResult<double> fwd = bilinear_warp(img, flow);
  const WarpGrads<double> g = warp_backward(r, fwd.cache);
  compare(img.storage(), g.image.storage(), loss, rep);
  compare(flow.storage(), g.flow.storage(), loss, rep);
}

constexpr int kPipelineProbes = 10;
constexpr int kMaxProbeAttempts = 1000;
// Large enough that rounding in the 64x64 forward pass stays well below the
// smallest probed derivatives.
constexpr double kPipelineStep = 1e-5;
// Derivatives below this are under the resolution of the loss difference
// (about 1e-8 of the largest gradient) and are compared absolutely.
constexpr double kPipelineAbsFloor = 1e-5;

// Quantities of one forward evaluation that the loss is built from.
struct LossTerms {
  Td restored;
  std::vector<Td> warped;  // warp(B2_s, F_s), coarse to fine
  // Which linear piece every non-smooth op sits on: leaky ReLU signs and
  // the bilinear cell and clamp state of each warp sample.
  std::vector<std::int64_t> pieces;
};

void record_pieces(const LayerGraph& graph, const GraphState<double>& state,
                   std::vector<std::int64_t>& pieces) {
  for (const LayerSpec& layer : graph.layers) {
    if (layer.activation != Activation::kLeakyRelu) continue;
    for (double v : state.values.at(layer.name).storage()) pieces.push_back(v > 0.0);
  }
}

void record_pieces(const WarpCache<double>& cache, std::vector<std::int64_t>& pieces) {
  for (std::size_t i = 0; i < cache.sample_x.size(); ++i) {
    pieces.push_back(static_cast<std::int64_t>(std::floor(cache.sample_x[i])));
    pieces.push_back(static_cast<std::int64_t>(std::floor(cache.sample_y[i])));
    pieces.push_back(cache.clamped[i]);
  }
}

// (L+ - L-) summed pixel by pixel as (a - b)(a + b - 2t). Differencing the
// two scalar losses instead loses the deep layers' contribution below one
// ulp of the loss.
double loss_difference(const LossTerms& plus, const LossTerms& minus, const Td& gt,
                       const std::vector<Td>& b1_pyramid, const LossWeights& weights) {
  auto diff = [](const Td& a, const Td& b, const Td& target) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double x = a.storage()[i];
      const double y = b.storage()[i];
      s += (x - y) * (x + y - 2.0 * target.storage()[i]);
    }
    return s;
  };
  double d = weights.image * diff(plus.restored, minus.restored, gt);
  const double scales = static_cast<double>(plus.warped.size());
  for (std::size_t k = 0; k < plus.warped.size(); ++k) {
    const double lambda = weights.scales.empty() ? 1.0 / scales : weights.scales[k];
    d += lambda * diff(plus.warped[k], minus.warped[k], b1_pyramid[k]);
  }
  return d;
}

void check_pipeline(std::uint64_t seed, GradcheckReport& rep) {
  ModelConfig cfg;
  cfg.base_channels = 4;
  cfg.scales = 2;
  Model<double> model(cfg, seed);
  Rng rng = Rng::derive(seed, 1);
  const int size = 64;
  Td b1(1, 3, size, size), b2(1, 3, size, size), gt(1, 3, size, size);
  fill_uniform(b1, rng, 0.0, 1.0);
  fill_uniform(b2, rng, 0.0, 1.0);
  fill_uniform(gt, rng, 0.0, 1.0);
  const LossWeights weights;

  std::vector<Td> p1, p2;
  auto evaluate = [&](ModelGrads<double>* grads) {
    const ForwardPass<double> pass = model.forward(b1, b2);
    if (p1.empty()) {
      p1 = build_pyramid(b1, pass.flows);
      p2 = build_pyramid(b2, pass.flows);
    }
    LossTerms t;
    t.restored = pass.restored;
    record_pieces(model.flow_net(), pass.flow_state, t.pieces);
    record_pieces(model.deblur_net(), pass.deblur_state, t.pieces);
    for (std::size_t k = 0; k < pass.flows.size(); ++k) {
      WarpResult<double> w = bilinear_warp(p2[k], pass.flows[k]);
      record_pieces(w.cache, t.pieces);
      t.warped.push_back(std::move(w.warped));
    }
    if (grads) {
      const LossResult<double> l = total_loss(pass.restored, gt, p1, p2, pass.flows, weights);
      *grads = model.backward(pass, l.grad_restored, l.grad_flows);
    }
    return t;
  };
  ModelGrads<double> grads;
  evaluate(&grads);

  std::vector<std::string> names;
  for (const auto& [name, p] : model.params()) names.push_back(name);
  int accepted = 0;
  for (int attempt = 0; accepted < kPipelineProbes; ++attempt) {
    if (attempt >= kMaxProbeAttempts) {
      throw NumericalError("gradcheck: every probe straddles a non-smooth point");
    }
    const std::string& name = names[rng.below(names.size())];
    LayerParams<double>& p = model.params().at(name);
    const ParamGrads<double>& g = grads.at(name);
    const bool bias = rng.below(p.count()) < p.bias.size();
    std::vector<double>& values = bias ? p.bias : p.weight.storage();
    const std::vector<double>& analytic = bias ? g.bias : g.weight.storage();
    const std::size_t index = rng.below(values.size());
    const double floor = std::max(1e-2 * max_abs(analytic), kPipelineAbsFloor);
    const double saved = values[index];
    values[index] = saved + kPipelineStep;
    const LossTerms up = evaluate(nullptr);
    values[index] = saved - kPipelineStep;
    const LossTerms down = evaluate(nullptr);
    values[index] = saved;
    // A kink inside the stencil makes the difference quotient meaningless.
    if (up.pieces != down.pieces) {
      rep.rejected += 1;
      continue;
    }
    const double numeric = loss_difference(up, down, gt, p1, weights) / (2.0 * kPipelineStep);
    rep.worst_rel_err =
        std::max(rep.worst_rel_err, relative_error(analytic[index], numeric, floor));
    rep.checked += 1;
    accepted += 1;
  }
}

}  // namespace

GradcheckReport gradcheck(const std::string& op, std::uint64_t seed) {
  GradcheckReport rep;
  rep.op = op;
  rep.seed = seed;
  rep.tolerance = op == "pipeline" ? kPipelineGradTolerance : kOpGradTolerance;
  if (op == "conv") {
    check_conv(false, seed, rep);
  } else if (op == "deconv") {
    check_conv(true, seed, rep);
  } else if (op == "svrnn") {
    check_svrnn(seed, rep);
  } else if (op == "warp") {
    check_warp(seed, rep);
  } else if (op == "pipeline") {
    check_pipeline(seed, rep);
  } else {
    throw ValueError("unknown gradcheck op '" + op + "' (expected conv, deconv, svrnn, warp or pipeline)");
  }
  return rep;
}

}  // namespace flowdeblur
