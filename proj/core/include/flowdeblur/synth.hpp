#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowdeblur/blur.hpp"
#include "flowdeblur/rng.hpp"
#include "flowdeblur/tensor.hpp"

namespace flowdeblur {

enum class FlowKind { kAffine, kSmooth, kObjects };

std::string to_string(FlowKind kind);
FlowKind parse_flow_kind(const std::string& s);
// Comma-separated list, e.g. "affine,smooth,objects".
std::vector<FlowKind> parse_flow_kinds(const std::string& s);

inline constexpr double kMaxSynthFlow = 20.0;

// F(x, y) = t + A * (x - cx, y - cy), centered on the frame.
struct AffineMotion {
  double tx = 0, ty = 0;
  double a11 = 0, a12 = 0, a21 = 0, a22 = 0;
};
FlowField<float> affine_flow(const AffineMotion& m, int h, int w);

// Random field of the given kind whose magnitude never exceeds max_mag.
// smooth fields are rescaled so that max |F| equals max_mag.
FlowField<float> gen_flow_field(FlowKind kind, double max_mag, int h, int w, std::uint64_t seed);

// Procedural sharp RGB scene (layered shapes, gradients, stripes) on the 8-bit
// grid, shape (1, 3, h, w).
Tensor<float> gen_texture(int h, int w, std::uint64_t seed);

// Training triple plus the flow that generated it.
struct Sample {
  Tensor<float> b1;
  Tensor<float> b2;
  Tensor<float> gt;
  FlowField<float> flow;
};

// Frame 2 is `sharp` backward-warped by -flow. Sharp frame, frame 2 and flow are
// cropped by `margin` on every side; B1 and B2 are the blurred crops, so
// reblur(gt, flow) reproduces B1 exactly.
Sample make_sample(const Tensor<float>& sharp, const FlowField<float>& flow, const BlurConfig& cfg,
                   int margin);

struct DatasetParams {
  int count = 0;
  std::vector<FlowKind> kinds = {FlowKind::kAffine, FlowKind::kSmooth, FlowKind::kObjects};
  double max_mag = 10.0;
  double min_mag = 2.0;
  double duty_cycle = 1.0;
  int size = 64;  // output patch extent
  std::uint64_t seed = 1;
};

struct ManifestRow {
  int index = 0;
  std::string b1, b2, gt, flow;
  std::string source;
  FlowKind kind = FlowKind::kAffine;
  double max_mag = 0;
  double duty_cycle = 1;
  std::uint64_t seed = 0;
};

inline constexpr const char* kManifestName = "manifest.csv";
inline constexpr const char* kManifestHeader = "index,b1,b2,gt,flow,source,kind,max_mag,duty_cycle,seed";

// Writes NNNNNN_{b1,b2,gt}.ppm, NNNNNN.flo and manifest.csv. Sample i uses
// the RNG stream derived from (seed, i), so output bytes do not depend on
// thread count. Sources are the *.ppm files of src_dir in name order.
std::vector<ManifestRow> build_dataset(const std::string& src_dir, const std::string& out_dir,
                                       const DatasetParams& params);

// Same generation in memory from already-loaded sources (quantized to 8 bits
// exactly as the files would be).
std::vector<Sample> synthesize_samples(const std::vector<Tensor<float>>& sources,
                                       const DatasetParams& params);

std::vector<ManifestRow> read_manifest(const std::string& dir);
std::vector<Sample> load_dataset(const std::string& dir);

struct VerifyReport {
  int samples = 0;
  double max_abs_diff = 0.0;
  bool passed = true;
};

inline constexpr double kClosedLoopTolerance = 1.0 / 255.0 + 1e-6;

// Re-blurs every stored gt with its stored flow and compares to the stored B1.
VerifyReport verify_dataset(const std::string& dir, double duty_cycle_override = 0.0);
double closed_loop_error(const Sample& s, const BlurConfig& cfg);

struct AugmentConfig {
  int patch = 64;
  // Upscale factor drawn from [1, max_scale]. Off by default: at desk scale any
  // upscaling shifted the blur statistics away from native-resolution frames.
  double max_scale = 1.0;
  bool rotate = true;       // multiples of 90 degrees
  bool permute_colors = true;
};

// Rotates a sample by k quarter turns clockwise (y axis pointing down). A
// flow vector (u, v) becomes (-v, u) per turn.
Sample rotate90(const Sample& s, int k);
// Permutes RGB channels of b1, b2 and gt identically; perm[i] is the source
// channel of output channel i.
Sample permute_channels(const Sample& s, const int perm[3]);
// Uniform upscale by `scale` (flow magnitudes scale with it).
Sample resize_sample(const Sample& s, double scale);
Sample crop_sample(const Sample& s, int y0, int x0, int h, int w);

// Random resize, crop to cfg.patch, rotation and color permutation, applied
// identically to the three images and consistently to the flow.
Sample augment(const Sample& s, Rng& rng, const AugmentConfig& cfg);

}  // namespace flowdeblur
