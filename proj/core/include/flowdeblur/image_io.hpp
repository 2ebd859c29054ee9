#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowdeblur/tensor.hpp"

namespace flowdeblur {

// Binary PPM (P6, 3 channels) or PGM (P5, 1 channel) with maxval 255.
// Values map to [0,1] by /255. Result has shape (1, c, h, w).
Tensor<float> load_image(const std::string& path);
Tensor<float> decode_image(const std::vector<std::uint8_t>& bytes);

// Writes batch item 0. Channels must be 1 or 3. Values are clamped to [0,1]
// and rounded half-up to 8 bits. Header is "P6\n<w> <h>\n255\n" (or P5).
void save_image(const Tensor<float>& image, const std::string& path);
std::vector<std::uint8_t> encode_image(const Tensor<float>& image);

// Round-half-up 8-bit quantization used at every image file boundary.
std::uint8_t to_byte(double v);

// Middlebury .flo: "PIEH", int32 width, int32 height, then h*w (u,v) float32
// pairs, all little-endian. Result has shape (1, 2, h, w).
inline constexpr char kFloMagic[4] = {'P', 'I', 'E', 'H'};
FlowField<float> load_flo(const std::string& path);
FlowField<float> decode_flo(const std::vector<std::uint8_t>& bytes);
void save_flo(const FlowField<float>& flow, const std::string& path);
std::vector<std::uint8_t> encode_flo(const FlowField<float>& flow);

}  // namespace flowdeblur
