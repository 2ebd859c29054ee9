#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowdeblur/model.hpp"

namespace flowdeblur {

// Binary model file, little-endian throughout:
//   "FDBL"  u32 version  u32 config_bytes  <config>  u32 blob_count
//   blob := u32 name_len, name (UTF-8), u32 ndims, u32 dims[ndims], f32 data[prod(dims)]
// config := u32 base_channels, u32 scales, u32 rnn_mode, u32 rnn_placement,
//           f32 duty_cycle, u32 input_multiple
// Blobs are "<layer>.weight" (4-D) and "<layer>.bias" (1-D), flow net layers
// first, each subnet in graph order. Optimizer state is not stored.
inline constexpr char kCheckpointMagic[4] = {'F', 'D', 'B', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kCheckpointConfigBytes = 24;

std::vector<std::uint8_t> encode_model(const Model<float>& model);
Model<float> decode_model(const std::vector<std::uint8_t>& bytes);

void save_model(const Model<float>& model, const std::string& path);
Model<float> load_model(const std::string& path);

}  // namespace flowdeblur
