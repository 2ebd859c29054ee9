#include "flowdeblur/checkpoint.hpp"

#include "flowdeblur/binary_io.hpp"

namespace flowdeblur {
namespace {

void put_blob(std::vector<std::uint8_t>& out, const std::string& name,
              const std::vector<std::uint32_t>& dims, const float* data, std::size_t count) {
  binary::put_u32(out, static_cast<std::uint32_t>(name.size()));
  binary::put_bytes(out, name);
  binary::put_u32(out, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) binary::put_u32(out, d);
  for (std::size_t i = 0; i < count; ++i) binary::put_f32(out, data[i]);
}

std::vector<const LayerSpec*> parameterized_layers(const Model<float>& model) {
  std::vector<const LayerSpec*> out;
  for (const LayerGraph* g : {&model.flow_net(), &model.deblur_net()}) {
    for (const auto& l : g->layers) {
      if (l.has_params()) out.push_back(&l);
    }
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_model(const Model<float>& model) {
  const ModelConfig& cfg = model.config();
  std::vector<std::uint8_t> out;
  binary::put_bytes(out, std::string_view(kCheckpointMagic, 4));
  binary::put_u32(out, kCheckpointVersion);
  binary::put_u32(out, kCheckpointConfigBytes);
  binary::put_u32(out, static_cast<std::uint32_t>(cfg.base_channels));
  binary::put_u32(out, static_cast<std::uint32_t>(cfg.scales));
  binary::put_u32(out, static_cast<std::uint32_t>(cfg.rnn_mode));
  binary::put_u32(out, static_cast<std::uint32_t>(cfg.rnn_placement));
  binary::put_f32(out, static_cast<float>(cfg.duty_cycle));
  binary::put_u32(out, static_cast<std::uint32_t>(cfg.input_multiple));

  const auto layers = parameterized_layers(model);
  binary::put_u32(out, static_cast<std::uint32_t>(2 * layers.size()));
  for (const LayerSpec* l : layers) {
    const LayerParams<float>& p = model.params().at(l->name);
    const Shape& s = p.weight.shape();
    put_blob(out, l->name + ".weight",
             {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
              static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)},
             p.weight.data(), p.weight.size());
    put_blob(out, l->name + ".bias", {static_cast<std::uint32_t>(p.bias.size())}, p.bias.data(),
             p.bias.size());
  }
  return out;
}

Model<float> decode_model(const std::vector<std::uint8_t>& bytes) {
  binary::Reader r(bytes, "checkpoint");
  if (r.remaining() < 4 || r.bytes(4, "magic") != std::string(kCheckpointMagic, 4)) {
    throw FormatError("checkpoint: bad magic (expected FDBL, version " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) +
                      " (this build reads version " + std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t config_bytes = r.u32("config length");
  if (config_bytes != kCheckpointConfigBytes) {
    throw ParseError("checkpoint: unexpected config block length", r.offset() - 4);
  }
  ModelConfig cfg;
  cfg.base_channels = static_cast<int>(r.u32("base_channels"));
  cfg.scales = static_cast<int>(r.u32("scales"));
  const std::uint32_t mode = r.u32("rnn_mode");
  const std::uint32_t placement = r.u32("rnn_placement");
  if (mode > 2 || placement > 1) throw ParseError("checkpoint: bad rnn enum", r.offset() - 8);
  cfg.rnn_mode = static_cast<RnnMode>(mode);
  cfg.rnn_placement = static_cast<RnnPlacement>(placement);
  cfg.duty_cycle = r.f32("duty_cycle");
  cfg.input_multiple = static_cast<int>(r.u32("input_multiple"));
  cfg.validate();

  const std::uint32_t blobs = r.u32("blob count");
  std::map<std::string, std::pair<std::vector<std::uint32_t>, std::vector<float>>> table;
  for (std::uint32_t b = 0; b < blobs; ++b) {
    const std::uint32_t len = r.u32("name length");
    if (len > 4096) throw ParseError("checkpoint: implausible name length", r.offset() - 4);
    std::string name = r.bytes(len, "name");
    const std::uint32_t ndims = r.u32("rank");
    if (ndims == 0 || ndims > 4) throw ParseError("checkpoint: bad rank for " + name, r.offset() - 4);
    std::vector<std::uint32_t> dims(ndims);
    std::size_t count = 1;
    for (auto& d : dims) {
      d = r.u32("dims");
      count *= d;
    }
    r.need(count * 4, "parameter data");
    std::vector<float> data(count);
    for (auto& v : data) v = r.f32("parameter data");
    table.emplace(std::move(name), std::make_pair(std::move(dims), std::move(data)));
  }
  if (r.remaining() != 0) throw ParseError("checkpoint: trailing bytes", r.offset());

  ParamMap<float> params;
  const LayerGraph flow = build_flow_net(cfg);
  const LayerGraph deblur = build_deblur_net(cfg);
  for (const LayerGraph* g : {&flow, &deblur}) {
    for (const auto& l : g->layers) {
      if (!l.has_params()) continue;
      auto w = table.find(l.name + ".weight");
      auto bias = table.find(l.name + ".bias");
      if (w == table.end() || bias == table.end()) {
        throw FormatError("checkpoint: missing parameters for layer '" + l.name + "'");
      }
      const auto& d = w->second.first;
      if (d.size() != 4) throw FormatError("checkpoint: '" + l.name + ".weight' is not 4-D");
      LayerParams<float> p = make_layer_params<float>(static_cast<int>(d[0]), static_cast<int>(d[1]),
                                                      static_cast<int>(d[2]));
      if (p.weight.shape() != Shape{static_cast<int>(d[0]), static_cast<int>(d[1]),
                                    static_cast<int>(d[2]), static_cast<int>(d[3])} ||
          bias->second.second.size() != static_cast<std::size_t>(d[0])) {
        throw FormatError("checkpoint: inconsistent shapes for layer '" + l.name + "'");
      }
      p.weight.storage() = w->second.second;
      p.bias = bias->second.second;
      params.emplace(l.name, std::move(p));
    }
  }
  return Model<float>(cfg, std::move(params));
}

void save_model(const Model<float>& model, const std::string& path) {
  binary::write_file(path, encode_model(model));
}

Model<float> load_model(const std::string& path) {
  return decode_model(binary::read_file(path));
}

}  // namespace flowdeblur
