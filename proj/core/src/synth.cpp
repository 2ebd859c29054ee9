#include "flowdeblur/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "flowdeblur/image_io.hpp"
#include "flowdeblur/resample.hpp"
#include "flowdeblur/warp.hpp"

namespace fs = std::filesystem;

namespace flowdeblur {

std::string to_string(FlowKind kind) {
  switch (kind) {
    case FlowKind::kAffine: return "affine";
    case FlowKind::kSmooth: return "smooth";
    case FlowKind::kObjects: return "objects";
  }
  return "?";
}

FlowKind parse_flow_kind(const std::string& s) {
  if (s == "affine") return FlowKind::kAffine;
  if (s == "smooth") return FlowKind::kSmooth;
  if (s == "objects") return FlowKind::kObjects;
  throw ValueError("unknown flow kind '" + s + "' (expected affine, smooth or objects)");
}

std::vector<FlowKind> parse_flow_kinds(const std::string& s) {
  std::vector<FlowKind> kinds;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) kinds.push_back(parse_flow_kind(item));
  }
  if (kinds.empty()) throw ValueError("no flow kinds given");
  return kinds;
}

FlowField<float> affine_flow(const AffineMotion& m, int h, int w) {
  FlowField<float> f(1, 2, h, w);
  const double cx = 0.5 * (w - 1);
  const double cy = 0.5 * (h - 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      f.at(0, 0, y, x) = static_cast<float>(m.tx + m.a11 * dx + m.a12 * dy);
      f.at(0, 1, y, x) = static_cast<float>(m.ty + m.a21 * dx + m.a22 * dy);
    }
  }
  return f;
}

namespace {

// Field evaluated in double so the rescale to a target maximum is exact
// before the final float conversion.
struct Field {
  int h, w;
  std::vector<double> u, v;
  Field(int h_, int w_) : h(h_), w(w_), u(static_cast<std::size_t>(h_) * w_), v(u.size()) {}

  double max_magnitude() const {
    double m = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) m = std::max(m, std::hypot(u[i], v[i]));
    return m;
  }
  void scale(double s) {
    for (std::size_t i = 0; i < u.size(); ++i) {
      u[i] *= s;
      v[i] *= s;
    }
  }
  void rescale_to(double target) {
    const double m = max_magnitude();
    if (m > 0.0) scale(target / m);
  }
  FlowField<float> to_flow() const {
    FlowField<float> f(1, 2, h, w);
    for (std::size_t i = 0; i < u.size(); ++i) {
      f.storage()[i] = static_cast<float>(u[i]);
      f.storage()[u.size() + i] = static_cast<float>(v[i]);
    }
    return f;
  }
};

Field random_affine(int h, int w, Rng& rng) {
  const double extent = 0.5 * std::max(h, w);
  const double tx = rng.normal();
  const double ty = rng.normal();
  const double a11 = rng.normal() * 0.5 / extent;
  const double a12 = rng.normal() * 0.5 / extent;
  const double a21 = rng.normal() * 0.5 / extent;
  const double a22 = rng.normal() * 0.5 / extent;
  Field f(h, w);
  const double cx = 0.5 * (w - 1);
  const double cy = 0.5 * (h - 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      f.u[i] = tx + a11 * (x - cx) + a12 * (y - cy);
      f.v[i] = ty + a21 * (x - cx) + a22 * (y - cy);
    }
  }
  return f;
}

Field random_smooth(int h, int w, Rng& rng) {
  Field f(h, w);
  const int components = rng.range(4, 8);
  for (int k = 0; k < components; ++k) {
    const double au = rng.normal();
    const double av = rng.normal();
    const double fx = rng.uniform(-1.5, 1.5);
    const double fy = rng.uniform(-1.5, 1.5);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double s = std::sin(2.0 * std::numbers::pi * (fx * x / w + fy * y / h) + phase);
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        f.u[i] += au * s;
        f.v[i] += av * s;
      }
    }
  }
  return f;
}

constexpr double kFeatherPx = 3.0;

Field random_objects(int h, int w, double max_mag, Rng& rng) {
  Field f = random_affine(h, w, rng);
  f.rescale_to(max_mag * rng.uniform(0.2, 0.6));
  const int objects = rng.range(1, 3);
  for (int k = 0; k < objects; ++k) {
    const double rh = rng.uniform(0.2, 0.5) * h;
    const double rw = rng.uniform(0.2, 0.5) * w;
    const double y0 = rng.uniform(0.0, h - rh);
    const double x0 = rng.uniform(0.0, w - rw);
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double mag = max_mag * rng.uniform(0.3, 1.0);
    const double ou = mag * std::cos(angle);
    const double ov = mag * std::sin(angle);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double inside = std::min({x - x0, x0 + rw - x, y - y0, y0 + rh - y});
        if (inside <= 0.0) continue;
        const double alpha = std::min(1.0, inside / kFeatherPx);
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        f.u[i] = (1.0 - alpha) * f.u[i] + alpha * ou;
        f.v[i] = (1.0 - alpha) * f.v[i] + alpha * ov;
      }
    }
  }
  return f;
}

float quantize(float v) { return static_cast<float>(to_byte(v)) / 255.0f; }

void quantize_inplace(Tensor<float>& t) {
  for (float& v : t.storage()) v = quantize(v);
}

}  // namespace

FlowField<float> gen_flow_field(FlowKind kind, double max_mag, int h, int w, std::uint64_t seed) {
  if (!(max_mag >= 0.0 && max_mag <= kMaxSynthFlow)) {
    throw ValueError("gen_flow_field: max_mag must lie in [0, 20], got " + std::to_string(max_mag));
  }
  if (h < 1 || w < 1) throw ShapeError("gen_flow_field: empty extent");
  if (max_mag == 0.0) return FlowField<float>(1, 2, h, w);
  Rng rng(seed);
  Field f(h, w);
  switch (kind) {
    case FlowKind::kAffine:
      f = random_affine(h, w, rng);
      f.rescale_to(max_mag);
      break;
    case FlowKind::kSmooth:
      f = random_smooth(h, w, rng);
      f.rescale_to(max_mag);
      break;
    case FlowKind::kObjects:
      f = random_objects(h, w, max_mag, rng);
      break;
  }
  return f.to_flow();
}

Tensor<float> gen_texture(int h, int w, std::uint64_t seed) {
  if (h < 1 || w < 1) throw ShapeError("gen_texture: empty extent");
  Rng rng(seed);
  Tensor<float> img(1, 3, h, w);
  auto color = [&rng] {
    return std::array<double, 3>{rng.uniform(), rng.uniform(), rng.uniform()};
  };
  // Background: linear gradient between two colors.
  const auto c0 = color();
  const auto c1 = color();
  const double gdir = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double t = 0.5 + 0.5 * (std::cos(gdir) * (x - 0.5 * w) / w + std::sin(gdir) * (y - 0.5 * h) / h);
      for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = static_cast<float>(c0[c] * (1 - t) + c1[c] * t);
    }
  }
  // Opaque occluding shapes with sizes skewed small (dead-leaves style).
  const int shapes = rng.range(40, 80);
  const double extent = std::min(h, w);
  for (int s = 0; s < shapes; ++s) {
    const int kind = static_cast<int>(rng.below(3));
    const double u = rng.uniform();
    const double radius = 1.5 + extent * 0.3 * u * u;
    const double cx = rng.uniform(-radius, w + radius);
    const double cy = rng.uniform(-radius, h + radius);
    const auto fg = color();
    const auto bg = color();
    const double period = rng.uniform(2.0, 8.0);
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double aspect = rng.uniform(0.4, 1.0);
    const int ylo = std::max(0, static_cast<int>(std::floor(cy - radius)));
    const int yhi = std::min(h - 1, static_cast<int>(std::ceil(cy + radius)));
    const int xlo = std::max(0, static_cast<int>(std::floor(cx - radius)));
    const int xhi = std::min(w - 1, static_cast<int>(std::ceil(cx + radius)));
    for (int y = ylo; y <= yhi; ++y) {
      for (int x = xlo; x <= xhi; ++x) {
        const double dx = x - cx;
        const double dy = y - cy;
        bool inside = false;
        if (kind == 0) {
          inside = dx * dx + dy * dy <= radius * radius;
        } else {
          inside = std::abs(dx) <= radius && std::abs(dy) <= radius * aspect;
        }
        if (!inside) continue;
        const auto* c = &fg;
        if (kind == 2) {
          const double along = std::cos(angle) * dx + std::sin(angle) * dy;
          if (static_cast<long>(std::floor(along / period)) % 2 != 0) c = &bg;
        }
        for (int ch = 0; ch < 3; ++ch) img.at(0, ch, y, x) = static_cast<float>((*c)[ch]);
      }
    }
  }
  quantize_inplace(img);
  return img;
}

Sample make_sample(const Tensor<float>& sharp, const FlowField<float>& flow, const BlurConfig& cfg,
                   int margin) {
  require_flow(flow, "make_sample");
  require_same_spatial(sharp, flow, "make_sample");
  if (margin < 0 || sharp.h() <= 2 * margin || sharp.w() <= 2 * margin) {
    throw ValueError("make_sample: insufficient margin: image " + sharp.shape().str() +
                     " cannot lose " + std::to_string(margin) + " px on each side");
  }
  FlowField<float> negated = flow;
  for (float& v : negated.storage()) v = -v;
  const Tensor<float> frame2 = bilinear_warp(sharp, negated).warped;

  const int h = sharp.h() - 2 * margin;
  const int w = sharp.w() - 2 * margin;
  Sample s;
  s.gt = crop(sharp, margin, margin, h, w);
  s.flow = crop(flow, margin, margin, h, w);
  const Tensor<float> frame2_crop = crop(frame2, margin, margin, h, w);
  s.b1 = reblur(s.gt, s.flow, cfg);
  s.b2 = reblur(frame2_crop, s.flow, cfg);
  return s;
}

namespace {

struct Generated {
  Sample sample;
  ManifestRow row;
};

int margin_for(const DatasetParams& p) { return static_cast<int>(std::ceil(p.max_mag)) + 1; }

void check_params(const DatasetParams& p) {
  if (p.count < 0) throw ValueError("dataset: count must be >= 0");
  if (p.kinds.empty()) throw ValueError("dataset: no flow kinds");
  if (!(p.max_mag >= 0.0 && p.max_mag <= kMaxSynthFlow)) {
    throw ValueError("dataset: max flow must lie in [0, 20]");
  }
  if (p.size < 1) throw ValueError("dataset: size must be >= 1");
  BlurConfig{p.duty_cycle}.validate();
}

Generated generate_one(const std::vector<Tensor<float>>& sources, const std::vector<std::string>& names,
                       const DatasetParams& p, int index) {
  Rng rng = Rng::derive(p.seed, static_cast<std::uint64_t>(index));
  const std::size_t src_index = rng.below(sources.size());
  const Tensor<float>& src = sources[src_index];
  const FlowKind kind = p.kinds[rng.below(p.kinds.size())];
  const double lo = std::min(p.min_mag, p.max_mag);
  const double mag = rng.uniform(lo, p.max_mag);
  const int margin = margin_for(p);
  const int window = p.size + 2 * margin;
  if (src.h() < window || src.w() < window) {
    throw ValueError("dataset: source image " + src.shape().str() + " smaller than " +
                     std::to_string(window) + "x" + std::to_string(window) +
                     " (patch plus flow margin)");
  }
  const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(src.h() - window + 1)));
  const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(src.w() - window + 1)));
  Tensor<float> sharp = crop(src, y0, x0, window, window);
  for (float& v : sharp.storage()) v = quantize(v);
  const FlowField<float> flow = gen_flow_field(kind, mag, window, window, rng.next());

  Generated g;
  g.sample = make_sample(sharp, flow, BlurConfig{p.duty_cycle}, margin);
  quantize_inplace(g.sample.b1);
  quantize_inplace(g.sample.b2);
  char stem[16];
  std::snprintf(stem, sizeof stem, "%06d", index);
  g.row.index = index;
  g.row.b1 = std::string(stem) + "_b1.ppm";
  g.row.b2 = std::string(stem) + "_b2.ppm";
  g.row.gt = std::string(stem) + "_gt.ppm";
  g.row.flow = std::string(stem) + ".flo";
  g.row.source = names.empty() ? std::to_string(src_index) : names[src_index];
  g.row.kind = kind;
  g.row.max_mag = mag;
  g.row.duty_cycle = p.duty_cycle;
  g.row.seed = p.seed;
  return g;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<Sample> synthesize_samples(const std::vector<Tensor<float>>& sources,
                                       const DatasetParams& params) {
  check_params(params);
  if (sources.empty()) throw ValueError("dataset: no source images");
  std::vector<Sample> out;
  out.reserve(params.count);
  for (int i = 0; i < params.count; ++i) out.push_back(generate_one(sources, {}, params, i).sample);
  return out;
}

std::vector<ManifestRow> build_dataset(const std::string& src_dir, const std::string& out_dir,
                                       const DatasetParams& params) {
  check_params(params);
  if (!fs::is_directory(src_dir)) throw IoError("source directory '" + src_dir + "' not found");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(src_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValueError("source directory '" + src_dir + "' has no .ppm images");
  std::vector<Tensor<float>> sources;
  std::vector<std::string> names;
  for (const auto& f : files) {
    sources.push_back(load_image(f.string()));
    if (sources.back().c() != 3) throw ValueError("source '" + f.string() + "' is not RGB");
    names.push_back(f.filename().string());
  }

  fs::create_directories(out_dir);
  const fs::path out(out_dir);
  std::vector<ManifestRow> rows;
  std::ostringstream manifest;
  manifest << kManifestHeader << "\n";
  for (int i = 0; i < params.count; ++i) {
    Generated g = generate_one(sources, names, params, i);
    save_image(g.sample.b1, (out / g.row.b1).string());
    save_image(g.sample.b2, (out / g.row.b2).string());
    save_image(g.sample.gt, (out / g.row.gt).string());
    save_flo(g.sample.flow, (out / g.row.flow).string());
    manifest << g.row.index << "," << g.row.b1 << "," << g.row.b2 << "," << g.row.gt << ","
             << g.row.flow << "," << g.row.source << "," << to_string(g.row.kind) << ","
             << format_double(g.row.max_mag) << "," << format_double(g.row.duty_cycle) << ","
             << g.row.seed << "\n";
    rows.push_back(std::move(g.row));
  }
  std::ofstream mf(out / kManifestName, std::ios::binary | std::ios::trunc);
  if (!mf) throw IoError("cannot write manifest in '" + out_dir + "'");
  mf << manifest.str();
  return rows;
}

std::vector<ManifestRow> read_manifest(const std::string& dir) {
  const fs::path path = fs::path(dir) / kManifestName;
  std::ifstream in(path);
  if (!in) throw IoError("no manifest at '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader) {
    throw ParseError("manifest: unexpected header in '" + path.string() + "'", 0);
  }
  std::vector<ManifestRow> rows;
  std::size_t offset = line.size() + 1;
  while (std::getline(in, line)) {
    if (line.empty()) {
      offset += 1;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (f.size() != 10) throw ParseError("manifest: expected 10 fields", offset);
    ManifestRow r;
    try {
      r.index = std::stoi(f[0]);
      r.b1 = f[1];
      r.b2 = f[2];
      r.gt = f[3];
      r.flow = f[4];
      r.source = f[5];
      r.kind = parse_flow_kind(f[6]);
      r.max_mag = std::stod(f[7]);
      r.duty_cycle = std::stod(f[8]);
      r.seed = std::stoull(f[9]);
    } catch (const std::exception& e) {
      throw ParseError(std::string("manifest: bad row: ") + e.what(), offset);
    }
    rows.push_back(std::move(r));
    offset += line.size() + 1;
  }
  return rows;
}

std::vector<Sample> load_dataset(const std::string& dir) {
  const fs::path base(dir);
  std::vector<Sample> out;
  for (const auto& r : read_manifest(dir)) {
    Sample s;
    s.b1 = load_image((base / r.b1).string());
    s.b2 = load_image((base / r.b2).string());
    s.gt = load_image((base / r.gt).string());
    s.flow = load_flo((base / r.flow).string());
    out.push_back(std::move(s));
  }
  return out;
}

double closed_loop_error(const Sample& s, const BlurConfig& cfg) {
  const Tensor<float> again = reblur(s.gt, s.flow, cfg);
  require_same_shape(again, s.b1, "closed loop");
  double worst = 0.0;
  for (std::size_t i = 0; i < again.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(again.storage()[i]) - s.b1.storage()[i]));
  }
  return worst;
}

VerifyReport verify_dataset(const std::string& dir, double duty_cycle_override) {
  const fs::path base(dir);
  VerifyReport rep;
  for (const auto& r : read_manifest(dir)) {
    Sample s;
    s.b1 = load_image((base / r.b1).string());
    s.gt = load_image((base / r.gt).string());
    s.flow = load_flo((base / r.flow).string());
    const double duty = duty_cycle_override > 0.0 ? duty_cycle_override : r.duty_cycle;
    rep.max_abs_diff = std::max(rep.max_abs_diff, closed_loop_error(s, BlurConfig{duty}));
    rep.samples += 1;
  }
  rep.passed = rep.max_abs_diff <= kClosedLoopTolerance;
  return rep;
}

namespace {

template <typename T>
Tensor<T> rotate_image(const Tensor<T>& t) {
  const int h = t.h();
  const int w = t.w();
  Tensor<T> out(t.n(), t.c(), w, h);
  for (int n = 0; n < t.n(); ++n) {
    for (int c = 0; c < t.c(); ++c) {
      for (int y = 0; y < w; ++y) {
        for (int x = 0; x < h; ++x) out.at(n, c, y, x) = t.at(n, c, h - 1 - x, y);
      }
    }
  }
  return out;
}

}  // namespace

Sample rotate90(const Sample& s, int k) {
  k = ((k % 4) + 4) % 4;
  Sample r = s;
  for (int i = 0; i < k; ++i) {
    r.b1 = rotate_image(r.b1);
    r.b2 = rotate_image(r.b2);
    r.gt = rotate_image(r.gt);
    FlowField<float> f = rotate_image(r.flow);
    const std::size_t plane = f.plane();
    for (int n = 0; n < f.n(); ++n) {
      float* u = f.plane(n, 0).data();
      float* v = f.plane(n, 1).data();
      for (std::size_t j = 0; j < plane; ++j) {
        const float nu = -v[j];
        v[j] = u[j];
        u[j] = nu;
      }
    }
    r.flow = std::move(f);
  }
  return r;
}

Sample permute_channels(const Sample& s, const int perm[3]) {
  auto apply = [perm](const Tensor<float>& t) {
    if (t.c() != 3) throw ShapeError("permute_channels: expected RGB");
    Tensor<float> out(t.shape());
    for (int n = 0; n < t.n(); ++n) {
      for (int c = 0; c < 3; ++c) {
        const auto src = t.plane(n, perm[c]);
        std::copy(src.begin(), src.end(), out.plane(n, c).begin());
      }
    }
    return out;
  };
  Sample r;
  r.b1 = apply(s.b1);
  r.b2 = apply(s.b2);
  r.gt = apply(s.gt);
  r.flow = s.flow;
  return r;
}

Sample resize_sample(const Sample& s, double scale) {
  const int h = std::max(1, static_cast<int>(std::lround(s.gt.h() * scale)));
  const int w = std::max(1, static_cast<int>(std::lround(s.gt.w() * scale)));
  Sample r;
  r.b1 = bilinear_resize(s.b1, h, w);
  r.b2 = bilinear_resize(s.b2, h, w);
  r.gt = bilinear_resize(s.gt, h, w);
  r.flow = bilinear_resize(s.flow, h, w);
  const float sx = static_cast<float>(w) / static_cast<float>(s.gt.w());
  const float sy = static_cast<float>(h) / static_cast<float>(s.gt.h());
  for (int n = 0; n < r.flow.n(); ++n) {
    for (float& v : r.flow.plane(n, 0)) v *= sx;
    for (float& v : r.flow.plane(n, 1)) v *= sy;
  }
  return r;
}

Sample crop_sample(const Sample& s, int y0, int x0, int h, int w) {
  return Sample{crop(s.b1, y0, x0, h, w), crop(s.b2, y0, x0, h, w), crop(s.gt, y0, x0, h, w),
                crop(s.flow, y0, x0, h, w)};
}

Sample augment(const Sample& s, Rng& rng, const AugmentConfig& cfg) {
  if (cfg.patch < 1) throw ValueError("augment: patch must be >= 1");
  Sample r = s;
  const int smallest = std::min(s.gt.h(), s.gt.w());
  double scale = cfg.max_scale > 1.0 ? rng.uniform(1.0, cfg.max_scale) : 1.0;
  scale = std::max(scale, static_cast<double>(cfg.patch) / smallest);
  if (std::lround(s.gt.h() * scale) != s.gt.h() || std::lround(s.gt.w() * scale) != s.gt.w()) {
    r = resize_sample(r, scale);
  }
  const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(r.gt.h() - cfg.patch + 1)));
  const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(r.gt.w() - cfg.patch + 1)));
  if (cfg.patch != r.gt.h() || cfg.patch != r.gt.w()) {
    r = crop_sample(r, y0, x0, cfg.patch, cfg.patch);
  }
  if (cfg.rotate) r = rotate90(r, static_cast<int>(rng.below(4)));
  if (cfg.permute_colors) {
    static constexpr int kPerms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                         {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    const auto& p = kPerms[rng.below(6)];
    if (p[0] != 0 || p[1] != 1) r = permute_channels(r, p);
  }
  return r;
}

}  // namespace flowdeblur
