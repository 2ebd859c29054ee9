#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "flowdeblur/image_io.hpp"
#include "flowdeblur/resample.hpp"
#include "flowdeblur/synth.hpp"
#include "flowdeblur/warp.hpp"
#include "support.hpp"

using namespace flowdeblur;
namespace fs = std::filesystem;

namespace {

double max_magnitude(const FlowField<float>& f) {
  double m = 0;
  for (std::size_t i = 0; i < f.plane(); ++i) {
    m = std::max(m, std::hypot(double(f.storage()[i]), double(f.storage()[f.plane() + i])));
  }
  return m;
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_sources(const fdtest::TempDir& dir, int count, int size) {
  for (int i = 0; i < count; ++i) {
    save_image(gen_texture(size, size, 100 + i), dir.str("src" + std::to_string(i) + ".ppm"));
  }
}

}  // namespace

TEST(FlowKinds, Parse) {
  EXPECT_EQ(parse_flow_kinds("smooth,affine").size(), 2u);
  EXPECT_THROW(parse_flow_kind("spiral"), ValueError);
  EXPECT_THROW(parse_flow_kinds(""), ValueError);
}

TEST(FlowFields, AffineMatchesFormula) {
  AffineMotion m{1.5, -2.0, 0.01, -0.02, 0.03, 0.005};
  const auto f = affine_flow(m, 9, 13);
  const double cx = 6.0, cy = 4.0;
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 13; ++x) {
      EXPECT_NEAR(f.at(0, 0, y, x), 1.5 + 0.01 * (x - cx) - 0.02 * (y - cy), 1e-6);
      EXPECT_NEAR(f.at(0, 1, y, x), -2.0 + 0.03 * (x - cx) + 0.005 * (y - cy), 1e-6);
    }
}

TEST(FlowFields, MagnitudeIsCapped) {
  for (auto kind : {FlowKind::kAffine, FlowKind::kSmooth, FlowKind::kObjects}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto f = gen_flow_field(kind, 12.5, 48, 40, seed);
      EXPECT_TRUE(f.all_finite());
      EXPECT_LE(max_magnitude(f), 12.5 + 1e-4) << to_string(kind);
      if (kind != FlowKind::kObjects) {
        EXPECT_NEAR(max_magnitude(f), 12.5, 1e-4);
      }
    }
  }
  EXPECT_EQ(max_magnitude(gen_flow_field(FlowKind::kSmooth, 0.0, 8, 8, 1)), 0.0);
  EXPECT_THROW(gen_flow_field(FlowKind::kSmooth, 25.0, 8, 8, 1), ValueError);
  EXPECT_THROW(gen_flow_field(FlowKind::kSmooth, -1.0, 8, 8, 1), ValueError);
}

TEST(FlowFields, SmoothFieldsHaveSmallGradients) {
  const auto f = gen_flow_field(FlowKind::kSmooth, 10.0, 64, 64, 3);
  for (int y = 0; y < 64; ++y) {
    for (int x = 1; x < 64; ++x) {
      EXPECT_LT(std::abs(f.at(0, 0, y, x) - f.at(0, 0, y, x - 1)), 1.5);
    }
  }
}

TEST(Texture, DeterministicAndQuantized) {
  const auto a = gen_texture(32, 48, 7);
  EXPECT_EQ(a, gen_texture(32, 48, 7));
  EXPECT_NE(a, gen_texture(32, 48, 8));
  for (float v : a.storage()) EXPECT_EQ(static_cast<float>(to_byte(v)) / 255.0f, v);
}

TEST(MakeSample, ZeroFlowGivesIdenticalFrames) {
  const auto sharp = gen_texture(40, 40, 1);
  const Sample s = make_sample(sharp, FlowField<float>(1, 2, 40, 40), {}, 4);
  EXPECT_EQ(s.gt.shape(), (Shape{1, 3, 32, 32}));
  EXPECT_EQ(s.b1, s.gt);
  EXPECT_EQ(s.b2, s.gt);
}

TEST(MakeSample, SecondFrameIsSharpMovedAlongFlow) {
  // For a uniform integer flow, frame 2 holds frame 1's content displaced by F.
  const auto sharp = gen_texture(40, 40, 2);
  FlowField<float> flow(1, 2, 40, 40);
  for (float& v : flow.plane(0, 0)) v = 3.0f;
  for (float& v : flow.plane(0, 1)) v = -2.0f;
  const Sample s = make_sample(sharp, flow, {}, 5);
  const Sample still = make_sample(sharp, FlowField<float>(1, 2, 40, 40), {}, 5);
  (void)still;
  // Warping B2 by F reproduces B1 where the pair is defined.
  const auto warped = bilinear_warp(s.b2, s.flow).warped;
  for (int c = 0; c < 3; ++c)
    for (int y = 3; y < 25; ++y)
      for (int x = 3; x < 24; ++x) EXPECT_NEAR(warped.at(0, c, y, x), s.b1.at(0, c, y, x), 1e-5);
}

TEST(MakeSample, ClosedLoopInMemory) {
  const auto sharp = gen_texture(96, 96, 3);
  const auto flow = gen_flow_field(FlowKind::kObjects, 10.0, 96, 96, 4);
  const Sample s = make_sample(sharp, flow, {}, 11);
  EXPECT_EQ(closed_loop_error(s, {}), 0.0);
}

TEST(MakeSample, InsufficientMargin) {
  EXPECT_THROW(make_sample(gen_texture(20, 20, 1), FlowField<float>(1, 2, 20, 20), {}, 10), ValueError);
  EXPECT_THROW(make_sample(gen_texture(20, 20, 1), FlowField<float>(1, 2, 20, 21), {}, 1), ShapeError);
}

TEST(Dataset, CountZeroWritesHeaderOnly) {
  fdtest::TempDir src("src"), out("out");
  write_sources(src, 1, 96);
  DatasetParams p;
  p.count = 0;
  EXPECT_TRUE(build_dataset(src.str(), out.str(), p).empty());
  const auto text = read_bytes(out.path() / kManifestName);
  EXPECT_EQ(std::string(text.begin(), text.end()), std::string(kManifestHeader) + "\n");
  EXPECT_TRUE(load_dataset(out.str()).empty());
}

TEST(Dataset, ReproducibleAndVerifiable) {
  fdtest::TempDir src("src"), a("a"), b("b");
  write_sources(src, 3, 96);
  DatasetParams p;
  p.count = 6;
  p.seed = 17;
  const auto rows = build_dataset(src.str(), a.str(), p);
  build_dataset(src.str(), b.str(), p);
  ASSERT_EQ(rows.size(), 6u);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a.path())) {
    EXPECT_EQ(read_bytes(e.path()), read_bytes(b.path() / e.path().filename())) << e.path();
    ++files;
  }
  EXPECT_EQ(files, 6u * 4u + 1u);
  const VerifyReport rep = verify_dataset(a.str());
  EXPECT_EQ(rep.samples, 6);
  EXPECT_TRUE(rep.passed);
  EXPECT_LE(rep.max_abs_diff, kClosedLoopTolerance);

  const auto back = read_manifest(a.str());
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].b1, rows[i].b1);
    EXPECT_EQ(back[i].kind, rows[i].kind);
    EXPECT_EQ(back[i].max_mag, rows[i].max_mag);
    EXPECT_LE(rows[i].max_mag, p.max_mag);
    EXPECT_GE(rows[i].max_mag, p.min_mag);
  }
  const auto samples = load_dataset(a.str());
  EXPECT_EQ(samples[0].gt.shape(), (Shape{1, 3, 64, 64}));
  EXPECT_LE(max_magnitude(samples[0].flow), rows[0].max_mag + 1e-4);
}

TEST(Dataset, VerifyDetectsWrongDutyCycle) {
  fdtest::TempDir src("src"), out("out");
  write_sources(src, 1, 96);
  DatasetParams p;
  p.count = 2;
  p.min_mag = 8;
  build_dataset(src.str(), out.str(), p);
  EXPECT_FALSE(verify_dataset(out.str(), 0.3).passed);
}

TEST(Dataset, SourceErrors) {
  fdtest::TempDir empty("empty"), out("out");
  DatasetParams p;
  p.count = 1;
  EXPECT_THROW(build_dataset(empty.str(), out.str(), p), ValueError);
  EXPECT_THROW(build_dataset(empty.str("nope"), out.str(), p), IoError);
  fdtest::TempDir small("small");
  write_sources(small, 1, 32);
  EXPECT_THROW(build_dataset(small.str(), out.str(), p), ValueError);
  EXPECT_THROW(read_manifest(empty.str()), IoError);
}

TEST(Synthesize, MatchesDatasetOnDisk) {
  fdtest::TempDir src("src"), out("out");
  write_sources(src, 2, 96);
  DatasetParams p;
  p.count = 3;
  build_dataset(src.str(), out.str(), p);
  std::vector<Tensor<float>> sources = {gen_texture(96, 96, 100), gen_texture(96, 96, 101)};
  const auto mem = synthesize_samples(sources, p);
  const auto disk = load_dataset(out.str());
  ASSERT_EQ(mem.size(), disk.size());
  for (std::size_t i = 0; i < mem.size(); ++i) {
    EXPECT_EQ(mem[i].b1, disk[i].b1);
    EXPECT_EQ(mem[i].gt, disk[i].gt);
    EXPECT_EQ(mem[i].flow, disk[i].flow);
  }
}

TEST(Augment, RotationRotatesFlowVectors) {
  Sample s{Tensor<float>(1, 3, 4, 6), Tensor<float>(1, 3, 4, 6), fdtest::random_image(4, 6, 1),
           FlowField<float>(1, 2, 4, 6)};
  for (float& v : s.flow.plane(0, 0)) v = 3.0f;
  const Sample r = rotate90(s, 1);
  EXPECT_EQ(r.gt.shape(), (Shape{1, 3, 6, 4}));
  for (float v : r.flow.plane(0, 0)) EXPECT_EQ(v, 0.0f);
  for (float v : r.flow.plane(0, 1)) EXPECT_EQ(v, 3.0f);
  // Clockwise on screen: the top-left pixel moves to the top-right.
  EXPECT_EQ(r.gt.at(0, 0, 0, 3), s.gt.at(0, 0, 0, 0));
  const Sample full = rotate90(rotate90(r, 2), 1);
  EXPECT_EQ(full.gt, s.gt);
  EXPECT_EQ(full.flow, s.flow);
}

TEST(Augment, RotationCommutesWithWarp) {
  // The rotated pair still satisfies warp(B2', F') == B1'.
  const auto sharp = gen_texture(48, 48, 5);
  const auto flow = gen_flow_field(FlowKind::kAffine, 3.0, 48, 48, 6);
  Sample s = make_sample(sharp, flow, {}, 4);
  const auto before = bilinear_warp(s.b2, s.flow).warped;
  for (int k = 1; k < 4; ++k) {
    Sample r = rotate90(s, k);
    Sample expect = rotate90(Sample{before, before, before, s.flow}, k);
    const auto warped = bilinear_warp(r.b2, r.flow).warped;
    EXPECT_LE(fdtest::max_abs_diff(crop(warped, 6, 6, 28, 28), crop(expect.b1, 6, 6, 28, 28)), 1e-5)
        << "k=" << k;
  }
}

TEST(Augment, PermuteAndIdentity) {
  Sample s{fdtest::random_image(8, 8, 1), fdtest::random_image(8, 8, 2), fdtest::random_image(8, 8, 3),
           fdtest::random_tensor<float>(1, 2, 8, 8, 4)};
  const int perm[3] = {2, 0, 1};
  const Sample p = permute_channels(s, perm);
  EXPECT_EQ(p.b1.at(0, 0, 3, 3), s.b1.at(0, 2, 3, 3));
  EXPECT_EQ(p.gt.at(0, 1, 3, 3), s.gt.at(0, 0, 3, 3));
  EXPECT_EQ(p.flow, s.flow);

  AugmentConfig none{8, 1.0, false, false};
  Rng rng(1);
  const Sample same = augment(s, rng, none);
  EXPECT_EQ(same.b1, s.b1);
  EXPECT_EQ(same.flow, s.flow);
}

TEST(Augment, ResizeScalesFlow) {
  Sample s{fdtest::random_image(8, 8, 1), fdtest::random_image(8, 8, 2), fdtest::random_image(8, 8, 3),
           FlowField<float>(1, 2, 8, 8, 1.0f)};
  const Sample r = resize_sample(s, 1.5);
  EXPECT_EQ(r.gt.shape(), (Shape{1, 3, 12, 12}));
  for (float v : r.flow.storage()) EXPECT_FLOAT_EQ(v, 1.5f);
}

TEST(Augment, RandomUpscaleScalesFlowVectors) {
  const Sample s{Tensor<float>(1, 3, 32, 32, 0.5f), Tensor<float>(1, 3, 32, 32, 0.5f),
                 Tensor<float>(1, 3, 32, 32, 0.5f), FlowField<float>(1, 2, 32, 32, 1.0f)};
  Rng rng(4);
  AugmentConfig cfg{32, 2.0, false, false};
  double largest = 0.0;
  for (int i = 0; i < 8; ++i) {
    const Sample a = augment(s, rng, cfg);
    ASSERT_EQ(a.flow.shape(), (Shape{1, 2, 32, 32}));
    const float v = a.flow.storage().front();
    for (float f : a.flow.storage()) EXPECT_FLOAT_EQ(f, v);
    EXPECT_GE(v, 1.0f);
    EXPECT_LE(v, 2.0f);
    largest = std::max(largest, static_cast<double>(v));
  }
  EXPECT_GT(largest, 1.1);
}

TEST(Augment, ProducesPatchesOfRequestedSize) {
  const auto sharp = gen_texture(96, 96, 9);
  const Sample s = make_sample(sharp, gen_flow_field(FlowKind::kSmooth, 4.0, 96, 96, 1), {}, 5);
  Rng rng(2);
  AugmentConfig cfg;
  cfg.patch = 64;
  for (int i = 0; i < 10; ++i) {
    const Sample a = augment(s, rng, cfg);
    EXPECT_EQ(a.b1.shape(), (Shape{1, 3, 64, 64}));
    EXPECT_EQ(a.flow.shape(), (Shape{1, 2, 64, 64}));
  }
}
