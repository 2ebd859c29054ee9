#include <gtest/gtest.h>

#include <fstream>

#include "flowdeblur/binary_io.hpp"
#include "flowdeblur/image_io.hpp"
#include "flowdeblur/resample.hpp"
#include "support.hpp"

using namespace flowdeblur;

TEST(Tensor, IndexingIsNchw) {
  Tensor<float> t(2, 3, 4, 5);
  EXPECT_EQ(t.size(), 120u);
  EXPECT_EQ(t.index(1, 2, 3, 4), 119u);
  EXPECT_EQ(t.index(0, 1, 0, 0), 20u);
  t.at(1, 0, 2, 3) = 7.0f;
  EXPECT_EQ(t.storage()[t.index(1, 0, 2, 3)], 7.0f);
  EXPECT_EQ(t.plane(1, 0)[2 * 5 + 3], 7.0f);
}

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor<float>(Shape{1, 1, 2, 2}, std::vector<float>(3)), ShapeError);
  EXPECT_THROW(Tensor<float>(1, -1, 2, 2), ShapeError);
}

TEST(Tensor, FiniteCheckNamesTheTensor) {
  Tensor<float> t(1, 1, 2, 2);
  t.at(0, 0, 1, 1) = std::nanf("");
  try {
    require_finite(t, "flow");
    FAIL() << "expected ValueError";
  } catch (const ValueError& e) {
    EXPECT_NE(std::string(e.what()).find("flow"), std::string::npos);
  }
}

TEST(ImageIo, PpmRoundTripIsBitExact) {
  const Tensor<float> img = fdtest::random_image(17, 23, 3);
  const auto bytes = encode_image(img);
  const std::string header = "P6\n23 17\n255\n";
  ASSERT_GE(bytes.size(), header.size());
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + header.size()), header);
  EXPECT_EQ(bytes.size(), header.size() + 17u * 23u * 3u);
  const Tensor<float> back = decode_image(bytes);
  EXPECT_EQ(back, img);
  EXPECT_EQ(encode_image(back), bytes);
}

TEST(ImageIo, PgmRoundTrip) {
  const Tensor<float> img = fdtest::random_image(5, 9, 4, 1);
  const auto bytes = encode_image(img);
  EXPECT_EQ(bytes[1], '5');
  EXPECT_EQ(decode_image(bytes), img);
}

TEST(ImageIo, FileRoundTrip) {
  fdtest::TempDir dir("ppm");
  const Tensor<float> img = fdtest::random_image(8, 8, 5);
  save_image(img, dir.str("a.ppm"));
  EXPECT_EQ(load_image(dir.str("a.ppm")), img);
}

TEST(ImageIo, HeaderCommentsAndWhitespace) {
  const std::string text = "P6 # comment\n2 # w\n1\n255\n";
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  for (int v : {0, 51, 102, 153, 204, 255}) bytes.push_back(static_cast<std::uint8_t>(v));
  const Tensor<float> img = decode_image(bytes);
  ASSERT_EQ(img.shape(), (Shape{1, 3, 1, 2}));
  EXPECT_FLOAT_EQ(img.at(0, 0, 0, 0), 0.0f);
  EXPECT_FLOAT_EQ(img.at(0, 1, 0, 0), 0.2f);
  EXPECT_FLOAT_EQ(img.at(0, 2, 0, 1), 1.0f);
}

TEST(ImageIo, TruncatedPixelsReportOffset) {
  const std::string text = "P6\n4 4\n255\n";
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  bytes.resize(bytes.size() + 10, 0);
  try {
    decode_image(bytes);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    // Parsing stops where the payload runs out.
    EXPECT_EQ(e.offset(), bytes.size());
  }
}

TEST(ImageIo, RejectsUnsupportedInput) {
  const std::string p3 = "P3\n1 1\n255\n0 0 0\n";
  EXPECT_THROW(decode_image(std::vector<std::uint8_t>(p3.begin(), p3.end())), Error);
  const std::string deep = "P6\n1 1\n65535\n";
  EXPECT_THROW(decode_image(std::vector<std::uint8_t>(deep.begin(), deep.end())), Error);
  EXPECT_THROW(load_image("/nonexistent/x.ppm"), IoError);
}

TEST(ImageIo, ToByteRoundsHalfUpAndClamps) {
  EXPECT_EQ(to_byte(-0.5), 0);
  EXPECT_EQ(to_byte(2.0), 255);
  EXPECT_EQ(to_byte(0.5 / 255.0), 1);
  EXPECT_EQ(to_byte(0.49 / 255.0), 0);
  for (int b = 0; b < 256; ++b) EXPECT_EQ(to_byte(static_cast<float>(b) / 255.0f), b);
}

TEST(FloIo, RoundTripIsBitExact) {
  FlowField<float> f = fdtest::random_tensor<float>(1, 2, 7, 11, 9, -20.0, 20.0);
  f.at(0, 0, 0, 0) = -0.0f;
  f.at(0, 1, 3, 4) = 1e-30f;
  const auto bytes = encode_flo(f);
  EXPECT_EQ(bytes.size(), 12u + 7u * 11u * 2u * 4u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "PIEH");
  const FlowField<float> back = decode_flo(bytes);
  ASSERT_EQ(back.shape(), f.shape());
  EXPECT_EQ(std::memcmp(back.data(), f.data(), f.size() * sizeof(float)), 0);
  EXPECT_EQ(encode_flo(back), bytes);
}

TEST(FloIo, InterleavedLayout) {
  FlowField<float> f(1, 2, 1, 2);
  f.at(0, 0, 0, 0) = 1.0f;
  f.at(0, 1, 0, 0) = 2.0f;
  f.at(0, 0, 0, 1) = 3.0f;
  f.at(0, 1, 0, 1) = 4.0f;
  const auto bytes = encode_flo(f);
  binary::Reader r(bytes, "test");
  r.u32("magic");
  EXPECT_EQ(r.i32("w"), 2);
  EXPECT_EQ(r.i32("h"), 1);
  for (float expect : {1.0f, 2.0f, 3.0f, 4.0f}) EXPECT_EQ(r.f32("v"), expect);
}

TEST(FloIo, MalformedInputs) {
  auto bytes = encode_flo(FlowField<float>(1, 2, 3, 3));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_flo(bad_magic), ParseError);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  try {
    decode_flo(truncated);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 12u);
  }
  EXPECT_THROW(encode_flo(FlowField<float>(1, 3, 2, 2)), ShapeError);
}

TEST(Resample, AvgDownsampleMatchesBlockMeans) {
  const auto t = fdtest::random_tensor<double>(2, 3, 6, 8, 1);
  const auto d = avg_downsample2x(t);
  ASSERT_EQ(d.shape(), (Shape{2, 3, 3, 4}));
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 4; ++x) {
          double s = 0;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) s += t.at(n, c, 2 * y + dy, 2 * x + dx);
          EXPECT_NEAR(d.at(n, c, y, x), s / 4, 1e-15);
        }
  EXPECT_THROW(avg_downsample2x(Tensor<double>(1, 1, 3, 4)), ShapeError);
}

TEST(Resample, ResizeIdentityAndConstant) {
  const auto t = fdtest::random_tensor<float>(1, 2, 5, 7, 2);
  EXPECT_EQ(bilinear_resize(t, 5, 7), t);
  Tensor<float> c(1, 1, 4, 4, 0.25f);
  const auto up = bilinear_resize(c, 9, 13);
  for (float v : up.storage()) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(Resample, ResizePreservesLinearRampsInInterior) {
  // Align-corners-false mapping: x_in = (x_out + 0.5) * in / out - 0.5.
  Tensor<double> t(1, 1, 1, 8);
  for (int x = 0; x < 8; ++x) t.at(0, 0, 0, x) = x;
  const auto up = bilinear_resize(t, 1, 16);
  for (int x = 1; x < 15; ++x) EXPECT_NEAR(up.at(0, 0, 0, x), (x + 0.5) * 0.5 - 0.5, 1e-12);
}

TEST(Resample, ReflectPadThenCropIsIdentity) {
  const auto t = fdtest::random_tensor<float>(1, 3, 50, 70, 3);
  const auto p = reflect_pad_to_multiple(t, 64);
  ASSERT_EQ(p.shape(), (Shape{1, 3, 64, 128}));
  EXPECT_EQ(crop(p, 0, 0, 50, 70), t);
  // Mirror without repeating the edge sample.
  EXPECT_EQ(p.at(0, 1, 50, 3), t.at(0, 1, 48, 3));
  EXPECT_EQ(p.at(0, 2, 7, 71), t.at(0, 2, 7, 67));
  EXPECT_EQ(reflect_pad_to_multiple(p, 64), p);
}

TEST(Resample, CropBounds) {
  const auto t = fdtest::random_tensor<float>(1, 1, 4, 4, 4);
  EXPECT_THROW(crop(t, 2, 2, 3, 1), ShapeError);
  EXPECT_EQ(crop(t, 1, 2, 2, 2).at(0, 0, 1, 1), t.at(0, 0, 2, 3));
}

TEST(Resample, BilinearSampleClampsAndInterpolates) {
  const std::vector<double> plane = {0, 1, 2, 3};  // 2x2
  EXPECT_DOUBLE_EQ(bilinear_sample(plane.data(), 2, 2, 0.5, 0.5), 1.5);
  EXPECT_DOUBLE_EQ(bilinear_sample(plane.data(), 2, 2, -3.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(bilinear_sample(plane.data(), 2, 2, 5.0, 5.0), 3.0);
}
