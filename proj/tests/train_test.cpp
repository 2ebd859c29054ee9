#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <cmath>
#include <limits>

#include "flowdeblur/checkpoint.hpp"
#include "flowdeblur/metrics.hpp"
#include "flowdeblur/parallel.hpp"
#include "flowdeblur/synth.hpp"
#include "flowdeblur/train.hpp"
#include "support.hpp"

using namespace flowdeblur;
namespace fs = std::filesystem;

namespace {

std::vector<Sample> tiny_dataset(int count) {
  DatasetParams p;
  p.count = count;
  p.size = 64;
  p.max_mag = 4;
  p.min_mag = 1;
  return synthesize_samples({gen_texture(80, 80, 1), gen_texture(80, 80, 2)}, p);
}

ModelConfig small_model() {
  ModelConfig m;
  m.base_channels = 4;
  return m;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.batch = 0;
  EXPECT_THROW(c.validate(), ValueError);
  c = TrainConfig{};
  c.lr = -1;
  EXPECT_THROW(c.validate(), ValueError);
}

TEST(Train, PatchMustFitTheNetwork) {
  TrainConfig c;
  c.iters = 1;
  c.patch = 48;
  EXPECT_THROW(train(tiny_dataset(1), small_model(), c), ValueError);
}

TEST(Train, EmptyDatasetRejected) {
  TrainConfig c;
  c.iters = 1;
  EXPECT_THROW(train({}, small_model(), c), ValueError);
}

TEST(Train, WritesLogAndCheckpoints) {
  fdtest::TempDir out("train");
  TrainConfig c;
  c.iters = 4;
  c.batch = 2;
  c.checkpoint_every = 2;
  const auto result = train(tiny_dataset(3), small_model(), c, out.str());
  ASSERT_EQ(result.log.size(), 4u);
  EXPECT_TRUE(fs::exists(out.path() / checkpoint_name(2)));
  EXPECT_TRUE(fs::exists(out.path() / checkpoint_name(4)));
  EXPECT_FALSE(fs::exists(out.path() / checkpoint_name(3)));
  EXPECT_TRUE(fs::exists(out.path() / kFinalCheckpointName));

  const std::string log = read_text(out.path() / kTrainLogName);
  EXPECT_EQ(log.substr(0, log.find('\n')), kTrainLogHeader);
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 5);

  EXPECT_EQ(encode_model(load_model(out.str(kFinalCheckpointName))), encode_model(result.model));
}

TEST(Train, DeterministicUnderFixedSeed) {
  set_num_threads(1);
  TrainConfig c;
  c.iters = 3;
  c.batch = 2;
  const auto data = tiny_dataset(3);
  const auto a = train(data, small_model(), c);
  const auto b = train(data, small_model(), c);
  EXPECT_EQ(encode_model(a.model), encode_model(b.model));
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].img_loss, b.log[i].img_loss);
  c.seed = 2;
  EXPECT_NE(encode_model(train(data, small_model(), c).model), encode_model(a.model));
}

TEST(Train, ObserverCanStopEarly) {
  TrainConfig c;
  c.iters = 10;
  c.batch = 1;
  int seen = 0;
  const auto r = train(tiny_dataset(1), small_model(), c, {}, [&](const TrainLogRow&) {
    return ++seen < 2;
  });
  EXPECT_EQ(r.log.size(), 2u);
}

TEST(Train, NonFiniteDataRaisesNumericalError) {
  auto data = tiny_dataset(1);
  data[0].gt.storage()[5] = std::numeric_limits<float>::quiet_NaN();
  TrainConfig c;
  c.iters = 2;
  c.batch = 1;
  c.augment = AugmentConfig{64, 1.0, false, false};
  EXPECT_THROW(train(data, small_model(), c), NumericalError);
}

TEST(Evaluate, ReportsInputBaseline) {
  const auto data = tiny_dataset(2);
  const Model<float> model(small_model(), 3);
  const EvalReport r = evaluate(model, data);
  EXPECT_EQ(r.samples, 2);
  double expected = 0;
  for (const auto& s : data) expected += psnr(s.b1, s.gt);
  EXPECT_NEAR(r.psnr_input, expected / 2, 1e-9);
  EXPECT_TRUE(std::isfinite(r.psnr_output));
}

TEST(Median, OddEvenAndEmpty) {
  EXPECT_EQ(median({3, 1, 2}), 2);
  EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
  EXPECT_THROW(median({}), ValueError);
}
