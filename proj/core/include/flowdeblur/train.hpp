#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flowdeblur/model.hpp"
#include "flowdeblur/synth.hpp"

namespace flowdeblur {

struct TrainConfig {
  int batch = 4;
  int patch = 64;
  int iters = 2000;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  double image_weight = 1.0;
  std::vector<double> scale_weights;  // empty: 1/S each
  int checkpoint_every = 500;
  AugmentConfig augment;

  void validate() const;
};

struct TrainLogRow {
  int iter = 0;
  double flow_loss = 0.0;
  double img_loss = 0.0;
  double total() const { return flow_loss + img_loss; }
};

inline constexpr const char* kTrainLogName = "train_log.csv";
inline constexpr const char* kTrainLogHeader = "iter,flow_loss,img_loss";
inline constexpr const char* kFinalCheckpointName = "model.fdbl";

struct TrainResult {
  Model<float> model;
  std::vector<TrainLogRow> log;
};

// Called after every iteration; return false to stop early.
using TrainObserver = std::function<bool(const TrainLogRow&)>;

// Minibatch Adam on augmented patches. With a non-empty out_dir, writes the
// loss log, a checkpoint every `checkpoint_every` iterations
// (model_<iter>.fdbl) and the final model. A non-finite loss throws
// NumericalError; checkpoints already written are kept.
TrainResult train(const std::vector<Sample>& data, const ModelConfig& model_cfg,
                  const TrainConfig& cfg, const std::string& out_dir = {},
                  const TrainObserver& observer = {});

std::string checkpoint_name(int iter);

struct EvalReport {
  int samples = 0;
  double psnr_output = 0.0;  // mean over samples
  double psnr_input = 0.0;   // blurry frame 1 against ground truth
  double ssim_output = 0.0;
  double ssim_input = 0.0;
};

EvalReport evaluate(const Model<float>& model, const std::vector<Sample>& data);

double median(std::vector<double> values);

}  // namespace flowdeblur
