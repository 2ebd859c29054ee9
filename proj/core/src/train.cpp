#include "flowdeblur/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "flowdeblur/checkpoint.hpp"
#include "flowdeblur/metrics.hpp"

namespace fs = std::filesystem;

namespace flowdeblur {

void TrainConfig::validate() const {
  if (batch < 1) throw ValueError("train: batch must be positive");
  if (patch < 1) throw ValueError("train: patch must be positive");
  if (iters < 1) throw ValueError("train: iters must be positive");
  if (!(lr > 0.0)) throw ValueError("train: lr must be positive");
  if (!(image_weight > 0.0)) throw ValueError("train: image weight must be positive");
  for (double w : scale_weights) {
    if (!(w > 0.0)) throw ValueError("train: scale weights must be positive");
  }
  if (checkpoint_every < 1) throw ValueError("train: checkpoint interval must be positive");
}

std::string checkpoint_name(int iter) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "model_%06d.fdbl", iter);
  return buf;
}

namespace {

struct Batch {
  Tensor<float> b1, b2, gt;
};

Batch stack(const std::vector<Sample>& items) {
  const Shape s = items.front().gt.shape();
  const int n = static_cast<int>(items.size());
  Batch b{Tensor<float>(n, s.c, s.h, s.w), Tensor<float>(n, s.c, s.h, s.w),
          Tensor<float>(n, s.c, s.h, s.w)};
  for (int i = 0; i < n; ++i) {
    std::copy(items[i].b1.storage().begin(), items[i].b1.storage().end(), b.b1.item(i).begin());
    std::copy(items[i].b2.storage().begin(), items[i].b2.storage().end(), b.b2.item(i).begin());
    std::copy(items[i].gt.storage().begin(), items[i].gt.storage().end(), b.gt.item(i).begin());
  }
  return b;
}

std::string format_row(const TrainLogRow& r) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g", r.iter, r.flow_loss, r.img_loss);
  return buf;
}

}  // namespace

TrainResult train(const std::vector<Sample>& data, const ModelConfig& model_cfg,
                  const TrainConfig& cfg, const std::string& out_dir,
                  const TrainObserver& observer) {
  cfg.validate();
  model_cfg.validate();
  if (data.empty()) throw ValueError("train: empty dataset");
  if (cfg.patch % model_cfg.input_multiple != 0) {
    throw ValueError("train: patch " + std::to_string(cfg.patch) + " is not a multiple of " +
                     std::to_string(model_cfg.input_multiple));
  }
  if (!cfg.scale_weights.empty() &&
      static_cast<int>(cfg.scale_weights.size()) != model_cfg.scales) {
    throw ValueError("train: expected one flow-loss weight per scale");
  }

  TrainResult result{Model<float>(model_cfg, cfg.seed), {}};
  Model<float>& model = result.model;
  Rng rng = Rng::derive(cfg.seed, 0x7a11);
  AugmentConfig aug = cfg.augment;
  aug.patch = cfg.patch;
  AdamConfig adam;
  adam.lr = cfg.lr;
  LossWeights weights{cfg.image_weight, cfg.scale_weights};

  std::ofstream log;
  const bool write_files = !out_dir.empty();
  if (write_files) {
    fs::create_directories(out_dir);
    log.open(fs::path(out_dir) / kTrainLogName, std::ios::trunc);
    if (!log) throw IoError("cannot write training log in '" + out_dir + "'");
    log << kTrainLogHeader << "\n";
  }

  std::vector<Sample> items(static_cast<std::size_t>(cfg.batch));
  for (int iter = 0; iter < cfg.iters; ++iter) {
    for (auto& item : items) item = augment(data[rng.below(data.size())], rng, aug);
    const Batch batch = stack(items);
    ForwardPass<float> pass = model.forward(batch.b1, batch.b2);
    const auto b1_pyr = build_pyramid(batch.b1, pass.flows);
    const auto b2_pyr = build_pyramid(batch.b2, pass.flows);
    const LossResult<float> loss =
        total_loss(pass.restored, batch.gt, b1_pyr, b2_pyr, pass.flows, weights);
    const TrainLogRow row{iter, loss.flow, loss.image};
    if (!std::isfinite(loss.total)) {
      throw NumericalError("train: non-finite loss at iter " + std::to_string(iter) +
                           " (flow " + std::to_string(loss.flow) + ", image " +
                           std::to_string(loss.image) + ")");
    }
    result.log.push_back(row);
    if (write_files) log << format_row(row) << "\n" << std::flush;

    const ModelGrads<float> grads = model.backward(pass, loss.grad_restored, loss.grad_flows);
    model.apply_adam(grads, adam);

    if (write_files && (iter + 1) % cfg.checkpoint_every == 0) {
      save_model(model, (fs::path(out_dir) / checkpoint_name(iter + 1)).string());
    }
    if (observer && !observer(row)) break;
  }
  if (write_files) save_model(model, (fs::path(out_dir) / kFinalCheckpointName).string());
  return result;
}

EvalReport evaluate(const Model<float>& model, const std::vector<Sample>& data) {
  EvalReport rep;
  for (const Sample& s : data) {
    const DeblurOutput out = deblur(model, s.b1, s.b2);
    Tensor<float> clipped = out.image;
    for (float& v : clipped.storage()) v = std::clamp(v, 0.0f, 1.0f);
    rep.psnr_output += psnr(clipped, s.gt);
    rep.psnr_input += psnr(s.b1, s.gt);
    rep.ssim_output += ssim(clipped, s.gt);
    rep.ssim_input += ssim(s.b1, s.gt);
    rep.samples += 1;
  }
  if (rep.samples > 0) {
    rep.psnr_output /= rep.samples;
    rep.psnr_input /= rep.samples;
    rep.ssim_output /= rep.samples;
    rep.ssim_input /= rep.samples;
  }
  return rep;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValueError("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

}  // namespace flowdeblur
