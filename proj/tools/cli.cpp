#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "flowdeblur/blur.hpp"
#include "flowdeblur/checkpoint.hpp"
#include "flowdeblur/gradcheck.hpp"
#include "flowdeblur/image_io.hpp"
#include "flowdeblur/metrics.hpp"
#include "flowdeblur/model.hpp"
#include "flowdeblur/synth.hpp"
#include "flowdeblur/train.hpp"

namespace fs = std::filesystem;

namespace flowdeblur::cli {
namespace {

// Thrown for argument combinations CLI11 cannot validate on its own.
struct UsageError : Error {
  using Error::Error;
};

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

struct TexturesArgs {
  std::string out;
  int count = 8;
  int size = 128;
  std::uint64_t seed = 1;
};

void cmd_textures(const TexturesArgs& a, std::ostream& out) {
  fs::create_directories(a.out);
  for (int i = 0; i < a.count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "texture_%04d.ppm", i);
    const Tensor<float> img =
        gen_texture(a.size, a.size, Rng::derive(a.seed, static_cast<std::uint64_t>(i)).next());
    save_image(img, (fs::path(a.out) / name).string());
  }
  out << "wrote " << a.count << " textures to " << a.out << "\n";
}

struct SynthArgs {
  std::string src, out;
  std::string kinds = "affine,smooth,objects";
  DatasetParams params;
  bool verify = false;
};

int cmd_synth(SynthArgs a, std::ostream& out, std::ostream& err) {
  if (a.params.min_mag > a.params.max_mag) a.params.min_mag = a.params.max_mag;
  a.params.kinds = parse_flow_kinds(a.kinds);
  if (!fs::is_directory(a.src)) throw UsageError("--src '" + a.src + "' is not a directory");
  const auto rows = build_dataset(a.src, a.out, a.params);
  out << "wrote " << rows.size() << " samples to " << a.out << "\n";
  if (a.verify) {
    const VerifyReport rep = verify_dataset(a.out);
    out << "verify samples=" << rep.samples << " max_abs_diff=" << fmt(rep.max_abs_diff)
        << " tolerance=" << fmt(kClosedLoopTolerance) << " " << (rep.passed ? "PASS" : "FAIL")
        << "\n";
    if (!rep.passed) {
      err << "closed-loop verification failed\n";
      return kExitNumerical;
    }
  }
  return kExitOk;
}

struct TrainArgs {
  std::string data, out, eval;
  std::string rnn_mode = "rnn";
  std::string rnn_placement = "encoder";
  ModelConfig model;
  TrainConfig train;
};

int cmd_train(TrainArgs a, std::ostream& out) {
  a.model.rnn_mode = parse_rnn_mode(a.rnn_mode);
  a.model.rnn_placement = parse_rnn_placement(a.rnn_placement);
  a.model.validate();
  a.train.validate();
  if (!fs::is_directory(a.data)) throw UsageError("--data '" + a.data + "' is not a directory");
  const std::vector<Sample> data = load_dataset(a.data);
  if (data.empty()) throw UsageError("dataset '" + a.data + "' is empty");

  out << Model<float>(a.model, a.train.seed).summary();
  const TrainResult result = train(data, a.model, a.train, a.out);
  const TrainLogRow& last = result.log.back();
  out << "iters=" << result.log.size() << " final_flow_loss=" << fmt(last.flow_loss)
      << " final_img_loss=" << fmt(last.img_loss) << "\n";
  if (!a.eval.empty()) {
    const EvalReport rep = evaluate(result.model, load_dataset(a.eval));
    out << "eval samples=" << rep.samples << " psnr_output=" << fmt(rep.psnr_output)
        << " psnr_input=" << fmt(rep.psnr_input) << "\n";
  }
  return kExitOk;
}

struct DeblurArgs {
  std::string model, frame1, frame2, out, save_flow;
};

void cmd_deblur(const DeblurArgs& a, std::ostream& out) {
  const Model<float> model = load_model(a.model);
  const Tensor<float> b1 = load_image(a.frame1);
  const Tensor<float> b2 = load_image(a.frame2);
  if (b1.shape() != b2.shape()) {
    throw ShapeError("frame dimensions differ: " + b1.shape().str() + " vs " + b2.shape().str());
  }
  if (b1.c() != 3) throw ShapeError("frames must be RGB");
  const DeblurOutput result = deblur(model, b1, b2);
  save_image(result.image, a.out);
  if (!a.save_flow.empty()) save_flo(result.flow, a.save_flow);
  out << "wrote " << a.out << " (" << b1.w() << "x" << b1.h() << ")\n";
}

struct ReblurArgs {
  std::string sharp, flow, out;
  double duty_cycle = 1.0;
  bool oracle = false;
};

void cmd_reblur(const ReblurArgs& a, std::ostream& out) {
  const Tensor<float> sharp = load_image(a.sharp);
  const FlowField<float> flow = load_flo(a.flow);
  const BlurConfig cfg{a.duty_cycle};
  const Tensor<double> sd = sharp.cast<double>();
  const Tensor<double> fd = flow.cast<double>();
  const Tensor<double> blurred = reblur(sd, fd, cfg);
  save_image(blurred.cast<float>(), a.out);
  if (a.oracle) {
    const Tensor<double> ref = reblur_oracle(sd, fd, cfg);
    double worst = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      worst = std::max(worst, std::abs(ref.storage()[i] - blurred.storage()[i]));
    }
    out << "max_abs_diff between kernel and trajectory paths\n" << fmt(worst) << "\n";
  }
}

struct EvalArgs {
  std::string pred, gt;
};

void cmd_eval(const EvalArgs& a, std::ostream& out) {
  std::vector<std::pair<fs::path, fs::path>> pairs;
  if (fs::is_directory(a.pred) != fs::is_directory(a.gt)) {
    throw UsageError("--pred and --gt must both be files or both be directories");
  }
  if (fs::is_directory(a.pred)) {
    const auto pred = list_images(a.pred);
    const auto gt = list_images(a.gt);
    if (pred.size() != gt.size()) {
      throw UsageError("image count mismatch: " + std::to_string(pred.size()) + " predictions vs " +
                       std::to_string(gt.size()) + " references");
    }
    for (std::size_t i = 0; i < pred.size(); ++i) pairs.emplace_back(pred[i], gt[i]);
  } else {
    pairs.emplace_back(a.pred, a.gt);
  }
  out << "name,psnr,ssim\n";
  double sum_psnr = 0.0;
  double sum_ssim = 0.0;
  for (const auto& [p, g] : pairs) {
    const Tensor<float> pi = load_image(p.string());
    const Tensor<float> gi = load_image(g.string());
    const double q = psnr(pi, gi);
    const double s = ssim(pi, gi);
    sum_psnr += q;
    sum_ssim += s;
    out << p.filename().string() << "," << fmt(q) << "," << fmt(s) << "\n";
  }
  const double n = static_cast<double>(pairs.size());
  out << "mean," << fmt(pairs.empty() ? 0.0 : sum_psnr / n) << ","
      << fmt(pairs.empty() ? 0.0 : sum_ssim / n) << "\n";
}

struct GradcheckArgs {
  std::string op = "svrnn";
  std::uint64_t seed = 1;
  int seeds = 1;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  GradcheckReport worst;
  for (int i = 0; i < a.seeds; ++i) {
    const GradcheckReport rep = gradcheck(a.op, a.seed + static_cast<std::uint64_t>(i));
    if (i == 0 || rep.worst_rel_err > worst.worst_rel_err) {
      const int checked = worst.checked + rep.checked;
      worst = rep;
      worst.checked = checked;
    } else {
      worst.checked += rep.checked;
    }
  }
  out << "op=" << a.op << " seeds=" << a.seeds << " checked=" << worst.checked
      << " tolerance=" << fmt(worst.tolerance) << " " << (worst.passed() ? "PASS" : "FAIL") << "\n"
      << "worst_rel_err\n"
      << fmt(worst.worst_rel_err) << "\n";
  return worst.passed() ? kExitOk : kExitNumerical;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Flow-guided dynamic scene deblurring", "flowdeblur"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "0.1.0");

  TexturesArgs tex;
  auto* textures = app.add_subcommand("textures", "Write procedural sharp source images");
  textures->add_option("--out", tex.out, "Output directory")->required();
  textures->add_option("--count", tex.count, "Number of images")->check(CLI::NonNegativeNumber);
  textures->add_option("--size", tex.size, "Square image extent")->check(CLI::Range(16, 4096));
  textures->add_option("--seed", tex.seed, "Random seed");

  SynthArgs syn;
  auto* synth = app.add_subcommand("synth", "Build a blurred two-frame dataset from sharp images");
  synth->add_option("--src", syn.src, "Directory of sharp .ppm images")->required();
  synth->add_option("--out", syn.out, "Output directory")->required();
  synth->add_option("--count", syn.params.count, "Number of samples")->check(CLI::NonNegativeNumber);
  synth->add_option("--kinds", syn.kinds, "Comma list of affine, smooth, objects");
  synth->add_option("--max-flow", syn.params.max_mag, "Largest flow magnitude in pixels")
      ->check(CLI::Range(0.0, kMaxSynthFlow));
  synth->add_option("--min-flow", syn.params.min_mag, "Smallest drawn flow maximum")
      ->check(CLI::Range(0.0, kMaxSynthFlow));
  synth->add_option("--duty-cycle", syn.params.duty_cycle, "Shutter duty cycle r in (0, 1]")
      ->check(CLI::Range(1e-9, 1.0));
  synth->add_option("--size", syn.params.size, "Sample patch extent")->check(CLI::Range(8, 4096));
  synth->add_option("--seed", syn.params.seed, "Random seed");
  synth->add_flag("--verify", syn.verify, "Re-render every B1 from its stored gt and flow");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the flow and deblurring networks");
  train_cmd->add_option("--data", tr.data, "Dataset directory (manifest.csv)")->required();
  train_cmd->add_option("--out", tr.out, "Checkpoint and log directory")->required();
  train_cmd->add_option("--eval", tr.eval, "Optional dataset to score after training");
  train_cmd->add_option("--base-channels", tr.model.base_channels, "Width (full scale: 24)")
      ->check(CLI::Range(4, 256));
  train_cmd->add_option("--patch", tr.train.patch, "Patch extent (full scale: 256)")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch", tr.train.batch, "Batch size (full scale: 20)")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--iters", tr.train.iters, "Adam iterations")->check(CLI::PositiveNumber);
  train_cmd->add_option("--max-scale", tr.train.augment.max_scale, "Largest random upscale")
      ->check(CLI::Range(1.0, 4.0));
  train_cmd->add_option("--lr", tr.train.lr, "Learning rate")->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", tr.train.seed, "Random seed");
  train_cmd->add_option("--rnn-mode", tr.rnn_mode, "rnn, concat or none")
      ->check(CLI::IsMember({"rnn", "concat", "none"}));
  train_cmd->add_option("--rnn-placement", tr.rnn_placement, "encoder or decoder")
      ->check(CLI::IsMember({"encoder", "decoder"}));
  train_cmd->add_option("--scales", tr.model.scales, "Supervised flow scales")
      ->check(CLI::Range(1, kMaxFlowScales));
  train_cmd->add_option("--checkpoint-every", tr.train.checkpoint_every, "Checkpoint interval")
      ->check(CLI::PositiveNumber);

  DeblurArgs db;
  auto* deblur_cmd = app.add_subcommand("deblur", "Restore frame 1 from two blurry frames");
  deblur_cmd->add_option("--model", db.model, "Checkpoint file")->required();
  deblur_cmd->add_option("--frame1", db.frame1, "Blurry frame to restore")->required();
  deblur_cmd->add_option("--frame2", db.frame2, "Next blurry frame")->required();
  deblur_cmd->add_option("--out", db.out, "Output .ppm")->required();
  deblur_cmd->add_option("--save-flow", db.save_flow, "Optional full-resolution .flo output");

  ReblurArgs rb;
  auto* reblur_cmd = app.add_subcommand("reblur", "Render motion blur from a sharp image and flow");
  reblur_cmd->add_option("--sharp", rb.sharp, "Sharp .ppm")->required();
  reblur_cmd->add_option("--flow", rb.flow, "Flow .flo")->required();
  reblur_cmd->add_option("--duty-cycle", rb.duty_cycle, "Shutter duty cycle r in (0, 1]")
      ->check(CLI::Range(1e-9, 1.0));
  reblur_cmd->add_option("--out", rb.out, "Output .ppm")->required();
  reblur_cmd->add_flag("--oracle", rb.oracle, "Also integrate the trajectory and print the max difference");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "PSNR and SSIM as CSV");
  eval_cmd->add_option("--pred", ev.pred, "Prediction file or directory")->required();
  eval_cmd->add_option("--gt", ev.gt, "Reference file or directory")->required();

  GradcheckArgs gc;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of a backward pass");
  grad_cmd->add_option("--op", gc.op, "conv, deconv, svrnn, warp or pipeline")
      ->check(CLI::IsMember(gradcheck_ops()));
  grad_cmd->add_option("--seed", gc.seed, "First seed");
  grad_cmd->add_option("--seeds", gc.seeds, "Number of consecutive seeds")
      ->check(CLI::PositiveNumber);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (textures->parsed()) {
      cmd_textures(tex, out);
      return kExitOk;
    }
    if (synth->parsed()) return cmd_synth(syn, out, err);
    if (train_cmd->parsed()) return cmd_train(tr, out);
    if (deblur_cmd->parsed()) {
      cmd_deblur(db, out);
      return kExitOk;
    }
    if (reblur_cmd->parsed()) {
      cmd_reblur(rb, out);
      return kExitOk;
    }
    if (eval_cmd->parsed()) {
      cmd_eval(ev, out);
      return kExitOk;
    }
    if (grad_cmd->parsed()) return cmd_gradcheck(gc, out);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    // Bad arguments, unreadable or malformed inputs and mismatched files are
    // all the caller's to fix.
    err << "error: " << e.what() << "\n";
    const bool usage = dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ValueError*>(&e) ||
                       dynamic_cast<const IoError*>(&e) || dynamic_cast<const ShapeError*>(&e) ||
                       dynamic_cast<const ParseError*>(&e) || dynamic_cast<const FormatError*>(&e);
    return usage ? kExitUsage : kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace flowdeblur::cli
