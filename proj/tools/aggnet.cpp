// Command-line front end: synth, train, eval, infer, gradcheck, ablate.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "aggnet/checkpoint.hpp"
#include "aggnet/dataset.hpp"
#include "aggnet/errors.hpp"
#include "aggnet/gradcheck_suite.hpp"
#include "aggnet/losses.hpp"
#include "aggnet/netpbm.hpp"
#include "aggnet/run_config.hpp"
#include "aggnet/train.hpp"

namespace fs = std::filesystem;
using namespace aggnet;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct ConfigFlags {
  std::string file;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "key = value configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--set", overrides, "override one key, e.g. --set model.m=3");
  }

  RunConfig resolve(std::vector<std::string> extra = {}) const {
    RunConfig base = file.empty() ? RunConfig{} : load_run_config(file);
    std::vector<std::string> all = overrides;
    all.insert(all.end(), extra.begin(), extra.end());
    RunConfig cfg = apply_overrides(base, all);
    std::cout << "# resolved config\n" << dump_run_config(cfg) << std::flush;
    return cfg;
  }
};

std::vector<RgbdSample> load_or_fail(const fs::path& root, const std::string& split) {
  return Dataset::load_split(root, split);
}

void check_dims(const ModelConfig& cfg, const std::vector<RgbdSample>& samples) {
  for (const auto& s : samples) {
    if (s.gt_depth.height != cfg.height || s.gt_depth.width != cfg.width) {
      throw IoError("data dims " + std::to_string(s.gt_depth.height) + "x" +
                    std::to_string(s.gt_depth.width) + " do not match the model's " +
                    std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
    }
  }
}

int cmd_synth(const RunConfig& cfg, const fs::path& out, int count, const std::string& split) {
  const auto entries = Dataset::synthesize(out, cfg.scene, split, count);
  std::vector<RgbdSample> samples;
  for (const auto& e : entries) {
    SceneSpec s = cfg.scene;
    s.seed = e.seed;
    samples.push_back(generate_scene(s));
  }
  std::printf("wrote %zu samples to %s; mean hole fraction %.4f (target %.4f)\n", entries.size(),
              (out / split).string().c_str(), mean_hole_fraction(samples), cfg.scene.hole_fraction);
  return kOk;
}

int cmd_train(const RunConfig& cfg, const fs::path& data, const fs::path& out, bool resume) {
  std::vector<RgbdSample> all = load_or_fail(data, "train");
  check_dims(cfg.model, all);
  std::vector<RgbdSample> train, val;
  split_validation(all, train, val);
  if (train.empty()) throw IoError("every training sample landed in the validation partition");
  std::unique_ptr<AggNet> model;
  if (resume && fs::exists(out / "last.ckpt")) {
    model = load_checkpoint(out / "last.ckpt");
    if (!(model->config() == cfg.model)) {
      throw ConfigError("checkpoint in " + out.string() + " has a different model config");
    }
  } else {
    model = std::make_unique<AggNet>(cfg.model, cfg.train.seed);
  }
  std::printf("train: %zu samples, %zu validation, %zu trainable values\n", train.size(),
              val.size(), model->params().trainable_count());
  Trainer trainer(*model, cfg.train, std::move(train), std::move(val));
  if (resume && fs::exists(out / "state.bin")) trainer.load_state(out / "state.bin");
  trainer.run(out, &std::cout);
  return kOk;
}

int cmd_eval(const fs::path& ckpt, const fs::path& pred_dir, const fs::path& data,
             const std::string& split, int batch) {
  const std::vector<RgbdSample> samples = load_or_fail(data, split);
  MetricReport report;
  if (!ckpt.empty()) {
    auto model = load_checkpoint(ckpt);
    check_dims(model->config(), samples);
    report = evaluate_model(*model, samples, batch).metrics;
  } else {
    // Precomputed predictions named {index:05}_pred.pgm, in manifest order.
    MetricAccumulator acc;
    std::size_t k = 0;
    for (const auto& e : Dataset::read_manifest(data)) {
      if (e.split != split) continue;
      char name[32];
      std::snprintf(name, sizeof name, "%05d_pred.pgm", e.index);
      const DepthMap pred = netpbm::read_depth(pred_dir / name);
      const DepthMap& gt = samples[k++].gt_depth;
      if (pred.height != gt.height || pred.width != gt.width) {
        throw IoError(std::string(name) + " does not match the ground truth dims");
      }
      std::vector<Real> p(pred.meters.begin(), pred.meters.end());
      std::vector<Real> g(gt.meters.begin(), gt.meters.end());
      acc.add(p, g);
    }
    report = acc.report();
  }
  std::printf("%s\n", report.to_line().c_str());
  return kOk;
}

int cmd_infer(const fs::path& ckpt, const fs::path& rgb_path, const fs::path& raw_path,
              const fs::path& out, const fs::path& prefill_out) {
  auto model = load_checkpoint(ckpt);
  const RgbImage rgb = netpbm::read_rgb(rgb_path);
  const DepthImage raw = DepthImage::from_raw(netpbm::read_depth(raw_path));
  if (raw.height() != model->config().height || raw.width() != model->config().width) {
    throw IoError("input dims do not match the checkpoint's " +
                  std::to_string(model->config().height) + "x" +
                  std::to_string(model->config().width));
  }
  const DepthMap pred = model->predict(raw, rgb);
  for (float v : pred.meters) {
    if (!std::isfinite(v)) throw NumericalError("prediction contains non-finite values");
  }
  netpbm::write_depth(out, pred);
  if (!prefill_out.empty()) {
    if (!model->scheme().prefill) throw ConfigError("this scheme has no pre-filling stage");
    netpbm::write_depth(prefill_out, model->prefill(raw, rgb).values);
  }
  std::printf("wrote %s\n", out.string().c_str());
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed, double tolerance) {
  const auto start = std::chrono::steady_clock::now();
  bool ok = true;
  for (const auto& b : run_block_gradchecks(seed, tolerance)) {
    std::printf("%-22s max_rel_err=%.3e checked=%zu skipped=%zu %s\n", b.block.c_str(),
                b.max_rel_error, b.checked, b.skipped, b.passed ? "ok" : "FAIL");
    ok = ok && b.passed;
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("gradcheck %s in %.1fs\n", ok ? "passed" : "failed", secs);
  return ok ? kOk : kNumerical;
}

std::vector<Scheme> parse_schemes(const std::string& text) {
  std::vector<Scheme> out;
  for (char c : text) {
    if (c == ',' || c == ' ') continue;
    out.push_back(parse_scheme(std::string(1, c)));
  }
  if (out.empty()) throw ConfigError("--schemes lists no scheme");
  return out;
}

int cmd_ablate(const RunConfig& cfg, const std::string& schemes,
               const std::vector<std::uint64_t>& seeds, const fs::path& data, int count,
               const fs::path& out) {
  std::vector<RgbdSample> train, test;
  if (!data.empty()) {
    train = load_or_fail(data, "train");
    test = load_or_fail(data, "test");
  } else {
    train = synthesize_in_memory(cfg.scene, "train", count);
    test = synthesize_in_memory(cfg.scene, "test", std::max(8, count / 4));
  }
  check_dims(cfg.model, train);
  check_dims(cfg.model, test);
  const auto rows =
      run_ablation(parse_schemes(schemes), seeds, cfg.model, cfg.train, train, test, &std::cout);
  const std::string table = format_ablation_table(rows);
  std::cout << table;
  if (!out.empty()) {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::ofstream f(out);
    if (!(f << table)) throw IoError("cannot write " + out.string());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Depth completion with attention-guided gated convolutions"};
  app.require_subcommand(1);

  ConfigFlags synth_cfg, train_cfg, ablate_cfg;
  std::string out, data, split = "train", ckpt, pred, rgb, raw, prefill_out, schemes = "ABCDEFG";
  int count = 1, ablate_count = 64, epochs = -1, batch = 8;
  std::uint64_t seed = 0;
  bool seed_given = false, resume = false;
  double tolerance = 1e-4;
  std::vector<std::uint64_t> seeds{1, 2, 3};

  auto* synth = app.add_subcommand("synth", "generate a synthetic RGB-D dataset");
  synth_cfg.attach(synth);
  synth->add_option("--out", out, "dataset root")->required();
  synth->add_option("--count", count, "samples to generate")->check(CLI::NonNegativeNumber);
  synth->add_option("--split", split, "split name");

  auto* train = app.add_subcommand("train", "train a model on a dataset");
  train_cfg.attach(train);
  train->add_option("--data", data, "dataset root")->required();
  train->add_option("--out", out, "output directory")->required();
  train->add_option("--epochs", epochs, "override train.epochs");
  auto* seed_opt = train->add_option("--seed", seed, "override train.seed");
  train->add_flag("--resume", resume, "continue from last.ckpt and state.bin in --out");

  auto* eval = app.add_subcommand("eval", "report metrics on a dataset split");
  auto* ckpt_opt = eval->add_option("--ckpt", ckpt, "checkpoint")->check(CLI::ExistingFile);
  auto* pred_opt =
      eval->add_option("--pred", pred, "directory of {index}_pred.pgm files")->check(CLI::ExistingDirectory);
  ckpt_opt->excludes(pred_opt);
  eval->add_option("--data", data, "dataset root")->required();
  eval->add_option("--split", split, "split name");
  eval->add_option("--batch", batch, "evaluation batch size")->check(CLI::PositiveNumber);

  auto* infer = app.add_subcommand("infer", "complete one raw depth image");
  infer->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--rgb", rgb, "8-bit PPM")->required()->check(CLI::ExistingFile);
  infer->add_option("--raw", raw, "16-bit PGM in millimeters, 0 = invalid")
      ->required()
      ->check(CLI::ExistingFile);
  infer->add_option("--out", out, "completed depth PGM")->required();
  infer->add_option("--prefill-out", prefill_out, "also write the pre-filled depth");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every block");
  grad->add_option("--seed", seed, "random seed");
  grad->add_option("--tolerance", tolerance, "max relative error");

  auto* ablate = app.add_subcommand("ablate", "train schemes over seeds, print a median table");
  ablate_cfg.attach(ablate);
  ablate->add_option("--schemes", schemes, "scheme letters, e.g. AG or A,B,C");
  ablate->add_option("--seeds", seeds, "seeds")->delimiter(',');
  ablate->add_option("--data", data, "dataset root with train and test splits");
  ablate->add_option("--count", ablate_count, "in-memory corpus size when --data is absent")
      ->check(CLI::PositiveNumber);
  ablate->add_option("--out", out, "table output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }
  seed_given = seed_opt->count() > 0;

  try {
    if (*synth) return cmd_synth(synth_cfg.resolve(), out, count, split);
    if (*train) {
      std::vector<std::string> extra;
      if (epochs >= 0) extra.push_back("train.epochs=" + std::to_string(epochs));
      if (seed_given) extra.push_back("train.seed=" + std::to_string(seed));
      return cmd_train(train_cfg.resolve(extra), data, out, resume);
    }
    if (*eval) {
      if (ckpt.empty() == pred.empty()) throw ConfigError("eval needs exactly one of --ckpt, --pred");
      return cmd_eval(ckpt, pred, data, split, batch);
    }
    if (*infer) return cmd_infer(ckpt, rgb, raw, out, prefill_out);
    if (*grad) return cmd_gradcheck(seed == 0 ? 1 : seed, tolerance);
    if (*ablate) return cmd_ablate(ablate_cfg.resolve(), schemes, seeds, data, ablate_count, out);
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kNumerical;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kUsage;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return kData;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kData;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "shape error: %s\n", e.what());
    return kData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  }
  return kUsage;
}
