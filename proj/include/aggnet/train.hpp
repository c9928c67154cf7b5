#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "aggnet/losses.hpp"
#include "aggnet/model.hpp"
#include "aggnet/run_config.hpp"

AGGNET_BEGIN_NAMESPACE

/// Reduce-on-plateau learning rate rule. An epoch improves when its loss is
/// below best * (1 - threshold); after `patience` epochs without improvement
/// the rate is multiplied by `factor` (never below `min_lr`) and the counter
/// restarts.
class PlateauSchedule {
 public:
  PlateauSchedule(double factor = 0.3, int patience = 5, double min_lr = 1e-4,
                  double threshold = 1e-4);

  /// Feeds one epoch's validation loss and returns the rate for the next epoch.
  double update(double lr, double loss);

  double best() const { return best_; }
  int bad_epochs() const { return bad_epochs_; }
  void restore(double best, int bad_epochs) {
    best_ = best;
    bad_epochs_ = bad_epochs;
  }

 private:
  double factor_;
  int patience_;
  double min_lr_;
  double threshold_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
};

/// Momentum buffers, one per trainable tensor in store order.
using Velocity = std::vector<std::vector<Real>>;

/// v <- momentum * v + grad + wd * param; param <- param - lr * v; grads are
/// cleared afterwards. Batch-norm gamma/beta get no weight decay. Throws
/// ContractError if a trainable tensor has no gradient.
void sgd_step(ParamStore& store, Velocity& velocity, double lr, double momentum,
              double weight_decay);

struct TrainState {
  int step = 0;
  int epoch = 0;           // completed epochs
  int batch_in_epoch = 0;  // batches already consumed in the current epoch
  double lr = 1e-2;
  double plateau_best = std::numeric_limits<double>::infinity();
  int plateau_bad_epochs = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 1;
  Velocity velocity;
};

/// JSON header line + AGGN blob of momentum buffers (named after the params).
std::string encode_train_state(const TrainState& state, const ParamStore& store);
TrainState decode_train_state(std::string_view bytes, const ParamStore& store);

/// Mean loss and pooled metrics of the model over a sample set (eval mode).
struct Evaluation {
  double loss = 0;
  MetricReport metrics;
};
Evaluation evaluate_model(const AggNet& model, const std::vector<RgbdSample>& samples, int batch);

/// Runs the optimisation loop over in-memory samples. With an output
/// directory it writes train.log (append-only), best.ckpt, last.ckpt and
/// state.bin after every epoch.
class Trainer {
 public:
  Trainer(AggNet& model, TrainOptions options, std::vector<RgbdSample> train,
          std::vector<RgbdSample> validation);

  /// Runs until options.epochs epochs or options.max_steps steps are done.
  /// A max_steps stop inside an epoch saves last.ckpt and state.bin without
  /// closing the epoch.
  void run(const std::filesystem::path& out_dir = {}, std::ostream* log = nullptr);

  /// One optimisation step on the next batch of the current epoch. Returns
  /// the batch loss. Throws NumericalError on a non-finite loss.
  double step();

  /// Ends the current epoch: validates, updates the schedule, logs.
  std::string finish_epoch(const std::filesystem::path& out_dir = {});

  bool epoch_done() const;
  bool budget_done() const;
  TrainState& state() { return state_; }
  const TrainState& state() const { return state_; }

  void save_state(const std::filesystem::path& path) const;
  void load_state(const std::filesystem::path& path);

 private:
  std::vector<std::size_t> epoch_order(int epoch) const;
  const RgbdSample& prepare(std::size_t index, int slot, std::vector<RgbdSample>& scratch) const;

  AggNet& model_;
  TrainOptions options_;
  std::vector<RgbdSample> train_;
  std::vector<RgbdSample> validation_;
  PlateauSchedule schedule_;
  TrainState state_;
  double epoch_loss_sum_ = 0;
  int epoch_batches_ = 0;
};

/// Splits samples by seed partition into (train, validation).
void split_validation(const std::vector<RgbdSample>& all, std::vector<RgbdSample>& train,
                      std::vector<RgbdSample>& validation);

struct AblationRow {
  Scheme scheme = Scheme::G;
  MetricReport median;
  std::vector<MetricReport> per_seed;
};

/// Trains every scheme once per seed with identical options and reports the
/// per-scheme median of the test metrics.
std::vector<AblationRow> run_ablation(const std::vector<Scheme>& schemes,
                                      const std::vector<std::uint64_t>& seeds,
                                      const ModelConfig& base, const TrainOptions& options,
                                      const std::vector<RgbdSample>& train,
                                      const std::vector<RgbdSample>& test,
                                      std::ostream* log = nullptr);

/// Text table: scheme, module check-marks, RMSE, Rel, d1.10.
std::string format_ablation_table(const std::vector<AblationRow>& rows);

AGGNET_END_NAMESPACE
