#include "aggnet/train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include "json.hpp"

#include "aggnet/aggn_format.hpp"
#include "aggnet/checkpoint.hpp"
#include "aggnet/dataset.hpp"
#include "aggnet/errors.hpp"
#include "aggnet/file_io.hpp"
#include "aggnet/rng.hpp"

AGGNET_BEGIN_NAMESPACE

PlateauSchedule::PlateauSchedule(double factor, int patience, double min_lr, double threshold)
    : factor_(factor), patience_(patience), min_lr_(min_lr), threshold_(threshold) {
  if (!(factor > 0 && factor <= 1) || patience < 1 || !(min_lr >= 0) || !(threshold >= 0)) {
    throw ConfigError("invalid plateau schedule parameters");
  }
}

double PlateauSchedule::update(double lr, double loss) {
  if (loss < best_ * (1.0 - threshold_)) {
    best_ = loss;
    bad_epochs_ = 0;
    return lr;
  }
  if (++bad_epochs_ >= patience_) {
    bad_epochs_ = 0;
    return std::max(min_lr_, factor_ * lr);
  }
  return lr;
}

void sgd_step(ParamStore& store, Velocity& velocity, double lr, double momentum,
              double weight_decay) {
  std::size_t slot = 0;
  const Real mu = static_cast<Real>(momentum);
  const Real step = static_cast<Real>(lr);
  for (Param& p : store.entries()) {
    if (!p.trainable()) continue;
    if (!p.value.has_grad()) {
      throw ContractError("sgd_step: parameter '" + p.name + "' has no gradient");
    }
    if (velocity.size() <= slot) velocity.resize(slot + 1);
    auto& v = velocity[slot++];
    auto w = p.value.data();
    auto g = p.value.grad();
    if (v.empty()) v.assign(w.size(), Real(0));
    if (v.size() != w.size()) {
      throw ContractError("sgd_step: momentum buffer of '" + p.name + "' has the wrong size");
    }
    const Real wd = p.decays() ? static_cast<Real>(weight_decay) : Real(0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = mu * v[i] + g[i] + wd * w[i];
      w[i] -= step * v[i];
    }
    p.value.clear_grad();
  }
}

namespace {

double json_double(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

std::string encode_train_state(const TrainState& state, const ParamStore& store) {
  nlohmann::ordered_json j;
  j["step"] = state.step;
  j["epoch"] = state.epoch;
  j["batch_in_epoch"] = state.batch_in_epoch;
  j["lr"] = state.lr;
  j["plateau_best"] = finite_or_null(state.plateau_best);
  j["plateau_bad_epochs"] = state.plateau_bad_epochs;
  j["best_val_loss"] = finite_or_null(state.best_val_loss);
  j["seed"] = state.seed;
  std::vector<aggn::Entry> entries;
  std::size_t slot = 0;
  for (const Param& p : store.entries()) {
    if (!p.trainable()) continue;
    if (slot >= state.velocity.size()) break;
    const auto& v = state.velocity[slot++];
    aggn::Entry e;
    e.name = p.name;
    e.dims = {static_cast<std::uint32_t>(v.size())};
    e.values.assign(v.begin(), v.end());
    entries.push_back(std::move(e));
  }
  return j.dump() + "\n" + aggn::encode(entries);
}

TrainState decode_train_state(std::string_view bytes, const ParamStore& store) {
  const auto newline = bytes.find('\n');
  if (newline == std::string_view::npos) throw ParseError("train state has no header line", 0);
  TrainState s;
  try {
    const auto j = nlohmann::json::parse(bytes.substr(0, newline));
    s.step = j.at("step").get<int>();
    s.epoch = j.at("epoch").get<int>();
    s.batch_in_epoch = j.at("batch_in_epoch").get<int>();
    s.lr = j.at("lr").get<double>();
    s.plateau_best = json_double(j.at("plateau_best"));
    s.plateau_bad_epochs = j.at("plateau_bad_epochs").get<int>();
    s.best_val_loss = json_double(j.at("best_val_loss"));
    s.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("train state header: ") + e.what(), e.byte);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train state header: ") + e.what());
  }
  std::vector<aggn::Entry> entries;
  try {
    entries = aggn::decode(bytes.substr(newline + 1));
  } catch (const ParseError& e) {
    throw ParseError("train state body: " + e.detail(), newline + 1 + e.offset());
  }
  std::unordered_map<std::string, const aggn::Entry*> by_name;
  for (const auto& e : entries) by_name.emplace(e.name, &e);
  for (const Param& p : store.entries()) {
    if (!p.trainable()) continue;
    auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      if (!entries.empty()) throw ConfigError("train state lacks momentum for '" + p.name + "'");
      continue;  // saved before the first step
    }
    if (it->second->values.size() != p.value.size()) {
      throw ShapeError("momentum buffer of '" + p.name + "' has the wrong size");
    }
    s.velocity.emplace_back(it->second->values.begin(), it->second->values.end());
  }
  return s;
}

Evaluation evaluate_model(const AggNet& model, const std::vector<RgbdSample>& samples,
                          int batch) {
  if (samples.empty()) throw ConfigError("evaluate_model: no samples");
  if (batch < 1) throw ConfigError("evaluate_model: batch must be >= 1");
  MetricAccumulator acc;
  double loss_sum = 0;
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    std::vector<const RgbdSample*> group;
    for (std::size_t i = start; i < std::min(samples.size(), start + batch); ++i) {
      group.push_back(&samples[i]);
    }
    const Batch b = make_batch(group);
    const Tensor pred = model.forward(b, Mode::Eval);
    loss_sum += static_cast<double>(total_loss(pred, b.gt, model.config().loss).item()) *
                static_cast<double>(group.size());
    acc.add(pred.data(), b.gt.data());
  }
  return {loss_sum / static_cast<double>(samples.size()), acc.report()};
}

void split_validation(const std::vector<RgbdSample>& all, std::vector<RgbdSample>& train,
                      std::vector<RgbdSample>& validation) {
  train.clear();
  validation.clear();
  for (const auto& s : all) {
    (Dataset::is_validation_seed(s.seed) ? validation : train).push_back(s);
  }
}

Trainer::Trainer(AggNet& model, TrainOptions options, std::vector<RgbdSample> train,
                 std::vector<RgbdSample> validation)
    : model_(model),
      options_(options),
      train_(std::move(train)),
      validation_(std::move(validation)),
      schedule_(options.plateau_factor, options.plateau_patience, options.min_lr,
                options.plateau_threshold) {
  options_.validate();
  if (train_.empty()) throw ConfigError("training set is empty");
  state_.lr = options_.lr;
  state_.seed = options_.seed;
}

std::vector<std::size_t> Trainer::epoch_order(int epoch) const {
  std::vector<std::size_t> order(train_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  CounterRng rng(derive_seed(state_.seed, 0xe90c0000ULL + static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  return order;
}

bool Trainer::epoch_done() const {
  const int batches =
      static_cast<int>((train_.size() + options_.batch - 1) / static_cast<std::size_t>(options_.batch));
  return state_.batch_in_epoch >= batches;
}

bool Trainer::budget_done() const {
  if (options_.max_steps > 0 && state_.step >= options_.max_steps) return true;
  return state_.epoch >= options_.epochs;
}

const RgbdSample& Trainer::prepare(std::size_t index, int slot,
                                   std::vector<RgbdSample>& scratch) const {
  const RgbdSample& s = train_[index];
  if (!options_.crop_resize) return s;
  const std::uint64_t seed =
      derive_seed(state_.seed, (static_cast<std::uint64_t>(state_.step) << 16) + slot);
  scratch.push_back(random_crop_resize(s, s.gt_depth.height, s.gt_depth.width,
                                       options_.crop_min_scale, seed));
  return scratch.back();
}

double Trainer::step() {
  const auto order = epoch_order(state_.epoch);
  const std::size_t start = static_cast<std::size_t>(state_.batch_in_epoch) * options_.batch;
  if (start >= order.size()) throw ContractError("step called after the epoch ended");
  std::vector<RgbdSample> scratch;
  scratch.reserve(options_.batch);
  std::vector<const RgbdSample*> group;
  for (std::size_t i = start; i < std::min(order.size(), start + options_.batch); ++i) {
    group.push_back(&prepare(order[i], static_cast<int>(i - start), scratch));
  }
  const Batch b = make_batch(group);

  double loss_value = 0;
  {
    Graph graph;
    const Tensor pred = model_.forward(b, Mode::Train);
    const Tensor loss = total_loss(pred, b.gt, model_.config().loss);
    loss_value = static_cast<double>(loss.item());
    if (!std::isfinite(loss_value)) {
      throw NumericalError("non-finite loss at step " + std::to_string(state_.step) + " (seed " +
                           std::to_string(state_.seed) + ")");
    }
    graph.backward(loss);
  }
  sgd_step(model_.params(), state_.velocity, state_.lr, options_.momentum, options_.weight_decay);
  ++state_.step;
  ++state_.batch_in_epoch;
  epoch_loss_sum_ += loss_value;
  ++epoch_batches_;
  return loss_value;
}

std::string Trainer::finish_epoch(const std::filesystem::path& out_dir) {
  const bool has_val = !validation_.empty();
  const Evaluation eval = evaluate_model(model_, has_val ? validation_ : train_, options_.batch);
  const double train_loss = epoch_batches_ > 0 ? epoch_loss_sum_ / epoch_batches_ : eval.loss;
  const double lr_used = state_.lr;

  schedule_.restore(state_.plateau_best, state_.plateau_bad_epochs);
  state_.lr = schedule_.update(state_.lr, eval.loss);
  state_.plateau_best = schedule_.best();
  state_.plateau_bad_epochs = schedule_.bad_epochs();
  ++state_.epoch;
  state_.batch_in_epoch = 0;
  epoch_loss_sum_ = 0;
  epoch_batches_ = 0;

  char buf[256];
  std::snprintf(buf, sizeof buf, "epoch=%d step=%d lr=%.6g loss=%.6f rmse=%.6f rel=%.6f d110=%.4f",
                state_.epoch, state_.step, lr_used, train_loss, eval.metrics.rmse,
                eval.metrics.rel, eval.metrics.delta[0]);
  const std::string line = buf;

  if (!out_dir.empty()) {
    if (eval.loss < state_.best_val_loss) {
      state_.best_val_loss = eval.loss;
      save_checkpoint(out_dir / "best.ckpt", model_);
    }
    save_checkpoint(out_dir / "last.ckpt", model_);
    save_state(out_dir / "state.bin");
    std::ofstream log(out_dir / "train.log", std::ios::app);
    if (!log) throw IoError("cannot append to " + (out_dir / "train.log").string());
    log << line << "\n";
  } else if (eval.loss < state_.best_val_loss) {
    state_.best_val_loss = eval.loss;
  }
  return line;
}

void Trainer::run(const std::filesystem::path& out_dir, std::ostream* log) {
  if (!out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    // Zero epochs still leaves the initial model behind.
    if (!std::filesystem::exists(out_dir / "last.ckpt")) {
      save_checkpoint(out_dir / "last.ckpt", model_);
      save_checkpoint(out_dir / "best.ckpt", model_);
      save_state(out_dir / "state.bin");
    }
  }
  while (!budget_done()) {
    step();
    if (epoch_done()) {
      const std::string line = finish_epoch(out_dir);
      if (log) *log << line << std::endl;
    } else if (budget_done() && !out_dir.empty()) {
      // Stopped mid-epoch by max_steps: keep the epoch open so a resumed run
      // continues exactly where this one left off.
      save_checkpoint(out_dir / "last.ckpt", model_);
      save_state(out_dir / "state.bin");
    }
  }
}

void Trainer::save_state(const std::filesystem::path& path) const {
  write_file(path, encode_train_state(state_, model_.params()));
}

void Trainer::load_state(const std::filesystem::path& path) {
  state_ = decode_train_state(read_file(path), model_.params());
  epoch_loss_sum_ = 0;
  epoch_batches_ = 0;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<AblationRow> run_ablation(const std::vector<Scheme>& schemes,
                                      const std::vector<std::uint64_t>& seeds,
                                      const ModelConfig& base, const TrainOptions& options,
                                      const std::vector<RgbdSample>& train,
                                      const std::vector<RgbdSample>& test, std::ostream* log) {
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  if (schemes.empty()) throw ConfigError("ablation needs at least one scheme");
  std::vector<AblationRow> rows;
  for (Scheme scheme : schemes) {
    AblationRow row;
    row.scheme = scheme;
    for (std::uint64_t seed : seeds) {
      ModelConfig cfg = base;
      cfg.scheme = scheme;
      AggNet model(cfg, seed);
      TrainOptions opts = options;
      opts.seed = seed;
      Trainer trainer(model, opts, train, {});
      trainer.run();
      const Evaluation eval = evaluate_model(model, test, opts.batch);
      row.per_seed.push_back(eval.metrics);
      if (log) {
        *log << "scheme=" << scheme_letter(scheme) << " seed=" << seed << " "
             << eval.metrics.to_line() << std::endl;
      }
    }
    std::vector<double> rmse, rel;
    std::array<std::vector<double>, 4> delta;
    for (const auto& r : row.per_seed) {
      rmse.push_back(r.rmse);
      rel.push_back(r.rel);
      for (int t = 0; t < 4; ++t) delta[t].push_back(r.delta[t]);
    }
    row.median.rmse = median(rmse);
    row.median.rel = median(rel);
    for (int t = 0; t < 4; ++t) row.median.delta[t] = median(delta[t]);
    row.median.pixels = row.per_seed.front().pixels;
    rows.push_back(row);
  }
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  auto mark = [](bool on) { return on ? "x" : "-"; };
  std::string out = "scheme  fusion  pre  gconv  ag-gconv  ag-sc  rmse      rel       d1.10\n";
  char buf[160];
  for (const auto& row : rows) {
    const SchemeTraits t = traits(row.scheme);
    const char* fusion = t.fusion == Fusion::None     ? "none"
                         : t.fusion == Fusion::Concat ? "concat"
                                                      : "guided";
    std::snprintf(buf, sizeof buf, "%-6c  %-6s  %-3s  %-5s  %-8s  %-5s  %-8.4f  %-8.4f  %.2f\n",
                  scheme_letter(row.scheme), fusion, mark(t.prefill), mark(t.gconv),
                  mark(t.ag_gconv), mark(t.ag_sc), row.median.rmse, row.median.rel,
                  row.median.delta[0]);
    out += buf;
  }
  return out;
}

AGGNET_END_NAMESPACE
