#include "vessel/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>

#include "vessel/augment.hpp"
#include "vessel/errors.hpp"
#include "vessel/rng.hpp"

namespace vessel {

namespace {

// Runs body(i) for i in [0, n) across OpenMP threads and rethrows the first
// exception on the calling thread.
template <class F>
void parallel_for_each(std::size_t n, F&& body) {
  std::exception_ptr failure;
  std::mutex lock;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> g(lock);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

using Snapshot = std::vector<Tensor>;

Snapshot snapshot(const ModelHandle& model) {
  Snapshot out;
  for (const auto& [name, t] : model_tensors(model)) out.push_back(*t);
  return out;
}

void restore(const ModelHandle& model, const Snapshot& snap) {
  std::size_t i = 0;
  for (const auto& [name, t] : model_tensors(model)) {
    Tensor* dst = const_cast<Tensor*>(t);
    std::copy(snap[i].values().begin(), snap[i].values().end(), dst->values().begin());
    ++i;
  }
}

bool all_finite(std::span<const float> v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

void remove_checkpoint(const fs::path& path) {
  std::error_code ec;
  fs::remove(path, ec);
  fs::remove(fs::path(path.string() + ".json"), ec);
}

struct ValidationResult {
  double loss = 0.0;
  double f1 = 0.0;
};

ValidationResult run_validation(const ModelHandle& model, std::span<const NetworkInput> set,
                                const ExperimentConfig& config) {
  const int channels = model.spec().in_channels;
  ConfusionCounts pooled;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < set.size(); start += config.batch_size) {
    const std::size_t n = std::min<std::size_t>(config.batch_size, set.size() - start);
    const auto items = set.subspan(start, n);
    const Tensor x = to_model_batch(items, channels);
    const Tensor y = mask_batch(items);
    const Tensor p = forward(model, x);
    loss_sum += composite_loss(p, y, config.loss_config(model.spec().architecture)).total * static_cast<double>(n);
    std::vector<std::uint8_t> pred(p.numel());
    std::transform(p.values().begin(), p.values().end(), pred.begin(),
                   [&](float v) -> std::uint8_t { return v >= config.threshold ? 1 : 0; });
    const std::size_t plane = y.shape().plane();
    for (std::size_t k = 0; k < n; ++k) {
      const auto* fov = config.use_fov && items[k].fov ? &items[k].fov->data : nullptr;
      pooled += confusion_counts(std::span(pred).subspan(k * plane, plane), items[k].mask.data,
                                 fov ? std::span<const std::uint8_t>(*fov) : std::span<const std::uint8_t>{});
    }
  }
  return {loss_sum / static_cast<double>(set.size()), f1(pooled)};
}

}  // namespace

PreparedData prepare_training_data(const ExperimentConfig& config, std::span<const ManifestEntry> train_entries) {
  if (train_entries.empty()) throw DataEmptyError("the training split is empty");
  std::vector<NetworkInput> originals(train_entries.size());
  parallel_for_each(train_entries.size(), [&](std::size_t i) {
    originals[i] = standardize(load_sample(train_entries[i]), config.preprocess);
  });
  return prepare_training_data(config, originals);
}

PreparedData prepare_training_data(const ExperimentConfig& config, std::span<const NetworkInput> originals) {
  const std::size_t n = originals.size();
  if (n == 0) throw DataEmptyError("the training split is empty");
  std::size_t n_val = 0;
  if (config.val_fraction > 0 && n > 1) {
    n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(config.val_fraction * n)));
    n_val = std::min(n_val, n - 1);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(config.seed, fnv1a("validation")));
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  std::vector<bool> held(n, false);
  for (std::size_t i = 0; i < n_val; ++i) held[order[i]] = true;

  PreparedData out;
  std::vector<NetworkInput> train_originals;
  for (std::size_t i = 0; i < n; ++i) (held[i] ? out.val : train_originals).push_back(originals[i]);
  out.train = expand_training_set(train_originals, config.augment);
  return out;
}

double train_step(const ModelHandle& model, Optimizer& optimizer, const Tensor& batch,
                  const Tensor& target, const LossConfig& loss, const std::function<void()>& before_update) {
  check_input_shape(model, batch.shape());
  SegmentationNet& net = model.net();
  net.train(true);
  const ag::Var out = net.forward(ag::constant(batch));
  const LossValue value = composite_loss(out->value, target, loss);
  if (!std::isfinite(value.total)) return std::nan("");
  optimizer.zero_grad();
  ag::backward(out, value.grad);
  for (const ag::Var& p : net.parameters()) {
    if (!all_finite(p->grad_buffer().values())) return std::nan("");
  }
  if (before_update) before_update();
  optimizer.step();
  return value.total;
}

TrainResult train(const ExperimentConfig& config, const CombinedDataset& data, const TrainOptions& options) {
  validate(config);
  return train(config, prepare_training_data(config, data.train), options);
}

TrainResult train(const ExperimentConfig& config, const PreparedData& data, const TrainOptions& options) {
  validate(config);
  if (data.train.empty()) throw DataEmptyError("no training inputs");
  const ModelSpec spec = config.model_spec();
  ModelHandle model = build_model(spec, config.seed);
  const int channels = spec.in_channels;
  const LossConfig loss_config = config.loss_config(spec.architecture);
  check_input_shape(model, Shape4{1, channels, data.train.front().size(), data.train.front().size()});
  Optimizer optimizer(model.net().parameters(), config.optimizer);

  const bool write_files = options.write_history || options.write_checkpoint;
  if (write_files) fs::create_directories(config.output_dir);
  const fs::path history_path = config.output_dir / "history.jsonl";
  std::ofstream history_file;
  if (options.write_history) {
    history_file.open(history_path, std::ios::trunc);
    if (!history_file) throw IOError("cannot write " + history_path.string());
  }
  const std::string hash = config_hash(config);

  TrainingHistory history;
  Snapshot last_finite = snapshot(model);
  Snapshot best_state;
  double best_loss = INFINITY;
  fs::path best_path;

  auto diverge = [&](int epoch, const std::string& what) {
    restore(model, last_finite);
    std::string where = "no checkpoint written";
    if (write_files) {
      const fs::path path = config.output_dir / checkpoint_name(spec.architecture, config.seed, epoch);
      save_checkpoint(model, history, path, hash);
      where = "last finite state saved to " + path.string();
    }
    throw DivergenceError(what + " at epoch " + std::to_string(epoch) + "; " + where);
  };

  std::vector<std::size_t> order(data.train.size());
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch) + 1));
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

    double loss_sum = 0.0;
    std::vector<NetworkInput> batch;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min<std::size_t>(config.batch_size, order.size() - start);
      batch.clear();
      for (std::size_t k = 0; k < n; ++k) batch.push_back(data.train[order[start + k]]);
      const double loss = train_step(model, optimizer, to_model_batch(batch, channels), mask_batch(batch),
                                     loss_config, [&] { last_finite = snapshot(model); });
      if (!std::isfinite(loss)) diverge(epoch, "training loss or gradient became non-finite");
      loss_sum += loss * static_cast<double>(n);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    model.net().train(false);
    const ValidationResult val =
        run_validation(model, data.val.empty() ? std::span(data.train) : std::span(data.val), config);
    if (!std::isfinite(val.loss)) diverge(epoch, "validation loss became non-finite");
    rec.val_loss = val.loss;
    rec.val_f1 = val.f1;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.epochs.push_back(rec);
    if (options.write_history) {
      history_file << to_json(rec).dump() << '\n';
      history_file.flush();
    }

    if (rec.val_loss < best_loss) {
      best_loss = rec.val_loss;
      history.best_epoch = epoch;
      best_state = snapshot(model);
      if (options.write_checkpoint) {
        if (!best_path.empty()) remove_checkpoint(best_path);
        best_path = config.output_dir / checkpoint_name(spec.architecture, config.seed, epoch);
        save_checkpoint(model, history, best_path, hash);
      }
    }
    if (options.on_epoch) options.on_epoch(rec);
    if (epoch - history.best_epoch >= config.early_stop_patience) break;
  }

  restore(model, best_state);
  model.net().train(false);
  if (options.write_checkpoint) save_checkpoint(model, history, best_path, hash);
  return {std::move(model), std::move(history), best_path};
}

EvalOptions eval_options(const ExperimentConfig& config) {
  EvalOptions o;
  o.preprocess = config.preprocess;
  o.threshold = config.threshold;
  o.aggregation = config.aggregation;
  o.use_fov = config.use_fov;
  o.keep_predictions = config.montage_columns;
  return o;
}

std::vector<float> predict_probability(const ModelHandle& model, const Sample& sample,
                                       const PreprocessConfig& preprocess) {
  const NetworkInput input = standardize(sample, preprocess);
  const Tensor p = forward(model, to_model_input(input, model.spec().in_channels));
  return resize_to_original(p, sample.image.width, sample.image.height);
}

namespace {

template <class Load>
Evaluation evaluate_impl(const ModelHandle& model, std::size_t count, Load&& load, const EvalOptions& options) {
  if (count == 0) throw EmptyList("empty test set");
  if (!(options.threshold > 0 && options.threshold < 1)) throw ConfigError("threshold must lie in (0, 1)");
  model.net().train(false);
  Evaluation out;
  std::vector<ConfusionCounts> counts;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < count; ++i) {
    const Sample s = load(i);
    const auto prob = predict_probability(model, s, options.preprocess);
    const Image8 pred = threshold_map(prob, s.image.width, s.image.height, options.threshold);
    std::span<const std::uint8_t> fov;
    if (options.use_fov && s.fov_mask) fov = s.fov_mask->data;
    counts.push_back(confusion_counts(pred.data, s.vessel_mask.data, fov));
    ids.push_back(s.sample_id);
    if (static_cast<int>(i) < options.keep_predictions) out.predictions.push_back(pred);
  }
  out.report = aggregate(counts, options.aggregation, ids);
  return out;
}

}  // namespace

Evaluation evaluate(const ModelHandle& model, std::span<const Sample> test_set, const EvalOptions& options) {
  return evaluate_impl(model, test_set.size(), [&](std::size_t i) { return test_set[i]; }, options);
}

Evaluation evaluate(const ModelHandle& model, std::span<const ManifestEntry> test_set, const EvalOptions& options) {
  return evaluate_impl(model, test_set.size(), [&](std::size_t i) { return load_sample(test_set[i]); }, options);
}

CombinedDataset load_combined_dataset(const ExperimentConfig& config) {
  if (config.data.roots.empty()) {
    throw DataEmptyError("no dataset roots given (use --drive-root, --stare-root, --chase-root, --hrf-root)");
  }
  std::vector<DatasetManifest> manifests;
  for (const auto& [id, root] : config.data.roots) manifests.push_back(discover_dataset(root, id));
  if (!config.data.split_file.empty()) return build_combined_split(manifests, config.data.split_file);

  // Default: the shipped combined split, limited to the datasets supplied.
  std::vector<SplitRecord> records;
  for (SplitRecord& r : read_split_file(default_split_file())) {
    if (config.data.roots.count(r.dataset)) records.push_back(std::move(r));
  }
  return build_combined_split(manifests, records, default_split_file().string());
}

}  // namespace vessel
