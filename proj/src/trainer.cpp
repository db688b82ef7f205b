#include "asl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "asl/csv.hpp"
#include "asl/error.hpp"

namespace asl {

double TrainConfig::lr() const {
  if (learning_rate) return *learning_rate;
  return optimizer == OptimizerKind::kAdam ? 0.01 : 0.001;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (!(lr() > 0) || !std::isfinite(lr()))
    throw ConfigError("train: learning rate must be > 0, got " + std::to_string(lr()));
  if (num_classes < 1) throw ConfigError("train: num_classes must be >= 1");
  if (!(dropout_rate >= 0 && dropout_rate < 1))
    throw ConfigError("train: dropout rate must be in [0, 1)");
}

namespace {

std::size_t count_correct(const Tensor& probs, std::span<const std::size_t> labels) {
  const auto pred = argmax_rows(probs);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  return hits;
}

ModelConfig model_config_for(const TrainConfig& cfg, const Dataset& ds) {
  const Shape& s = ds.samples.front().image.shape();
  if (s.size() != 3) throw ConfigError("train: images must be [H, W, C]");
  ModelConfig m;
  m.input_h = s[0];
  m.input_w = s[1];
  m.input_c = s[2];
  m.num_classes = cfg.num_classes;
  m.dropout_rate = cfg.dropout_rate;
  m.seed = cfg.seed;
  m.validate();
  return m;
}

std::string checkpoint_name(std::size_t epoch) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "checkpoint_epoch%04zu.aslw", epoch);
  return buf;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& ds, std::span<const std::size_t> train_idx,
                  std::span<const std::size_t> val_idx) {
  cfg.validate();
  if (train_idx.empty()) throw ConfigError("train: training set is empty");
  if (cfg.batch_size > train_idx.size())
    throw ConfigError("train: batch size " + std::to_string(cfg.batch_size) +
                      " exceeds the training set (" + std::to_string(train_idx.size()) + ")");
  if (ds.num_classes() != cfg.num_classes)
    throw ConfigError("train: data has " + std::to_string(ds.num_classes()) +
                      " classes but num_classes is " + std::to_string(cfg.num_classes));
  for (std::size_t i : train_idx)
    if (i >= ds.size()) throw ConfigError("train: sample index out of range");
  for (std::size_t i : val_idx)
    if (i >= ds.size()) throw ConfigError("train: sample index out of range");

  Model<float> model(model_config_for(cfg, ds));
  for (const Sample& s : ds.samples)
    if (s.image.shape() != model.config().input_shape())
      throw ConfigError("train: sample " + s.source_path + " has shape " +
                        shape_string(s.image.shape()));

  Optimizer<float> opt(cfg.optimizer, cfg.lr());
  const Rng root(cfg.seed);
  const Rng shuffle_base = root.fork("shuffle");
  const Rng dropout_base = root.fork("dropout");
  if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);

  std::vector<EpochRecord> history;
  std::vector<std::size_t> order(train_idx.begin(), train_idx.end());
  std::vector<std::size_t> labels;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::copy(train_idx.begin(), train_idx.end(), order.begin());
    Rng shuffle_rng = shuffle_base.fork(static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    Rng dropout_rng = dropout_base.fork(static_cast<std::uint64_t>(epoch));

    double loss_sum = 0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      if (cfg.drop_last && len < cfg.batch_size) break;
      const auto idx = std::span<const std::size_t>(order).subspan(start, len);
      const Tensor x = make_batch(ds, idx, &labels);
      const Tensor probs = model.forward(x, Mode::kTrain, dropout_rng);
      const auto lg = crossentropy_from_logits(model.logits(), one_hot<float>(labels, cfg.num_classes));
      const auto params = model.backward(lg.grad_logits);
      opt.step(params);
      loss_sum += lg.loss * static_cast<double>(len);
      correct += count_correct(probs, labels);
      seen += len;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
    if (!val_idx.empty()) {
      const EvalResult ev = evaluate(model, ds, val_idx, cfg.batch_size);
      rec.val_loss = ev.loss;
      rec.val_acc = ev.metrics.accuracy;
    }
    if (cfg.record_wall_time)
      rec.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.push_back(rec);

    if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && !cfg.out_dir.empty())
      save_weights(model, cfg.out_dir / checkpoint_name(epoch));
    if (cfg.on_epoch && !cfg.on_epoch(rec)) break;
  }

  if (!cfg.out_dir.empty()) {
    save_weights(model, cfg.out_dir / "model.aslw");
    write_history_csv(history, cfg.out_dir / "history.csv");
  }
  return {std::move(model), std::move(history)};
}

std::vector<std::size_t> argmax_rows(const Tensor& probs) {
  if (probs.rank() != 2) throw ShapeError("argmax: expected [N, C], got " + shape_string(probs.shape()));
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = probs.data() + i * c;
    out[i] = static_cast<std::size_t>(std::max_element(row, row + c) - row);
  }
  return out;
}

EvalResult evaluate(Model<float>& model, const Dataset& ds, std::span<const std::size_t> indices,
                    std::size_t batch_size) {
  if (indices.empty()) throw InputError("evaluate: dataset is empty");
  if (batch_size < 1) throw ConfigError("evaluate: batch size must be >= 1");
  const std::size_t classes = model.config().num_classes;
  if (ds.num_classes() != classes)
    throw ConfigError("evaluate: data has " + std::to_string(ds.num_classes()) +
                      " classes but the model has " + std::to_string(classes));
  EvalResult r{0.0, ConfusionMatrix(ds.class_names), {}};
  std::vector<std::size_t> labels;
  double loss_sum = 0;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t len = std::min(batch_size, indices.size() - start);
    const Tensor x = make_batch(ds, indices.subspan(start, len), &labels);
    const Tensor probs = model.predict(x);
    const auto lg = crossentropy_from_logits(model.logits(), one_hot<float>(labels, classes));
    loss_sum += lg.loss * static_cast<double>(len);
    const auto pred = argmax_rows(probs);
    for (std::size_t i = 0; i < len; ++i) r.confusion.update(labels[i], pred[i]);
  }
  r.loss = loss_sum / static_cast<double>(indices.size());
  r.metrics = compute_metrics(r.confusion);
  return r;
}

EvalResult evaluate(Model<float>& model, const Dataset& ds, std::size_t batch_size) {
  std::vector<std::size_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return evaluate(model, ds, all, batch_size);
}

std::vector<Prediction> predict_top_k(Model<float>& model, const Tensor& image, std::size_t top_k,
                                      const std::vector<std::string>& class_names) {
  const std::size_t classes = model.config().num_classes;
  if (top_k < 1 || top_k > classes)
    throw ParameterError("predict: top_k must be in [1, " + std::to_string(classes) + "], got " +
                         std::to_string(top_k));
  if (!class_names.empty() && class_names.size() != classes)
    throw ConfigError("predict: " + std::to_string(class_names.size()) +
                      " class names for a " + std::to_string(classes) + "-class model");
  if (image.shape() != model.config().input_shape())
    throw ShapeError("predict: image shape " + shape_string(image.shape()) + " does not match " +
                     shape_string(model.config().input_shape()));
  Shape batch_shape{1};
  batch_shape.insert(batch_shape.end(), image.shape().begin(), image.shape().end());
  const Tensor probs = model.predict(image.reshaped(batch_shape));

  std::vector<std::size_t> order(classes);
  for (std::size_t i = 0; i < classes; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  std::vector<Prediction> out;
  for (std::size_t i = 0; i < top_k; ++i) {
    const std::size_t c = order[i];
    out.push_back({c, class_names.empty() ? std::to_string(c) : class_names[c], probs[c]});
  }
  return out;
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << "epoch,train_loss,train_acc,val_loss,val_acc,seconds\n";
  auto opt = [](const std::optional<double>& v) { return v ? csv::format_number(*v) : std::string(); };
  for (const auto& r : history)
    out << r.epoch << ',' << csv::format_number(r.train_loss) << ','
        << csv::format_number(r.train_acc) << ',' << opt(r.val_loss) << ',' << opt(r.val_acc)
        << ',' << csv::format_number(r.seconds) << '\n';
}

}  // namespace asl
