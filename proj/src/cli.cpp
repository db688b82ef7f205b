#include "asl/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>

#include "asl/augment.hpp"
#include "asl/csv.hpp"
#include "asl/dataset.hpp"
#include "asl/error.hpp"
#include "asl/gradcheck.hpp"
#include "asl/image.hpp"
#include "asl/metrics.hpp"
#include "asl/trainer.hpp"

namespace fs = std::filesystem;

namespace asl {

int exit_code_for(const Error& e) noexcept {
  if (dynamic_cast<const IngestionError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const InputError*>(&e) || dynamic_cast<const SplitError*>(&e) ||
      dynamic_cast<const LabelError*>(&e))
    return exit_code::kData;
  return exit_code::kConfig;
}

namespace {

struct GoldenRow {
  const char* layer;
  Shape shape;
  std::size_t params;
};

const std::vector<GoldenRow>& reference_rows() {
  static const std::vector<GoldenRow> rows{
      {"Input layer", {50, 50, 3}, 0},
      {"Conv2D", {48, 48, 32}, 896},
      {"Batch Normalization", {48, 48, 32}, 128},
      {"Conv2D", {46, 46, 64}, 18496},
      {"Conv2D", {44, 44, 128}, 73856},
      {"MaxPooling2D", {22, 22, 128}, 0},
      {"Dropout", {22, 22, 128}, 0},
      {"Batch Normalization", {22, 22, 128}, 512},
      {"Conv2D", {20, 20, 256}, 295168},
      {"MaxPooling2D", {10, 10, 256}, 0},
      {"Flatten", {25600}, 0},
      {"Dense", {64}, 1638464},
      {"Dense", {30}, 1950},
  };
  return rows;
}

LoadOptions load_options(std::size_t size, bool crop) { return {size, size, crop}; }

std::string relative_to(const std::string& path, const fs::path& root) {
  const fs::path rel = fs::path(path).lexically_relative(root);
  return rel.empty() ? path : rel.generic_string();
}

void print_metrics(std::ostream& out, const EvalResult& r) {
  char line[128];
  std::snprintf(line, sizeof(line),
                "loss=%.6f accuracy=%.6f macro_precision=%.6f macro_recall=%.6f macro_f1=%.6f "
                "samples=%llu\n",
                r.loss, r.metrics.accuracy, r.metrics.macro_precision, r.metrics.macro_recall,
                r.metrics.macro_f1, static_cast<unsigned long long>(r.confusion.total()));
  out << line;
}

struct TrainArgs {
  std::string data, out;
  std::size_t epochs = 100, batch = 128, checkpoint_every = 0, size = 50;
  std::string optimizer = "rmsprop";
  std::optional<double> lr;
  std::optional<std::size_t> classes;
  std::uint64_t seed = 0;
  bool augment = false, split_first = false, no_timing = false, drop_last = false, crop = false;
  double fraction = 0.25, noise_sigma = 0.04;
  float fill = 0.0f;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.optimizer = parse_optimizer(a.optimizer);
  cfg.learning_rate = a.lr;
  cfg.seed = a.seed;
  cfg.record_wall_time = !a.no_timing;
  cfg.drop_last = a.drop_last;
  cfg.checkpoint_every = a.checkpoint_every;
  cfg.out_dir = a.out;
  if (a.classes) cfg.num_classes = *a.classes;
  cfg.validate();
  AugmentPlan plan{a.fraction, a.noise_sigma, a.fill, a.seed};
  if (a.augment) plan.validate();

  const fs::path root(a.data);
  Dataset ds = load_directory(root, load_options(a.size, a.crop));
  if (a.classes && *a.classes != ds.num_classes())
    throw ConfigError("--classes " + std::to_string(*a.classes) + " but the data has " +
                      std::to_string(ds.num_classes()) + " classes");
  cfg.num_classes = ds.num_classes();
  out << "loaded " << ds.size() << " images in " << ds.num_classes() << " classes\n";

  Manifest manifest;
  if (a.augment && !a.split_first) {
    ds = augment_dataset(ds, plan);
    manifest = split_dataset(ds, {}, a.seed);
  } else {
    manifest = split_dataset(ds, {}, a.seed);
    if (a.augment) {
      const auto train_idx = manifest.indices(Split::kTrain);
      auto extra = augment_samples(ds, select_for_augmentation(ds, train_idx, plan), plan);
      for (auto& s : extra) {
        manifest.rows.push_back({s.source_path, ds.class_names[s.label], s.label, Split::kTrain, s.origin});
        ds.samples.push_back(std::move(s));
      }
    }
  }
  if (a.augment) out << "augmented to " << ds.size() << " images\n";
  for (auto& row : manifest.rows) row.path = relative_to(row.path, root);

  fs::create_directories(cfg.out_dir);
  write_manifest(manifest, cfg.out_dir / "manifest.csv");
  const auto train_idx = manifest.indices(Split::kTrain);
  const auto val_idx = manifest.indices(Split::kVal);
  const auto test_idx = manifest.indices(Split::kTest);
  out << "split train=" << train_idx.size() << " val=" << val_idx.size()
      << " test=" << test_idx.size() << '\n';

  cfg.on_epoch = [&](const EpochRecord& r) {
    char line[160];
    std::snprintf(line, sizeof(line), "epoch %zu/%zu train_loss=%.5f train_acc=%.4f", r.epoch,
                  cfg.epochs, r.train_loss, r.train_acc);
    out << line;
    if (r.val_loss) {
      std::snprintf(line, sizeof(line), " val_loss=%.5f val_acc=%.4f", *r.val_loss, *r.val_acc);
      out << line;
    }
    std::snprintf(line, sizeof(line), " (%.1fs)\n", r.seconds);
    out << line << std::flush;
    return true;
  };
  TrainResult result = train(cfg, ds, train_idx, val_idx);

  if (test_idx.empty()) {
    out << "test split is empty; skipping confusion.csv and metrics.csv\n";
    return exit_code::kSuccess;
  }
  const EvalResult ev = evaluate(result.model, ds, test_idx, cfg.batch_size);
  write_confusion_csv(ev.confusion, cfg.out_dir / "confusion.csv");
  write_metrics_csv(ev.metrics, cfg.out_dir / "metrics.csv");
  out << "test ";
  print_metrics(out, ev);
  return exit_code::kSuccess;
}

struct EvalArgs {
  std::string data, weights, split = "test", manifest, out;
  std::size_t size = 50, batch = 128;
  bool crop = false;
};

int cmd_evaluate(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const fs::path root(a.data);
  const Dataset ds = load_directory(root, load_options(a.size, a.crop));
  ModelConfig mcfg;
  mcfg.input_h = mcfg.input_w = a.size;
  mcfg.num_classes = ds.num_classes();
  Model<float> model = load_weights(a.weights, mcfg);

  std::vector<std::size_t> indices;
  if (a.manifest.empty()) {
    indices.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) indices[i] = i;
  } else {
    const Split wanted = parse_split(a.split);
    const Manifest m = read_manifest(a.manifest);
    if (manifest_class_names(m) != ds.class_names)
      throw InputError("manifest classes do not match the class directories under " + a.data);
    std::map<std::string, std::size_t> by_path;
    for (std::size_t i = 0; i < ds.size(); ++i)
      by_path.emplace(relative_to(ds.samples[i].source_path, root), i);
    std::size_t skipped = 0;
    for (const auto& row : m.rows) {
      if (row.split != wanted) continue;
      if (row.origin.augmented()) {
        ++skipped;
        continue;
      }
      const auto it = by_path.find(row.path);
      if (it == by_path.end()) throw InputError("manifest path '" + row.path + "' not found under " + a.data);
      if (ds.samples[it->second].label != row.label_id)
        throw LabelError("manifest label for '" + row.path + "' disagrees with its directory");
      indices.push_back(it->second);
    }
    if (skipped > 0)
      err << "note: skipped " << skipped << " augmented rows (not stored on disk)\n";
  }
  const EvalResult r = evaluate(model, ds, indices, a.batch);
  print_metrics(out, r);
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_confusion_csv(r.confusion, fs::path(a.out) / "confusion.csv");
    write_metrics_csv(r.metrics, fs::path(a.out) / "metrics.csv");
  }
  return exit_code::kSuccess;
}

struct PredictArgs {
  std::string image, weights, manifest;
  std::size_t top_k = 5, size = 50;
  bool crop = false;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  ModelConfig mcfg;
  mcfg.input_h = mcfg.input_w = a.size;
  mcfg.num_classes = peek_weights_num_classes(a.weights);
  Model<float> model = load_weights(a.weights, mcfg);
  std::vector<std::string> names;
  if (!a.manifest.empty()) names = manifest_class_names(read_manifest(a.manifest));
  const Tensor img = load_image(a.image, load_options(a.size, a.crop));
  out << "rank,class,probability\n";
  const auto top = predict_top_k(model, img, a.top_k, names);
  for (std::size_t i = 0; i < top.size(); ++i)
    out << i + 1 << ',' << csv::escape(top[i].name) << ',' << csv::format_number(top[i].probability)
        << '\n';
  return exit_code::kSuccess;
}

struct AugmentArgs {
  std::string data, out;
  double fraction = 0.25, noise_sigma = 0.04;
  float fill = 0.0f;
  std::uint64_t seed = 0;
  std::size_t size = 50;
  bool crop = false;
};

int cmd_augment(const AugmentArgs& a, std::ostream& out) {
  const AugmentPlan plan{a.fraction, a.noise_sigma, a.fill, a.seed};
  plan.validate();
  const fs::path root(a.data), dest(a.out);
  const Dataset ds = load_directory(root, load_options(a.size, a.crop));
  const Dataset aug = augment_dataset(ds, plan);

  fs::create_directories(dest);
  std::ofstream log(dest / "augment.csv", std::ios::binary);
  if (!log) throw InputError("cannot write " + (dest / "augment.csv").string());
  log << "path,label_name,origin,source\n";
  for (const Sample& s : aug.samples) {
    const fs::path src(s.source_path);
    std::string stem = src.stem().string();
    if (s.origin.augmented()) stem += "__" + std::string(augment_op_name(*s.origin.op));
    const std::string& cls = aug.class_names[s.label];
    const fs::path rel = fs::path(cls) / (stem + ".png");
    fs::create_directories(dest / cls);
    write_png(quantize(s.image), dest / rel);
    log << csv::escape(rel.generic_string()) << ',' << csv::escape(cls) << ','
        << s.origin.to_string() << ',' << csv::escape(relative_to(s.source_path, root)) << '\n';
  }
  out << "wrote " << aug.size() << " images (" << ds.size() << " original, "
      << aug.size() - ds.size() << " augmented) to " << a.out << '\n';
  return exit_code::kSuccess;
}

int cmd_summary(std::size_t classes, std::ostream& out) {
  ModelConfig cfg;
  cfg.num_classes = classes;
  const ModelSummary s = Model<float>(cfg).summary();
  out << s.to_string();
  if (classes != 30) return exit_code::kSuccess;
  const bool ok = matches_reference_table(s);
  out << (ok ? "matches the reference table\n" : "MISMATCH against the reference table\n");
  return ok ? exit_code::kSuccess : exit_code::kCheckFailure;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& fault, std::ostream& out) {
  GradcheckOptions o;
  o.seed = seed;
  if (!fault.empty()) {
    if (fault != "conv") throw ParameterError("unknown fault '" + fault + "' (expected conv)");
    o.inject_conv_fault = true;
  }
  const GradcheckReport rep = run_gradcheck(o);
  out << rep.to_string();
  return rep.passed() ? exit_code::kSuccess : exit_code::kCheckFailure;
}

struct SynthArgs {
  std::string out;
  std::size_t classes = 8, per_class = 16, size = 50;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const Dataset ds = make_synthetic_dataset(a.classes, a.per_class, a.seed, a.size, a.size);
  write_dataset_raw0(ds, a.out);
  out << "wrote " << ds.size() << " images in " << ds.num_classes() << " classes to " << a.out << '\n';
  return exit_code::kSuccess;
}

}  // namespace

bool matches_reference_table(const ModelSummary& s) {
  const auto& golden = reference_rows();
  if (s.rows.size() != golden.size()) return false;
  for (std::size_t i = 0; i < golden.size(); ++i)
    if (s.rows[i].layer != golden[i].layer || s.rows[i].output_shape != golden[i].shape ||
        s.rows[i].params != golden[i].params)
      return false;
  return s.total == 2029470 && s.trainable == 2029150 && s.non_trainable == 320;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"aslnet: ASL alphabet CNN training and evaluation"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write its artifacts");
  train_cmd->add_option("--data", ta.data, "Image root, one directory per class")->required();
  train_cmd->add_option("--out", ta.out, "Output directory")->required();
  train_cmd->add_option("--epochs", ta.epochs)->capture_default_str();
  train_cmd->add_option("--batch-size", ta.batch)->capture_default_str();
  train_cmd->add_option("--optimizer", ta.optimizer, "rmsprop or adam")->capture_default_str();
  train_cmd->add_option("--lr", ta.lr, "Default 0.001 (rmsprop) or 0.01 (adam)");
  train_cmd->add_option("--classes", ta.classes, "Must equal the number of class directories");
  train_cmd->add_option("--seed", ta.seed)->capture_default_str();
  train_cmd->add_flag("--augment", ta.augment, "Add noise and rotated copies");
  train_cmd->add_option("--fraction", ta.fraction, "Share of images augmented")->capture_default_str();
  train_cmd->add_option("--noise-sigma", ta.noise_sigma)->capture_default_str();
  train_cmd->add_option("--fill", ta.fill, "Intensity for pixels rotated in from outside")
      ->capture_default_str();
  train_cmd->add_flag("--split-first", ta.split_first, "Augment only the training split");
  train_cmd->add_option("--checkpoint-every", ta.checkpoint_every, "0 disables")->capture_default_str();
  train_cmd->add_flag("--drop-last", ta.drop_last, "Skip the final short batch");
  train_cmd->add_flag("--no-timing", ta.no_timing, "Write 0 in the seconds column");
  train_cmd->add_option("--image-size", ta.size)->capture_default_str();
  train_cmd->add_flag("--center-crop", ta.crop, "Crop instead of resizing");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score saved weights on a dataset");
  eval_cmd->add_option("--data", ea.data)->required();
  eval_cmd->add_option("--weights", ea.weights)->required();
  eval_cmd->add_option("--split", ea.split, "train, val, or test (with --manifest)")->capture_default_str();
  eval_cmd->add_option("--manifest", ea.manifest, "manifest.csv from a training run");
  eval_cmd->add_option("--out", ea.out, "Write confusion.csv and metrics.csv here");
  eval_cmd->add_option("--batch-size", ea.batch)->capture_default_str();
  eval_cmd->add_option("--image-size", ea.size)->capture_default_str();
  eval_cmd->add_flag("--center-crop", ea.crop);

  PredictArgs pa;
  auto* pred_cmd = app.add_subcommand("predict", "Rank the classes for one image");
  pred_cmd->add_option("--image", pa.image)->required();
  pred_cmd->add_option("--weights", pa.weights)->required();
  pred_cmd->add_option("--top-k", pa.top_k)->capture_default_str();
  pred_cmd->add_option("--manifest", pa.manifest, "Class names from a training run");
  pred_cmd->add_option("--image-size", pa.size)->capture_default_str();
  pred_cmd->add_flag("--center-crop", pa.crop);

  AugmentArgs aa;
  auto* aug_cmd = app.add_subcommand("augment", "Write an augmented copy of a dataset as PNG");
  aug_cmd->add_option("--data", aa.data)->required();
  aug_cmd->add_option("--out", aa.out)->required();
  aug_cmd->add_option("--fraction", aa.fraction)->capture_default_str();
  aug_cmd->add_option("--seed", aa.seed)->capture_default_str();
  aug_cmd->add_option("--noise-sigma", aa.noise_sigma)->capture_default_str();
  aug_cmd->add_option("--fill", aa.fill)->capture_default_str();
  aug_cmd->add_option("--image-size", aa.size)->capture_default_str();
  aug_cmd->add_flag("--center-crop", aa.crop);

  std::size_t summary_classes = 30;
  auto* sum_cmd = app.add_subcommand("summary", "Print the layer table");
  sum_cmd->add_option("--classes", summary_classes)->capture_default_str();

  std::uint64_t gc_seed = 0;
  std::string gc_fault;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc_cmd->add_option("--seed", gc_seed)->capture_default_str();
  gc_cmd->add_option("--inject-fault", gc_fault)->group("");

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "Write the synthetic stripe dataset");
  synth_cmd->add_option("--out", sa.out)->required();
  synth_cmd->add_option("--classes", sa.classes)->capture_default_str();
  synth_cmd->add_option("--per-class", sa.per_class)->capture_default_str();
  synth_cmd->add_option("--seed", sa.seed)->capture_default_str();
  synth_cmd->add_option("--image-size", sa.size)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_code::kSuccess : exit_code::kConfig;
  }

  try {
    if (*train_cmd) return cmd_train(ta, out);
    if (*eval_cmd) return cmd_evaluate(ea, out, err);
    if (*pred_cmd) return cmd_predict(pa, out);
    if (*aug_cmd) return cmd_augment(aa, out);
    if (*sum_cmd) return cmd_summary(summary_classes, out);
    if (*gc_cmd) return cmd_gradcheck(gc_seed, gc_fault, out);
    if (*synth_cmd) return cmd_synth(sa, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::kData;
  }
  return exit_code::kConfig;
}

}  // namespace asl
