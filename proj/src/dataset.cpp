#include "asl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <numbers>

#include "asl/csv.hpp"
#include "asl/image.hpp"
#include "asl/rng.hpp"

namespace asl {

namespace fs = std::filesystem;

std::string_view augment_op_name(AugmentOp op) {
  switch (op) {
    case AugmentOp::kGaussianNoise: return "noise";
    case AugmentOp::kRotate90: return "rot90";
    case AugmentOp::kRotate30: return "rot30";
    case AugmentOp::kRotateMinus60: return "rot-60";
  }
  return "?";
}

std::string Origin::to_string() const {
  return op ? "augmented:" + std::string(augment_op_name(*op)) : "original";
}

Origin Origin::parse(std::string_view text) {
  if (text == "original") return {};
  constexpr std::string_view prefix = "augmented:";
  if (text.starts_with(prefix)) {
    const auto name = text.substr(prefix.size());
    for (AugmentOp op : kAugmentOps)
      if (augment_op_name(op) == name) return {op};
  }
  throw FormatError("unknown sample origin '" + std::string(text) + "'");
}

void Dataset::validate() const {
  if (!std::is_sorted(class_names.begin(), class_names.end()) ||
      std::adjacent_find(class_names.begin(), class_names.end()) != class_names.end())
    throw InputError("dataset: class names must be sorted and unique");
  for (const auto& s : samples)
    if (s.label >= class_names.size())
      throw InputError("dataset: sample '" + s.source_path + "' has label " +
                       std::to_string(s.label) + " but only " +
                       std::to_string(class_names.size()) + " classes exist");
}

Tensor load_image(const fs::path& path, const LoadOptions& opts) {
  Tensor img = normalize(to_rgb(read_raster(path)));
  if (opts.center_crop && img.dim(0) >= opts.height && img.dim(1) >= opts.width)
    return center_crop(img, opts.height, opts.width);
  return resize_bilinear(img, opts.height, opts.width);
}

Dataset load_directory(const fs::path& root, const LoadOptions& opts) {
  std::error_code ec;
  if (!fs::is_directory(root, ec))
    throw IngestionError("data root '" + root.string() + "' is not a directory");

  Dataset ds;
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.size() < 2)
    throw IngestionError("data root '" + root.string() + "' needs at least 2 class directories, found " +
                         std::to_string(class_dirs.size()));

  std::vector<std::pair<fs::path, std::size_t>> files;
  for (std::size_t label = 0; label < class_dirs.size(); ++label) {
    ds.class_names.push_back(class_dirs[label].filename().string());
    std::vector<fs::path> entries;
    for (const auto& entry : fs::directory_iterator(class_dirs[label]))
      if (entry.is_regular_file()) entries.push_back(entry.path());
    if (entries.empty())
      throw IngestionError("class directory '" + class_dirs[label].string() + "' has no images");
    std::sort(entries.begin(), entries.end());
    for (auto& p : entries) files.emplace_back(std::move(p), label);
  }

  ds.samples.resize(files.size());
  std::vector<std::exception_ptr> errors(files.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(files.size()); ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      ds.samples[k] = {load_image(files[k].first, opts), files[k].second,
                       files[k].first.string(), {}};
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return ds;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  throw ConfigError("unknown split '" + std::string(text) + "' (expected train, val, or test)");
}

std::vector<std::size_t> Manifest::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].split == s) out.push_back(i);
  return out;
}

Manifest manifest_for(const Dataset& ds, Split split) {
  Manifest m;
  m.rows.reserve(ds.size());
  for (const auto& s : ds.samples)
    m.rows.push_back({s.source_path, ds.class_names.at(s.label), s.label, split, s.origin});
  return m;
}

Manifest split_dataset(const Dataset& ds, const SplitRatios& ratios, std::uint64_t seed) {
  for (double r : {ratios.train, ratios.val, ratios.test})
    if (!(r >= 0)) throw ParameterError("split: ratios must be non-negative");
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw ParameterError("split: ratios must sum to 1");

  std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
  for (std::size_t i = 0; i < ds.size(); ++i) by_class.at(ds.samples[i].label).push_back(i);

  Manifest m = manifest_for(ds, Split::kTrain);
  const Rng base = Rng(seed).fork("split");
  // Guards floor() against representation error, e.g. 0.2 * 15.
  auto take = [](double ratio, std::size_t n) {
    return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
  };
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.size() < 3)
      throw SplitError("split: class '" + ds.class_names[c] + "' has " +
                       std::to_string(idx.size()) + " samples, at least 3 are required");
    Rng rng = base.fork(static_cast<std::uint64_t>(c));
    rng.shuffle(std::span<std::size_t>(idx));
    const std::size_t n_val = take(ratios.val, idx.size());
    const std::size_t n_test = take(ratios.test, idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      Split s = Split::kTrain;
      if (k < n_val)
        s = Split::kVal;
      else if (k < n_val + n_test)
        s = Split::kTest;
      m.rows[idx[k]].split = s;
    }
  }
  return m;
}

void write_manifest(const Manifest& m, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write manifest '" + path.string() + "'");
  out << "path,label_name,label_id,split,origin\n";
  for (const auto& r : m.rows)
    out << csv::escape(r.path) << ',' << csv::escape(r.label_name) << ',' << r.label_id << ','
        << split_name(r.split) << ',' << r.origin.to_string() << '\n';
  if (!out) throw IngestionError("write to manifest '" + path.string() + "' failed");
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open manifest '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != "path,label_name,label_id,split,origin")
    throw FormatError("manifest '" + path.string() + "' has an unexpected header");
  Manifest m;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto f = csv::split_record(line);
    if (f.size() != 5)
      throw FormatError("manifest '" + path.string() + "' line " + std::to_string(line_no) +
                        ": expected 5 fields, got " + std::to_string(f.size()));
    ManifestRow row;
    row.path = f[0];
    row.label_name = f[1];
    try {
      row.label_id = std::stoul(f[2]);
      row.split = parse_split(f[3]);
    } catch (const std::exception&) {
      throw FormatError("manifest '" + path.string() + "' line " + std::to_string(line_no) +
                        ": bad label_id or split");
    }
    row.origin = Origin::parse(f[4]);
    m.rows.push_back(std::move(row));
  }
  return m;
}

std::vector<std::string> manifest_class_names(const Manifest& m) {
  std::map<std::size_t, std::string> names;
  for (const auto& r : m.rows) names.emplace(r.label_id, r.label_name);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto it = names.find(i);
    if (it == names.end())
      throw FormatError("manifest: label ids are not contiguous (missing " + std::to_string(i) + ")");
    out.push_back(it->second);
  }
  return out;
}

Tensor make_batch(const Dataset& ds, std::span<const std::size_t> indices,
                  std::vector<std::size_t>* labels) {
  if (indices.empty()) throw InputError("make_batch: empty selection");
  const Shape& sample = ds.samples.at(indices[0]).image.shape();
  const std::size_t per = shape_size(sample);
  Tensor batch({indices.size(), sample[0], sample[1], sample[2]});
  if (labels) labels->resize(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Sample& s = ds.samples.at(indices[b]);
    if (s.image.shape() != sample)
      throw ShapeError("make_batch: sample '" + s.source_path + "' has shape " +
                       shape_string(s.image.shape()) + ", expected " + shape_string(sample));
    std::copy_n(s.image.data(), per, batch.data() + b * per);
    if (labels) (*labels)[b] = s.label;
  }
  return batch;
}

Dataset make_synthetic_dataset(std::size_t classes, std::size_t per_class, std::uint64_t seed,
                               std::size_t height, std::size_t width) {
  if (classes < 2 || per_class < 1)
    throw ParameterError("synthetic dataset needs >= 2 classes and >= 1 image per class");
  Dataset ds;
  const Rng base = Rng(seed).fork("synthetic");
  for (std::size_t k = 0; k < classes; ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "class%02zu", k);
    ds.class_names.emplace_back(name);
  }
  for (std::size_t k = 0; k < classes; ++k) {
    const double angle = std::numbers::pi * static_cast<double>(k) / static_cast<double>(classes);
    const double period = 5.0 + 3.0 * static_cast<double>(k % 3);
    const double dx = std::cos(angle), dy = std::sin(angle);
    // Distinct color per class, each channel in {0.35, 1.0}, never all dark.
    const double tint[3] = {(k & 1) ? 1.0 : 0.35, (k & 2) ? 1.0 : 0.35, (k & 4) ? 0.35 : 1.0};
    for (std::size_t i = 0; i < per_class; ++i) {
      Rng rng = base.fork(static_cast<std::uint64_t>(k * per_class + i));
      const double phase = 2.0 * std::numbers::pi * rng.next_double();
      Tensor img({height, width, 3});
      for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
          const double t = (dx * static_cast<double>(x) + dy * static_cast<double>(y)) / period;
          const double stripe = std::sin(2.0 * std::numbers::pi * t + phase) >= 0 ? 0.9 : 0.1;
          for (std::size_t c = 0; c < 3; ++c) {
            const double noise = 0.03 * (2.0 * rng.next_double() - 1.0);
            img[(y * width + x) * 3 + c] =
                static_cast<float>(std::clamp(stripe * tint[c] + noise, 0.0, 1.0));
          }
        }
      char path[64];
      std::snprintf(path, sizeof(path), "synthetic/%s/%03zu", ds.class_names[k].c_str(), i);
      ds.samples.push_back({std::move(img), k, path, {}});
    }
  }
  return ds;
}

void write_dataset_raw0(const Dataset& ds, const fs::path& root) {
  std::map<std::size_t, std::size_t> counters;
  for (const auto& s : ds.samples) {
    const fs::path dir = root / ds.class_names.at(s.label);
    fs::create_directories(dir);
    char name[32];
    std::snprintf(name, sizeof(name), "%05zu.raw", counters[s.label]++);
    write_raw0(quantize(s.image), dir / name);
  }
}

}  // namespace asl
