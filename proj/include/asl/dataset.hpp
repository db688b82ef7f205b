#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asl/tensor.hpp"

namespace asl {

enum class AugmentOp { kGaussianNoise, kRotate90, kRotate30, kRotateMinus60 };

inline constexpr AugmentOp kAugmentOps[] = {AugmentOp::kGaussianNoise, AugmentOp::kRotate90,
                                            AugmentOp::kRotate30, AugmentOp::kRotateMinus60};

/// "noise", "rot90", "rot30", "rot-60".
std::string_view augment_op_name(AugmentOp op);

/// Where a sample came from: a file on disk, or an augmentation of one.
struct Origin {
  std::optional<AugmentOp> op;

  bool augmented() const { return op.has_value(); }
  /// "original" or "augmented:<op>".
  std::string to_string() const;
  static Origin parse(std::string_view text);
  friend bool operator==(const Origin&, const Origin&) = default;
};

struct Sample {
  Tensor image;  // [H, W, 3] in [0, 1]
  std::size_t label = 0;
  std::string source_path;
  Origin origin;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::string> class_names;  // sorted, unique

  std::size_t size() const { return samples.size(); }
  std::size_t num_classes() const { return class_names.size(); }
  /// Throws InputError if a label is out of range or class names are unsorted.
  void validate() const;
};

struct LoadOptions {
  std::size_t height = 50;
  std::size_t width = 50;
  /// Take the central window instead of resizing (falls back to resizing
  /// when the source is smaller than the target).
  bool center_crop = false;
};

/// Decodes one file to the network input: RGB, /255, resized (or cropped).
Tensor load_image(const std::filesystem::path& path, const LoadOptions& opts = {});

/// One class per subdirectory of root, names sorted; files sorted by name
/// within each class. Throws IngestionError naming the offending path.
Dataset load_directory(const std::filesystem::path& root, const LoadOptions& opts = {});

enum class Split { kTrain, kVal, kTest };

std::string_view split_name(Split s);
Split parse_split(std::string_view text);

struct ManifestRow {
  std::string path;
  std::string label_name;
  std::size_t label_id = 0;
  Split split = Split::kTrain;
  Origin origin;
};

/// Row i describes sample i of the dataset it was built from.
struct Manifest {
  std::vector<ManifestRow> rows;

  std::vector<std::size_t> indices(Split s) const;
};

struct SplitRatios {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

/// Stratified split: each class is shuffled with its own substream of seed,
/// then floor(val * n) go to val, floor(test * n) to test, the rest to train.
/// Throws SplitError naming any class with fewer than 3 samples.
Manifest split_dataset(const Dataset& ds, const SplitRatios& ratios, std::uint64_t seed);

/// Rows for every sample, all assigned to one split.
Manifest manifest_for(const Dataset& ds, Split split);

/// CSV "path,label_name,label_id,split,origin", LF line endings.
void write_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);
/// Class names ordered by label_id as recorded in a manifest.
std::vector<std::string> manifest_class_names(const Manifest& m);

/// Stacks the selected images into [B, H, W, C] and gathers their labels.
Tensor make_batch(const Dataset& ds, std::span<const std::size_t> indices,
                  std::vector<std::size_t>* labels = nullptr);

/// Deterministic high-contrast patterns: class k is an oriented stripe
/// grating with its own angle, period, and color; every image gets a random
/// phase and a little pixel noise. Class names are "class00", "class01", ...
Dataset make_synthetic_dataset(std::size_t classes, std::size_t per_class, std::uint64_t seed,
                               std::size_t height = 50, std::size_t width = 50);

/// Writes root/<class>/<index>.raw (RAW0) for every sample.
void write_dataset_raw0(const Dataset& ds, const std::filesystem::path& root);

}  // namespace asl
