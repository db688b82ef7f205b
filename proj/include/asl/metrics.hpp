#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace asl {

/// Rows are the true class, columns the predicted class.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::vector<std::string> class_names);
  /// Classes named "0", "1", ...
  explicit ConfusionMatrix(std::size_t num_classes);

  std::size_t num_classes() const { return names_.size(); }
  const std::vector<std::string>& class_names() const { return names_; }

  /// Throws LabelError when either label is out of range.
  void update(std::size_t true_label, std::size_t predicted_label);
  /// Entrywise sum. Throws StateError when the class lists differ.
  void merge(const ConfusionMatrix& other);

  std::uint64_t at(std::size_t true_label, std::size_t predicted_label) const;
  std::uint64_t total() const { return total_; }
  std::uint64_t trace() const;
  std::uint64_t row_sum(std::size_t c) const;
  std::uint64_t col_sum(std::size_t c) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

struct ClassScores {
  std::string name;
  double precision = 0, recall = 0, f1 = 0;
  std::uint64_t support = 0;
};

struct MetricSet {
  double accuracy = 0;
  double macro_precision = 0;
  double macro_recall = 0;
  double macro_f1 = 0;
  std::vector<ClassScores> per_class;
};

/// Zero denominators score 0 rather than NaN. Throws StateError when the
/// matrix is empty.
MetricSet compute_metrics(const ConfusionMatrix& cm);

/// Header "true/pred,<names>", then one row per true class.
void write_confusion_csv(const ConfusionMatrix& cm, const std::filesystem::path& path);
/// "metric,value" rows: the four aggregates, then precision_/recall_/f1_<class>.
void write_metrics_csv(const MetricSet& m, const std::filesystem::path& path);

}  // namespace asl
