#include "asl/metrics.hpp"

#include <fstream>

#include "asl/csv.hpp"
#include "asl/error.hpp"

namespace asl {

namespace {

std::vector<std::string> numbered_names(std::size_t n) {
  std::vector<std::string> names(n);
  for (std::size_t i = 0; i < n; ++i) names[i] = std::to_string(i);
  return names;
}

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> class_names)
    : names_(std::move(class_names)), counts_(names_.size() * names_.size(), 0) {
  if (names_.empty()) throw ParameterError("confusion matrix needs at least one class");
}

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : ConfusionMatrix(numbered_names(num_classes)) {}

void ConfusionMatrix::update(std::size_t true_label, std::size_t predicted_label) {
  const std::size_t c = num_classes();
  if (true_label >= c || predicted_label >= c)
    throw LabelError("confusion matrix: label pair (" + std::to_string(true_label) + ", " +
                     std::to_string(predicted_label) + ") outside [0, " + std::to_string(c) + ")");
  ++counts_[true_label * c + predicted_label];
  ++total_;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.names_ != names_) throw StateError("confusion matrix merge: class lists differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  total_ += other.total_;
}

std::uint64_t ConfusionMatrix::at(std::size_t t, std::size_t p) const {
  if (t >= num_classes() || p >= num_classes())
    throw LabelError("confusion matrix: index out of range");
  return counts_[t * num_classes() + p];
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (std::size_t c = 0; c < num_classes(); ++c) s += counts_[c * num_classes() + c];
  return s;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < num_classes(); ++p) s += at(c, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < num_classes(); ++t) s += at(t, c);
  return s;
}

MetricSet compute_metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw StateError("metrics: confusion matrix is empty");
  MetricSet m;
  m.accuracy = ratio(cm.trace(), cm.total());
  const std::size_t n = cm.num_classes();
  for (std::size_t c = 0; c < n; ++c) {
    ClassScores s;
    s.name = cm.class_names()[c];
    s.support = cm.row_sum(c);
    s.precision = ratio(cm.at(c, c), cm.col_sum(c));
    s.recall = ratio(cm.at(c, c), s.support);
    s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0;
    m.macro_precision += s.precision;
    m.macro_recall += s.recall;
    m.macro_f1 += s.f1;
    m.per_class.push_back(std::move(s));
  }
  m.macro_precision /= static_cast<double>(n);
  m.macro_recall /= static_cast<double>(n);
  m.macro_f1 /= static_cast<double>(n);
  return m;
}

void write_confusion_csv(const ConfusionMatrix& cm, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << "true/pred";
  for (const auto& name : cm.class_names()) out << ',' << csv::escape(name);
  out << '\n';
  for (std::size_t t = 0; t < cm.num_classes(); ++t) {
    out << csv::escape(cm.class_names()[t]);
    for (std::size_t p = 0; p < cm.num_classes(); ++p) out << ',' << cm.at(t, p);
    out << '\n';
  }
}

void write_metrics_csv(const MetricSet& m, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  auto row = [&](const std::string& key, double v) {
    out << csv::escape(key) << ',' << csv::format_number(v) << '\n';
  };
  out << "metric,value\n";
  row("accuracy", m.accuracy);
  row("macro_precision", m.macro_precision);
  row("macro_recall", m.macro_recall);
  row("macro_f1", m.macro_f1);
  for (const auto& c : m.per_class) row("precision_" + c.name, c.precision);
  for (const auto& c : m.per_class) row("recall_" + c.name, c.recall);
  for (const auto& c : m.per_class) row("f1_" + c.name, c.f1);
}

}  // namespace asl
