#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace asl {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  double h = 1e-5;
  double layer_tolerance = 1e-5;
  double stack_tolerance = 1e-4;
  /// Scalar parameters probed in the full-stack check: one per trainable
  /// tensor first, the rest drawn at random.
  std::size_t stack_samples = 20;
  std::size_t stack_batch = 2;
  std::size_t stack_classes = 29;
  bool full_stack = true;
  /// Test fixture: perturbs the analytic conv kernel gradient so the conv
  /// check must fail.
  bool inject_conv_fault = false;
};

struct CheckResult {
  std::string name;
  double max_rel_error = 0;
  double tolerance = 0;
  bool passed = false;
  std::string note;
};

struct GradcheckReport {
  std::uint64_t seed = 0;
  std::vector<CheckResult> checks;

  bool passed() const;
  /// One line per check: name, max relative error, tolerance, PASS/FAIL.
  std::string to_string() const;
};

/// Central finite differences in 64-bit against every layer's backward and
/// against the assembled model.
///
/// Per layer, the loss is a random linear functional sum(r * y) of the
/// output and every input and parameter entry is probed; the error of a
/// tensor is |a - n|_2 / max(|a|_2, |n|_2). The full stack uses softmax
/// cross-entropy on random labels and the per-scalar error
/// |a - n| / max(|a|, |n|, 1e-7), with dropout masks, ReLU gates, and
/// pooling choices held at the base point.
GradcheckReport run_gradcheck(const GradcheckOptions& opts);

}  // namespace asl
