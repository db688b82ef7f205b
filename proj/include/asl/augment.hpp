#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "asl/dataset.hpp"
#include "asl/rng.hpp"
#include "asl/tensor.hpp"

namespace asl {

struct AugmentPlan {
  /// Share of the candidate samples copied, split evenly over the four ops.
  double fraction = 0.25;
  /// Noise standard deviation on the [0, 1] intensity scale.
  double noise_sigma = 0.04;
  /// Value for pixels rotated in from outside the source image.
  float fill = 0.0f;
  std::uint64_t seed = 0;

  void validate() const;
};

/// img + N(0, sigma^2) per entry, clipped into [0, 1].
Tensor gaussian_noise_image(const Tensor& img, double sigma, Rng& rng);

/// Counterclockwise rotation about the image center, output shape = input
/// shape. 90 degrees on a square image is an exact index permutation; other
/// angles use inverse mapping with bilinear interpolation, and samples that
/// fall outside the source blend toward fill.
/// Only the angles 90, 30, and -60 are accepted (ParameterError otherwise).
Tensor rotate_image(const Tensor& img, double degrees, float fill);

Tensor apply_augment(const Tensor& img, AugmentOp op, const AugmentPlan& plan, Rng& rng);

/// Source indices per op, pairwise disjoint, each sorted ascending.
struct AugmentSelection {
  std::array<std::vector<std::size_t>, 4> groups;

  std::size_t total() const;
};

/// Draws floor(fraction * |candidates|) distinct candidates (indices into ds)
/// without replacement and deals them into four groups whose sizes differ by
/// <= 1. Each class contributes floor or ceil of fraction * its candidate count.
AugmentSelection select_for_augmentation(const Dataset& ds, std::span<const std::size_t> candidates,
                                         const AugmentPlan& plan);

/// Transformed copies in canonical order: op order, then source-index order.
/// Per-image randomness is keyed by source index, so the result does not
/// depend on how the transforms are scheduled.
std::vector<Sample> augment_samples(const Dataset& ds, const AugmentSelection& selection,
                                    const AugmentPlan& plan);

/// Originals in input order followed by augment_samples() over every sample.
/// Throws InputError for an empty dataset.
Dataset augment_dataset(const Dataset& ds, const AugmentPlan& plan);

}  // namespace asl
