#include "asl/augment.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>
#include <string>

namespace asl {

void AugmentPlan::validate() const {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw ParameterError("augment: fraction must be in [0, 1], got " + std::to_string(fraction));
  if (!(noise_sigma >= 0.0))
    throw ParameterError("augment: noise sigma must be >= 0, got " + std::to_string(noise_sigma));
  if (!(fill >= 0.0f && fill <= 1.0f))
    throw ParameterError("augment: fill must be in [0, 1], got " + std::to_string(fill));
}

Tensor gaussian_noise_image(const Tensor& img, double sigma, Rng& rng) {
  if (!(sigma >= 0.0))
    throw ParameterError("gaussian noise: sigma must be >= 0, got " + std::to_string(sigma));
  if (sigma == 0.0) return img;
  Tensor out(img.shape());
  const std::size_t n = img.size();
  for (std::size_t i = 0; i < n; i += 2) {
    const double u1 = 1.0 - rng.next_double();
    const double u2 = rng.next_double();
    const double r = std::sqrt(-2.0 * std::log(u1)) * sigma;
    const double theta = 2.0 * std::numbers::pi * u2;
    out[i] = static_cast<float>(std::clamp(img[i] + r * std::cos(theta), 0.0, 1.0));
    if (i + 1 < n)
      out[i + 1] = static_cast<float>(std::clamp(img[i + 1] + r * std::sin(theta), 0.0, 1.0));
  }
  return out;
}

namespace {

Tensor rotate_quarter_turn(const Tensor& img) {
  const std::size_t n = img.dim(0), c = img.dim(2);
  Tensor out(img.shape());
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x)
      std::copy_n(img.data() + (x * n + (n - 1 - y)) * c, c, out.data() + (y * n + x) * c);
  return out;
}

Tensor rotate_bilinear(const Tensor& img, double degrees, float fill) {
  const std::size_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  Tensor out(img.shape());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t yy = 0; yy < static_cast<std::ptrdiff_t>(h); ++yy) {
    const double dy = static_cast<double>(yy) - cy;
    for (std::size_t x = 0; x < w; ++x) {
      // Image rows grow downward, so a counterclockwise turn by theta pulls
      // each output pixel from the source rotated clockwise by theta.
      const double dx = static_cast<double>(x) - cx;
      const double sx = cx + dx * cos_t - dy * sin_t;
      const double sy = cy + dx * sin_t + dy * cos_t;
      const double fx0 = std::floor(sx), fy0 = std::floor(sy);
      const double ax = sx - fx0, ay = sy - fy0;
      const auto x0 = static_cast<long>(fx0), y0 = static_cast<long>(fy0);
      float* dst = out.data() + (static_cast<std::size_t>(yy) * w + x) * c;
      for (std::size_t ch = 0; ch < c; ++ch) {
        auto px = [&](long r, long q) -> double {
          if (r < 0 || q < 0 || r >= static_cast<long>(h) || q >= static_cast<long>(w)) return fill;
          return img[(static_cast<std::size_t>(r) * w + static_cast<std::size_t>(q)) * c + ch];
        };
        const double top = px(y0, x0) * (1 - ax) + (ax > 0 ? px(y0, x0 + 1) * ax : 0.0);
        const double bottom =
            ay > 0 ? px(y0 + 1, x0) * (1 - ax) + (ax > 0 ? px(y0 + 1, x0 + 1) * ax : 0.0) : 0.0;
        dst[ch] = static_cast<float>(top * (1 - ay) + bottom * ay);
      }
    }
  }
  return out;
}

}  // namespace

Tensor rotate_image(const Tensor& img, double degrees, float fill) {
  if (degrees != 90.0 && degrees != 30.0 && degrees != -60.0)
    throw ParameterError("rotate: unsupported angle " + std::to_string(degrees) +
                         " (expected 90, 30, or -60)");
  if (img.rank() != 3) throw ShapeError("rotate: expected [H,W,C], got " + shape_string(img.shape()));
  if (degrees == 90.0 && img.dim(0) == img.dim(1)) return rotate_quarter_turn(img);
  return rotate_bilinear(img, degrees, fill);
}

Tensor apply_augment(const Tensor& img, AugmentOp op, const AugmentPlan& plan, Rng& rng) {
  switch (op) {
    case AugmentOp::kGaussianNoise: return gaussian_noise_image(img, plan.noise_sigma, rng);
    case AugmentOp::kRotate90: return rotate_image(img, 90.0, plan.fill);
    case AugmentOp::kRotate30: return rotate_image(img, 30.0, plan.fill);
    case AugmentOp::kRotateMinus60: return rotate_image(img, -60.0, plan.fill);
  }
  throw ParameterError("augment: unknown op");
}

std::size_t AugmentSelection::total() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.size();
  return n;
}

AugmentSelection select_for_augmentation(const Dataset& ds,
                                         std::span<const std::size_t> candidates,
                                         const AugmentPlan& plan) {
  plan.validate();
  const auto take = [&](std::size_t n) {
    return static_cast<std::size_t>(std::floor(plan.fraction * static_cast<double>(n) + 1e-9));
  };
  const std::size_t count = take(candidates.size());

  std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
  for (std::size_t idx : candidates) {
    const std::size_t label = ds.samples.at(idx).label;
    if (label >= by_class.size())
      throw InputError("augment: sample " + std::to_string(idx) + " has label " +
                       std::to_string(label) + " outside the class list");
    by_class[label].push_back(idx);
  }

  // Per-class quotas: floor shares, then the leftover copies go one each to
  // randomly chosen classes whose share had a fractional part.
  Rng rng = Rng(plan.seed).fork("augment-select");
  std::vector<std::size_t> quota(by_class.size());
  std::vector<std::size_t> fractional;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    quota[c] = take(by_class[c].size());
    assigned += quota[c];
    if (plan.fraction * static_cast<double>(by_class[c].size()) >
        static_cast<double>(quota[c]) + 1e-9)
      fractional.push_back(c);
  }
  rng.shuffle(std::span<std::size_t>(fractional));
  for (std::size_t i = 0; assigned < count && i < fractional.size(); ++i, ++assigned)
    ++quota[fractional[i]];

  std::vector<std::size_t> pool;
  pool.reserve(count);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    Rng class_rng = rng.fork(static_cast<std::uint64_t>(c));
    class_rng.shuffle(std::span<std::size_t>(by_class[c]));
    pool.insert(pool.end(), by_class[c].begin(),
                by_class[c].begin() + static_cast<std::ptrdiff_t>(quota[c]));
  }
  rng.shuffle(std::span<std::size_t>(pool));

  AugmentSelection sel;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    const std::size_t size = pool.size() / 4 + (k < pool.size() % 4 ? 1 : 0);
    sel.groups[k].assign(pool.begin() + static_cast<std::ptrdiff_t>(offset),
                         pool.begin() + static_cast<std::ptrdiff_t>(offset + size));
    std::sort(sel.groups[k].begin(), sel.groups[k].end());
    offset += size;
  }
  return sel;
}

std::vector<Sample> augment_samples(const Dataset& ds, const AugmentSelection& selection,
                                    const AugmentPlan& plan) {
  plan.validate();
  struct Job {
    std::size_t source;
    AugmentOp op;
  };
  std::vector<Job> jobs;
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t src : selection.groups[k]) jobs.push_back({src, kAugmentOps[k]});

  const Rng noise_base = Rng(plan.seed).fork("augment-noise");
  std::vector<Sample> out(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(jobs.size()); ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      const Sample& src = ds.samples.at(jobs[k].source);
      Rng rng = noise_base.fork(static_cast<std::uint64_t>(jobs[k].source));
      out[k] = {apply_augment(src.image, jobs[k].op, plan, rng), src.label, src.source_path,
                Origin{jobs[k].op}};
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

Dataset augment_dataset(const Dataset& ds, const AugmentPlan& plan) {
  if (ds.samples.empty()) throw InputError("augment: dataset is empty");
  std::vector<std::size_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const AugmentSelection sel = select_for_augmentation(ds, all, plan);
  Dataset out = ds;
  auto extra = augment_samples(ds, sel, plan);
  out.samples.insert(out.samples.end(), std::make_move_iterator(extra.begin()),
                     std::make_move_iterator(extra.end()));
  return out;
}

}  // namespace asl
