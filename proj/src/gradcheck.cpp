#include "asl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>

#include "asl/layers.hpp"
#include "asl/model.hpp"
#include "asl/ops.hpp"
#include "asl/optim.hpp"

namespace asl {

bool GradcheckReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::string GradcheckReport::to_string() const {
  std::ostringstream out;
  char line[160];
  for (const auto& c : checks) {
    std::snprintf(line, sizeof(line), "%-22s max_rel_error=%.3e tol=%.0e %s\n", c.name.c_str(),
                  c.max_rel_error, c.tolerance, c.passed ? "PASS" : "FAIL");
    out << line;
    if (!c.note.empty()) out << "  (" << c.note << ")\n";
  }
  out << "seed " << seed << ": " << (passed() ? "all checks passed" : "FAILED") << '\n';
  return out.str();
}

namespace {

using Loss = std::function<double()>;

struct Probe {
  std::string label;
  TensorD* value;
  TensorD analytic;
};

TensorD numeric_grad(TensorD& v, const Loss& loss, double h) {
  TensorD g(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double saved = v[i];
    v[i] = saved + h;
    const double up = loss();
    v[i] = saved - h;
    const double down = loss();
    v[i] = saved;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

double normwise_error(const TensorD& a, const TensorD& n) {
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  const double den = std::sqrt(std::max(na, nn));
  return den == 0 ? 0 : std::sqrt(diff) / den;
}

double dot(const TensorD& a, const TensorD& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

CheckResult finish(std::string name, const std::vector<Probe>& probes, const Loss& loss,
                   const GradcheckOptions& o) {
  CheckResult r{std::move(name), 0.0, o.layer_tolerance, false, {}};
  for (const auto& p : probes) {
    if (p.analytic.shape() != p.value->shape()) {
      r.max_rel_error = INFINITY;
      continue;
    }
    r.max_rel_error = std::max(r.max_rel_error, normwise_error(p.analytic, numeric_grad(*p.value, loss, o.h)));
  }
  r.passed = r.max_rel_error < r.tolerance;
  return r;
}

// Entries bounded away from 0 so no probe crosses the ReLU kink.
TensorD away_from_zero(Rng& rng, const Shape& shape) {
  TensorD t = uniform<double>(rng, 0.05, 1.0, shape);
  for (std::size_t i = 0; i < t.size(); ++i)
    if (rng.next_double() < 0.5) t[i] = -t[i];
  return t;
}

// Distinct values at least 0.5/n apart, so every window has a unique max.
TensorD distinct_values(Rng& rng, const Shape& shape) {
  TensorD t(shape);
  std::vector<std::size_t> rank(t.size());
  std::iota(rank.begin(), rank.end(), 0);
  rng.shuffle(std::span<std::size_t>(rank));
  const double n = static_cast<double>(t.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = (static_cast<double>(rank[i]) + 0.5 * rng.next_double()) / n - 0.5;
  return t;
}

CheckResult check_conv(Rng& rng, const GradcheckOptions& o) {
  TensorD x = uniform<double>(rng, -1, 1, {2, 6, 5, 3});
  auto p = ConvParams<double>::init(rng, 3, 4);
  p.bias = uniform<double>(rng, -0.5, 0.5, {4});
  const TensorD r = uniform<double>(rng, -1, 1, {2, 4, 3, 4});
  auto g = conv2d_backward(x, p, r);
  if (o.inject_conv_fault) g.dweights[0] += 1e-2 * (std::abs(g.dweights[0]) + 1.0);
  const Loss loss = [&] { return dot(r, conv2d(x, p)); };
  return finish("conv2d", {{"x", &x, g.dx}, {"w", &p.weights, g.dweights}, {"b", &p.bias, g.dbias}},
                loss, o);
}

CheckResult check_batchnorm(Rng& rng, const GradcheckOptions& o, Mode mode) {
  TensorD x = uniform<double>(rng, -2, 2, {4, 3, 3, 5});
  auto p = BatchNormParams<double>::init(5);
  p.gamma = uniform<double>(rng, 0.5, 1.5, {5});
  p.beta = uniform<double>(rng, -0.5, 0.5, {5});
  p.moving_mean = uniform<double>(rng, -0.5, 0.5, {5});
  p.moving_var = uniform<double>(rng, 0.5, 1.5, {5});
  const TensorD r = uniform<double>(rng, -1, 1, x.shape());
  const auto frozen = p;
  // Train mode also moves the running averages; each evaluation starts from
  // the same ones so eval-mode probes see a fixed function.
  const Loss loss = [&] {
    auto q = frozen;
    q.gamma = p.gamma;
    q.beta = p.beta;
    return dot(r, batchnorm(x, q, mode));
  };
  if (mode == Mode::kTrain) {
    BatchNormCache<double> cache;
    auto q = frozen;
    batchnorm(x, q, Mode::kTrain, &cache);
    auto g = batchnorm_backward(r, q, cache);
    return finish("batchnorm_train", {{"x", &x, g.dx}, {"gamma", &p.gamma, g.dgamma}, {"beta", &p.beta, g.dbeta}},
                  loss, o);
  }
  // Eval mode is the affine map gamma * (x - mean) / sqrt(var + eps) + beta.
  TensorD dx(x.shape()), dgamma({5}), dbeta({5});
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t c = i % 5;
    const double inv = 1.0 / std::sqrt(p.moving_var[c] + p.epsilon);
    dx[i] = r[i] * p.gamma[c] * inv;
    dgamma[c] += r[i] * (x[i] - p.moving_mean[c]) * inv;
    dbeta[c] += r[i];
  }
  return finish("batchnorm_eval", {{"x", &x, dx}, {"gamma", &p.gamma, dgamma}, {"beta", &p.beta, dbeta}},
                loss, o);
}

CheckResult check_maxpool(Rng& rng, const GradcheckOptions& o) {
  TensorD x = distinct_values(rng, {2, 6, 4, 3});
  const TensorD r = uniform<double>(rng, -1, 1, {2, 3, 2, 3});
  const auto fwd = maxpool2x2(x);
  const TensorD dx = maxpool2x2_backward(r, fwd.argmax, x.shape());
  const Loss loss = [&] { return dot(r, maxpool2x2(x).y); };
  return finish("maxpool2x2", {{"x", &x, dx}}, loss, o);
}

CheckResult check_dropout(Rng& rng, const GradcheckOptions& o) {
  TensorD x = uniform<double>(rng, -1, 1, {3, 4, 4, 2});
  const TensorD mask = dropout_mask<double>(rng, DropoutSpec{0.2}, x.shape());
  const TensorD r = uniform<double>(rng, -1, 1, x.shape());
  const Loss loss = [&] { return dot(r, apply_mask(x, mask)); };
  return finish("dropout_frozen", {{"x", &x, apply_mask(r, mask)}}, loss, o);
}

CheckResult check_relu(Rng& rng, const GradcheckOptions& o) {
  TensorD x = away_from_zero(rng, {2, 3, 3, 4});
  const TensorD r = uniform<double>(rng, -1, 1, x.shape());
  const Loss loss = [&] { return dot(r, relu(x)); };
  return finish("relu", {{"x", &x, relu_backward(x, r)}}, loss, o);
}

CheckResult check_flatten(Rng& rng, const GradcheckOptions& o) {
  TensorD x = uniform<double>(rng, -1, 1, {2, 3, 2, 4});
  const TensorD r = uniform<double>(rng, -1, 1, {2, 24});
  const Loss loss = [&] { return dot(r, flatten(x)); };
  return finish("flatten", {{"x", &x, unflatten(r, x.shape())}}, loss, o);
}

CheckResult check_dense(Rng& rng, const GradcheckOptions& o) {
  TensorD x = uniform<double>(rng, -1, 1, {3, 6});
  auto p = DenseParams<double>::init(rng, 6, 5);
  p.bias = uniform<double>(rng, -0.5, 0.5, {5});
  const TensorD r = uniform<double>(rng, -1, 1, {3, 5});
  const auto g = dense_backward(x, p, r);
  const Loss loss = [&] { return dot(r, dense(x, p)); };
  return finish("dense", {{"x", &x, g.dx}, {"w", &p.weights, g.dweights}, {"b", &p.bias, g.dbias}},
                loss, o);
}

CheckResult check_softmax(Rng& rng, const GradcheckOptions& o) {
  TensorD x = uniform<double>(rng, -2, 2, {3, 5});
  const TensorD r = uniform<double>(rng, -1, 1, {3, 5});
  const TensorD s = softmax(x);
  TensorD dx(x.shape());
  for (std::size_t i = 0; i < 3; ++i) {
    double inner = 0;
    for (std::size_t j = 0; j < 5; ++j) inner += r[i * 5 + j] * s[i * 5 + j];
    for (std::size_t j = 0; j < 5; ++j) dx[i * 5 + j] = s[i * 5 + j] * (r[i * 5 + j] - inner);
  }
  const Loss loss = [&] { return dot(r, softmax(x)); };
  return finish("softmax", {{"x", &x, dx}}, loss, o);
}

CheckResult check_crossentropy(Rng& rng, const GradcheckOptions& o) {
  TensorD x = uniform<double>(rng, -2, 2, {2, 5});
  std::vector<std::size_t> labels{rng.below(5), rng.below(5)};
  const TensorD target = one_hot<double>(labels, 5);
  const auto lg = crossentropy_from_logits(x, target);
  const Loss loss = [&] { return crossentropy_from_logits(x, target).loss; };
  return finish("softmax_crossentropy", {{"logits", &x, lg.grad_logits}}, loss, o);
}

CheckResult check_full_stack(Rng& rng, const GradcheckOptions& o) {
  ModelConfig cfg;
  cfg.num_classes = o.stack_classes;
  cfg.seed = rng.next_u64();
  Model<double> model(cfg);
  for (const auto& p : model.parameters()) {
    const std::string& n = p.name;
    if (n.ends_with(".bias") || n.ends_with(".beta"))
      *p.value = uniform<double>(rng, -0.1, 0.1, p.value->shape());
    else if (n.ends_with(".gamma"))
      *p.value = uniform<double>(rng, 0.8, 1.2, p.value->shape());
  }
  Shape xs{o.stack_batch, cfg.input_h, cfg.input_w, cfg.input_c};
  const TensorD x = uniform<double>(rng, 0, 1, xs);
  std::vector<std::size_t> labels(o.stack_batch);
  for (auto& l : labels) l = rng.below(cfg.num_classes);
  const TensorD target = one_hot<double>(labels, cfg.num_classes);

  Rng drop = rng.fork("dropout");
  model.forward(x, Mode::kTrain, drop);
  // Hundreds of thousands of ReLU units sit downstream of every parameter,
  // so some always cross zero within +-h. Holding the gates and pooling
  // choices at the base point probes the smooth piece backprop differentiates.
  model.freeze_dropout_masks(true);
  model.freeze_switches(true);
  const auto params = model.backward(crossentropy_from_logits(model.logits(), target).grad_logits);
  std::vector<TensorD> analytic;
  for (const auto& p : params) analytic.push_back(*p.grad);

  const auto loss = [&] {
    model.forward(x, Mode::kTrain, drop);
    return crossentropy_from_logits(model.logits(), target).loss;
  };
  CheckResult r{"full_stack", 0.0, o.stack_tolerance, false, {}};
  for (std::size_t s = 0; s < o.stack_samples; ++s) {
    const std::size_t t = s < params.size() ? s : rng.below(params.size());
    TensorD& v = *params[t].value;
    const std::size_t i = rng.below(v.size());
    const double saved = v[i];
    v[i] = saved + o.h;
    const double up = loss();
    v[i] = saved - o.h;
    const double down = loss();
    v[i] = saved;
    const double n = (up - down) / (2 * o.h), a = analytic[t][i];
    const double err = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-7});
    r.max_rel_error = std::max(r.max_rel_error, err);
  }
  r.passed = r.max_rel_error < r.tolerance;
  r.note = std::to_string(o.stack_samples) + " sampled parameters, batch " +
           std::to_string(o.stack_batch);
  return r;
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& o) {
  GradcheckReport rep;
  rep.seed = o.seed;
  const Rng root = Rng(o.seed).fork("gradcheck");
  auto sub = [&](std::string_view key) { return root.fork(key); };
  Rng r1 = sub("conv"), r2 = sub("bn-train"), r3 = sub("bn-eval"), r4 = sub("pool"),
      r5 = sub("dropout"), r6 = sub("relu"), r7 = sub("flatten"), r8 = sub("dense"),
      r9 = sub("softmax"), r10 = sub("xent"), r11 = sub("stack");
  rep.checks.push_back(check_conv(r1, o));
  rep.checks.push_back(check_batchnorm(r2, o, Mode::kTrain));
  rep.checks.push_back(check_batchnorm(r3, o, Mode::kEval));
  rep.checks.push_back(check_maxpool(r4, o));
  rep.checks.push_back(check_dropout(r5, o));
  rep.checks.push_back(check_relu(r6, o));
  rep.checks.push_back(check_flatten(r7, o));
  rep.checks.push_back(check_dense(r8, o));
  rep.checks.push_back(check_softmax(r9, o));
  rep.checks.push_back(check_crossentropy(r10, o));
  if (o.full_stack) rep.checks.push_back(check_full_stack(r11, o));
  return rep;
}

}  // namespace asl
