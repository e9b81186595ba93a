#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "ctl/nn.hpp"

using namespace ctl;

namespace {

// Double-precision parameter fill mirroring the init scheme, for the
// finite-difference oracle.
NetParamsT<double> random_double_params(std::uint64_t seed) {
  NetParamsT<double> p;
  Pcg32 rng = Pcg32::seeded(seed);
  auto list = p.tensors();
  for (int i = 0; i < kNumTensors; ++i) {
    const int fan = kTensorFanIn[i];
    const double bound = fan ? std::sqrt(6.0 / fan) : 0.05;
    for (auto& w : *list[i]) w = (2.0 * rng.uniform() - 1.0) * bound;
  }
  return p;
}

std::vector<double> random_batch(int batch, std::uint64_t seed) {
  std::vector<double> in(static_cast<std::size_t>(batch) * kObsValues);
  Pcg32 rng = Pcg32::seeded(seed);
  for (auto& v : in) v = rng.uniform();
  return in;
}

// The loss the gradients are checked against: mean over the batch of the
// squared error on the taken action's Q-value.
double loss_of(const NetParamsT<double>& p, const std::vector<double>& in, int batch,
               const std::vector<int>& actions, const std::vector<double>& targets) {
  WorkspaceT<double> ws;
  std::vector<double> q(static_cast<std::size_t>(batch) * kHeadUnits);
  forward_batch(p, in.data(), batch, ws, q.data());
  double loss = 0.0;
  for (int b = 0; b < batch; ++b) {
    const double d = q[b * kHeadUnits + actions[b]] - targets[b];
    loss += d * d;
  }
  return loss / batch;
}

}  // namespace

TEST_CASE("architecture constants") {
  STATIC_CHECK(kConv1Out == 9);    // (21 - 5) / 2 + 1
  STATIC_CHECK(kConv2Out == 7);    // (9 - 3) / 1 + 1
  STATIC_CHECK(kFlatUnits == 3136);
  STATIC_CHECK(kNetTensors[4].dims[1] == 3136);
  STATIC_CHECK(kNetTensors[6].dims[0] == 3);
}

TEST_CASE("init_params is deterministic with zero biases") {
  const NetworkParams a = init_params(42);
  const NetworkParams b = init_params(42);
  CHECK(a == b);
  const NetworkParams c = init_params(43);
  CHECK_FALSE(a == c);
  for (float v : a.conv1_b) CHECK(v == 0.0f);
  for (float v : a.fc1_b) CHECK(v == 0.0f);
  for (float v : a.head_b) CHECK(v == 0.0f);
}

TEST_CASE("init_params matches the uniform-distribution moments") {
  const NetworkParams p = init_params(7);
  const double bound = std::sqrt(6.0 / kConv1K);
  double sum = 0.0, sq = 0.0;
  for (float v : p.conv1_w) {
    CHECK(std::abs(v) <= bound);
    sum += v;
    sq += static_cast<double>(v) * v;
  }
  const double n = p.conv1_w.size();
  const double stddev = std::sqrt(sq / n - (sum / n) * (sum / n));
  const double expected = bound / std::sqrt(3.0);
  CHECK(stddev == Catch::Approx(expected).epsilon(0.05));
}

TEST_CASE("forward of zeros through zero params is zero") {
  NetworkParams p;  // zero-initialized
  Workspace ws;
  std::vector<float> in(kObsValues, 0.0f);
  const auto q = forward_one(p, in.data(), ws);
  CHECK(q[0] == 0.0f);
  CHECK(q[1] == 0.0f);
  CHECK(q[2] == 0.0f);
}

TEST_CASE("forward is pure and batches match per-sample results") {
  const NetworkParams p = init_params(3);
  Workspace ws;
  const int batch = 5;
  std::vector<float> in(static_cast<std::size_t>(batch) * kObsValues);
  Pcg32 rng = Pcg32::seeded(11);
  for (auto& v : in) v = rng.uniform();

  std::vector<float> q1(batch * kHeadUnits), q2(batch * kHeadUnits);
  forward_batch(p, in.data(), batch, ws, q1.data());
  forward_batch(p, in.data(), batch, ws, q2.data());
  CHECK(q1 == q2);

  for (int b = 0; b < batch; ++b) {
    Workspace solo;
    const auto q = forward_one(p, in.data() + static_cast<std::size_t>(b) * kObsValues, solo);
    for (int a = 0; a < kHeadUnits; ++a) {
      REQUIRE(q[a] == Catch::Approx(q1[b * kHeadUnits + a]).margin(1e-5));
    }
  }
}

TEST_CASE("backward: targets equal to Q-values give zero loss and gradients") {
  const NetworkParams p = init_params(5);
  Workspace ws;
  const int batch = 3;
  std::vector<float> in(static_cast<std::size_t>(batch) * kObsValues);
  Pcg32 rng = Pcg32::seeded(6);
  for (auto& v : in) v = rng.uniform();

  std::vector<float> q(batch * kHeadUnits);
  forward_batch(p, in.data(), batch, ws, q.data());
  std::vector<int> actions = {0, 2, 1};
  std::vector<float> targets(batch);
  for (int b = 0; b < batch; ++b) targets[b] = q[b * kHeadUnits + actions[b]];

  GradientBuffer g;
  const double loss = backward_batch(p, in.data(), batch, actions.data(),
                                     targets.data(), ws, g);
  CHECK(loss == 0.0);
  for (const auto* t : g.tensors()) {
    for (float v : *t) REQUIRE(v == 0.0f);
  }
}

TEST_CASE("backward: head bias gradient is 2(Q - y) for a single sample") {
  const NetworkParams p = init_params(9);
  Workspace ws;
  std::vector<float> in(kObsValues);
  Pcg32 rng = Pcg32::seeded(10);
  for (auto& v : in) v = rng.uniform();

  const auto q = forward_one(p, in.data(), ws);
  const int action = 1;
  const float target = q[action] - 0.25f;

  GradientBuffer g;
  int actions[] = {action};
  float targets[] = {target};
  const double loss = backward_batch(p, in.data(), 1, actions, targets, ws, g);
  CHECK(loss == Catch::Approx(0.0625).epsilon(1e-4));
  CHECK(g.head_b[action] == Catch::Approx(2.0 * (q[action] - target)).epsilon(1e-4));
  CHECK(g.head_b[(action + 1) % 3] == 0.0f);
  CHECK(g.head_b[(action + 2) % 3] == 0.0f);
}

namespace {

struct GradCheckResult {
  long checked = 0;
  long ok = 0;
  double pass_rate() const { return static_cast<double>(ok) / checked; }
};

// Central-difference oracle. Coordinates are sampled uniformly over the
// whole parameter vector; rel. error floor 1e-10 so exact zeros agree.
GradCheckResult run_gradcheck(std::uint64_t seed, double h, int n_samples) {
  const int batch = 2;
  const NetParamsT<double> p = random_double_params(seed + 1);
  const std::vector<double> in = random_batch(batch, seed + 2);
  const std::vector<int> actions = {2, 0};
  const std::vector<double> targets = {0.3, -0.1};

  WorkspaceT<double> ws;
  NetParamsT<double> grads;
  backward_batch(p, in.data(), batch, actions.data(), targets.data(), ws, grads);

  NetParamsT<double> probe = p;
  auto probe_list = probe.tensors();
  auto grad_list = grads.tensors();
  std::size_t total = 0;
  for (const auto* t : grad_list) total += t->size();

  Pcg32 pick = Pcg32::seeded(seed + 3);
  GradCheckResult res;
  for (int s = 0; s < n_samples; ++s) {
    std::size_t i = pick.below(static_cast<std::uint32_t>(total));
    int t = 0;
    while (i >= probe_list[t]->size()) {
      i -= probe_list[t]->size();
      ++t;
    }
    double& w = (*probe_list[t])[i];
    const double saved = w;
    w = saved + h;
    const double lp = loss_of(probe, in, batch, actions, targets);
    w = saved - h;
    const double lm = loss_of(probe, in, batch, actions, targets);
    w = saved;
    const double numeric = (lp - lm) / (2.0 * h);
    const double analytic = (*grad_list[t])[i];
    const double rel = std::abs(numeric - analytic) /
                       std::max({std::abs(numeric), std::abs(analytic), 1e-10});
    ++res.checked;
    if (rel <= 1e-3) ++res.ok;
  }
  return res;
}

}  // namespace

TEST_CASE("backward matches central finite differences (h = 1e-3)") {
  const GradCheckResult res = run_gradcheck(20, 1e-3, 1000);
  INFO("coordinates checked: " << res.checked << ", within tolerance: " << res.ok);
  CHECK(res.pass_rate() >= 0.99);
}

TEST_CASE("backward matches central finite differences at small h everywhere") {
  // At h = 1e-5 the stencil no longer straddles relu kinks, so the
  // agreement must be essentially exact on every coordinate.
  const GradCheckResult res = run_gradcheck(40, 1e-5, 800);
  INFO("coordinates checked: " << res.checked << ", within tolerance: " << res.ok);
  CHECK(res.pass_rate() >= 0.999);
}

TEST_CASE("rmsprop: zero gradients leave parameters unchanged and decay acc") {
  NetworkParams p = init_params(31);
  const NetworkParams before = p;
  GradientBuffer g;  // zeros
  OptimizerState opt;
  for (auto& v : opt.acc.head_w) v = 0.5f;
  rmsprop_step(p, g, opt);
  CHECK(p == before);
  for (float v : opt.acc.head_w) CHECK(v == Catch::Approx(0.475f));  // 0.95 * 0.5
}

TEST_CASE("rmsprop scalar arithmetic") {
  NetworkParams p;
  GradientBuffer g;
  OptimizerState opt;
  p.head_w[0] = 1.0f;
  g.head_w[0] = 1.0f;
  rmsprop_step(p, g, opt);
  CHECK(opt.acc.head_w[0] == Catch::Approx(0.05f));
  const double expected_delta = -0.00025 / std::sqrt(0.06);
  CHECK(p.head_w[0] - 1.0f == Catch::Approx(expected_delta).epsilon(1e-4));
}

TEST_CASE("rmsprop: repeated identical gradients drive acc toward g^2 geometrically") {
  NetworkParams p;
  GradientBuffer g;
  OptimizerState opt;
  const float gv = 0.8f;
  g.fc1_w[123] = gv;
  const int steps = 40;
  for (int k = 0; k < steps; ++k) rmsprop_step(p, g, opt);
  // closed form: acc_k = (1 - rho^k) g^2
  const double expected = (1.0 - std::pow(0.95, steps)) * gv * gv;
  CHECK(opt.acc.fc1_w[123] == Catch::Approx(expected).epsilon(1e-4));
}

TEST_CASE("rmsprop respects the trainable mask") {
  NetworkParams p = init_params(8);
  const NetworkParams before = p;
  GradientBuffer g;
  for (auto* t : g.tensors()) {
    for (auto& v : *t) v = 0.1f;
  }
  OptimizerState opt;
  rmsprop_step(p, g, opt, TrainableMask::head_only());
  CHECK(p.conv1_w == before.conv1_w);
  CHECK(p.conv2_w == before.conv2_w);
  CHECK(p.fc1_w == before.fc1_w);
  CHECK(p.fc1_b == before.fc1_b);
  CHECK_FALSE(p.head_w == before.head_w);
  CHECK_FALSE(p.head_b == before.head_b);
}

TEST_CASE("fifty consecutive optimizer steps on a fixed batch never increase the loss") {
  // RMSprop is not monotone while its accumulators warm up from zero, so
  // the 50 monotone steps are measured after a 20-step warm-up.
  NetworkParams p = init_params(55);
  Workspace ws;
  const int batch = 8;
  std::vector<float> in(static_cast<std::size_t>(batch) * kObsValues);
  Pcg32 rng = Pcg32::seeded(56);
  for (auto& v : in) v = rng.uniform();
  std::vector<int> actions(batch);
  for (int b = 0; b < batch; ++b) actions[b] = static_cast<int>(rng.below(3));
  std::vector<float> q0(batch * kHeadUnits);
  forward_batch(p, in.data(), batch, ws, q0.data());
  std::vector<float> targets(batch);
  for (int b = 0; b < batch; ++b) {
    targets[b] = q0[b * kHeadUnits + actions[b]] + (b % 2 ? 0.3f : -0.3f);
  }

  OptimizerState opt;
  GradientBuffer g;
  double prev = 1e30;
  for (int step = 0; step < 70; ++step) {
    const double loss = backward_batch(p, in.data(), batch, actions.data(),
                                       targets.data(), ws, g);
    if (step >= 20) REQUIRE(loss <= prev * (1.0 + 1e-6) + 1e-9);
    prev = loss;
    rmsprop_step(p, g, opt);
  }
  CHECK(prev < 1e-6);
}
