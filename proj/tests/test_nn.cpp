#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

#include "testutil.hpp"
#include "wcsim/nn/adam.hpp"
#include "wcsim/nn/checkpoint.hpp"
#include "wcsim/nn/lstm.hpp"
#include "wcsim/nn/mlp.hpp"

using namespace wcsim;
using namespace wcsim::nn;

namespace {

// Straight-line reference: plain loops, no Eigen products.
std::vector<double> naive_mlp_forward(const MlpParams& p,
                                      const std::vector<double>& input) {
  std::vector<double> a = input;
  for (int l = 0; l < p.num_layers(); ++l) {
    const auto out = static_cast<size_t>(p.W[l].rows());
    std::vector<double> z(out, 0.0);
    for (size_t i = 0; i < out; ++i) {
      double acc = p.b[l](static_cast<Eigen::Index>(i), 0);
      for (size_t j = 0; j < a.size(); ++j)
        acc += p.W[l](static_cast<Eigen::Index>(i),
                      static_cast<Eigen::Index>(j)) *
               a[j];
      z[i] = acc;
    }
    if (l + 1 < p.num_layers()) {
      for (auto& v : z) v = v > 0.0 ? v : 0.0;
    } else if (p.out_act == OutputActivation::Tanh) {
      for (auto& v : z) v = std::tanh(v);
    }
    a = std::move(z);
  }
  return a;
}

double sigmoid_ref(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TEST_CASE("mlp_forward zero network maps anything to zero") {
  Rng rng(1);
  MlpParams p = make_mlp({3, 4, 2}, OutputActivation::Identity, rng);
  for (auto& w : p.W) w.setZero();
  Vec x(3);
  x << 1.5, -2.0, 0.25;
  REQUIRE(mlp_forward(p, x).isZero(0.0));
}

TEST_CASE("mlp_forward identity single layer") {
  Rng rng(1);
  MlpParams p = make_mlp({3, 3}, OutputActivation::Identity, rng);
  p.W[0] = Mat::Identity(3, 3);
  p.b[0].setZero();
  Vec x(3);
  x << 1, 2, 3;
  REQUIRE((mlp_forward(p, x) - x).norm() == 0.0);
}

TEST_CASE("mlp_forward matches an independent straight-line evaluator") {
  Rng rng(42);
  MlpParams p = make_mlp({5, 7, 4, 3}, OutputActivation::Identity, rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> xin(5);
    Vec x(5);
    for (int i = 0; i < 5; ++i) {
      xin[static_cast<size_t>(i)] = gauss(rng);
      x(i) = xin[static_cast<size_t>(i)];
    }
    const Vec got = mlp_forward(p, x);
    const auto want = naive_mlp_forward(p, xin);
    for (int i = 0; i < 3; ++i)
      REQUIRE(got(i) == Catch::Approx(want[static_cast<size_t>(i)]).margin(0.0).epsilon(1e-14));
  }
}

TEST_CASE("mlp_forward rejects input size mismatch") {
  Rng rng(1);
  MlpParams p = make_mlp({3, 2}, OutputActivation::Identity, rng);
  Vec x(4);
  x.setZero();
  REQUIRE_THROWS_AS(mlp_forward(p, x), std::invalid_argument);
}

TEST_CASE("mlp forward is deterministic for a fixed seed") {
  Rng rng1(99), rng2(99);
  MlpParams a = make_mlp(q_network_shape(), OutputActivation::Identity, rng1);
  MlpParams b = make_mlp(q_network_shape(), OutputActivation::Identity, rng2);
  Vec x(3);
  x << 0.3, -1.2, 2.0;
  const Vec ya = mlp_forward(a, x);
  const Vec yb = mlp_forward(b, x);
  REQUIRE(std::memcmp(ya.data(), yb.data(), sizeof(double) * 2) == 0);
}

TEST_CASE("lstm_cell zero params, zero cell gives zero hidden") {
  Rng rng(1);
  LstmCellParams p = make_lstm_cell(3, 4, rng);
  p.W.setZero();
  p.b.setZero();
  Vec x(3), h(4), c(4);
  x << 1, -2, 3;
  h.setZero();
  c.setZero();
  auto [hn, cn] = lstm_step(p, x, h, c);
  REQUIRE(hn.isZero(0.0));
  REQUIRE(cn.isZero(0.0));
}

TEST_CASE("lstm hidden stays strictly inside (-1,1)") {
  Rng rng(7);
  LstmCellParams p = make_lstm_cell(3, 16, rng);
  std::normal_distribution<double> gauss(0.0, 2.0);
  Vec h = Vec::Zero(16), c = Vec::Zero(16);
  for (int t = 0; t < 200; ++t) {
    Vec x(3);
    for (int i = 0; i < 3; ++i) x(i) = gauss(rng);
    std::tie(h, c) = lstm_step(p, x, h, c);
    REQUIRE(h.array().abs().maxCoeff() < 1.0);
    REQUIRE(c.allFinite());
  }
}

TEST_CASE("lstm_cell matches an independent gate-by-gate evaluation") {
  Rng rng(13);
  const int in = 3, H = 5;
  LstmCellParams p = make_lstm_cell(in, H, rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec x(in), h(H), c(H);
  for (int i = 0; i < in; ++i) x(i) = gauss(rng);
  for (int i = 0; i < H; ++i) {
    h(i) = 0.5 * gauss(rng);
    c(i) = gauss(rng);
  }
  auto [hn, cn] = lstm_step(p, x, h, c);
  for (int r = 0; r < H; ++r) {
    double zi = p.b(r, 0), zf = p.b(H + r, 0), zg = p.b(2 * H + r, 0),
           zo = p.b(3 * H + r, 0);
    for (int j = 0; j < in; ++j) {
      zi += p.W(r, j) * x(j);
      zf += p.W(H + r, j) * x(j);
      zg += p.W(2 * H + r, j) * x(j);
      zo += p.W(3 * H + r, j) * x(j);
    }
    for (int j = 0; j < H; ++j) {
      zi += p.W(r, in + j) * h(j);
      zf += p.W(H + r, in + j) * h(j);
      zg += p.W(2 * H + r, in + j) * h(j);
      zo += p.W(3 * H + r, in + j) * h(j);
    }
    const double ci = sigmoid_ref(zf) * c(r) + sigmoid_ref(zi) * std::tanh(zg);
    const double hi = sigmoid_ref(zo) * std::tanh(ci);
    REQUIRE(cn(r) == Catch::Approx(ci).epsilon(1e-13));
    REQUIRE(hn(r) == Catch::Approx(hi).epsilon(1e-13));
  }
}

TEST_CASE("lstm_cell rejects dimension mismatch") {
  Rng rng(1);
  LstmCellParams p = make_lstm_cell(3, 4, rng);
  Vec x(2), h(4), c(4);
  x.setZero();
  h.setZero();
  c.setZero();
  REQUIRE_THROWS_AS(lstm_step(p, x, h, c), std::invalid_argument);
}

TEST_CASE("value_and_grad: zero network, half squared norm loss") {
  Rng rng(1);
  MlpParams p = make_mlp({3, 4, 2}, OutputActivation::Identity, rng);
  for (auto& w : p.W) w.setZero();
  Mat X = testutil::random_mat(3, 5, rng);
  auto [loss, grads] = mlp_value_and_grad(p, X, [](const Mat& y) {
    return std::make_pair(0.5 * y.squaredNorm(), Mat(y));
  });
  REQUIRE(loss == 0.0);
  for (const auto& g : grads.dW) REQUIRE(g.isZero(0.0));
  for (const auto& g : grads.db) REQUIRE(g.isZero(0.0));
}

TEST_CASE("value_and_grad: closed-form least squares gradient") {
  // single linear layer, quadratic loss: dW = (Wx+b-t) x^T summed over batch
  Rng rng(3);
  MlpParams p = make_mlp({4, 2}, OutputActivation::Identity, rng);
  Mat X = testutil::random_mat(4, 6, rng);
  Mat T = testutil::random_mat(2, 6, rng);
  auto [loss, grads] = mlp_value_and_grad(p, X, [&](const Mat& y) {
    Mat d = y - T;
    return std::make_pair(0.5 * d.squaredNorm(), d);
  });
  const Mat resid = p.W[0] * X + p.b[0].col(0).replicate(1, 6) - T;
  REQUIRE((grads.dW[0] - resid * X.transpose()).norm() < 1e-12);
  REQUIRE((grads.db[0] - Mat(resid.rowwise().sum())).norm() < 1e-12);
  REQUIRE(loss == Catch::Approx(0.5 * resid.squaredNorm()));
}

TEST_CASE("value_and_grad: finite differences on a random small mlp") {
  Rng rng(11);
  for (OutputActivation act :
       {OutputActivation::Identity, OutputActivation::Tanh}) {
    MlpParams p = make_mlp({4, 6, 5, 2}, act, rng);
    Mat X = testutil::random_mat(4, 3, rng);
    Mat T = testutil::random_mat(2, 3, rng);
    auto loss_fn = [&]() {
      const Mat y = mlp_forward(p, X);
      return 0.5 * (y - T).squaredNorm();
    };
    auto [loss, grads] = mlp_value_and_grad(p, X, [&](const Mat& y) {
      return std::make_pair(0.5 * (y - T).squaredNorm(), Mat(y - T));
    });
    (void)loss;
    const double err = testutil::max_rel_grad_err(
        param_refs(p), grads_as_list(std::move(grads)), loss_fn, 25, rng);
    REQUIRE(err <= 1e-4);
  }
}

TEST_CASE("value_and_grad: finite differences through one lstm step") {
  Rng rng(17);
  LstmCellParams p = make_lstm_cell(3, 6, rng);
  Mat X = testutil::random_mat(3, 4, rng);
  Mat H0 = 0.3 * testutil::random_mat(6, 4, rng);
  Mat C0 = testutil::random_mat(6, 4, rng);
  auto loss_fn = [&]() {
    auto [h, c] = lstm_step(p, X, H0, C0);
    return 0.5 * h.squaredNorm() + 0.25 * c.squaredNorm();
  };
  LstmStepCache cache;
  auto [h, c] = lstm_step(p, X, H0, C0, &cache);
  LstmGrads g = zero_grads(p);
  lstm_step_backward(p, cache, h, 0.5 * c, g);
  const double err = testutil::max_rel_grad_err(
      param_refs(p), {g.dW, g.db}, loss_fn, 25, rng);
  REQUIRE(err <= 1e-4);
}

TEST_CASE("value_and_grad rejects non-finite loss") {
  Rng rng(1);
  MlpParams p = make_mlp({2, 2}, OutputActivation::Identity, rng);
  Mat X = Mat::Zero(2, 1);
  REQUIRE_THROWS_AS(mlp_value_and_grad(p, X,
                                       [](const Mat&) {
                                         return std::make_pair(
                                             std::nan(""), Mat::Zero(2, 1).eval());
                                       }),
                    std::runtime_error);
}

TEST_CASE("adam: zero gradients leave parameters unchanged, moments decay") {
  Rng rng(5);
  MlpParams p = make_mlp({3, 2}, OutputActivation::Identity, rng);
  auto refs = param_refs(p);
  AdamState s = make_adam(refs, 1e-3);
  s.m[0].setConstant(0.5);
  s.v[0].setConstant(0.25);
  const Mat w_before = p.W[0];
  std::vector<Mat> zeros = {Mat::Zero(2, 3), Mat::Zero(2, 1)};
  adam_step(s, refs, zeros);
  // m decays toward zero, parameters shift only by the decayed-moment term
  REQUIRE(s.m[0](0, 0) == Catch::Approx(0.45));
  REQUIRE(s.v[0](0, 0) == Catch::Approx(0.25 * 0.999));
  REQUIRE(s.step == 1);
  // fresh state: a zero gradient must not move parameters at all
  AdamState s2 = make_adam(refs, 1e-3);
  const Mat w0 = p.W[0];
  adam_step(s2, refs, zeros);
  REQUIRE((p.W[0] - w0).norm() == 0.0);
  (void)w_before;
}

TEST_CASE("adam: first step has magnitude ~lr per coordinate") {
  Rng rng(5);
  MlpParams p = make_mlp({2, 1}, OutputActivation::Identity, rng);
  p.W[0] << 1.0, -2.0;
  auto refs = param_refs(p);
  AdamState s = make_adam(refs, 1e-3);
  Mat g(1, 2);
  g << 0.3, -0.7;
  adam_step(s, refs, {g, Mat::Zero(1, 1)});
  // bias-corrected first step: -lr * g / (|g| + eps)
  REQUIRE(p.W[0](0, 0) ==
          Catch::Approx(1.0 - 1e-3 * 0.3 / (0.3 + 1e-8)).epsilon(1e-10));
  REQUIRE(p.W[0](0, 1) ==
          Catch::Approx(-2.0 + 1e-3 * 0.7 / (0.7 + 1e-8)).epsilon(1e-10));
}

TEST_CASE("adam: two identical steps match a scalar reference computation") {
  Rng rng(5);
  MlpParams p = make_mlp({1, 1}, OutputActivation::Identity, rng);
  p.W[0](0, 0) = 0.0;
  auto refs = param_refs(p);
  AdamState s = make_adam(refs, 0.01);
  Mat g(1, 1);
  g << 2.0;
  adam_step(s, refs, {g, Mat::Zero(1, 1)});
  adam_step(s, refs, {g, Mat::Zero(1, 1)});

  // independent scalar recomputation
  double theta = 0.0, m = 0.0, v = 0.0;
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8, grad = 2.0;
  for (int t = 1; t <= 2; ++t) {
    m = b1 * m + (1 - b1) * grad;
    v = b2 * v + (1 - b2) * grad * grad;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    theta -= lr * mh / (std::sqrt(vh) + eps);
  }
  REQUIRE(p.W[0](0, 0) == Catch::Approx(theta).epsilon(1e-14));
}

TEST_CASE("adam rejects non-finite gradients") {
  Rng rng(5);
  MlpParams p = make_mlp({2, 1}, OutputActivation::Identity, rng);
  auto refs = param_refs(p);
  AdamState s = make_adam(refs);
  Mat g(1, 2);
  g << std::nan(""), 0.0;
  REQUIRE_THROWS_AS(adam_step(s, refs, {g, Mat::Zero(1, 1)}),
                    std::runtime_error);
}

TEST_CASE("global norm clip rescales exactly to the bound") {
  std::vector<Mat> grads = {Mat::Constant(2, 2, 3.0), Mat::Constant(1, 4, -4.0)};
  const double norm = global_norm(grads);
  REQUIRE(norm == Catch::Approx(std::sqrt(4 * 9.0 + 4 * 16.0)));
  clip_global_norm(grads, 5.0);
  REQUIRE(global_norm(grads) == Catch::Approx(5.0));
  clip_global_norm(grads, 50.0);  // below the bound: untouched
  REQUIRE(global_norm(grads) == Catch::Approx(5.0));
}

TEST_CASE("checkpoint round-trips mlp parameters bit-exactly") {
  Rng rng(23);
  MlpParams p = make_mlp({3, 5, 2}, OutputActivation::Tanh, rng);
  const std::string path = "ckpt_test_mlp.json";
  save_checkpoint(path, "mlp", mlp_to_json(p));
  MlpParams q = mlp_from_json(load_checkpoint(path, "mlp"));
  REQUIRE(q.layer_sizes == p.layer_sizes);
  REQUIRE(q.out_act == p.out_act);
  for (size_t l = 0; l < p.W.size(); ++l) {
    REQUIRE(std::memcmp(q.W[l].data(), p.W[l].data(),
                        sizeof(double) * static_cast<size_t>(p.W[l].size())) == 0);
    REQUIRE(std::memcmp(q.b[l].data(), p.b[l].data(),
                        sizeof(double) * static_cast<size_t>(p.b[l].size())) == 0);
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint rejects kind mismatch") {
  Rng rng(23);
  MlpParams p = make_mlp({2, 2}, OutputActivation::Identity, rng);
  const std::string path = "ckpt_test_kind.json";
  save_checkpoint(path, "mlp", mlp_to_json(p));
  REQUIRE_THROWS_AS(load_checkpoint(path, "sfr"), std::runtime_error);
  std::remove(path.c_str());
}
