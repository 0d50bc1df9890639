#pragma once

#include <utility>
#include <vector>

#include "wcsim/common.hpp"

namespace wcsim::nn {

enum class OutputActivation { Identity, Tanh, Relu };

/// Fully-connected network: rectified-linear hidden layers, configurable
/// output activation. Weights are (out, in); one column per sample.
struct MlpParams {
  std::vector<int> layer_sizes;
  std::vector<Mat> W;
  std::vector<Mat> b;
  OutputActivation out_act = OutputActivation::Identity;

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  int num_layers() const { return static_cast<int>(W.size()); }
};

// Network shapes used throughout the system.
inline std::vector<int> mine_stats_shape() { return {6, 64, 128, 128, 64, 1}; }
inline std::vector<int> q_network_shape() { return {3, 64, 128, 128, 64, 2}; }
inline std::vector<int> actor_shape() { return {5, 64, 128, 128, 64, 1}; }
inline std::vector<int> critic_shape() { return {6, 64, 128, 128, 64, 1}; }

/// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)], zero biases.
inline MlpParams make_mlp(std::vector<int> sizes, OutputActivation out_act,
                          Rng& rng) {
  require(sizes.size() >= 2, "mlp needs at least input and output sizes");
  for (int s : sizes) require(s > 0, "mlp layer sizes must be positive");
  MlpParams p;
  p.layer_sizes = std::move(sizes);
  p.out_act = out_act;
  for (size_t l = 1; l < p.layer_sizes.size(); ++l) {
    const int in = p.layer_sizes[l - 1];
    const int out = p.layer_sizes[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Mat w(out, in);
    for (int i = 0; i < out; ++i)
      for (int j = 0; j < in; ++j) w(i, j) = u(rng);
    p.W.push_back(std::move(w));
    p.b.push_back(Mat::Zero(out, 1));
  }
  return p;
}

inline std::vector<Mat*> param_refs(MlpParams& p) {
  std::vector<Mat*> refs;
  for (size_t l = 0; l < p.W.size(); ++l) {
    refs.push_back(&p.W[l]);
    refs.push_back(&p.b[l]);
  }
  return refs;
}

inline void apply_activation(Mat& z, OutputActivation act) {
  switch (act) {
    case OutputActivation::Identity:
      break;
    case OutputActivation::Tanh:
      z = z.array().tanh();
      break;
    case OutputActivation::Relu:
      z = z.array().max(0.0);
      break;
  }
}

/// Forward pass; X is (input_size, batch).
inline Mat mlp_forward(const MlpParams& p, const Mat& X) {
  require(X.rows() == p.input_size(), "mlp_forward: input size mismatch");
  Mat a = X;
  const int L = p.num_layers();
  for (int l = 0; l < L; ++l) {
    Mat z = p.W[l] * a;
    z.colwise() += p.b[l].col(0);
    if (l + 1 < L) {
      z = z.array().max(0.0);  // ReLU, subgradient 0 at the kink
    } else {
      apply_activation(z, p.out_act);
    }
    a = std::move(z);
  }
  return a;
}

inline Vec mlp_forward(const MlpParams& p, const Vec& x) {
  return mlp_forward(p, Mat(x)).col(0);
}

/// acts[0] is the input; acts[l] the post-activation output of layer l.
struct MlpCache {
  std::vector<Mat> acts;
};

inline Mat mlp_forward_cached(const MlpParams& p, const Mat& X,
                              MlpCache& cache) {
  require(X.rows() == p.input_size(), "mlp_forward: input size mismatch");
  cache.acts.clear();
  cache.acts.push_back(X);
  const int L = p.num_layers();
  for (int l = 0; l < L; ++l) {
    Mat z = p.W[l] * cache.acts.back();
    z.colwise() += p.b[l].col(0);
    if (l + 1 < L) {
      z = z.array().max(0.0);
    } else {
      apply_activation(z, p.out_act);
    }
    cache.acts.push_back(std::move(z));
  }
  return cache.acts.back();
}

struct MlpGrads {
  std::vector<Mat> dW;
  std::vector<Mat> db;
};

inline MlpGrads zero_grads(const MlpParams& p) {
  MlpGrads g;
  for (size_t l = 0; l < p.W.size(); ++l) {
    g.dW.push_back(Mat::Zero(p.W[l].rows(), p.W[l].cols()));
    g.db.push_back(Mat::Zero(p.b[l].rows(), 1));
  }
  return g;
}

inline std::vector<Mat> grads_as_list(MlpGrads&& g) {
  std::vector<Mat> out;
  for (size_t l = 0; l < g.dW.size(); ++l) {
    out.push_back(std::move(g.dW[l]));
    out.push_back(std::move(g.db[l]));
  }
  return out;
}

/// Backprop. dY is the loss gradient at the output (out, batch); grads are
/// accumulated. Returns the gradient with respect to the input.
inline Mat mlp_backward(const MlpParams& p, const MlpCache& cache,
                        const Mat& dY, MlpGrads& grads) {
  const int L = p.num_layers();
  Mat dz = dY;
  const Mat& y = cache.acts.back();
  switch (p.out_act) {
    case OutputActivation::Identity:
      break;
    case OutputActivation::Tanh:
      dz = dz.array() * (1.0 - y.array().square());
      break;
    case OutputActivation::Relu:
      dz = dz.array() * (y.array() > 0.0).cast<double>();
      break;
  }
  for (int l = L - 1; l >= 0; --l) {
    grads.dW[l].noalias() += dz * cache.acts[l].transpose();
    grads.db[l] += dz.rowwise().sum();
    Mat da = p.W[l].transpose() * dz;
    if (l > 0) {
      dz = da.array() * (cache.acts[l].array() > 0.0).cast<double>();
    } else {
      return da;
    }
  }
  return {};
}

/// Evaluates loss_fn on the network output and backpropagates its gradient.
/// loss_fn maps the output (out, batch) to (loss value, dLoss/dOutput).
template <typename LossFn>
std::pair<double, MlpGrads> mlp_value_and_grad(const MlpParams& p,
                                               const Mat& X, LossFn&& loss_fn) {
  MlpCache cache;
  Mat y = mlp_forward_cached(p, X, cache);
  auto [loss, dY] = loss_fn(y);
  if (!std::isfinite(loss))
    throw std::runtime_error("mlp_value_and_grad: non-finite loss");
  MlpGrads grads = zero_grads(p);
  mlp_backward(p, cache, dY, grads);
  return {loss, std::move(grads)};
}

}  // namespace wcsim::nn
