#pragma once

#include <utility>
#include <vector>

#include "wcsim/common.hpp"

namespace wcsim::nn {

/// One LSTM cell. Gate weights are stored stacked as W (4H, in+H) acting on
/// [x; h], gate order: input, forget, cell candidate, output.
struct LstmCellParams {
  int input_size = 0;
  int hidden_size = 0;
  Mat W;
  Mat b;
};

/// Uniform init like the dense layers; forget-gate bias starts at 1.
inline LstmCellParams make_lstm_cell(int input_size, int hidden_size,
                                     Rng& rng) {
  require(input_size > 0 && hidden_size > 0,
          "lstm cell sizes must be positive");
  LstmCellParams p;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  const int in = input_size + hidden_size;
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  p.W = Mat(4 * hidden_size, in);
  for (int i = 0; i < p.W.rows(); ++i)
    for (int j = 0; j < p.W.cols(); ++j) p.W(i, j) = u(rng);
  p.b = Mat::Zero(4 * hidden_size, 1);
  p.b.block(hidden_size, 0, hidden_size, 1).setOnes();
  return p;
}

inline std::vector<Mat*> param_refs(LstmCellParams& p) {
  return {&p.W, &p.b};
}

inline Mat sigmoid(const Mat& z) {
  return (1.0 / (1.0 + (-z.array()).exp())).matrix();
}

struct LstmStepCache {
  Mat xh;      // (in+H, B)
  Mat i, f, g, o;
  Mat c_prev;
  Mat tc;      // tanh(c_next)
};

/// Batched cell step: X (in, B), H/C (hidden, B). Returns (h_next, c_next).
inline std::pair<Mat, Mat> lstm_step(const LstmCellParams& p, const Mat& X,
                                     const Mat& H, const Mat& C,
                                     LstmStepCache* cache = nullptr) {
  require(X.rows() == p.input_size, "lstm_step: input size mismatch");
  require(H.rows() == p.hidden_size && C.rows() == p.hidden_size,
          "lstm_step: hidden size mismatch");
  require(X.cols() == H.cols() && X.cols() == C.cols(),
          "lstm_step: batch size mismatch");
  const int Hn = p.hidden_size;
  const auto B = X.cols();
  Mat xh(p.input_size + Hn, B);
  xh.topRows(p.input_size) = X;
  xh.bottomRows(Hn) = H;
  Mat z = p.W * xh;
  z.colwise() += p.b.col(0);
  Mat i = sigmoid(z.topRows(Hn));
  Mat f = sigmoid(z.middleRows(Hn, Hn));
  Mat g = z.middleRows(2 * Hn, Hn).array().tanh();
  Mat o = sigmoid(z.bottomRows(Hn));
  Mat c_next = (f.array() * C.array() + i.array() * g.array()).matrix();
  Mat tc = c_next.array().tanh();
  Mat h_next = (o.array() * tc.array()).matrix();
  if (cache) {
    cache->xh = std::move(xh);
    cache->i = std::move(i);
    cache->f = std::move(f);
    cache->g = std::move(g);
    cache->o = std::move(o);
    cache->c_prev = C;
    cache->tc = std::move(tc);
  }
  return {std::move(h_next), std::move(c_next)};
}

/// Single-sample convenience wrapper.
inline std::pair<Vec, Vec> lstm_step(const LstmCellParams& p, const Vec& x,
                                     const Vec& h, const Vec& c) {
  auto [hn, cn] = lstm_step(p, Mat(x), Mat(h), Mat(c));
  return {hn.col(0), cn.col(0)};
}

struct LstmGrads {
  Mat dW;
  Mat db;
};

inline LstmGrads zero_grads(const LstmCellParams& p) {
  return {Mat::Zero(p.W.rows(), p.W.cols()), Mat::Zero(p.b.rows(), 1)};
}

struct LstmStepBackResult {
  Mat dX;
  Mat dH;
  Mat dC;
};

/// Backward through one step. dH_next/dC_next are gradients flowing into the
/// step outputs; parameter gradients accumulate into `grads`.
inline LstmStepBackResult lstm_step_backward(const LstmCellParams& p,
                                             const LstmStepCache& cache,
                                             const Mat& dH_next,
                                             const Mat& dC_next,
                                             LstmGrads& grads) {
  const int Hn = p.hidden_size;
  const auto B = cache.xh.cols();
  Mat dO = (dH_next.array() * cache.tc.array()).matrix();
  Mat dC = (dC_next.array() +
            dH_next.array() * cache.o.array() *
                (1.0 - cache.tc.array().square()))
               .matrix();
  Mat dF = (dC.array() * cache.c_prev.array()).matrix();
  Mat dI = (dC.array() * cache.g.array()).matrix();
  Mat dG = (dC.array() * cache.i.array()).matrix();
  Mat dz(4 * Hn, B);
  dz.topRows(Hn) =
      (dI.array() * cache.i.array() * (1.0 - cache.i.array())).matrix();
  dz.middleRows(Hn, Hn) =
      (dF.array() * cache.f.array() * (1.0 - cache.f.array())).matrix();
  dz.middleRows(2 * Hn, Hn) =
      (dG.array() * (1.0 - cache.g.array().square())).matrix();
  dz.bottomRows(Hn) =
      (dO.array() * cache.o.array() * (1.0 - cache.o.array())).matrix();
  grads.dW.noalias() += dz * cache.xh.transpose();
  grads.db += dz.rowwise().sum();
  Mat dxh = p.W.transpose() * dz;
  LstmStepBackResult r;
  r.dX = dxh.topRows(p.input_size);
  r.dH = dxh.bottomRows(Hn);
  r.dC = (dC.array() * cache.f.array()).matrix();
  return r;
}

}  // namespace wcsim::nn
