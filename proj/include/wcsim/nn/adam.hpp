#pragma once

#include <vector>

#include "wcsim/common.hpp"

namespace wcsim::nn {

/// Adam with bias correction. Moment buffers mirror the parameter list they
/// were created from; `step` counts applied updates.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Mat> m;
  std::vector<Mat> v;
};

inline AdamState make_adam(const std::vector<Mat*>& params, double lr = 1e-3) {
  AdamState s;
  s.lr = lr;
  for (const Mat* p : params) {
    s.m.push_back(Mat::Zero(p->rows(), p->cols()));
    s.v.push_back(Mat::Zero(p->rows(), p->cols()));
  }
  return s;
}

inline double global_norm(const std::vector<Mat>& grads) {
  double sq = 0.0;
  for (const Mat& g : grads) sq += g.squaredNorm();
  return std::sqrt(sq);
}

inline void clip_global_norm(std::vector<Mat>& grads, double max_norm) {
  const double n = global_norm(grads);
  if (n > max_norm && n > 0.0) {
    const double scale = max_norm / n;
    for (Mat& g : grads) g *= scale;
  }
}

inline void adam_step(AdamState& s, const std::vector<Mat*>& params,
                      const std::vector<Mat>& grads) {
  require(params.size() == s.m.size() && grads.size() == s.m.size(),
          "adam_step: parameter/gradient count mismatch");
  for (size_t k = 0; k < grads.size(); ++k) {
    require(params[k]->rows() == grads[k].rows() &&
                params[k]->cols() == grads[k].cols(),
            "adam_step: gradient shape mismatch");
    if (!grads[k].allFinite())
      throw std::runtime_error("adam_step: non-finite gradient");
  }
  s.step += 1;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (size_t k = 0; k < grads.size(); ++k) {
    s.m[k] = s.beta1 * s.m[k] + (1.0 - s.beta1) * grads[k];
    s.v[k] = (s.beta2 * s.v[k].array() +
              (1.0 - s.beta2) * grads[k].array().square())
                 .matrix();
    Mat m_hat = s.m[k] / bc1;
    Mat v_hat = s.v[k] / bc2;
    params[k]->array() -=
        s.lr * m_hat.array() / (v_hat.array().sqrt() + s.eps);
  }
}

}  // namespace wcsim::nn
