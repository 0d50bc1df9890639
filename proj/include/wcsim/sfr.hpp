#pragma once

#include <utility>
#include <vector>

#include "wcsim/common.hpp"
#include "wcsim/env.hpp"
#include "wcsim/nn/adam.hpp"
#include "wcsim/nn/checkpoint.hpp"
#include "wcsim/nn/lstm.hpp"

namespace wcsim {

/// Receiver-side reconstructor: stacked LSTM encoder over the last T states,
/// decoder rolled out M steps from the encoder's final state with the last
/// encoder input fed at every step, and a linear head back to 3-D states.
/// States are normalized to [-1,1] by the sensor workspace bounds before the
/// encoder and denormalized after the head.
struct SfrModel {
  std::vector<nn::LstmCellParams> encoder;
  std::vector<nn::LstmCellParams> decoder;
  Mat head_W;
  Mat head_b;
  int T = 80;
  int M = 20;
  Vec3 norm_lo = Vec3::Zero();
  Vec3 norm_hi = Vec3::Zero();

  int hidden_size() const { return encoder.front().hidden_size; }
  int layers() const { return static_cast<int>(encoder.size()); }
};

inline SfrModel make_sfr_model(Rng& rng, int T = 80, int M = 20,
                               int hidden = 64, int layers = 3,
                               const WorkspaceBounds& bounds = {}) {
  require(T >= 1 && M >= 1, "sfr: T and M must be >= 1");
  require(layers >= 1 && hidden >= 1, "sfr: bad network size");
  SfrModel m;
  m.T = T;
  m.M = M;
  for (int l = 0; l < layers; ++l) {
    m.encoder.push_back(nn::make_lstm_cell(l == 0 ? 3 : hidden, hidden, rng));
    m.decoder.push_back(nn::make_lstm_cell(l == 0 ? 3 : hidden, hidden, rng));
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> u(-bound, bound);
  m.head_W = Mat(3, hidden);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < hidden; ++j) m.head_W(i, j) = u(rng);
  m.head_b = Mat::Zero(3, 1);
  m.norm_lo = bounds.xt_lo;
  m.norm_hi = bounds.xt_hi;
  return m;
}

inline std::vector<Mat*> param_refs(SfrModel& m) {
  std::vector<Mat*> refs;
  for (auto& c : m.encoder) {
    refs.push_back(&c.W);
    refs.push_back(&c.b);
  }
  for (auto& c : m.decoder) {
    refs.push_back(&c.W);
    refs.push_back(&c.b);
  }
  refs.push_back(&m.head_W);
  refs.push_back(&m.head_b);
  return refs;
}

inline Mat sfr_normalize(const SfrModel& m, const Mat& x_mm) {
  Mat out(x_mm.rows(), x_mm.cols());
  for (int j = 0; j < 3; ++j) {
    const double range = m.norm_hi[j] - m.norm_lo[j];
    out.row(j) = 2.0 * (x_mm.row(j).array() - m.norm_lo[j]) / range - 1.0;
  }
  return out;
}

inline Mat sfr_denormalize(const SfrModel& m, const Mat& x_norm) {
  Mat out(x_norm.rows(), x_norm.cols());
  for (int j = 0; j < 3; ++j) {
    const double range = m.norm_hi[j] - m.norm_lo[j];
    out.row(j) = m.norm_lo[j] + (x_norm.row(j).array() + 1.0) * 0.5 * range;
  }
  return out;
}

/// Per-layer hidden and cell states, one column per batch sample.
struct SfrState {
  std::vector<Mat> h;
  std::vector<Mat> c;
};

inline SfrState sfr_zero_state(const SfrModel& m, Eigen::Index batch) {
  SfrState s;
  for (int l = 0; l < m.layers(); ++l) {
    s.h.push_back(Mat::Zero(m.hidden_size(), batch));
    s.c.push_back(Mat::Zero(m.hidden_size(), batch));
  }
  return s;
}

/// steps[t] is the (3, batch) input at time t. Caches are stored per
/// (step, layer) when given.
inline SfrState sfr_encode_steps(
    const SfrModel& m, const std::vector<Mat>& steps,
    std::vector<std::vector<nn::LstmStepCache>>* caches = nullptr) {
  require(!steps.empty(), "sfr_encode: empty sequence");
  SfrState s = sfr_zero_state(m, steps.front().cols());
  if (caches) caches->assign(steps.size(), {});
  for (size_t t = 0; t < steps.size(); ++t) {
    if (caches) (*caches)[t].resize(m.encoder.size());
    const Mat* input = &steps[t];
    for (size_t l = 0; l < m.encoder.size(); ++l) {
      auto [h, c] =
          nn::lstm_step(m.encoder[l], *input, s.h[l], s.c[l],
                        caches ? &(*caches)[t][l] : nullptr);
      s.h[l] = std::move(h);
      s.c[l] = std::move(c);
      input = &s.h[l];
    }
  }
  return s;
}

/// Encodes a (3, T) sequence (one column per time step, already in the
/// network's input domain).
inline SfrState sfr_encode(const SfrModel& m, const Mat& sequence) {
  require(sequence.rows() == 3, "sfr_encode: sequence must have 3 rows");
  require(sequence.cols() == m.T,
          "sfr_encode: sequence length must equal T");
  require(sequence.allFinite(), "sfr_encode: non-finite input");
  std::vector<Mat> steps;
  steps.reserve(static_cast<size_t>(m.T));
  for (int t = 0; t < m.T; ++t) steps.push_back(sequence.col(t));
  return sfr_encode_steps(m, steps);
}

struct SfrDecodeTrace {
  std::vector<std::vector<nn::LstmStepCache>> caches;  // [step][layer]
  std::vector<Mat> top_hidden;                         // (H, B) per step
};

/// Rolls the decoder `steps` times from `init`, feeding `last_input` at every
/// step, and applies the head. Returns (3, steps) predictions per sample
/// stacked as a vector of (3, batch) step outputs.
inline std::vector<Mat> sfr_decode_steps(const SfrModel& m,
                                         const SfrState& init,
                                         const Mat& last_input, int steps,
                                         SfrDecodeTrace* trace = nullptr) {
  require(steps >= 1, "sfr_decode: steps must be >= 1");
  SfrState s = init;
  std::vector<Mat> outputs;
  if (trace) trace->caches.assign(static_cast<size_t>(steps), {});
  for (int j = 0; j < steps; ++j) {
    if (trace) trace->caches[static_cast<size_t>(j)].resize(m.decoder.size());
    const Mat* input = &last_input;
    for (size_t l = 0; l < m.decoder.size(); ++l) {
      auto [h, c] = nn::lstm_step(
          m.decoder[l], *input, s.h[l], s.c[l],
          trace ? &trace->caches[static_cast<size_t>(j)][l] : nullptr);
      s.h[l] = std::move(h);
      s.c[l] = std::move(c);
      input = &s.h[l];
    }
    if (trace) trace->top_hidden.push_back(s.h.back());
    Mat y = m.head_W * s.h.back();
    y.colwise() += m.head_b.col(0);
    outputs.push_back(std::move(y));
  }
  return outputs;
}

/// Single-sample decode: returns (3, steps).
inline Mat sfr_decode(const SfrModel& m, const SfrState& init,
                      const Vec3& last_input, int steps) {
  auto outs = sfr_decode_steps(m, init, Mat(last_input), steps);
  Mat result(3, steps);
  for (int j = 0; j < steps; ++j) result.col(j) = outs[static_cast<size_t>(j)];
  return result;
}

/// Ring buffer of the last `capacity` receiver-side states (mm).
class RxHistory {
 public:
  explicit RxHistory(int capacity) : cap_(capacity) {
    require(capacity >= 1, "RxHistory: capacity must be >= 1");
    buf_.resize(static_cast<size_t>(capacity), Vec3::Zero());
  }

  void push(const Vec3& x) {
    buf_[head_] = x;
    head_ = (head_ + 1) % buf_.size();
    if (fill_ < cap_) ++fill_;
  }

  int fill() const { return fill_; }
  bool full() const { return fill_ == cap_; }
  int capacity() const { return cap_; }

  Vec3 last() const {
    require(fill_ > 0, "RxHistory: empty");
    return buf_[(head_ + buf_.size() - 1) % buf_.size()];
  }

  /// Oldest-to-newest window, (3, capacity). Requires a full buffer.
  Mat window() const {
    require(full(), "RxHistory: window requested before buffer is full");
    Mat w(3, cap_);
    for (int k = 0; k < cap_; ++k)
      w.col(k) = buf_[(head_ + static_cast<size_t>(k)) % buf_.size()];
    return w;
  }

 private:
  int cap_;
  int fill_ = 0;
  size_t head_ = 0;
  std::vector<Vec3> buf_;
};

/// One-step prediction used when no packet arrives: encode the last T
/// receiver states and take the first decoder output.
inline Vec3 predict_next(const SfrModel& m, const RxHistory& history) {
  if (history.fill() < m.T)
    throw std::runtime_error(
        "predict_next: history not full; hold the last received value");
  require(history.capacity() == m.T,
          "predict_next: history capacity must equal T");
  const Mat window = sfr_normalize(m, history.window());
  const SfrState state = sfr_encode(m, window);
  const Vec3 last = window.col(m.T - 1);
  const Mat y = sfr_decode(m, state, last, 1);
  return sfr_denormalize(m, y).col(0);
}

/// Mean of squared per-entry differences over the prediction horizon.
inline double sfr_sequence_loss(const Mat& s_out, const Mat& s_tar) {
  require(s_out.rows() == s_tar.rows() && s_out.cols() == s_tar.cols(),
          "sfr_sequence_loss: shape mismatch");
  return (s_out - s_tar).array().square().mean();
}

/// Full forward/backward over a batch of windows. Encoder inputs and targets
/// are in mm; normalization happens inside so the loss is in mm^2. Gradients
/// are returned in param_refs order.
inline double sfr_loss_and_grad(const SfrModel& m,
                                const std::vector<Mat>& enc_steps_mm,
                                const std::vector<Mat>& target_steps_mm,
                                std::vector<Mat>& grads_out) {
  require(static_cast<int>(enc_steps_mm.size()) == m.T,
          "sfr_loss_and_grad: encoder window must have T steps");
  require(static_cast<int>(target_steps_mm.size()) == m.M,
          "sfr_loss_and_grad: target must have M steps");
  const auto B = enc_steps_mm.front().cols();
  std::vector<Mat> enc_steps(enc_steps_mm.size());
  for (size_t t = 0; t < enc_steps_mm.size(); ++t)
    enc_steps[t] = sfr_normalize(m, enc_steps_mm[t]);

  std::vector<std::vector<nn::LstmStepCache>> enc_caches;
  const SfrState enc_final = sfr_encode_steps(m, enc_steps, &enc_caches);
  const Mat last_input = enc_steps.back();
  SfrDecodeTrace dec_trace;
  std::vector<Mat> outputs_norm =
      sfr_decode_steps(m, enc_final, last_input, m.M, &dec_trace);

  const int L = m.layers();
  const int Hn = m.hidden_size();
  double loss = 0.0;
  const double denom = static_cast<double>(m.M) * 3.0 * static_cast<double>(B);

  std::vector<nn::LstmGrads> enc_g, dec_g;
  for (int l = 0; l < L; ++l) {
    enc_g.push_back(nn::zero_grads(m.encoder[static_cast<size_t>(l)]));
    dec_g.push_back(nn::zero_grads(m.decoder[static_cast<size_t>(l)]));
  }
  Mat dhead_W = Mat::Zero(3, Hn);
  Mat dhead_b = Mat::Zero(3, 1);

  // backward through the decoder, newest step first
  std::vector<Mat> dH(static_cast<size_t>(L)), dC(static_cast<size_t>(L));
  for (int l = 0; l < L; ++l) {
    dH[static_cast<size_t>(l)] = Mat::Zero(Hn, B);
    dC[static_cast<size_t>(l)] = Mat::Zero(Hn, B);
  }
  for (int j = m.M - 1; j >= 0; --j) {
    const Mat y_mm = sfr_denormalize(m, outputs_norm[static_cast<size_t>(j)]);
    const Mat diff = y_mm - target_steps_mm[static_cast<size_t>(j)];
    loss += diff.array().square().sum();
    // d(mm)/d(norm) is half the axis range
    Mat dy_norm(3, B);
    for (int ax = 0; ax < 3; ++ax)
      dy_norm.row(ax) = diff.row(ax) *
                        (2.0 / denom) * 0.5 * (m.norm_hi[ax] - m.norm_lo[ax]);
    dhead_W.noalias() +=
        dy_norm * dec_trace.top_hidden[static_cast<size_t>(j)].transpose();
    dhead_b += dy_norm.rowwise().sum();
    dH[static_cast<size_t>(L - 1)].noalias() += m.head_W.transpose() * dy_norm;
    for (int l = L - 1; l >= 0; --l) {
      auto res = nn::lstm_step_backward(
          m.decoder[static_cast<size_t>(l)],
          dec_trace.caches[static_cast<size_t>(j)][static_cast<size_t>(l)],
          dH[static_cast<size_t>(l)], dC[static_cast<size_t>(l)],
          dec_g[static_cast<size_t>(l)]);
      dH[static_cast<size_t>(l)] = std::move(res.dH);
      dC[static_cast<size_t>(l)] = std::move(res.dC);
      if (l > 0) dH[static_cast<size_t>(l - 1)] += res.dX;
      // res.dX at layer 0 is the gradient on the constant decoder input
    }
  }
  // state handoff, then backward through the encoder
  for (int t = m.T - 1; t >= 0; --t) {
    for (int l = L - 1; l >= 0; --l) {
      auto res = nn::lstm_step_backward(
          m.encoder[static_cast<size_t>(l)],
          enc_caches[static_cast<size_t>(t)][static_cast<size_t>(l)],
          dH[static_cast<size_t>(l)], dC[static_cast<size_t>(l)],
          enc_g[static_cast<size_t>(l)]);
      dH[static_cast<size_t>(l)] = std::move(res.dH);
      dC[static_cast<size_t>(l)] = std::move(res.dC);
      if (l > 0) dH[static_cast<size_t>(l - 1)] += res.dX;
    }
  }

  grads_out.clear();
  for (int l = 0; l < L; ++l) {
    grads_out.push_back(std::move(enc_g[static_cast<size_t>(l)].dW));
    grads_out.push_back(std::move(enc_g[static_cast<size_t>(l)].db));
  }
  for (int l = 0; l < L; ++l) {
    grads_out.push_back(std::move(dec_g[static_cast<size_t>(l)].dW));
    grads_out.push_back(std::move(dec_g[static_cast<size_t>(l)].db));
  }
  grads_out.push_back(std::move(dhead_W));
  grads_out.push_back(std::move(dhead_b));
  return loss / denom;
}

struct SfrTrainConfig {
  int iters = 3000;
  int batch = 32;
  double lr = 1e-3;
  double lr_end = 0.0;        // > 0: geometric decay from lr to lr_end
  double noise_sigma2 = 0.0;  // mm^2 per axis, applied to the encoder window
  double clip_norm = 10.0;
  uint64_t seed = 1;
  int T = 80;
  int M = 20;
  int hidden = 64;
  int layers = 3;
};

/// Samples windows of length T+M from the corpus, perturbs the encoder
/// segment with status noise, and minimizes the horizon MSE.
inline SfrModel train_sfr(const std::vector<Mat>& corpus,
                          const SfrTrainConfig& cfg,
                          const WorkspaceBounds& bounds = {},
                          std::vector<double>* loss_history = nullptr) {
  const int window = cfg.T + cfg.M;
  std::vector<size_t> usable;
  for (size_t s = 0; s < corpus.size(); ++s) {
    require(corpus[s].rows() == 3, "train_sfr: sequences must have 3 rows");
    if (corpus[s].cols() >= window + 1) usable.push_back(s);
  }
  if (usable.empty())
    throw std::invalid_argument("train_sfr: corpus shorter than T + M + 1");

  Rng rng(cfg.seed);
  SfrModel model =
      make_sfr_model(rng, cfg.T, cfg.M, cfg.hidden, cfg.layers, bounds);
  nn::AdamState opt = nn::make_adam(param_refs(model), cfg.lr);
  std::uniform_int_distribution<size_t> useq(0, usable.size() - 1);
  std::normal_distribution<double> noise(
      0.0, cfg.noise_sigma2 > 0.0 ? std::sqrt(cfg.noise_sigma2) : 0.0);

  std::vector<Mat> enc_steps(static_cast<size_t>(cfg.T)),
      tar_steps(static_cast<size_t>(cfg.M));
  for (int it = 0; it < cfg.iters; ++it) {
    if (cfg.lr_end > 0.0 && cfg.iters > 1)
      opt.lr = cfg.lr * std::pow(cfg.lr_end / cfg.lr,
                                 static_cast<double>(it) / (cfg.iters - 1));
    for (auto& s : enc_steps) s = Mat(3, cfg.batch);
    for (auto& s : tar_steps) s = Mat(3, cfg.batch);
    for (int k = 0; k < cfg.batch; ++k) {
      const Mat& seq = corpus[usable[useq(rng)]];
      std::uniform_int_distribution<Eigen::Index> uoff(
          0, seq.cols() - window - 1);
      const Eigen::Index off = uoff(rng);
      for (int t = 0; t < cfg.T; ++t) {
        Vec3 x = seq.col(off + t);
        if (cfg.noise_sigma2 > 0.0)
          for (int ax = 0; ax < 3; ++ax) x[ax] += noise(rng);
        enc_steps[static_cast<size_t>(t)].col(k) = x;
      }
      for (int j = 0; j < cfg.M; ++j)
        tar_steps[static_cast<size_t>(j)].col(k) = seq.col(off + cfg.T + j);
    }
    std::vector<Mat> grads;
    const double loss = sfr_loss_and_grad(model, enc_steps, tar_steps, grads);
    if (!std::isfinite(loss))
      throw std::runtime_error("train_sfr: loss diverged");
    nn::clip_global_norm(grads, cfg.clip_norm);
    nn::adam_step(opt, param_refs(model), grads);
    if (loss_history) loss_history->push_back(loss);
  }
  return model;
}

inline void save_sfr_checkpoint(const SfrModel& m, const std::string& path) {
  nn::json payload;
  payload["T"] = m.T;
  payload["M"] = m.M;
  payload["encoder"] = nn::json::array();
  payload["decoder"] = nn::json::array();
  for (const auto& c : m.encoder) payload["encoder"].push_back(nn::lstm_to_json(c));
  for (const auto& c : m.decoder) payload["decoder"].push_back(nn::lstm_to_json(c));
  payload["head_W"] = nn::mat_to_json(m.head_W);
  payload["head_b"] = nn::mat_to_json(m.head_b);
  payload["norm_lo"] = std::vector<double>{m.norm_lo[0], m.norm_lo[1], m.norm_lo[2]};
  payload["norm_hi"] = std::vector<double>{m.norm_hi[0], m.norm_hi[1], m.norm_hi[2]};
  nn::save_checkpoint(path, "sfr", std::move(payload));
}

inline SfrModel load_sfr_checkpoint(const std::string& path) {
  const nn::json payload = nn::load_checkpoint(path, "sfr");
  SfrModel m;
  m.T = payload.at("T").get<int>();
  m.M = payload.at("M").get<int>();
  for (const auto& c : payload.at("encoder"))
    m.encoder.push_back(nn::lstm_from_json(c));
  for (const auto& c : payload.at("decoder"))
    m.decoder.push_back(nn::lstm_from_json(c));
  m.head_W = nn::mat_from_json(payload.at("head_W"));
  m.head_b = nn::mat_from_json(payload.at("head_b"));
  const auto lo = payload.at("norm_lo").get<std::vector<double>>();
  const auto hi = payload.at("norm_hi").get<std::vector<double>>();
  m.norm_lo = Vec3(lo[0], lo[1], lo[2]);
  m.norm_hi = Vec3(hi[0], hi[1], hi[2]);
  return m;
}

}  // namespace wcsim
