#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "wcsim/nn/lstm.hpp"
#include "wcsim/nn/mlp.hpp"

namespace wcsim::nn {

using json = nlohmann::json;

inline json mat_to_json(const Mat& m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> flat(m.size());
  // row-major flattening
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      flat[static_cast<size_t>(r * m.cols() + c)] = m(r, c);
  j["data"] = flat;
  return j;
}

inline Mat mat_from_json(const json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const auto flat = j.at("data").get<std::vector<double>>();
  require(static_cast<Eigen::Index>(flat.size()) == rows * cols,
          "checkpoint: matrix payload size mismatch");
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = flat[static_cast<size_t>(r * cols + c)];
  return m;
}

inline json mlp_to_json(const MlpParams& p) {
  json j;
  j["layer_sizes"] = p.layer_sizes;
  switch (p.out_act) {
    case OutputActivation::Identity: j["out_act"] = "identity"; break;
    case OutputActivation::Tanh: j["out_act"] = "tanh"; break;
    case OutputActivation::Relu: j["out_act"] = "relu"; break;
  }
  j["W"] = json::array();
  j["b"] = json::array();
  for (size_t l = 0; l < p.W.size(); ++l) {
    j["W"].push_back(mat_to_json(p.W[l]));
    j["b"].push_back(mat_to_json(p.b[l]));
  }
  return j;
}

inline MlpParams mlp_from_json(const json& j) {
  MlpParams p;
  p.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  const std::string act = j.at("out_act").get<std::string>();
  if (act == "identity") p.out_act = OutputActivation::Identity;
  else if (act == "tanh") p.out_act = OutputActivation::Tanh;
  else if (act == "relu") p.out_act = OutputActivation::Relu;
  else throw std::runtime_error("checkpoint: unknown activation " + act);
  for (const auto& w : j.at("W")) p.W.push_back(mat_from_json(w));
  for (const auto& b : j.at("b")) p.b.push_back(mat_from_json(b));
  require(p.W.size() + 1 == p.layer_sizes.size() && p.W.size() == p.b.size(),
          "checkpoint: inconsistent mlp layer count");
  return p;
}

inline json lstm_to_json(const LstmCellParams& p) {
  json j;
  j["input_size"] = p.input_size;
  j["hidden_size"] = p.hidden_size;
  j["W"] = mat_to_json(p.W);
  j["b"] = mat_to_json(p.b);
  return j;
}

inline LstmCellParams lstm_from_json(const json& j) {
  LstmCellParams p;
  p.input_size = j.at("input_size").get<int>();
  p.hidden_size = j.at("hidden_size").get<int>();
  p.W = mat_from_json(j.at("W"));
  p.b = mat_from_json(j.at("b"));
  require(p.W.rows() == 4 * p.hidden_size &&
              p.W.cols() == p.input_size + p.hidden_size,
          "checkpoint: lstm weight shape mismatch");
  return p;
}

constexpr int kCheckpointVersion = 1;

/// Wraps a payload with format/version tags and writes it to disk.
inline void save_checkpoint(const std::string& path, const std::string& kind,
                            json payload) {
  json j;
  j["format"] = "wcsim-checkpoint";
  j["version"] = kCheckpointVersion;
  j["kind"] = kind;
  j["payload"] = std::move(payload);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open checkpoint for write: " + path);
  out << j.dump();
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

inline json load_checkpoint(const std::string& path,
                            const std::string& expected_kind) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  json j = json::parse(in);
  if (j.value("format", "") != "wcsim-checkpoint")
    throw std::runtime_error("not a wcsim checkpoint: " + path);
  if (j.value("version", -1) != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  if (j.value("kind", "") != expected_kind)
    throw std::runtime_error("checkpoint kind mismatch in " + path +
                             " (expected " + expected_kind + ")");
  return j.at("payload");
}

}  // namespace wcsim::nn
