#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "lsnn/errors.hpp"
#include "lsnn/network.hpp"

namespace lsnn {

// Snapshot: {arch: {input_dim, widths}, linear: [...], layers: [{weights, biases}]}.
// nlohmann::json prints doubles in shortest round-trip form, so load(save(p)) == p bitwise.
inline nlohmann::json params_to_json(const NetworkParams& p) {
  nlohmann::json j;
  j["arch"] = {{"input_dim", p.arch.input_dim}, {"widths", p.arch.hidden_widths}};
  j["linear"] = std::vector<double>(p.linear.data(), p.linear.data() + p.linear.size());
  j["layers"] = nlohmann::json::array();
  for (const auto& L : p.layers) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < L.weights.rows(); ++i) {
      std::vector<double> r(L.weights.cols());
      for (Eigen::Index k = 0; k < L.weights.cols(); ++k) r[k] = L.weights(i, k);
      rows.push_back(r);
    }
    j["layers"].push_back({{"weights", rows}, {"biases", std::vector<double>(L.biases.data(), L.biases.data() + L.biases.size())}});
  }
  return j;
}

inline NetworkParams params_from_json(const nlohmann::json& j) {
  try {
    NetworkArchitecture arch;
    arch.input_dim = j.at("arch").at("input_dim").get<int>();
    arch.hidden_widths = j.at("arch").at("widths").get<std::vector<int>>();
    NetworkParams p = NetworkParams::zeros(arch);
    const auto lin = j.at("linear").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(lin.size()) != p.linear.size()) throw ShapeError("snapshot: linear size mismatch");
    for (std::size_t i = 0; i < lin.size(); ++i) p.linear(static_cast<Eigen::Index>(i)) = lin[i];
    const auto& layers = j.at("layers");
    if (layers.size() != p.layers.size()) throw ShapeError("snapshot: layer count mismatch");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      auto& L = p.layers[k];
      const auto W = layers[k].at("weights").get<std::vector<std::vector<double>>>();
      const auto b = layers[k].at("biases").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(W.size()) != L.weights.rows() ||
          static_cast<Eigen::Index>(b.size()) != L.biases.size()) {
        throw ShapeError("snapshot: layer shape mismatch");
      }
      for (std::size_t i = 0; i < W.size(); ++i) {
        if (static_cast<Eigen::Index>(W[i].size()) != L.weights.cols()) throw ShapeError("snapshot: layer shape mismatch");
        for (std::size_t c = 0; c < W[i].size(); ++c) L.weights(i, c) = W[i][c];
        L.biases(i) = b[i];
      }
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed parameter snapshot: ") + e.what());
  }
}

inline void save_params(const NetworkParams& p, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  os << params_to_json(p).dump(1) << '\n';
}

inline NetworkParams load_params(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  }
  return params_from_json(j);
}

}  // namespace lsnn
