#pragma once

// Run configuration: flat key=value text, one pair per line, '#' comments.
// Keys are exactly the RunConfig field names; list values are
// comma-separated.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "handmesh/errors.hpp"

namespace handmesh {

struct RunConfig {
  std::string template_path;
  int image_size = 64;
  std::vector<int> encoder_widths = {8, 16, 32, 64};
  // d_cross, d_self, head hidden width.
  std::vector<int> attention_dims = {16, 16, 32};
  // vertex, joint, camera, 2D-joint, texture term weights.
  std::vector<double> loss_weights = {1, 1, 1, 1, 1};
  double learning_rate = 1e-3;
  int steps = 2000;
  int batch_size = 8;
  std::uint64_t seed = 1;
  std::string mode = "supervised";
  int weak_samples = 1;  // reparameterized draws per step in weak mode

  int feature_dim() const { return encoder_widths.back(); }
  bool texture_enabled() const { return loss_weights[4] > 0.0; }

  void validate() const {
    if (image_size < 8) throw ValidationError("config: image_size must be >= 8");
    if (encoder_widths.empty()) throw ValidationError("config: encoder_widths must be non-empty");
    for (int w : encoder_widths)
      if (w < 1) throw ValidationError("config: encoder widths must be positive");
    if (attention_dims.size() != 3) throw ValidationError("config: attention_dims needs 3 entries");
    for (int d : attention_dims)
      if (d < 1) throw ValidationError("config: attention dims must be positive");
    if (loss_weights.size() != 5) throw ValidationError("config: loss_weights needs 5 entries");
    if (!(learning_rate > 0)) throw ValidationError("config: learning_rate must be positive");
    if (steps < 0) throw ValidationError("config: steps must be non-negative");
    if (batch_size < 1) throw ValidationError("config: batch_size must be positive");
    if (mode != "supervised" && mode != "weak")
      throw ValidationError("config: mode must be 'supervised' or 'weak'");
    if (weak_samples < 1) throw ValidationError("config: weak_samples must be positive");
    const int min_dim = 1 << static_cast<int>(encoder_widths.size());
    if (image_size % min_dim != 0)
      throw ValidationError("config: image_size must be divisible by 2^(encoder stages)");
  }
};

namespace config_detail {

template <typename T>
std::vector<T> parse_list(const std::string& s, const std::string& key) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      if constexpr (std::is_same_v<T, int>)
        out.push_back(std::stoi(item));
      else
        out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ParseError("config key '" + key + "': bad list entry '" + item + "'");
    }
  }
  if (out.empty()) throw ParseError("config key '" + key + "': empty list");
  return out;
}

template <typename T>
std::string join_list(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    os << v[i];
  }
  return os.str();
}

}  // namespace config_detail

inline RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    std::size_t e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(lineno) + ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const std::size_t b2 = s.find_first_not_of(" \t");
      const std::size_t e2 = s.find_last_not_of(" \t");
      s = (b2 == std::string::npos) ? "" : s.substr(b2, e2 - b2 + 1);
    };
    trim(key);
    trim(val);
    try {
      if (key == "template_path")
        cfg.template_path = val;
      else if (key == "image_size")
        cfg.image_size = std::stoi(val);
      else if (key == "encoder_widths")
        cfg.encoder_widths = config_detail::parse_list<int>(val, key);
      else if (key == "attention_dims")
        cfg.attention_dims = config_detail::parse_list<int>(val, key);
      else if (key == "loss_weights")
        cfg.loss_weights = config_detail::parse_list<double>(val, key);
      else if (key == "learning_rate")
        cfg.learning_rate = std::stod(val);
      else if (key == "steps")
        cfg.steps = std::stoi(val);
      else if (key == "batch_size")
        cfg.batch_size = std::stoi(val);
      else if (key == "seed")
        cfg.seed = std::stoull(val);
      else if (key == "mode")
        cfg.mode = val;
      else if (key == "weak_samples")
        cfg.weak_samples = std::stoi(val);
      else
        throw ParseError("config: unknown key '" + key + "'");
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError("config key '" + key + "': bad value '" + val + "'");
    }
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

inline std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  os << "template_path=" << cfg.template_path << "\n";
  os << "image_size=" << cfg.image_size << "\n";
  os << "encoder_widths=" << config_detail::join_list(cfg.encoder_widths) << "\n";
  os << "attention_dims=" << config_detail::join_list(cfg.attention_dims) << "\n";
  char buf[512];
  std::snprintf(buf, sizeof(buf), "loss_weights=%.17g,%.17g,%.17g,%.17g,%.17g\n", cfg.loss_weights[0],
                cfg.loss_weights[1], cfg.loss_weights[2], cfg.loss_weights[3], cfg.loss_weights[4]);
  os << buf;
  std::snprintf(buf, sizeof(buf), "learning_rate=%.17g\n", cfg.learning_rate);
  os << buf;
  os << "steps=" << cfg.steps << "\n";
  os << "batch_size=" << cfg.batch_size << "\n";
  os << "seed=" << cfg.seed << "\n";
  os << "mode=" << cfg.mode << "\n";
  os << "weak_samples=" << cfg.weak_samples << "\n";
  return os.str();
}

}  // namespace handmesh
