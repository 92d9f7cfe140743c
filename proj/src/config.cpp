#include "fbi/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace fbi {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

Scalar parse_scalar(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    Scalar x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for " + key + ": '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
  }
  return x;
}

Index parse_index(const std::string& key, const std::string& v) {
  return static_cast<Index>(parse_u64(key, v));
}

}  // namespace

std::string mode_name(SynthesisMode mode) {
  return mode == SynthesisMode::Literal ? "literal" : "mean-preserving";
}

SynthesisMode mode_from_name(const std::string& name) {
  if (name == "literal") return SynthesisMode::Literal;
  if (name == "mean-preserving") return SynthesisMode::MeanPreserving;
  throw ConfigError("config: mode must be literal or mean-preserving, got '" + name + "'");
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "seed") {
      cfg.seed = parse_u64(key, val);
    } else if (key == "mode") {
      cfg.mode = mode_from_name(val);
    } else if (key == "alpha") {
      cfg.alpha = parse_scalar(key, val);
    } else if (key == "sigma") {
      cfg.sigma = parse_scalar(key, val);
    } else if (key == "alpha_min") {
      cfg.ranges.alpha_lo = parse_scalar(key, val);
    } else if (key == "alpha_max") {
      cfg.ranges.alpha_hi = parse_scalar(key, val);
    } else if (key == "sigma_min") {
      cfg.ranges.sigma_lo = parse_scalar(key, val);
    } else if (key == "sigma_max") {
      cfg.ranges.sigma_hi = parse_scalar(key, val);
    } else if (key == "epochs") {
      cfg.epochs = parse_index(key, val);
    } else if (key == "batch") {
      cfg.batch = parse_index(key, val);
    } else if (key == "lr") {
      cfg.lr = parse_scalar(key, val);
    } else if (key == "patch") {
      cfg.patch = parse_index(key, val);
    } else if (key == "net_config") {
      cfg.net_config = val;
    } else if (key == "data") {
      cfg.data = val;
    } else if (key == "out") {
      cfg.out = val;
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  if (cfg.batch < 1) throw ConfigError("config: batch must be >= 1");
  if (cfg.patch < 1) throw ConfigError("config: patch must be >= 1");
  if (!(cfg.lr > 0)) throw ConfigError("config: lr must be > 0");
  return cfg;
}

RunConfig read_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "seed = " << cfg.seed << "\n";
  out << "mode = " << mode_name(cfg.mode) << "\n";
  out << "alpha = " << cfg.alpha << "\n";
  out << "sigma = " << cfg.sigma << "\n";
  out << "alpha_min = " << cfg.ranges.alpha_lo << "\n";
  out << "alpha_max = " << cfg.ranges.alpha_hi << "\n";
  out << "sigma_min = " << cfg.ranges.sigma_lo << "\n";
  out << "sigma_max = " << cfg.ranges.sigma_hi << "\n";
  out << "epochs = " << cfg.epochs << "\n";
  out << "batch = " << cfg.batch << "\n";
  out << "lr = " << cfg.lr << "\n";
  out << "patch = " << cfg.patch << "\n";
  if (!cfg.net_config.empty()) out << "net_config = " << cfg.net_config << "\n";
  if (!cfg.data.empty()) out << "data = " << cfg.data << "\n";
  if (!cfg.out.empty()) out << "out = " << cfg.out << "\n";
  return out.str();
}

}  // namespace fbi
