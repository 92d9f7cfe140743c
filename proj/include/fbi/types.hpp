#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbi {

using Scalar = double;
using Index = std::int64_t;

/// Row-major extent list. Images use (N, C, H, W).
using Shape = std::vector<Index>;

using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using MatrixRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand extents do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A forward op produced NaN/Inf, or an iterative solver failed.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

inline Index numel_of(const Shape& s) {
  Index n = 1;
  for (Index e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  out += ")";
  return out;
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

}  // namespace fbi
