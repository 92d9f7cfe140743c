#include "fbi/image_io.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fbi {

namespace {

void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void append_f32(std::string& out, float v) { append_u32(out, std::bit_cast<std::uint32_t>(v)); }

class Reader {
 public:
  Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }
  void expect_end() const {
    if (!at_end()) throw IoError(path_ + ": trailing bytes");
  }

 private:
  unsigned char byte() { return static_cast<unsigned char>(data_[pos_++]); }
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw IoError(path_ + ": truncated file");
  }
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Whole-file atomic write: temp file in place, then rename.
void spill(const std::string& path, const std::string& data) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create: " + tmp);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw IoError("rename failed: " + path);
  }
}

std::string encode_tensor(const Tensor& t) {
  std::string out = "FBIT";
  append_u32(out, 1);
  append_u32(out, static_cast<std::uint32_t>(t.ndim()));
  for (Index d : t.shape()) append_u64(out, static_cast<std::uint64_t>(d));
  for (Index i = 0; i < t.numel(); ++i) append_f32(out, static_cast<float>(t.array()[i]));
  return out;
}

Tensor decode_tensor(Reader& r, const std::string& path) {
  if (r.bytes(4) != "FBIT") throw IoError(path + ": bad tensor magic");
  if (r.u32() != 1) throw IoError(path + ": unsupported tensor version");
  const std::uint32_t ndim = r.u32();
  if (ndim > 8) throw IoError(path + ": implausible rank");
  Shape shape;
  for (std::uint32_t i = 0; i < ndim; ++i) shape.push_back(static_cast<Index>(r.u64()));
  const Index n = numel_of(shape);
  if (n < 0 || n > (Index{1} << 31)) throw IoError(path + ": implausible element count");
  ArrayX data(n);
  for (Index i = 0; i < n; ++i) data[i] = static_cast<Scalar>(r.f32());
  return Tensor::from_array(std::move(shape), std::move(data));
}

}  // namespace

Tensor read_pgm(const std::string& path) {
  std::string data = slurp(path);
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < data.size()) {
      if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> long {
    skip_space();
    std::size_t start = pos;
    while (pos < data.size() && std::isdigit(static_cast<unsigned char>(data[pos]))) ++pos;
    if (pos == start) throw IoError(path + ": malformed PGM header");
    return std::stol(data.substr(start, pos - start));
  };

  if (data.size() < 2 || data[0] != 'P' || data[1] != '5') {
    throw IoError(path + ": not a binary PGM (P5)");
  }
  pos = 2;
  const long w = read_int();
  const long h = read_int();
  const long maxval = read_int();
  if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) throw IoError(path + ": bad PGM header");
  ++pos;  // single whitespace after maxval
  const int bytes_per = maxval < 256 ? 1 : 2;
  const std::size_t needed = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) *
                             static_cast<std::size_t>(bytes_per);
  if (data.size() - pos < needed) throw IoError(path + ": truncated PGM payload");

  ArrayX out(static_cast<Index>(w) * h);
  const auto* p = reinterpret_cast<const unsigned char*>(data.data()) + pos;
  for (Index i = 0; i < out.size(); ++i) {
    long v = bytes_per == 1 ? p[i] : (static_cast<long>(p[2 * i]) << 8) | p[2 * i + 1];
    out[i] = static_cast<Scalar>(v) / static_cast<Scalar>(maxval);
  }
  return Tensor::from_array({static_cast<Index>(h), static_cast<Index>(w)}, std::move(out));
}

void write_pgm(const std::string& path, const Tensor& img2d, int bits) {
  if (img2d.ndim() != 2) throw ShapeError("write_pgm: expected 2-d image");
  if (bits != 8 && bits != 16) throw Error("write_pgm: bits must be 8 or 16");
  const long maxval = bits == 8 ? 255 : 65535;
  std::string out = "P5\n" + std::to_string(img2d.dim(1)) + " " + std::to_string(img2d.dim(0)) +
                    "\n" + std::to_string(maxval) + "\n";
  const ArrayX& v = img2d.array();
  for (Index i = 0; i < v.size(); ++i) {
    long q = std::lround(std::min(1.0, std::max(0.0, v[i])) * static_cast<Scalar>(maxval));
    if (bits == 8) {
      out.push_back(static_cast<char>(q));
    } else {
      out.push_back(static_cast<char>((q >> 8) & 0xFF));
      out.push_back(static_cast<char>(q & 0xFF));
    }
  }
  spill(path, out);
}

void write_tensor_file(const std::string& path, const Tensor& t) { spill(path, encode_tensor(t)); }

Tensor read_tensor_file(const std::string& path) {
  Reader r(slurp(path), path);
  Tensor t = decode_tensor(r, path);
  r.expect_end();
  return t;
}

void write_checkpoint(const std::string& path, const std::vector<Parameter>& params) {
  std::set<std::string> names;
  for (const Parameter& p : params) {
    if (!names.insert(p.name).second) {
      throw Error("write_checkpoint: duplicate parameter name " + p.name);
    }
  }
  std::string out = "FBIC";
  append_u32(out, 1);
  append_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter& p : params) {
    append_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    out += encode_tensor(p.tensor);
  }
  spill(path, out);
}

void load_checkpoint(const std::string& path, std::vector<Parameter>& params) {
  Reader r(slurp(path), path);
  if (r.bytes(4) != "FBIC") throw IoError(path + ": bad checkpoint magic");
  if (r.u32() != 1) throw IoError(path + ": unsupported checkpoint version");
  const std::uint32_t count = r.u32();
  std::map<std::string, Tensor> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.bytes(r.u32());
    Tensor t = decode_tensor(r, path);
    if (!records.emplace(std::move(name), std::move(t)).second) {
      throw IoError(path + ": duplicate record");
    }
  }
  r.expect_end();
  for (Parameter& p : params) {
    auto it = records.find(p.name);
    if (it == records.end()) throw IoError(path + ": missing parameter " + p.name);
    if (it->second.shape() != p.tensor.shape()) {
      throw IoError(path + ": shape mismatch for " + p.name);
    }
    p.tensor.mutable_array() = it->second.array();
  }
}

}  // namespace fbi
