#pragma once

#include "fbi/tensor.hpp"

#include <string>
#include <vector>

namespace fbi {

/// Binary PGM (P5), 8- or 16-bit.  Samples map to [0,1] by dividing by the
/// file's maxval; 16-bit samples are big-endian per the format.
Tensor read_pgm(const std::string& path);
/// Writes clipped [0,1] data at the requested depth.  Whole-file atomic.
void write_pgm(const std::string& path, const Tensor& img2d, int bits = 16);

/// Raw tensor container: "FBIT" | u32 version | u32 ndim | u64 dims[] |
/// f32 payload, little-endian, row-major.
void write_tensor_file(const std::string& path, const Tensor& t);
Tensor read_tensor_file(const std::string& path);

/// Checkpoint container: "FBIC" | u32 version | u32 count, then per record
/// u32 name length | name bytes | an embedded tensor record.
void write_checkpoint(const std::string& path, const std::vector<Parameter>& params);
/// Loads records by name into the given parameters; every parameter must be
/// present with a matching shape.
void load_checkpoint(const std::string& path, std::vector<Parameter>& params);

}  // namespace fbi
