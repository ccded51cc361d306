#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sononet/tensor.hpp"

namespace sononet {

// Binary 8-bit PGM (P5, maxval 255). Image tensors are [1,H,W] with values
// in [0,1]; quantisation rounds to the nearest of 256 levels.

void write_pgm(const std::string& path, const Tensor& image);
Tensor read_pgm(const std::string& path);

// Quantised byte form, used by the in-memory training cache.
std::vector<uint8_t> quantize_u8(const Tensor& image);
Tensor dequantize_u8(const std::vector<uint8_t>& bytes, int height, int width);

}  // namespace sononet
