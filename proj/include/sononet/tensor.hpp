#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sononet/common.hpp"

namespace sononet {

// Dense rank-<=4 float32 array, contiguous row-major with the batch dimension
// outermost: element (b,c,y,x) lives at ((b*C + c)*H + y)*W + x.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<float> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, float value);

  int rank() const { return int(shape_.size()); }
  const std::vector<int>& shape() const { return shape_; }
  int extent(int dim) const { return shape_[size_t(dim)]; }
  size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& vec() { return data_; }
  const std::vector<float>& vec() const { return data_; }

  float& operator[](size_t i) { return data_[i]; }
  float operator[](size_t i) const { return data_[i]; }

  // rank-4 access
  float& at(int b, int c, int y, int x) { return data_[idx4(b, c, y, x)]; }
  float at(int b, int c, int y, int x) const { return data_[idx4(b, c, y, x)]; }
  size_t idx4(int b, int c, int y, int x) const {
    return ((size_t(b) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
  }

  // rank-3 access
  float& at(int c, int y, int x) { return data_[(size_t(c) * shape_[1] + y) * shape_[2] + x]; }
  float at(int c, int y, int x) const {
    return data_[(size_t(c) * shape_[1] + y) * shape_[2] + x];
  }

  // rank-2 access
  float& at(int i, int j) { return data_[size_t(i) * shape_[1] + j]; }
  float at(int i, int j) const { return data_[size_t(i) * shape_[1] + j]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

  // View with new extents over the same element count.
  Tensor reshaped(std::vector<int> shape) const;

  void fill(float value);

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

std::string shape_str(const std::vector<int>& shape);
size_t shape_numel(const std::vector<int>& shape);

// Throws invalid_argument_error naming both shapes when they differ.
void check_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace sononet
