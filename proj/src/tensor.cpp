#include "sononet/tensor.hpp"

#include <sstream>

namespace sononet {

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

size_t shape_numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int e : shape) n *= size_t(e);
  return n;
}

static void validate_shape(const std::vector<int>& shape) {
  if (shape.empty() || shape.size() > 4)
    throw invalid_argument_error("tensor rank must be 1..4, got " + shape_str(shape));
  for (int e : shape)
    if (e < 1) throw invalid_argument_error("tensor extents must be >= 1, got " + shape_str(shape));
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_numel(shape_), 0.f);
}

Tensor::Tensor(std::vector<int> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (shape_numel(shape_) != data_.size())
    throw invalid_argument_error("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + sononet::shape_str(shape_));
}

Tensor Tensor::full(std::vector<int> shape, float value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

std::string Tensor::shape_str() const { return sononet::shape_str(shape_); }

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (shape_numel(shape) != data_.size())
    throw invalid_argument_error("cannot reshape " + sononet::shape_str(shape_) + " to " +
                                 sononet::shape_str(shape));
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(float value) { data_.assign(data_.size(), value); }

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b))
    throw invalid_argument_error(std::string(what) + ": shape mismatch " + a.shape_str() +
                                 " vs " + b.shape_str());
}

}  // namespace sononet
