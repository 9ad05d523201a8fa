#include "core/tensor.h"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace simit {

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  numel_ = numel_of(shape_);
  data_ = std::shared_ptr<double[]>(new double[static_cast<size_t>(numel_)]());
}

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::scalar(double value) { return full({1}, value); }

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> values) {
  Tensor t(std::move(shape));
  if (t.numel() != static_cast<std::int64_t>(values.size()))
    throw std::invalid_argument("Tensor::from_data: size mismatch");
  std::memcpy(t.data(), values.data(), values.size() * sizeof(double));
  return t;
}

double& Tensor::at(std::initializer_list<int> idx) { return data_.get()[offset_of(idx)]; }
double Tensor::at(std::initializer_list<int> idx) const { return data_.get()[offset_of(idx)]; }

std::int64_t Tensor::offset_of(std::initializer_list<int> idx) const {
  if (static_cast<int>(idx.size()) != ndim())
    throw std::invalid_argument("Tensor::at: rank mismatch");
  std::int64_t off = 0;
  int d = 0;
  for (int i : idx) {
    off = off * shape_[static_cast<size_t>(d)] + i;
    ++d;
  }
  return off;
}

Tensor Tensor::clone() const {
  Tensor t(shape_);
  std::memcpy(t.data(), data(), static_cast<size_t>(numel_) * sizeof(double));
  return t;
}

void Tensor::fill(double value) {
  for (std::int64_t i = 0; i < numel_; ++i) data_.get()[i] = value;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (numel_of(shape) != numel_)
    throw std::invalid_argument("Tensor::reshaped: numel mismatch");
  Tensor t;
  t.shape_ = std::move(shape);
  t.numel_ = numel_;
  t.data_ = data_;
  return t;
}

bool Tensor::all_finite() const {
  for (std::int64_t i = 0; i < numel_; ++i)
    if (!std::isfinite(data_.get()[i])) return false;
  return true;
}

std::int64_t Tensor::numel_of(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("Tensor: nonpositive dim");
    n *= d;
  }
  return n;
}

std::string Tensor::shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

}  // namespace simit
