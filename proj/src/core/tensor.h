#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace simit {

/// Dense row-major tensor of doubles. Copies are shallow (shared buffer);
/// use clone() for a deep copy. Graph ops always allocate fresh outputs,
/// so shared buffers are only ever mutated by the optimizer on leaf params.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double value);
  static Tensor scalar(double value);
  static Tensor from_data(std::vector<int> shape, std::vector<double> values);

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  std::int64_t numel() const { return numel_; }
  bool defined() const { return data_ != nullptr; }

  double* data() { return data_.get(); }
  const double* data() const { return data_.get(); }

  double& operator[](std::int64_t i) { return data_.get()[i]; }
  double operator[](std::int64_t i) const { return data_.get()[i]; }

  /// Multi-index accessor, slow; for tests and small tensors.
  double& at(std::initializer_list<int> idx);
  double at(std::initializer_list<int> idx) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  Tensor clone() const;
  void fill(double value);

  /// Shares the buffer under a new shape with identical numel.
  Tensor reshaped(std::vector<int> shape) const;

  bool all_finite() const;

  static std::int64_t numel_of(const std::vector<int>& shape);
  static std::string shape_str(const std::vector<int>& shape);

 private:
  std::int64_t offset_of(std::initializer_list<int> idx) const;

  std::vector<int> shape_;
  std::int64_t numel_ = 0;
  std::shared_ptr<double[]> data_;
};

}  // namespace simit
