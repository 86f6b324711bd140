#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stril/rng.hpp"

namespace stril {

// Dense fp64 tensor, row-major. Rank 1 and 2 are what the models need;
// higher ranks round-trip through the checkpoint format but have no math.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double value);
  static Tensor vector(std::vector<double> data);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }
  // Entries uniform in (-bound, bound).
  static Tensor uniform_init(std::vector<int> shape, double bound, Rng& rng);
  // Entries normal with the given standard deviation.
  static Tensor normal_init(std::vector<int> shape, double stddev, Rng& rng);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return int(shape_.size()); }
  int dim(int i) const { return shape_[std::size_t(i)]; }
  std::size_t numel() const { return data_.size(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(int r, int c) { return data_[std::size_t(r) * std::size_t(shape_[1]) + std::size_t(c)]; }
  double at(int r, int c) const { return data_[std::size_t(r) * std::size_t(shape_[1]) + std::size_t(c)]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  void fill(double value);

  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

}  // namespace stril
