#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace hopose {

/// Eigen's vectorized kernels peel a different number of leading elements
/// depending on the buffer address, which changes summation order. Aligned
/// storage keeps training bitwise reproducible regardless of heap layout.
using AlignedValues = std::vector<double, Eigen::aligned_allocator<double>>;

struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  AlignedValues values;

  std::size_t size() const { return values.size(); }
};

/// Ordered collection of named parameter tensors. Order is significant: it is
/// the serialization order and the flat indexing order.
class ParamSet {
 public:
  ParamTensor& add(std::string name, std::vector<int> shape);

  ParamTensor& at(const std::string& name);
  const ParamTensor& at(const std::string& name) const;
  ParamTensor& operator[](std::size_t i) { return tensors_[i]; }
  const ParamTensor& operator[](std::size_t i) const { return tensors_[i]; }

  std::vector<ParamTensor>& tensors() { return tensors_; }
  const std::vector<ParamTensor>& tensors() const { return tensors_; }
  std::size_t num_tensors() const { return tensors_.size(); }
  std::size_t total_size() const;

  /// Element `i` of the concatenation of all tensors.
  double& flat(std::size_t i);
  double flat(std::size_t i) const;

  ParamSet zeros_like() const;
  void set_zero();
  /// this += alpha * other (same structure required).
  void axpy(double alpha, const ParamSet& other);
  void scale(double alpha);
  bool all_finite() const;
  double squared_norm() const;
  bool same_structure(const ParamSet& other) const;

  bool operator==(const ParamSet& other) const;

 private:
  std::vector<ParamTensor> tensors_;
};

/// splitmix64 mix of (seed, index); used to derive independent per-item seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace hopose
