#include "hopose/params.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "hopose/error.hpp"

namespace hopose {

ParamTensor& ParamSet::add(std::string name, std::vector<int> shape) {
  const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  tensors_.push_back({std::move(name), std::move(shape), AlignedValues(n, 0.0)});
  return tensors_.back();
}

ParamTensor& ParamSet::at(const std::string& name) {
  for (auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw Error(ErrorCode::ShapeMismatch, "no parameter tensor named " + name);
}

const ParamTensor& ParamSet::at(const std::string& name) const {
  return const_cast<ParamSet*>(this)->at(name);
}

std::size_t ParamSet::total_size() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

double& ParamSet::flat(std::size_t i) {
  for (auto& t : tensors_) {
    if (i < t.size()) return t.values[i];
    i -= t.size();
  }
  throw Error(ErrorCode::ShapeMismatch, "flat parameter index out of range");
}

double ParamSet::flat(std::size_t i) const { return const_cast<ParamSet*>(this)->flat(i); }

ParamSet ParamSet::zeros_like() const {
  ParamSet out = *this;
  out.set_zero();
  return out;
}

void ParamSet::set_zero() {
  for (auto& t : tensors_) std::fill(t.values.begin(), t.values.end(), 0.0);
}

void ParamSet::axpy(double alpha, const ParamSet& other) {
  if (!same_structure(other)) throw Error(ErrorCode::ShapeMismatch, "axpy on differently shaped parameter sets");
  for (std::size_t k = 0; k < tensors_.size(); ++k) {
    auto& a = tensors_[k].values;
    const auto& b = other.tensors_[k].values;
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += alpha * b[i];
  }
}

void ParamSet::scale(double alpha) {
  for (auto& t : tensors_) {
    for (double& v : t.values) v *= alpha;
  }
}

bool ParamSet::all_finite() const {
  for (const auto& t : tensors_) {
    for (const double v : t.values) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

double ParamSet::squared_norm() const {
  double s = 0.0;
  for (const auto& t : tensors_) {
    for (const double v : t.values) s += v * v;
  }
  return s;
}

bool ParamSet::same_structure(const ParamSet& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t k = 0; k < tensors_.size(); ++k) {
    if (tensors_[k].name != other.tensors_[k].name || tensors_[k].shape != other.tensors_[k].shape) return false;
  }
  return true;
}

bool ParamSet::operator==(const ParamSet& other) const {
  if (!same_structure(other)) return false;
  for (std::size_t k = 0; k < tensors_.size(); ++k) {
    if (tensors_[k].values != other.tensors_[k].values) return false;
  }
  return true;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace hopose
