#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

namespace hstf::net {

template <typename T>
struct ParamTensor {
  std::string name;
  std::vector<size_t> shape;
  std::vector<T> data;

  size_t size() const { return data.size(); }
};

/// Ordered collection of named parameter arrays. Gradients and optimizer
/// moments reuse the same structure.
template <typename T>
class ParamSet {
 public:
  size_t add(std::string name, std::vector<size_t> shape) {
    const size_t n = std::accumulate(shape.begin(), shape.end(), size_t{1}, std::multiplies<>());
    tensors_.push_back(ParamTensor<T>{std::move(name), std::move(shape), std::vector<T>(n, T(0))});
    return tensors_.size() - 1;
  }

  size_t count() const { return tensors_.size(); }
  ParamTensor<T>& operator[](size_t i) { return tensors_[i]; }
  const ParamTensor<T>& operator[](size_t i) const { return tensors_[i]; }
  T* data(size_t i) { return tensors_[i].data.data(); }
  const T* data(size_t i) const { return tensors_[i].data.data(); }

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  size_t total_size() const {
    size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }

  /// Same names and shapes, all zeros.
  ParamSet zeros_like() const {
    ParamSet out;
    for (const auto& t : tensors_) out.add(t.name, t.shape);
    return out;
  }

  void fill_zero() {
    for (auto& t : tensors_) std::fill(t.data.begin(), t.data.end(), T(0));
  }

  /// this += other (structures must match).
  void accumulate(const ParamSet& other) {
    for (size_t i = 0; i < tensors_.size(); ++i) {
      auto& a = tensors_[i].data;
      const auto& b = other.tensors_[i].data;
      for (size_t k = 0; k < a.size(); ++k) a[k] += b[k];
    }
  }

  void scale(T factor) {
    for (auto& t : tensors_) {
      for (auto& v : t.data) v *= factor;
    }
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& t : tensors_) {
      const size_t idx = out.add(t.name, t.shape);
      for (size_t k = 0; k < t.size(); ++k) out[idx].data[k] = static_cast<U>(t.data[k]);
    }
    return out;
  }

 private:
  std::vector<ParamTensor<T>> tensors_;
};

}  // namespace hstf::net
