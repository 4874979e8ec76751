#ifndef PBVAE_TENSOR_HPP
#define PBVAE_TENSOR_HPP

#include <cstddef>
#include <new>
#include <numeric>
#include <vector>

#include "pbvae/errors.hpp"

namespace pbvae {

// 64-byte aligned storage. Vectorised kernels choose code paths (and thus
// summation order) by pointer alignment; pinning the alignment keeps every
// run of the same binary bit-identical regardless of heap layout.
template <typename T, std::size_t Alignment = 64>
struct AlignedAllocator {
  using value_type = T;

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U, Alignment>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(Alignment)));
  }
  void deallocate(T* p, std::size_t) noexcept {
    ::operator delete(p, std::align_val_t(Alignment));
  }

  template <class U>
  struct rebind {
    using other = AlignedAllocator<U, Alignment>;
  };
  bool operator==(const AlignedAllocator&) const noexcept { return true; }
  bool operator!=(const AlignedAllocator&) const noexcept { return false; }
};

using AlignedDoubles = std::vector<double, AlignedAllocator<double>>;

// Dense row-major tensor of 64-bit floats. Deliberately minimal: the MLP
// engine only ever needs rank 1 and rank 2.
struct Tensor {
  std::vector<std::size_t> shape;
  AlignedDoubles data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, AlignedDoubles d)
      : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != data.size()) {
      throw ShapeError("tensor: shape does not match data length");
    }
  }
  Tensor(std::vector<std::size_t> s, std::initializer_list<double> d)
      : Tensor(std::move(s), AlignedDoubles(d.begin(), d.end())) {}
  Tensor(std::vector<std::size_t> s, const std::vector<double>& d)
      : Tensor(std::move(s), AlignedDoubles(d.begin(), d.end())) {}

  static std::size_t numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
  }

  static Tensor zeros(std::vector<std::size_t> shape) {
    std::size_t n = numel(shape);
    return Tensor(std::move(shape), AlignedDoubles(n, 0.0));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

}  // namespace pbvae

#endif  // PBVAE_TENSOR_HPP
