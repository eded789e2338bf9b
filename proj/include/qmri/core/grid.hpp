#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "qmri/core/error.hpp"

namespace qmri {

using cplx = std::complex<double>;
using Dims = std::vector<std::size_t>;

inline std::size_t dims_product(const Dims& d) {
  return std::accumulate(d.begin(), d.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string dims_to_string(const Dims& d);

// Dense row-major array. Index order is (echo/coil, row, column) for image
// data and (coil, echo, row, column) for k-space.
template <class T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  explicit Grid(Dims dims, T fill = T{})
      : dims_(std::move(dims)), data_(dims_product(dims_), fill) {}
  Grid(Dims dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
    require(data_.size() == dims_product(dims_), ErrorKind::shape,
            "grid payload size does not match dims " + dims_to_string(dims_));
  }

  const Dims& dims() const { return dims_; }
  std::size_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t ndim() const { return dims_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * dims_[1] + j]; }
  const T& operator()(std::size_t i, std::size_t j) const {
    return data_[i * dims_[1] + j];
  }
  T& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }
  const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }
  T& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return data_[((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l];
  }
  const T& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return data_[((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l];
  }

  // Contiguous sub-block along the leading axis (e.g. one echo of an N×H×W grid).
  std::span<T> slab(std::size_t i) {
    const std::size_t n = data_.size() / dims_[0];
    return std::span<T>(data_).subspan(i * n, n);
  }
  std::span<const T> slab(std::size_t i) const {
    const std::size_t n = data_.size() / dims_[0];
    return std::span<const T>(data_).subspan(i * n, n);
  }

  bool operator==(const Grid&) const = default;

 private:
  Dims dims_;
  std::vector<T> data_;
};

using RealGrid = Grid<double>;
using ComplexGrid = Grid<cplx>;
using MaskGrid = Grid<std::uint8_t>;

inline void require_same_dims(const Dims& a, const Dims& b, const char* what) {
  require(a == b, ErrorKind::shape,
          std::string(what) + ": dims " + dims_to_string(a) + " vs " + dims_to_string(b));
}

}  // namespace qmri
