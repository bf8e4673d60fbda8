#pragma once

#include <cstddef>
#include <memory>
#include <new>
#include <utility>
#include <span>
#include <string>
#include <vector>

namespace rgc::diffcore {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Allocator for tensor storage: 64-byte aligned blocks, and elements left
/// default-initialized (uninitialized for double) when the vector is resized
/// without a value. Fixed alignment keeps vectorized reductions in the same
/// summation order on every run, so results are bit-reproducible.
template <typename T>
struct TensorAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  TensorAllocator() = default;
  template <typename U>
  TensorAllocator(const TensorAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    if constexpr (sizeof...(Args) == 0)
      ::new (static_cast<void*>(p)) U;
    else
      ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }

  friend bool operator==(const TensorAllocator&, const TensorAllocator&) noexcept { return true; }
};

/// Uninitialized aligned scratch buffer of doubles.
struct AlignedBuffer {
  static std::shared_ptr<double[]> make(std::size_t n) {
    return std::shared_ptr<double[]>(static_cast<double*>(::operator new(n * sizeof(double), std::align_val_t{64})),
                                     [](double* p) { ::operator delete(p, std::align_val_t{64}); });
  }
};

/// Dense row-major tensor of 64-bit floats. A value type: copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  /// Tensor whose elements are left unset; the caller overwrites all of them.
  static Tensor uninitialized(Shape shape);
  static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double* raw() noexcept { return data_.data(); }
  const double* raw() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Rank-2 element access; no bounds checks beyond the debug assert.
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  /// Scalar value of a one-element tensor.
  double item() const;

  /// Same data, new shape. Throws a dimension error if element counts differ.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const noexcept;
  void fill(double v);
  /// this += other (shapes must match).
  void accumulate(const Tensor& other);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  using Storage = std::vector<double, TensorAllocator<double>>;
  struct FromStorage {};
  Tensor(FromStorage, Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {}

  Shape shape_;
  Storage data_;
};

}  // namespace rgc::diffcore
