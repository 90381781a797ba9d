#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <vector>

#include "hhkg/common.hpp"

namespace hhkg {

// Per-thread byte accounting for every buffer obtained through
// TrackingAllocator. Stands in for device-memory counters on the host.
class AllocationCounter {
 public:
  static void on_alloc(std::size_t bytes) noexcept {
    State& s = state();
    s.current += bytes;
    s.peak = std::max(s.peak, s.current);
  }
  static void on_free(std::size_t bytes) noexcept { state().current -= bytes; }
  static std::size_t current() noexcept { return state().current; }
  static std::size_t peak() noexcept { return state().peak; }

 private:
  friend class AllocationScope;
  struct State {
    std::size_t current = 0;
    std::size_t peak = 0;
  };
  static State& state() noexcept {
    thread_local State s;
    return s;
  }
};

// Measures the high-water mark of tracked bytes allocated while alive,
// relative to the tracked bytes live at construction. Scopes nest.
class AllocationScope {
 public:
  AllocationScope() noexcept
      : baseline_(AllocationCounter::current()), saved_peak_(AllocationCounter::peak()) {
    AllocationCounter::state().peak = baseline_;
  }
  ~AllocationScope() {
    auto& s = AllocationCounter::state();
    s.peak = std::max(s.peak, saved_peak_);
  }
  AllocationScope(const AllocationScope&) = delete;
  AllocationScope& operator=(const AllocationScope&) = delete;

  std::size_t peak_bytes() const noexcept { return AllocationCounter::peak() - baseline_; }

 private:
  std::size_t baseline_;
  std::size_t saved_peak_;
};

template <typename T>
struct TrackingAllocator {
  using value_type = T;

  TrackingAllocator() noexcept = default;
  template <typename U>
  TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    T* p = std::allocator<T>{}.allocate(n);
    AllocationCounter::on_alloc(n * sizeof(T));
    return p;
  }
  void deallocate(T* p, std::size_t n) noexcept {
    AllocationCounter::on_free(n * sizeof(T));
    std::allocator<T>{}.deallocate(p, n);
  }

  template <typename U>
  bool operator==(const TrackingAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using TrackedVector = std::vector<T, TrackingAllocator<T>>;

// Dense row-major matrix.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Matrix(std::initializer_list<std::initializer_list<T>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      require(r.size() == cols_, "Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix column(std::span<const T> values) {
    Matrix m(values.size(), 1);
    std::copy(values.begin(), values.end(), m.data_.begin());
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<T> flat() noexcept { return {data_.data(), data_.size()}; }
  std::span<const T> flat() const noexcept { return {data_.data(), data_.size()}; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Matrix& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  template <typename U>
  Matrix<U> cast() const {
    Matrix<U> out(rows_, cols_);
    auto dst = out.flat();
    for (std::size_t i = 0; i < data_.size(); ++i) dst[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.same_shape(b) && std::equal(a.data_.begin(), a.data_.end(), b.data_.begin());
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  TrackedVector<T> data_;
};

}  // namespace hhkg
