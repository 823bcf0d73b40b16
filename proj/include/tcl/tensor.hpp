#pragma once

// Dense 2-D row-major tensors with an additive gradient buffer. Scalars are
// [1,1] tensors, row vectors [1,n]. The buffer layout never changes after
// construction; gradients are allocated lazily and accumulate until zeroed.

#include <Eigen/Core>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "tcl/common.hpp"

namespace tcl::ad {

template <class T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using EMap = Eigen::Map<EMat<T>>;
template <class T>
using ECMap = Eigen::Map<const EMat<T>>;

// Eigen's vectorized reductions split scalar/simd work at an alignment
// boundary, so the last bit of a sum depends on the buffer's address phase.
// Pinning every buffer to a 64-byte boundary makes results a pure function
// of shape and content, independent of allocator history.
template <class T>
struct AlignedAlloc {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAlloc() = default;
  template <class U>
  AlignedAlloc(const AlignedAlloc<U>&) {}
  T* allocate(size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
  }
  void deallocate(T* p, size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAlloc<U>&) const {
    return true;
  }
};

template <class T>
using AlignedVec = std::vector<T, AlignedAlloc<T>>;

template <class T>
struct TensorData {
  int rows = 0;
  int cols = 0;
  AlignedVec<T> val;
  AlignedVec<T> grad;          // empty until touched; same size as val after
  bool requires_grad = false;  // leaf parameter flag
  bool track = false;          // gradient flows into this tensor in backward
  std::string name;            // parameters carry stable names for checkpoints
};

template <class T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false) {
    Tensor t;
    t.d_ = std::make_shared<TensorData<T>>();
    t.d_->rows = rows;
    t.d_->cols = cols;
    t.d_->val.assign(static_cast<size_t>(rows) * cols, T(0));
    t.d_->requires_grad = requires_grad;
    t.d_->track = requires_grad;
    return t;
  }

  static Tensor scalar(T v) {
    Tensor t = zeros(1, 1);
    t.data()[0] = v;
    return t;
  }

  static Tensor from(int rows, int cols, const std::vector<T>& values,
                     bool requires_grad = false) {
    check(values.size() == static_cast<size_t>(rows) * cols,
          "tensor: value count does not match shape");
    Tensor t = zeros(rows, cols, requires_grad);
    t.d_->val.assign(values.begin(), values.end());
    return t;
  }

  bool defined() const { return static_cast<bool>(d_); }
  int rows() const { return d_->rows; }
  int cols() const { return d_->cols; }
  size_t size() const { return d_->val.size(); }
  bool requires_grad() const { return d_->requires_grad; }
  // Freezing or unfreezing a leaf; track follows so ops stop recording it.
  void set_requires_grad(bool r) {
    d_->requires_grad = r;
    d_->track = r;
  }
  bool track() const { return d_->track; }
  void set_track(bool t) { d_->track = t; }
  const std::string& name() const { return d_->name; }
  void set_name(const std::string& n) { d_->name = n; }

  T* data() { return d_->val.data(); }
  const T* data() const { return d_->val.data(); }
  T item() const {
    check(rows() == 1 && cols() == 1, "tensor: item() needs a [1,1] tensor");
    return d_->val[0];
  }

  bool has_grad() const { return !d_->grad.empty(); }
  // Lazily materializes a zeroed gradient buffer.
  T* grad() {
    if (d_->grad.empty()) d_->grad.assign(d_->val.size(), T(0));
    return d_->grad.data();
  }
  // Null until a gradient buffer has been materialized.
  const T* grad_data() const {
    return d_->grad.empty() ? nullptr : d_->grad.data();
  }
  std::vector<T> grad_vec() const {
    return std::vector<T>(d_->grad.begin(), d_->grad.end());
  }
  void zero_grad() {
    if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), T(0));
  }

  EMap<T> mat() { return EMap<T>(data(), rows(), cols()); }
  ECMap<T> mat() const { return ECMap<T>(data(), rows(), cols()); }
  EMap<T> gmat() { return EMap<T>(grad(), rows(), cols()); }

  // Identity of the underlying buffer, used by optimizers and backward.
  TensorData<T>* node() const { return d_.get(); }
  const std::shared_ptr<TensorData<T>>& handle() const { return d_; }

 private:
  std::shared_ptr<TensorData<T>> d_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace tcl::ad
