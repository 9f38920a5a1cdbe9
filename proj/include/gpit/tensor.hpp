// Dense tensor value type backed by a row-major Eigen matrix. Ranks 0..2 are
// supported: scalars are stored 1x1, vectors 1xn, matrices mxn. All payloads
// are 64-bit floats in the default instantiation.
#pragma once

#include <Eigen/Dense>

#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace gpit {

template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;

template <class S>
class TensorT {
 public:
  TensorT() : rank_(0), m_(MatX<S>::Zero(1, 1)) {}

  static TensorT scalar(S v) {
    TensorT t;
    t.m_(0, 0) = v;
    return t;
  }

  static TensorT zeros(Index rows, Index cols) {
    TensorT t;
    t.rank_ = 2;
    t.m_ = MatX<S>::Zero(rows, cols);
    return t;
  }

  static TensorT zeros_vec(Index n) {
    TensorT t;
    t.rank_ = 1;
    t.m_ = MatX<S>::Zero(1, n);
    return t;
  }

  static TensorT from_matrix(MatX<S> m) {
    TensorT t;
    t.rank_ = 2;
    t.m_ = std::move(m);
    return t;
  }

  static TensorT from_vector(const std::vector<S>& v) {
    TensorT t;
    t.rank_ = 1;
    t.m_ = MatX<S>::Zero(1, static_cast<Index>(v.size()));
    for (Index i = 0; i < t.m_.cols(); ++i) t.m_(0, i) = v[static_cast<size_t>(i)];
    return t;
  }

  static TensorT from_rank(int rank, Index rows, Index cols) {
    TensorT t;
    t.rank_ = rank;
    t.m_ = MatX<S>::Zero(rows, cols);
    return t;
  }

  int rank() const { return rank_; }
  Index rows() const { return m_.rows(); }
  Index cols() const { return m_.cols(); }
  Index size() const { return m_.size(); }

  std::vector<Index> shape() const {
    switch (rank_) {
      case 0: return {};
      case 1: return {m_.cols()};
      default: return {m_.rows(), m_.cols()};
    }
  }

  S value() const {
    if (rank_ != 0) throw std::invalid_argument("Tensor::value: tensor is not a scalar");
    return m_(0, 0);
  }

  S& operator()(Index r, Index c) { return m_(r, c); }
  S operator()(Index r, Index c) const { return m_(r, c); }
  S& operator[](Index i) { return m_(0, i); }
  S operator[](Index i) const { return m_(0, i); }

  MatX<S>& mat() { return m_; }
  const MatX<S>& mat() const { return m_; }

  bool all_finite() const { return m_.allFinite(); }

  bool requires_grad = false;

 private:
  int rank_;
  MatX<S> m_;
};

using Tensor = TensorT<double>;

}  // namespace gpit
