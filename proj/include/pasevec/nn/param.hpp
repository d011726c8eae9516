// pasevec/nn/param.hpp

// Copyright 2026  The pasevec Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef PASEVEC_NN_PARAM_HPP_
#define PASEVEC_NN_PARAM_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "pasevec/common.hpp"

namespace pasevec::nn {

// A trainable tensor with its gradient accumulator.
template <typename T>
struct Param {
  std::string name;
  Mat<T> value;
  Mat<T> grad;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)),
        value(Mat<T>::Zero(rows, cols)),
        grad(Mat<T>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

// Non-owning view over the parameters of one or more modules. Rebuilt on
// demand; never stored across copies of the owning module.
template <typename T>
using ParamList = std::vector<Param<T>*>;

template <typename T>
void zero_grads(const ParamList<T>& ps) {
  for (auto* p : ps) p->zero_grad();
}

template <typename T>
Eigen::Index param_count(const ParamList<T>& ps) {
  Eigen::Index n = 0;
  for (auto* p : ps) n += p->size();
  return n;
}

template <typename T>
T grad_norm(const ParamList<T>& ps) {
  T s = 0;
  for (auto* p : ps) s += p->grad.squaredNorm();
  return std::sqrt(s);
}

// Glorot-uniform fill.
template <typename T>
void glorot_init(Mat<T>& w, Rng& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      w(i, j) = static_cast<T>((2.0 * uniform01(rng) - 1.0) * limit);
}

// Adam with optional global-norm gradient clipping.
template <typename T>
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 0.0;  // <= 0 disables clipping
  };

  Adam() = default;
  explicit Adam(Options opt) : opt_(opt) {}

  void step(const ParamList<T>& ps) { step(ps, opt_.lr); }

  void step(const ParamList<T>& ps, double lr) {
    if (m_.size() != ps.size()) {
      m_.clear();
      v_.clear();
      for (auto* p : ps) {
        m_.push_back(Mat<T>::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Mat<T>::Zero(p->value.rows(), p->value.cols()));
      }
    }
    ++t_;
    T scale = 1;
    if (opt_.clip_norm > 0) {
      const T norm = grad_norm(ps);
      if (norm > static_cast<T>(opt_.clip_norm))
        scale = static_cast<T>(opt_.clip_norm) / norm;
    }
    const T b1 = static_cast<T>(opt_.beta1), b2 = static_cast<T>(opt_.beta2);
    const T c1 = static_cast<T>(1.0 - std::pow(opt_.beta1, t_));
    const T c2 = static_cast<T>(1.0 - std::pow(opt_.beta2, t_));
    const T step = static_cast<T>(lr);
    const T eps = static_cast<T>(opt_.eps);
    for (std::size_t k = 0; k < ps.size(); ++k) {
      auto g = (ps[k]->grad.array() * scale).eval();
      m_[k].array() = b1 * m_[k].array() + (1 - b1) * g;
      v_[k].array() = b2 * v_[k].array() + (1 - b2) * g.square();
      ps[k]->value.array() -=
          step * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + eps);
    }
  }

  long steps() const { return t_; }

 private:
  Options opt_;
  std::vector<Mat<T>> m_, v_;
  long t_ = 0;
};

}  // namespace pasevec::nn

#endif  // PASEVEC_NN_PARAM_HPP_
