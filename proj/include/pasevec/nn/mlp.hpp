// pasevec/nn/mlp.hpp

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

#ifndef PASEVEC_NN_MLP_HPP_
#define PASEVEC_NN_MLP_HPP_

#include <string>
#include <vector>

#include "pasevec/nn/param.hpp"

namespace pasevec::nn {

enum class Activation { kLinear, kTanh, kRelu, kLeakyRelu };

inline constexpr double kLeakySlope = 0.2;

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kLinear: return "linear";
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kLeakyRelu: return "leaky_relu";
  }
  return "?";
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "linear") return Activation::kLinear;
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  if (s == "leaky_relu") return Activation::kLeakyRelu;
  throw ConfigError("unknown activation '" + s + "'");
}

template <typename T>
Mat<T> activate(Activation a, const Mat<T>& z) {
  switch (a) {
    case Activation::kLinear: return z;
    case Activation::kTanh: return z.array().tanh().matrix();
    case Activation::kRelu: return z.cwiseMax(T(0));
    case Activation::kLeakyRelu:
      return (z.array() > 0).select(z, z * T(kLeakySlope));
  }
  return z;
}

// Elementwise derivative of the activation, expressed through the
// pre-activation z.
template <typename T>
Mat<T> activation_slope(Activation a, const Mat<T>& z) {
  switch (a) {
    case Activation::kLinear: return Mat<T>::Ones(z.rows(), z.cols());
    case Activation::kTanh: {
      auto t = z.array().tanh();
      return (T(1) - t * t).matrix();
    }
    case Activation::kRelu:
      return (z.array() > 0).select(Mat<T>::Ones(z.rows(), z.cols()),
                                    Mat<T>::Zero(z.rows(), z.cols()));
    case Activation::kLeakyRelu:
      return (z.array() > 0).select(
          Mat<T>::Ones(z.rows(), z.cols()),
          Mat<T>::Constant(z.rows(), z.cols(), T(kLeakySlope)));
  }
  return Mat<T>::Ones(z.rows(), z.cols());
}

inline bool is_piecewise_linear(Activation a) {
  return a != Activation::kTanh;
}

// Fully-connected feedforward network. Hidden layers use `act`, the output
// layer is affine. Inputs and outputs are column batches (dim x batch).
template <typename T>
class Mlp {
 public:
  struct Tape {
    std::vector<Mat<T>> inputs;  // input to layer k
    std::vector<Mat<T>> pre;     // pre-activation of layer k
  };

  Mlp() = default;

  // sizes = {in, hidden..., out}
  Mlp(const std::string& name, std::vector<int> sizes, Activation act,
      Rng& rng)
      : sizes_(std::move(sizes)), act_(act) {
    if (sizes_.size() < 2) throw ArgumentError("Mlp needs at least in/out");
    for (int s : sizes_)
      if (s < 1) throw ArgumentError("Mlp layer sizes must be >= 1");
    for (std::size_t k = 0; k + 1 < sizes_.size(); ++k) {
      weights_.emplace_back(name + ".w" + std::to_string(k), sizes_[k + 1],
                            sizes_[k]);
      biases_.emplace_back(name + ".b" + std::to_string(k), sizes_[k + 1], 1);
      glorot_init(weights_.back().value, rng);
    }
  }

  int in_dim() const { return sizes_.front(); }
  int out_dim() const { return sizes_.back(); }
  const std::vector<int>& sizes() const { return sizes_; }
  Activation activation() const { return act_; }
  std::size_t num_layers() const { return weights_.size(); }

  void collect(ParamList<T>& out) {
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      out.push_back(&weights_[k]);
      out.push_back(&biases_[k]);
    }
  }

  Mat<T> forward(const Mat<T>& x) const {
    Tape tape;
    return forward(x, tape);
  }

  Mat<T> forward(const Mat<T>& x, Tape& tape) const {
    if (x.rows() != in_dim())
      throw ShapeError("Mlp input has " + std::to_string(x.rows()) +
                       " rows, expected " + std::to_string(in_dim()));
    tape.inputs.clear();
    tape.pre.clear();
    Mat<T> h = x;
    const std::size_t L = weights_.size();
    for (std::size_t k = 0; k < L; ++k) {
      tape.inputs.push_back(h);
      Mat<T> z = weights_[k].value * h;
      z.colwise() += biases_[k].value.col(0);
      tape.pre.push_back(z);
      h = (k + 1 < L) ? activate(act_, z) : z;
    }
    return h;
  }

  // Accumulates parameter gradients for dL/dy = dy; returns dL/dx.
  Mat<T> backward(const Tape& tape, const Mat<T>& dy) {
    return backward_impl(tape, dy, true);
  }

  // dL/dx only; parameters untouched.
  Mat<T> input_grad(const Tape& tape, const Mat<T>& dy) const {
    return const_cast<Mlp*>(this)->backward_impl(tape, dy, false);
  }

  // Gradient penalty mean_b (||d out / d x_b|| - 1)^2 for a scalar-output
  // network, evaluated at the columns of x. Adds `scale` times its gradient
  // wrt the weights into the accumulators and returns the penalty value.
  // Only exact for piecewise-linear activations, where the input gradient is
  // a product of weight matrices and constant slope masks.
  T gradient_penalty(const Mat<T>& x, T scale) {
    if (out_dim() != 1)
      throw ArgumentError("gradient penalty needs a scalar-output network");
    if (!is_piecewise_linear(act_))
      throw ArgumentError("gradient penalty needs piecewise-linear layers");
    Tape tape;
    forward(x, tape);
    const Eigen::Index B = x.cols();
    const std::size_t L = weights_.size();
    // r[k] = d out / d pre[k]; r[L-1] = 1 and
    // r[k] = m[k] * (W[k+1]^T r[k+1]) with m[k] the slope mask of layer k.
    std::vector<Mat<T>> r(L), masks(L);
    r[L - 1] = Mat<T>::Ones(1, B);
    for (std::size_t k = L - 1; k-- > 0;) {
      masks[k] = activation_slope(act_, tape.pre[k]);
      r[k] = masks[k].cwiseProduct(weights_[k + 1].value.transpose() * r[k + 1]);
    }
    Mat<T> g = weights_[0].value.transpose() * r[0];
    Vec<T> norms = g.colwise().norm().transpose();
    T penalty = 0;
    Mat<T> gamma(g.rows(), B);
    for (Eigen::Index b = 0; b < B; ++b) {
      const T n = norms(b);
      penalty += (n - 1) * (n - 1);
      const T coef = n > T(0) ? T(2) * (n - 1) / n : T(0);
      gamma.col(b) = coef * g.col(b);
    }
    penalty /= static_cast<T>(B);
    gamma *= scale / static_cast<T>(B);
    // Reverse through g = W0^T r0, r_k = m_k * (W_{k+1}^T r_{k+1}).
    weights_[0].grad.noalias() += r[0] * gamma.transpose();
    Mat<T> dr = weights_[0].value * gamma;
    for (std::size_t k = 0; k + 1 <= L - 1; ++k) {
      Mat<T> dq = masks[k].cwiseProduct(dr);
      weights_[k + 1].grad.noalias() += r[k + 1] * dq.transpose();
      dr = weights_[k + 1].value * dq;
    }
    return penalty;
  }

  std::vector<Param<T>>& weights() { return weights_; }
  std::vector<Param<T>>& biases() { return biases_; }
  const std::vector<Param<T>>& weights() const { return weights_; }
  const std::vector<Param<T>>& biases() const { return biases_; }

 private:
  Mat<T> backward_impl(const Tape& tape, const Mat<T>& dy, bool accumulate) {
    Mat<T> d = dy;
    const std::size_t L = weights_.size();
    for (std::size_t k = L; k-- > 0;) {
      if (k + 1 < L) d = d.cwiseProduct(activation_slope(act_, tape.pre[k]));
      if (accumulate) {
        weights_[k].grad.noalias() += d * tape.inputs[k].transpose();
        biases_[k].grad.col(0) += d.rowwise().sum();
      }
      d = weights_[k].value.transpose() * d;
    }
    return d;
  }

  std::vector<int> sizes_;
  Activation act_ = Activation::kTanh;
  std::vector<Param<T>> weights_;
  std::vector<Param<T>> biases_;
};

}  // namespace pasevec::nn

#endif  // PASEVEC_NN_MLP_HPP_
