// pasevec/nn/gru.hpp

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

#ifndef PASEVEC_NN_GRU_HPP_
#define PASEVEC_NN_GRU_HPP_

#include <string>
#include <vector>

#include "pasevec/nn/mlp.hpp"
#include "pasevec/nn/param.hpp"

namespace pasevec::nn {

// A batch of variable-length sequences laid out time-major: column
// t * batch + b holds step t of sequence b. Steps past a sequence's length
// are zero-padded and carry mask 0.
template <typename T>
struct SeqBatch {
  Mat<T> x;     // dim x (steps * batch)
  Mat<T> mask;  // 1 x (steps * batch)
  int steps = 0;
  int batch = 0;
  std::vector<int> lengths;

  auto step(int t) const { return x.middleCols(t * batch, batch); }
  auto step_mask(int t) const { return mask.middleCols(t * batch, batch); }
};

template <typename T>
T sigmoid(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

// Gated recurrent unit layer, two-gate formulation:
//
//   z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)          (update gate)
//   r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)          (reset gate)
//   n_t = tanh(W_n x_t + U_n (r_t * h_{t-1}) + b_n)     (candidate)
//   h_t = (1 - z_t) * n_t + z_t * h_{t-1}
//
// W = [W_z; W_r; W_n] is 3h x in, U = [U_z; U_r; U_n] is 3h x h. When a mask
// is supplied, masked columns copy h_{t-1} through unchanged, so the state
// after the last step equals the state after each sequence's own last frame.
template <typename T>
class GruLayer {
 public:
  struct Tape {
    int steps = 0, batch = 0;
    Mat<T> h;   // hidden x ((steps + 1) * batch); block 0 is h0
    Mat<T> z, r, n, rh;  // hidden x (steps * batch)
    const Mat<T>* mask = nullptr;
  };

  GruLayer() = default;
  GruLayer(const std::string& name, int in, int hidden, Rng& rng)
      : in_(in), hidden_(hidden),
        w_(name + ".w", 3 * hidden, in),
        u_(name + ".u", 3 * hidden, hidden),
        b_(name + ".b", 3 * hidden, 1) {
    if (in < 1 || hidden < 1) throw ArgumentError("GRU sizes must be >= 1");
    glorot_init(w_.value, rng);
    for (int g = 0; g < 3; ++g) {
      Mat<T> block(hidden, hidden);
      glorot_init(block, rng);
      u_.value.middleRows(g * hidden, hidden) = block;
    }
  }

  int in_dim() const { return in_; }
  int hidden() const { return hidden_; }

  void collect(ParamList<T>& out) {
    out.push_back(&w_);
    out.push_back(&u_);
    out.push_back(&b_);
  }

  // W x + b for every column of x.
  Mat<T> project(const Mat<T>& x) const {
    if (x.rows() != in_)
      throw ShapeError("GRU input has " + std::to_string(x.rows()) +
                       " rows, expected " + std::to_string(in_));
    Mat<T> a = w_.value * x;
    a.colwise() += b_.value.col(0);
    return a;
  }

  // Runs the recurrence given input projections ax (3h x steps*batch).
  void forward_projected(const Mat<T>& ax, int steps, int batch,
                         const Mat<T>& h0, const Mat<T>* mask,
                         Tape& tape) const {
    const int H = hidden_;
    tape.steps = steps;
    tape.batch = batch;
    tape.mask = mask;
    tape.h.resize(H, static_cast<Eigen::Index>(steps + 1) * batch);
    tape.z.resize(H, static_cast<Eigen::Index>(steps) * batch);
    tape.r.resize(H, tape.z.cols());
    tape.n.resize(H, tape.z.cols());
    tape.rh.resize(H, tape.z.cols());
    tape.h.leftCols(batch) = h0;
    const auto uzr = u_.value.topRows(2 * H);
    const auto un = u_.value.bottomRows(H);
    Mat<T> gh(2 * H, batch), cand(H, batch);
    for (int t = 0; t < steps; ++t) {
      const auto hp = tape.h.middleCols(t * batch, batch);
      const auto a = ax.middleCols(t * batch, batch);
      gh.noalias() = uzr * hp;
      auto z = tape.z.middleCols(t * batch, batch);
      auto r = tape.r.middleCols(t * batch, batch);
      z = (a.topRows(H) + gh.topRows(H))
              .unaryExpr([](T v) { return sigmoid(v); });
      r = (a.middleRows(H, H) + gh.bottomRows(H))
              .unaryExpr([](T v) { return sigmoid(v); });
      auto rh = tape.rh.middleCols(t * batch, batch);
      rh = r.cwiseProduct(hp);
      auto n = tape.n.middleCols(t * batch, batch);
      cand.noalias() = un * rh;
      n = (a.bottomRows(H) + cand).array().tanh().matrix();
      auto hn = tape.h.middleCols((t + 1) * batch, batch);
      hn = (T(1) - z.array()) * n.array() + z.array() * hp.array();
      if (mask != nullptr) {
        const auto m = mask->middleCols(t * batch, batch);
        for (int b = 0; b < batch; ++b)
          if (m(0, b) == T(0)) hn.col(b) = hp.col(b);
      }
    }
  }

  // Reverse pass. dh_out (hidden x steps*batch, may be empty) is the loss
  // gradient wrt each step's output; dh_last is added at the final step.
  // Accumulates U and b gradients, returns dL/d(ax) and writes dL/dh0.
  Mat<T> backward_projected(const Tape& tape, const Mat<T>& dh_out,
                            const Mat<T>& dh_last, Mat<T>* dh0) {
    const int H = hidden_, S = tape.steps, B = tape.batch;
    Mat<T> dax(3 * H, static_cast<Eigen::Index>(S) * B);
    Mat<T> dh = dh_last.size() ? dh_last : Mat<T>::Zero(H, B);
    const auto uzr = u_.value.topRows(2 * H);
    const auto un = u_.value.bottomRows(H);
    Mat<T> dcand(H, B), dn(H, B), dz(H, B), drh(H, B), dprev(H, B);
    for (int t = S - 1; t >= 0; --t) {
      if (dh_out.size()) dh += dh_out.middleCols(t * B, B);
      const auto hp = tape.h.middleCols(t * B, B);
      const auto z = tape.z.middleCols(t * B, B);
      const auto r = tape.r.middleCols(t * B, B);
      const auto n = tape.n.middleCols(t * B, B);
      dcand = dh;
      dprev.setZero();
      if (tape.mask != nullptr) {
        const auto m = tape.mask->middleCols(t * B, B);
        for (int b = 0; b < B; ++b)
          if (m(0, b) == T(0)) {
            dprev.col(b) = dh.col(b);
            dcand.col(b).setZero();
          }
      }
      auto da = dax.middleCols(t * B, B);
      // h = (1 - z) n + z hp
      dn = dcand.cwiseProduct((T(1) - z.array()).matrix());
      dz = dcand.cwiseProduct(hp - n);
      dprev += dcand.cwiseProduct(z);
      da.bottomRows(H) = dn.array() * (T(1) - n.array().square());
      da.topRows(H) = dz.array() * z.array() * (T(1) - z.array());
      drh.noalias() = un.transpose() * da.bottomRows(H);
      da.middleRows(H, H) =
          drh.array() * hp.array() * r.array() * (T(1) - r.array());
      dprev += drh.cwiseProduct(r);
      dprev.noalias() += uzr.transpose() * da.topRows(2 * H);
      dh = dprev;
    }
    const Eigen::Index n_cols = static_cast<Eigen::Index>(S) * B;
    u_.grad.topRows(2 * H).noalias() +=
        dax.topRows(2 * H) * tape.h.leftCols(n_cols).transpose();
    u_.grad.bottomRows(H).noalias() += dax.bottomRows(H) * tape.rh.transpose();
    b_.grad.col(0) += dax.rowwise().sum();
    if (dh0 != nullptr) *dh0 = dh;
    return dax;
  }

  // Gradient of W from dL/d(ax) and the inputs; returns dL/dx.
  Mat<T> backward_input(const Mat<T>& dax, const Mat<T>& x,
                        bool want_input_grad = true) {
    w_.grad.noalias() += dax * x.transpose();
    if (!want_input_grad) return Mat<T>();
    return w_.value.transpose() * dax;
  }

  // Variant for an input column repeated at every step: dax is summed over
  // steps before the weight product. Returns dL/dx for the single column.
  Mat<T> backward_constant_input(const Mat<T>& dax, int steps, int batch,
                                 const Mat<T>& x) {
    Mat<T> acc = Mat<T>::Zero(dax.rows(), batch);
    for (int t = 0; t < steps; ++t) acc += dax.middleCols(t * batch, batch);
    w_.grad.noalias() += acc * x.transpose();
    return w_.value.transpose() * acc;
  }

  const Param<T>& w() const { return w_; }
  const Param<T>& u() const { return u_; }
  const Param<T>& b() const { return b_; }

 private:
  int in_ = 0, hidden_ = 0;
  Param<T> w_, u_, b_;
};

// Stack of GRU layers whose output is the final hidden state of the top
// layer. Used for both encoders of a segment.
template <typename T>
class GruEncoder {
 public:
  struct Tape {
    std::vector<typename GruLayer<T>::Tape> layers;
  };

  GruEncoder() = default;
  GruEncoder(const std::string& name, int in, int hidden, int layers,
             Rng& rng) {
    if (layers < 1) throw ArgumentError("encoder needs >= 1 layer");
    for (int l = 0; l < layers; ++l)
      layers_.emplace_back(name + ".l" + std::to_string(l),
                           l == 0 ? in : hidden, hidden, rng);
  }

  int in_dim() const { return layers_.front().in_dim(); }
  int hidden() const { return layers_.back().hidden(); }
  int num_layers() const { return static_cast<int>(layers_.size()); }

  void collect(ParamList<T>& out) {
    for (auto& l : layers_) l.collect(out);
  }

  Mat<T> forward(const SeqBatch<T>& in, Tape& tape) const {
    tape.layers.assign(layers_.size(), {});
    Mat<T> x_next;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Mat<T> ax = layers_[l].project(l == 0 ? in.x : x_next);
      const Mat<T> h0 = Mat<T>::Zero(layers_[l].hidden(), in.batch);
      layers_[l].forward_projected(ax, in.steps, in.batch, h0, &in.mask,
                                   tape.layers[l]);
      if (l + 1 < layers_.size()) {
        // The next layer consumes steps 1..S of this layer's states.
        const auto& h = tape.layers[l].h;
        x_next = h.rightCols(h.cols() - in.batch);
      }
    }
    const auto& top = tape.layers.back().h;
    return top.rightCols(in.batch);
  }

  Mat<T> forward(const SeqBatch<T>& in) const {
    Tape tape;
    return forward(in, tape);
  }

  // Back-propagates dL/d(final state). Returns dL/d(input frames) when
  // requested.
  Mat<T> backward(const SeqBatch<T>& in, const Tape& tape,
                  const Mat<T>& d_final, bool want_input_grad = false) {
    Mat<T> dh_out;  // gradient wrt the outputs of the current layer
    Mat<T> dx;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const Mat<T> dax = layers_[l].backward_projected(
          tape.layers[l], dh_out, l + 1 == layers_.size() ? d_final : Mat<T>(),
          nullptr);
      if (l == 0) {
        dx = layers_[l].backward_input(dax, in.x, want_input_grad);
      } else {
        const auto& h = tape.layers[l - 1].h;
        const Mat<T> x = h.rightCols(h.cols() - in.batch);
        dh_out = layers_[l].backward_input(dax, x, true);
      }
    }
    return dx;
  }

  std::vector<GruLayer<T>>& layers() { return layers_; }
  const std::vector<GruLayer<T>>& layers() const { return layers_; }

 private:
  std::vector<GruLayer<T>> layers_;
};


// Conditional GRU decoder. A conditioning vector c is mapped through
// tanh(W_l c + b_l) to the initial state of every layer and is also the
// input of the bottom layer at every step; an affine read-out maps the top
// layer's state to one output frame per step.
template <typename T>
class GruDecoder {
 public:
  struct Tape {
    int steps = 0, batch = 0;
    std::vector<typename Mlp<T>::Tape> init;
    std::vector<Mat<T>> h0;
    std::vector<typename GruLayer<T>::Tape> layers;
    typename Mlp<T>::Tape out;
  };

  GruDecoder() = default;
  GruDecoder(const std::string& name, int cond_dim, int hidden, int layers,
             int out_dim, Rng& rng) {
    if (layers < 1) throw ArgumentError("decoder needs >= 1 layer");
    for (int l = 0; l < layers; ++l) {
      init_.emplace_back(name + ".init" + std::to_string(l),
                         std::vector<int>{cond_dim, hidden},
                         Activation::kLinear, rng);
      layers_.emplace_back(name + ".l" + std::to_string(l),
                           l == 0 ? cond_dim : hidden, hidden, rng);
    }
    out_ = Mlp<T>(name + ".out", {hidden, out_dim}, Activation::kLinear, rng);
  }

  int cond_dim() const { return layers_.front().in_dim(); }
  int out_dim() const { return out_.out_dim(); }
  int hidden() const { return layers_.back().hidden(); }
  int num_layers() const { return static_cast<int>(layers_.size()); }

  void collect(ParamList<T>& out) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      init_[l].collect(out);
      layers_[l].collect(out);
    }
    out_.collect(out);
  }

  // c: cond_dim x batch. Returns out_dim x (steps * batch), time-major.
  Mat<T> forward(const Mat<T>& c, int steps, Tape& tape) const {
    if (c.rows() != cond_dim())
      throw ShapeError("decoder condition has " + std::to_string(c.rows()) +
                       " rows, expected " + std::to_string(cond_dim()));
    if (steps < 1) throw ArgumentError("decoder needs at least one step");
    const int B = static_cast<int>(c.cols());
    tape.steps = steps;
    tape.batch = B;
    tape.init.assign(layers_.size(), {});
    tape.h0.assign(layers_.size(), {});
    tape.layers.assign(layers_.size(), {});
    Mat<T> x_next;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      tape.h0[l] = init_[l].forward(c, tape.init[l]).array().tanh().matrix();
      Mat<T> ax;
      if (l == 0) {
        const Mat<T> a1 = layers_[0].project(c);
        ax = a1.replicate(1, steps);
      } else {
        ax = layers_[l].project(x_next);
      }
      layers_[l].forward_projected(ax, steps, B, tape.h0[l], nullptr,
                                   tape.layers[l]);
      const auto& h = tape.layers[l].h;
      x_next = h.rightCols(h.cols() - B);
    }
    return out_.forward(x_next, tape.out);
  }

  Mat<T> forward(const Mat<T>& c, int steps) const {
    Tape tape;
    return forward(c, steps, tape);
  }

  // Returns dL/dc given dL/d(outputs).
  Mat<T> backward(const Mat<T>& c, const Tape& tape, const Mat<T>& dy) {
    const int S = tape.steps, B = tape.batch;
    Mat<T> dh_out = out_.backward(tape.out, dy);
    Mat<T> dc = Mat<T>::Zero(c.rows(), B);
    for (std::size_t l = layers_.size(); l-- > 0;) {
      Mat<T> dh0;
      const Mat<T> dax =
          layers_[l].backward_projected(tape.layers[l], dh_out, Mat<T>(), &dh0);
      const Mat<T> dpre =
          dh0.cwiseProduct((T(1) - tape.h0[l].array().square()).matrix());
      dc += init_[l].backward(tape.init[l], dpre);
      if (l == 0) {
        dc += layers_[0].backward_constant_input(dax, S, B, c);
      } else {
        const auto& h = tape.layers[l - 1].h;
        const Mat<T> x = h.rightCols(h.cols() - B);
        dh_out = layers_[l].backward_input(dax, x, true);
      }
    }
    return dc;
  }

 private:
  std::vector<Mlp<T>> init_;
  std::vector<GruLayer<T>> layers_;
  Mlp<T> out_;
};

}  // namespace pasevec::nn

#endif  // PASEVEC_NN_GRU_HPP_
