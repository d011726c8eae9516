// pasevec/probe.hpp

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

// Linear probe: multinomial logistic regression on standardized features,
// used to measure how much speaker information a set of vectors carries.

#ifndef PASEVEC_PROBE_HPP_
#define PASEVEC_PROBE_HPP_

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "pasevec/nn/param.hpp"

namespace pasevec {

struct ProbeConfig {
  int iterations = 400;
  double lr = 0.05;
  double l2 = 1e-3;
};

struct ProbeResult {
  double accuracy = 0;  // on the test vectors
  double chance = 0;    // majority-class fraction of the test labels
  double train_accuracy = 0;
};

class LinearProbe {
 public:
  // x: dim x n, one column per example.
  void fit(const Mat<double>& x, const std::vector<std::string>& labels,
           const ProbeConfig& cfg = {}) {
    if (x.cols() != static_cast<Eigen::Index>(labels.size()) || labels.empty())
      throw ArgumentError("probe: need one label per column");
    classes_.clear();
    for (const auto& l : labels) classes_.emplace(l, 0);
    int k = 0;
    for (auto& [l, id] : classes_) id = k++;
    mean_ = x.rowwise().mean();
    scale_ = ((x.colwise() - mean_).array().square().rowwise().mean().sqrt() + 1e-8)
                 .inverse()
                 .matrix();
    const Mat<double> z = standardize(x);
    const Eigen::Index n = x.cols(), C = k;
    Mat<double> onehot = Mat<double>::Zero(C, n);
    for (Eigen::Index i = 0; i < n; ++i) onehot(classes_.at(labels[i]), i) = 1;
    w_ = nn::Param<double>("probe.w", C, x.rows());
    b_ = nn::Param<double>("probe.b", C, 1);
    nn::Adam<double> opt({.lr = cfg.lr});
    const nn::ParamList<double> ps{&w_, &b_};
    for (int it = 0; it < cfg.iterations; ++it) {
      const Mat<double> p = softmax(logits(z));
      const Mat<double> d = (p - onehot) / static_cast<double>(n);
      w_.grad = d * z.transpose() + cfg.l2 * w_.value;
      b_.grad = d.rowwise().sum();
      opt.step(ps);
    }
  }

  std::vector<std::string> predict(const Mat<double>& x) const {
    std::vector<std::string> names(classes_.size());
    for (const auto& [l, id] : classes_) names[id] = l;
    const Mat<double> s = logits(standardize(x));
    std::vector<std::string> out;
    for (Eigen::Index i = 0; i < s.cols(); ++i) {
      Eigen::Index best;
      s.col(i).maxCoeff(&best);
      out.push_back(names[best]);
    }
    return out;
  }

  double accuracy(const Mat<double>& x, const std::vector<std::string>& labels) const {
    const auto pred = predict(x);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
    return pred.empty() ? 0.0 : static_cast<double>(hit) / pred.size();
  }

 private:
  Mat<double> standardize(const Mat<double>& x) const {
    return (x.colwise() - mean_).array().colwise() * scale_.array();
  }
  Mat<double> logits(const Mat<double>& z) const {
    return (w_.value * z).colwise() + b_.value.col(0);
  }
  static Mat<double> softmax(Mat<double> s) {
    for (Eigen::Index i = 0; i < s.cols(); ++i) {
      s.col(i).array() -= s.col(i).maxCoeff();
      s.col(i) = s.col(i).array().exp().matrix();
      s.col(i) /= s.col(i).sum();
    }
    return s;
  }

  std::map<std::string, int> classes_;
  Vec<double> mean_, scale_;
  nn::Param<double> w_, b_;
};

inline double majority_fraction(const std::vector<std::string>& labels) {
  std::map<std::string, std::size_t> count;
  std::size_t best = 0;
  for (const auto& l : labels) best = std::max(best, ++count[l]);
  return labels.empty() ? 0.0 : static_cast<double>(best) / labels.size();
}

inline ProbeResult run_probe(const Mat<double>& train_x,
                             const std::vector<std::string>& train_y,
                             const Mat<double>& test_x,
                             const std::vector<std::string>& test_y,
                             const ProbeConfig& cfg = {}) {
  LinearProbe probe;
  probe.fit(train_x, train_y, cfg);
  return {probe.accuracy(test_x, test_y), majority_fraction(test_y),
          probe.accuracy(train_x, train_y)};
}

}  // namespace pasevec

#endif  // PASEVEC_PROBE_HPP_
