// pasevec/align.hpp

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

// Aligning two embedding spaces from labeled word pairs.
//
// Both tables are reduced to their top K principal components, giving paired
// columns a_i, b_i. Two K x K maps are learned by mini-batch gradient descent
// on
//
//   L = sum ||b_i - T_ab a_i||^2 + sum ||a_i - T_ba b_i||^2
//     + l' sum ||a_i - T_ba T_ab a_i||^2 + l' sum ||b_i - T_ab T_ba b_i||^2
//
// starting from the identity. Quality is measured by top-k nearest accuracy:
// word i counts when b_i is among the k text vectors nearest to T_ab a_i.

#ifndef PASEVEC_ALIGN_HPP_
#define PASEVEC_ALIGN_HPP_

#include <algorithm>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "pasevec/embedding_table.hpp"
#include "pasevec/nn/param.hpp"
#include "pasevec/tensor_archive.hpp"

namespace pasevec {

struct AlignConfig {
  int k = 100;
  double cycle_weight = 0.5;
  int batch_size = 200;
  double lr = 0.01;
  int iterations = 5000;
  std::string metric = "euclidean";  // or "cosine"
  std::vector<int> report_k{1, 10};
  std::uint64_t seed = 1;

  void validate() const {
    if (k < 1) throw ConfigError("align: K must be >= 1");
    if (cycle_weight < 0) throw ConfigError("align: cycle weight must be >= 0");
    if (batch_size < 1) throw ConfigError("align: batch size must be >= 1");
    if (!(lr > 0)) throw ConfigError("align: lr must be > 0");
    if (iterations < 0) throw ConfigError("align: iterations must be >= 0");
    if (metric != "euclidean" && metric != "cosine")
      throw ConfigError("align: metric must be euclidean or cosine");
    for (int r : report_k)
      if (r < 1) throw ConfigError("align: report k must be >= 1");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AlignConfig, k, cycle_weight, batch_size,
                                                lr, iterations, metric, report_k, seed)

struct PcaProjection {
  Vec<double> mean;
  Mat<double> basis;  // K x D, orthonormal rows
  std::vector<double> explained;

  int k() const { return static_cast<int>(basis.rows()); }
  int dim() const { return static_cast<int>(basis.cols()); }
};

// x: D x N, one sample per column. Covariance uses 1/N.
inline PcaProjection fit_pca(const Mat<double>& x, int k) {
  const Eigen::Index d = x.rows(), n = x.cols();
  if (n < 2) throw ArgumentError("fit_pca: need at least two vectors");
  if (k < 1 || k > std::min<Eigen::Index>(d, n - 1))
    throw ArgumentError("fit_pca: K=" + std::to_string(k) + " exceeds min(dim=" +
                        std::to_string(d) + ", count-1=" + std::to_string(n - 1) + ")");
  PcaProjection p;
  p.mean = x.rowwise().mean();
  const Mat<double> xc = x.colwise() - p.mean;
  const Mat<double> cov = (xc * xc.transpose()) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Mat<double>> eig(cov);
  if (eig.info() != Eigen::Success) throw Error("fit_pca: eigen decomposition failed");
  p.basis.resize(k, d);
  for (int r = 0; r < k; ++r) {
    const Eigen::Index col = d - 1 - r;  // eigenvalues ascend
    Vec<double> v = eig.eigenvectors().col(col);
    Eigen::Index at;
    v.cwiseAbs().maxCoeff(&at);
    if (v(at) < 0) v = -v;
    p.basis.row(r) = v.transpose();
    p.explained.push_back(std::max(0.0, eig.eigenvalues()(col)));
  }
  return p;
}

inline PcaProjection fit_pca(const EmbeddingTable& table, int k) {
  return fit_pca(table.matrix(table.labels()), k);
}

inline Vec<double> project(const PcaProjection& p, const Vec<double>& v) {
  if (v.size() != p.dim()) throw ShapeError("project: dimension mismatch");
  return p.basis * (v - p.mean);
}

inline Mat<double> project(const PcaProjection& p, const Mat<double>& x) {
  if (x.rows() != p.dim()) throw ShapeError("project: dimension mismatch");
  return p.basis * (x.colwise() - p.mean);
}

struct AlignmentModel {
  Mat<double> t_ab, t_ba;
  PcaProjection source, target;
  double cycle_weight = 0.5;
  double final_loss = 0;           // mean per pair over all pairs
  std::vector<double> loss_history;  // sampled every 100 iterations

  int k() const { return static_cast<int>(t_ab.rows()); }
};

// Matrices are stored in single precision.
inline void save_alignment(const AlignmentModel& m, const std::filesystem::path& path) {
  TensorArchive ar;
  ar.put_matrix("t_ab", m.t_ab);
  ar.put_matrix("t_ba", m.t_ba);
  ar.put_vector("source.mean", m.source.mean);
  ar.put_matrix("source.basis", m.source.basis);
  ar.put_vector("target.mean", m.target.mean);
  ar.put_matrix("target.basis", m.target.basis);
  ar.metadata = nlohmann::json{{"kind", "alignment"},
                               {"cycle_weight", m.cycle_weight},
                               {"final_loss", m.final_loss},
                               {"loss_history", m.loss_history},
                               {"source_explained", m.source.explained},
                               {"target_explained", m.target.explained}}
                    .dump();
  ar.save(path);
}

inline AlignmentModel load_alignment(const std::filesystem::path& path) {
  const TensorArchive ar = TensorArchive::load(path);
  const auto meta = nlohmann::json::parse(ar.metadata);
  if (meta.value("kind", "") != "alignment")
    throw SchemaError(path.string() + " is not an alignment archive");
  AlignmentModel m;
  m.t_ab = ar.get_matrix<double>("t_ab");
  m.t_ba = ar.get_matrix<double>("t_ba");
  m.source = {ar.get_vector<double>("source.mean"), ar.get_matrix<double>("source.basis"),
              meta.at("source_explained").get<std::vector<double>>()};
  m.target = {ar.get_vector<double>("target.mean"), ar.get_matrix<double>("target.basis"),
              meta.at("target_explained").get<std::vector<double>>()};
  m.cycle_weight = meta.at("cycle_weight").get<double>();
  m.final_loss = meta.at("final_loss").get<double>();
  m.loss_history = meta.at("loss_history").get<std::vector<double>>();
  return m;
}

// Summed loss over the columns of a and b; gradients (if given) are summed too.
inline double alignment_loss(const Mat<double>& t_ab, const Mat<double>& t_ba,
                             const Mat<double>& a, const Mat<double>& b,
                             double cycle_weight, Mat<double>* g_ab = nullptr,
                             Mat<double>* g_ba = nullptr) {
  if (a.cols() == 0) throw ArgumentError("alignment_loss: no pairs");
  if (a.cols() != b.cols() || a.rows() != t_ab.cols() || b.rows() != t_ab.rows() ||
      t_ba.rows() != a.rows() || t_ba.cols() != b.rows())
    throw ShapeError("alignment_loss: shape mismatch");
  const Mat<double> ta = t_ab * a, sb = t_ba * b;
  const Mat<double> r1 = b - ta;                // forward residual
  const Mat<double> r2 = a - sb;                // backward residual
  const Mat<double> r3 = a - t_ba * ta;         // a -> b -> a cycle
  const Mat<double> r4 = b - t_ab * sb;         // b -> a -> b cycle
  const double lw = cycle_weight;
  if (g_ab) {
    *g_ab = -2.0 * (r1 * a.transpose() + lw * t_ba.transpose() * r3 * a.transpose() +
                    lw * r4 * sb.transpose());
  }
  if (g_ba) {
    *g_ba = -2.0 * (r2 * b.transpose() + lw * r3 * ta.transpose() +
                    lw * t_ab.transpose() * r4 * b.transpose());
  }
  return r1.squaredNorm() + r2.squaredNorm() + lw * (r3.squaredNorm() + r4.squaredNorm());
}

inline double alignment_loss(const AlignmentModel& m, const Mat<double>& a,
                             const Mat<double>& b) {
  return alignment_loss(m.t_ab, m.t_ba, a, b, m.cycle_weight);
}

// Mini-batch Adam on the per-pair mean loss over projected pairs.
inline AlignmentModel fit_transforms(const Mat<double>& a, const Mat<double>& b,
                                     const AlignConfig& cfg) {
  cfg.validate();
  if (a.cols() == 0) throw ArgumentError("train_alignment: no pairs");
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("train_alignment: projected sets differ in shape");
  const Eigen::Index k = a.rows(), n = a.cols();
  AlignmentModel m;
  m.cycle_weight = cfg.cycle_weight;
  nn::Param<double> tab("t_ab", k, k), tba("t_ba", k, k);
  tab.value.setIdentity();
  tba.value.setIdentity();
  nn::Adam<double> opt({.lr = cfg.lr});
  const nn::ParamList<double> ps{&tab, &tba};
  Rng rng(mix_seed(cfg.seed, 0xa11));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, n);
  Eigen::Index at = n;
  Mat<double> ab(k, bs), bb(k, bs);
  for (int it = 0; it < cfg.iterations; ++it) {
    if (at + bs > n) {
      shuffle(order.begin(), order.end(), rng);
      at = 0;
    }
    for (Eigen::Index c = 0; c < bs; ++c) {
      ab.col(c) = a.col(order[at + c]);
      bb.col(c) = b.col(order[at + c]);
    }
    at += bs;
    alignment_loss(tab.value, tba.value, ab, bb, cfg.cycle_weight, &tab.grad, &tba.grad);
    tab.grad /= static_cast<double>(bs);
    tba.grad /= static_cast<double>(bs);
    // Linear decay to zero keeps the final iterate from oscillating.
    opt.step(ps, cfg.lr * (1.0 - static_cast<double>(it) / cfg.iterations));
    if (it % 100 == 0)
      m.loss_history.push_back(
          alignment_loss(tab.value, tba.value, a, b, cfg.cycle_weight) / n);
  }
  m.t_ab = tab.value;
  m.t_ba = tba.value;
  m.final_loss = alignment_loss(m.t_ab, m.t_ba, a, b, cfg.cycle_weight) / n;
  return m;
}

inline void require_coverage(const EmbeddingTable& t, const std::vector<std::string>& words) {
  std::vector<std::string> missing;
  for (const auto& w : words)
    if (!t.contains(w)) missing.push_back(w);
  if (!missing.empty())
    throw CoverageError(t.tag() + " lacks paired words: " + EmbeddingTable::join(missing));
}

// Projections are fitted on the paired words only.
inline AlignmentModel train_alignment(const EmbeddingTable& source,
                                      const EmbeddingTable& target,
                                      const std::vector<std::string>& words,
                                      const AlignConfig& cfg) {
  cfg.validate();
  require_coverage(source, words);
  require_coverage(target, words);
  const PcaProjection pa = fit_pca(source.matrix(words), cfg.k);
  const PcaProjection pb = fit_pca(target.matrix(words), cfg.k);
  AlignmentModel m = fit_transforms(project(pa, source.matrix(words)),
                                    project(pb, target.matrix(words)), cfg);
  m.source = pa;
  m.target = pb;
  return m;
}

// a, b: projected paired sets (column i of each belongs to word i, words in
// label order). Word i is a hit when fewer than k candidates rank ahead of
// b_i, where candidates at equal distance rank by column order.
inline double topk_accuracy(const Mat<double>& t_ab, const Mat<double>& a,
                            const Mat<double>& b, int k,
                            const std::string& metric = "euclidean") {
  if (a.cols() == 0) throw ArgumentError("topk accuracy: empty pairing");
  if (k < 1) throw ArgumentError("topk accuracy: k must be >= 1");
  const Eigen::Index n = a.cols();
  const Mat<double> y = t_ab * a;
  const bool cosine = metric == "cosine";
  Mat<double> bn = b;
  if (cosine)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double nb = b.col(j).norm();
      if (nb > 0) bn.col(j) /= nb;
    }
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec<double> d(n);
    if (cosine) {
      const double ny = y.col(i).norm();
      const Vec<double> yi = ny > 0 ? Vec<double>(y.col(i) / ny) : Vec<double>(y.col(i));
      d = -(bn.transpose() * yi);
    } else {
      d = (bn.colwise() - y.col(i)).colwise().squaredNorm().transpose();
    }
    Eigen::Index ahead = 0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i && (d(j) < d(i) || (d(j) == d(i) && j < i))) ++ahead;
    hits += ahead < k;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

inline double topk_nearest_accuracy(const AlignmentModel& m, const EmbeddingTable& source,
                                    const EmbeddingTable& target,
                                    std::vector<std::string> words, int k,
                                    const std::string& metric = "euclidean") {
  if (words.empty()) throw ArgumentError("topk accuracy: empty pairing");
  std::sort(words.begin(), words.end());
  require_coverage(source, words);
  require_coverage(target, words);
  return topk_accuracy(m.t_ab, project(m.source, source.matrix(words)),
                       project(m.target, target.matrix(words)), k, metric);
}

struct AlignmentReport {
  std::string source_tag, target_tag;
  std::size_t words = 0;
  std::map<int, double> accuracy;  // k -> top-k nearest accuracy
  double final_loss = 0;
  AlignConfig config;
};

inline void to_json(nlohmann::json& j, const AlignmentReport& r) {
  nlohmann::json acc = nlohmann::json::object();
  for (const auto& [k, v] : r.accuracy) acc["top" + std::to_string(k)] = v;
  j = {{"source", r.source_tag}, {"target", r.target_tag}, {"words", r.words},
       {"accuracy", acc},        {"final_loss", r.final_loss}, {"config", r.config}};
}

inline AlignmentReport evaluate_alignment(const EmbeddingTable& source,
                                          const EmbeddingTable& target,
                                          const std::vector<std::string>& words,
                                          const AlignConfig& cfg) {
  const AlignmentModel m = train_alignment(source, target, words, cfg);
  AlignmentReport r;
  r.source_tag = source.tag();
  r.target_tag = target.tag();
  r.words = words.size();
  r.final_loss = m.final_loss;
  r.config = cfg;
  for (int k : cfg.report_k)
    r.accuracy[k] = topk_nearest_accuracy(m, source, target, words, k, cfg.metric);
  return r;
}

}  // namespace pasevec

#endif  // PASEVEC_ALIGN_HPP_
