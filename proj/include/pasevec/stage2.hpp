// pasevec/stage2.hpp

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

// Skip-gram with negative sampling over fixed per-segment input vectors.
//
// Two feedforward encoders map an input vector u to a semantic embedding
// v_w = E_sem(u) and a context embedding v_c = E_ctx(u). For positive
// (center, context) pairs P and sampled negatives N the loss is
//
//   L_sem = sum_P -log sig(v_w_i . v_c_j) + sum_N -log sig(-v_w_i . v_c_k)
//
// Positive pairs are ordered pairs within one utterance at most `window`
// positions apart. Negatives are drawn from unigram counts raised to
// `negative_exponent`, excluding word types inside the center's window,
// k per positive pair and redrawn every epoch.
//
// The audio semantic stage runs this over frozen phonetic vectors; the text
// references reuse it with one-hot or phoneme-autoencoder inputs.

#ifndef PASEVEC_STAGE2_HPP_
#define PASEVEC_STAGE2_HPP_

#include <algorithm>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pasevec/corpus.hpp"
#include "pasevec/embedding_table.hpp"
#include "pasevec/nn/mlp.hpp"
#include "pasevec/stage1.hpp"
#include "pasevec/tensor_archive.hpp"

namespace pasevec {

struct SkipGramConfig {
  int window = 5;
  int negatives = 5;
  std::vector<int> hidden{256, 256};
  int embedding_dim = 128;
  std::string activation = "relu";
  double negative_exponent = 0.75;
  double lr = 1e-3;
  int epochs = 20;
  int batch_size = 256;
  std::uint64_t seed = 1;

  void validate() const {
    if (window < 1) throw ConfigError("skip-gram: window must be >= 1");
    if (negatives < 1) throw ConfigError("skip-gram: negatives must be >= 1");
    if (embedding_dim < 1) throw ConfigError("skip-gram: embedding_dim must be >= 1");
    for (int h : hidden)
      if (h < 1) throw ConfigError("skip-gram: hidden sizes must be >= 1");
    if (epochs < 1 || batch_size < 1)
      throw ConfigError("skip-gram: epochs and batch_size must be >= 1");
    if (!(lr > 0)) throw ConfigError("skip-gram: lr must be > 0");
    nn::activation_from_name(activation);
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SkipGramConfig, window, negatives,
                                                hidden, embedding_dim, activation,
                                                negative_exponent, lr, epochs,
                                                batch_size, seed)

using Stage2Config = SkipGramConfig;

struct ContextPair {
  std::size_t center = 0, context = 0;  // segment indices
  bool operator==(const ContextPair&) const = default;
};

// Ordered pairs (i, j), i != j, same utterance, |pos_i - pos_j| <= window.
inline std::vector<ContextPair> enumerate_context_pairs(const Corpus& corpus, int window) {
  std::vector<ContextPair> out;
  for (const auto& u : corpus.utterances) {
    const auto n = static_cast<std::ptrdiff_t>(u.segments.size());
    for (std::ptrdiff_t a = 0; a < n; ++a) {
      const std::size_t ia = u.segments[a];
      for (std::ptrdiff_t b = std::max<std::ptrdiff_t>(0, a - window);
           b <= std::min(n - 1, a + window); ++b)
        if (b != a) out.push_back({ia, u.segments[b]});
    }
  }
  return out;
}

// Word-type labels inside the window around a segment, center included.
inline std::set<std::string> window_words(const Corpus& corpus, std::size_t center,
                                          int window) {
  const auto& seg = corpus.segments[center];
  const auto& utt = corpus.utterances[corpus.utterance_index(seg.utterance_id)];
  std::set<std::string> words;
  const int n = static_cast<int>(utt.segments.size());
  for (int p = std::max(0, seg.position - window);
       p <= std::min(n - 1, seg.position + window); ++p)
    words.insert(corpus.segments[utt.segments[p]].word_label);
  return words;
}

class NegativeSampler {
 public:
  NegativeSampler(const Corpus& corpus, double exponent) {
    std::map<std::string, std::vector<std::size_t>> by_word;
    for (std::size_t i = 0; i < corpus.size(); ++i)
      by_word[corpus.segments[i].word_label].push_back(i);
    for (auto& [w, segs] : by_word) {
      words_.push_back(w);
      weight_.push_back(std::pow(static_cast<double>(segs.size()), exponent));
      segments_.push_back(std::move(segs));
    }
    const double total = std::accumulate(weight_.begin(), weight_.end(), 0.0);
    for (auto& w : weight_) w /= total;
    cumulative_.resize(weight_.size());
    std::partial_sum(weight_.begin(), weight_.end(), cumulative_.begin());
    n_segments_ = corpus.size();
  }

  const std::vector<std::string>& words() const { return words_; }
  // Normalized sampling probability per word, aligned with words().
  const std::vector<double>& probabilities() const { return weight_; }

  // k segment indices whose word type is outside `excluded`.
  std::vector<std::size_t> sample(const std::set<std::string>& excluded, int k,
                                  Rng& rng) const {
    std::vector<char> banned(words_.size(), 0);
    double allowed = 1.0;
    for (std::size_t w = 0; w < words_.size(); ++w)
      if (excluded.count(words_[w])) {
        banned[w] = 1;
        allowed -= weight_[w];
      }
    std::vector<std::size_t> out;
    out.reserve(static_cast<std::size_t>(k));
    if (allowed <= 1e-12) {
      warn("negative sampling: every word type is inside the window; sampling uniformly");
      for (int n = 0; n < k; ++n) out.push_back(uniform_index(rng, n_segments_));
      return out;
    }
    while (static_cast<int>(out.size()) < k) {
      std::size_t w;
      if (allowed > 0.05) {
        do {
          w = draw_word(uniform01(rng));
        } while (banned[w]);
      } else {
        double u = uniform01(rng) * allowed;
        for (w = 0; w + 1 < words_.size(); ++w) {
          if (banned[w]) continue;
          if (u < weight_[w]) break;
          u -= weight_[w];
        }
        while (banned[w]) --w;  // numerical tail
      }
      out.push_back(segments_[w][uniform_index(rng, segments_[w].size())]);
    }
    return out;
  }

 private:
  std::size_t draw_word(double u) const {
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()),
                                 words_.size() - 1);
  }

  std::vector<std::string> words_;
  std::vector<double> weight_, cumulative_;
  std::vector<std::vector<std::size_t>> segments_;
  std::size_t n_segments_ = 0;
};

inline std::vector<std::size_t> sample_negatives(const NegativeSampler& sampler,
                                                 const Corpus& corpus, std::size_t center,
                                                 int k, int window, Rng& rng) {
  if (k < 1) throw ArgumentError("sample_negatives: k must be >= 1");
  return sampler.sample(window_words(corpus, center, window), k, rng);
}

template <typename T>
class SkipGramModel {
 public:
  SkipGramModel() = default;
  SkipGramModel(int input_dim, const SkipGramConfig& cfg) {
    cfg.validate();
    Rng rng(mix_seed(cfg.seed, 0x5e));
    std::vector<int> sizes{input_dim};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(cfg.embedding_dim);
    const auto act = nn::activation_from_name(cfg.activation);
    sem_ = nn::Mlp<T>("sem", sizes, act, rng);
    ctx_ = nn::Mlp<T>("ctx", sizes, act, rng);
    cfg_ = cfg;
  }

  const SkipGramConfig& config() const { return cfg_; }
  int input_dim() const { return sem_.in_dim(); }
  int embedding_dim() const { return sem_.out_dim(); }
  nn::Mlp<T>& semantic_encoder() { return sem_; }
  nn::Mlp<T>& context_encoder() { return ctx_; }
  const nn::Mlp<T>& semantic_encoder() const { return sem_; }
  const nn::Mlp<T>& context_encoder() const { return ctx_; }

  nn::ParamList<T> params() {
    nn::ParamList<T> p;
    sem_.collect(p);
    ctx_.collect(p);
    return p;
  }

 private:
  SkipGramConfig cfg_;
  nn::Mlp<T> sem_, ctx_;
};

template <typename T>
using Stage2Model = SkipGramModel<T>;

template <typename T>
Vec<T> semantic_embed(const SkipGramModel<T>& m, const Vec<T>& u) {
  if (u.size() != m.input_dim()) throw ShapeError("semantic_embed: input dimension mismatch");
  return m.semantic_encoder().forward(u).col(0);
}

template <typename T>
Vec<T> context_embed(const SkipGramModel<T>& m, const Vec<T>& u) {
  if (u.size() != m.input_dim()) throw ShapeError("context_embed: input dimension mismatch");
  return m.context_encoder().forward(u).col(0);
}

// Stable -log sig(s) = log(1 + exp(-s)).
template <typename T>
T neg_log_sigmoid(T s) {
  return s > T(0) ? std::log1p(std::exp(-s)) : -s + std::log1p(std::exp(s));
}

template <typename T>
T logistic(T s) {
  return s >= T(0) ? T(1) / (T(1) + std::exp(-s)) : std::exp(s) / (T(1) + std::exp(s));
}

// Inputs are columns: positives pair pos_center[:, n] with pos_context[:, n],
// negatives pair neg_center[:, n] with neg_context[:, n]. Returns the summed
// loss; with `grad`, accumulates scale * dL/dtheta into both encoders.
template <typename T>
T semantic_loss_terms(SkipGramModel<T>& m, const Mat<T>& pos_center,
                      const Mat<T>& pos_context, const Mat<T>& neg_center,
                      const Mat<T>& neg_context, bool grad, T scale = T(1)) {
  const Eigen::Index np = pos_center.cols(), nn_ = neg_center.cols();
  if (np == 0 && nn_ == 0) throw ArgumentError("semantic_loss: no pairs");
  if (pos_context.cols() != np || neg_context.cols() != nn_)
    throw ShapeError("semantic_loss: pair lists of unequal length");
  Mat<T> centers(m.input_dim(), np + nn_), contexts(m.input_dim(), np + nn_);
  if (np) centers.leftCols(np) = pos_center, contexts.leftCols(np) = pos_context;
  if (nn_) centers.rightCols(nn_) = neg_center, contexts.rightCols(nn_) = neg_context;
  typename nn::Mlp<T>::Tape ts, tc;
  const Mat<T> vw = m.semantic_encoder().forward(centers, ts);
  const Mat<T> vc = m.context_encoder().forward(contexts, tc);
  const Mat<T> s = vw.cwiseProduct(vc).colwise().sum();
  T loss = 0;
  Mat<T> ds(1, s.cols());
  for (Eigen::Index k = 0; k < s.cols(); ++k) {
    const bool pos = k < np;
    loss += neg_log_sigmoid(pos ? s(0, k) : -s(0, k));
    ds(0, k) = scale * (pos ? -logistic(-s(0, k)) : logistic(s(0, k)));
  }
  if (grad) {
    m.semantic_encoder().backward(ts, vc.array().rowwise() * ds.row(0).array());
    m.context_encoder().backward(tc, vw.array().rowwise() * ds.row(0).array());
  }
  return loss;
}

// Sum over positive pairs (v_p_i, v_p_j) and negative pairs (v_p_i, v_p_k).
template <typename T>
T semantic_loss(const SkipGramModel<T>& m,
                std::span<const std::pair<Vec<T>, Vec<T>>> positives,
                std::span<const std::pair<Vec<T>, Vec<T>>> negatives) {
  auto pack = [&](std::span<const std::pair<Vec<T>, Vec<T>>> v, bool first) {
    Mat<T> out(m.input_dim(), static_cast<Eigen::Index>(v.size()));
    for (std::size_t k = 0; k < v.size(); ++k) {
      const Vec<T>& x = first ? v[k].first : v[k].second;
      if (x.size() != m.input_dim()) throw ShapeError("semantic_loss: dimension mismatch");
      out.col(static_cast<Eigen::Index>(k)) = x;
    }
    return out;
  };
  return semantic_loss_terms(const_cast<SkipGramModel<T>&>(m), pack(positives, true),
                             pack(positives, false), pack(negatives, true),
                             pack(negatives, false), false);
}

template <typename T>
struct SkipGramResult {
  SkipGramModel<T> model;
  std::vector<double> loss_history;  // per epoch, mean per positive pair
};

template <typename T>
Mat<T> gather_columns(const Mat<T>& x, std::span<const std::size_t> idx) {
  Mat<T> out(x.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k)
    out.col(static_cast<Eigen::Index>(k)) = x.col(static_cast<Eigen::Index>(idx[k]));
  return out;
}

// inputs: one column per corpus segment.
template <typename T>
SkipGramResult<T> train_skipgram(const Corpus& corpus, const Mat<T>& inputs,
                                 const SkipGramConfig& cfg) {
  cfg.validate();
  if (inputs.cols() != static_cast<Eigen::Index>(corpus.size()))
    throw ShapeError("skip-gram: need one input column per segment");
  std::vector<ContextPair> pairs = enumerate_context_pairs(corpus, cfg.window);
  if (pairs.empty())
    throw TrainingError("skip-gram: corpus has no multi-word utterance, no positive pairs");
  SkipGramResult<T> res{SkipGramModel<T>(static_cast<int>(inputs.rows()), cfg), {}};
  auto& m = res.model;
  const NegativeSampler sampler(corpus, cfg.negative_exponent);
  std::vector<std::set<std::string>> excluded(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i)
    excluded[i] = window_words(corpus, i, cfg.window);

  Rng rng(mix_seed(cfg.seed, 0x26));
  nn::Adam<T> opt({.lr = cfg.lr});
  auto ps = m.params();
  const std::size_t B = static_cast<std::size_t>(cfg.batch_size);
  const int k = cfg.negatives;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(pairs.begin(), pairs.end(), rng);
    double total = 0;
    for (std::size_t at = 0; at < pairs.size(); at += B) {
      const std::size_t end = std::min(pairs.size(), at + B);
      std::vector<std::size_t> pc, px, nc, nx;
      for (std::size_t p = at; p < end; ++p) {
        pc.push_back(pairs[p].center);
        px.push_back(pairs[p].context);
        for (std::size_t neg : sampler.sample(excluded[pairs[p].center], k, rng)) {
          nc.push_back(pairs[p].center);
          nx.push_back(neg);
        }
      }
      nn::zero_grads(ps);
      const T n = static_cast<T>(end - at);
      total += static_cast<double>(semantic_loss_terms<T>(
          m, gather_columns<T>(inputs, pc), gather_columns<T>(inputs, px),
          gather_columns<T>(inputs, nc), gather_columns<T>(inputs, nx), true, T(1) / n));
      opt.step(ps);
    }
    res.loss_history.push_back(total / static_cast<double>(pairs.size()));
  }
  return res;
}

// Phonetic vectors of every segment, one column each, in corpus order.
template <typename T>
Mat<float> phonetic_vectors(const Stage1Model<T>& s1, const Corpus& corpus) {
  Mat<float> out(s1.phonetic_dim(), static_cast<Eigen::Index>(corpus.size()));
  for (std::size_t i = 0; i < corpus.size(); ++i)
    out.col(static_cast<Eigen::Index>(i)) =
        encode_phonetic(s1, corpus.segments[i]).template cast<float>();
  return out;
}

// Vector cache keyed by segment id (one rank-1 tensor per segment).
inline void save_vector_cache(const Corpus& corpus, const Mat<float>& v,
                              const std::filesystem::path& path, const std::string& kind) {
  TensorArchive ar;
  ar.metadata = nlohmann::json{{"kind", kind}, {"dim", v.rows()}}.dump();
  for (std::size_t i = 0; i < corpus.size(); ++i)
    ar.put_vector(corpus.segments[i].id, v.col(static_cast<Eigen::Index>(i)));
  ar.save(path);
}

inline Mat<float> load_vector_cache(const Corpus& corpus, const std::filesystem::path& path) {
  const TensorArchive ar = TensorArchive::load(path);
  const int dim = nlohmann::json::parse(ar.metadata).at("dim").get<int>();
  Mat<float> v(dim, static_cast<Eigen::Index>(corpus.size()));
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& id = corpus.segments[i].id;
    if (!ar.contains(id)) throw DependencyError("vector cache lacks segment " + id);
    const Vec<float> c = ar.get_vector<float>(id);
    if (c.size() != dim) throw ShapeError("vector cache entry " + id + " has wrong size");
    v.col(static_cast<Eigen::Index>(i)) = c;
  }
  return v;
}

template <typename T = float>
SkipGramResult<T> train_stage2(const Corpus& corpus, const Mat<float>& phonetic,
                               const Stage2Config& cfg) {
  return train_skipgram<T>(corpus, phonetic.cast<T>().eval(), cfg);
}

// The stage-1 model is only read.
template <typename T = float, typename S>
SkipGramResult<T> train_stage2(const Corpus& corpus, const Stage1Model<S>& s1,
                               const Stage2Config& cfg) {
  return train_stage2<T>(corpus, phonetic_vectors(s1, corpus), cfg);
}

// Per-segment semantic embeddings, one column each.
template <typename T>
Mat<float> semantic_vectors(const SkipGramModel<T>& m, const Mat<float>& inputs) {
  return m.semantic_encoder().forward(inputs.cast<T>()).template cast<float>();
}

template <typename T>
void save_skipgram(SkipGramModel<T>& m, const std::filesystem::path& path,
                   const std::string& kind) {
  TensorArchive ar;
  for (auto* p : m.params()) ar.put_matrix(p->name, p->value);
  nlohmann::json meta{{"kind", kind}, {"input_dim", m.input_dim()},
                      {"seed", m.config().seed}, {"config", m.config()}};
  ar.metadata = meta.dump();
  ar.save(path);
}

template <typename T>
SkipGramModel<T> load_skipgram(const std::filesystem::path& path) {
  const TensorArchive ar = TensorArchive::load(path);
  const auto meta = nlohmann::json::parse(ar.metadata);
  SkipGramModel<T> m(meta.at("input_dim").get<int>(), meta.at("config").get<SkipGramConfig>());
  for (auto* p : m.params()) {
    Mat<T> v = ar.get_matrix<T>(p->name);
    if (v.rows() != p->value.rows() || v.cols() != p->value.cols())
      throw ShapeError("checkpoint tensor " + p->name + " has the wrong shape");
    p->value = std::move(v);
  }
  return m;
}

}  // namespace pasevec

#endif  // PASEVEC_STAGE2_HPP_
