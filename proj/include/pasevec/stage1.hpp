// pasevec/stage1.hpp

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

// Phonetic embedding with speaker characteristics disentangled.
//
// A segment x is read by a phonetic encoder E_p and a speaker encoder E_s
// (stacked GRUs, embedding = top-layer final state), giving v_p and v_s. A
// GRU decoder conditioned on [v_p; v_s] reconstructs x. Three criteria shape
// the encoders:
//
//   L_r = sum_i ||x_i - Dec(E_p(x_i), E_s(x_i))||^2
//   L_s = sum_{same spk} ||vs_i - vs_j||^2
//       + sum_{diff spk} max(lambda - ||vs_i - vs_j||^2, 0)
//   L_d = sum_{same spk} D(vp_i, vp_j) - sum_{diff spk} D(vp_i, vp_j)
//
// The critic D maximizes L_d; E_p minimizes it. Training alternates n_disc
// critic updates (with a gradient penalty on interpolated pairs) with one
// joint update of w_r L_r + w_s L_s + w_d L_d, where L_r reaches E_p, E_s
// and the decoder, L_s only E_s and L_d only E_p.
//
// The training objective uses per-frame and per-pair means; the public loss
// functions return the plain sums above.

#ifndef PASEVEC_STAGE1_HPP_
#define PASEVEC_STAGE1_HPP_

#include <algorithm>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pasevec/corpus.hpp"
#include "pasevec/nn/gru.hpp"
#include "pasevec/nn/mlp.hpp"
#include "pasevec/tensor_archive.hpp"

namespace pasevec {

struct Stage1Config {
  int phonetic_hidden = 128;
  int speaker_hidden = 128;
  int decoder_hidden = 256;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int discriminator_hidden = 128;
  int discriminator_layers = 2;
  double lambda_margin = 0.01;
  double w_r = 1.0;
  double w_s = 1.0;
  double w_d = 1.0;
  int n_disc = 5;
  double gp_weight = 10.0;
  double lr = 1e-3;
  double critic_lr = 1e-4;
  double clip_norm = 5.0;
  int epochs = 40;
  int batch_size = 32;
  int early_stop_patience = 8;  // epochs without L_r improvement; 0 disables
  double early_stop_tolerance = 1e-3;
  // false: one merged encoder, no speaker encoder, no L_s / L_d.
  bool disentangle = true;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(lambda_margin > 0)) throw ConfigError("stage1: lambda must be > 0");
    for (int v : {phonetic_hidden, speaker_hidden, decoder_hidden,
                  encoder_layers, decoder_layers, discriminator_hidden,
                  discriminator_layers, epochs, batch_size})
      if (v < 1) throw ConfigError("stage1: sizes must be >= 1");
    if (w_r < 0 || w_s < 0 || w_d < 0)
      throw ConfigError("stage1: loss weights must be >= 0");
    if (n_disc < 1) throw ConfigError("stage1: n_disc must be >= 1");
    if (gp_weight < 0) throw ConfigError("stage1: gp_weight must be >= 0");
    if (!(lr > 0) || !(critic_lr > 0))
      throw ConfigError("stage1: learning rates must be > 0");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    Stage1Config, phonetic_hidden, speaker_hidden, decoder_hidden,
    encoder_layers, decoder_layers, discriminator_hidden, discriminator_layers,
    lambda_margin, w_r, w_s, w_d, n_disc, gp_weight, lr, critic_lr, clip_norm,
    epochs, batch_size, early_stop_patience, early_stop_tolerance, disentangle,
    seed)

// Pair of segments (indices into some batch) with a same-speaker flag.
struct SpeakerPair {
  std::size_t i = 0, j = 0;
  bool same_speaker = false;
};

template <typename T>
class Stage1Model {
 public:
  Stage1Model() = default;
  Stage1Model(const Stage1Config& cfg, int feature_dim) : cfg_(cfg), dim_(feature_dim) {
    cfg.validate();
    if (feature_dim < 1) throw ArgumentError("feature dimension must be >= 1");
    Rng rng(mix_seed(cfg.seed, 0x51));
    ep_ = nn::GruEncoder<T>("ep", feature_dim, cfg.phonetic_hidden,
                            cfg.encoder_layers, rng);
    if (cfg.disentangle)
      es_ = nn::GruEncoder<T>("es", feature_dim, cfg.speaker_hidden,
                              cfg.encoder_layers, rng);
    dec_ = nn::GruDecoder<T>("dec", cond_dim(), cfg.decoder_hidden,
                             cfg.decoder_layers, feature_dim, rng);
    std::vector<int> dsizes{2 * cfg.phonetic_hidden};
    for (int l = 0; l < cfg.discriminator_layers; ++l)
      dsizes.push_back(cfg.discriminator_hidden);
    dsizes.push_back(1);
    ds_ = nn::Mlp<T>("ds", dsizes, nn::Activation::kLeakyRelu, rng);
  }

  const Stage1Config& config() const { return cfg_; }
  int feature_dim() const { return dim_; }
  int phonetic_dim() const { return cfg_.phonetic_hidden; }
  int speaker_dim() const { return cfg_.disentangle ? cfg_.speaker_hidden : 0; }
  int cond_dim() const { return phonetic_dim() + speaker_dim(); }
  bool disentangled() const { return cfg_.disentangle; }

  nn::GruEncoder<T>& phonetic_encoder() { return ep_; }
  nn::GruEncoder<T>& speaker_encoder() { return es_; }
  nn::GruDecoder<T>& decoder() { return dec_; }
  nn::Mlp<T>& discriminator() { return ds_; }
  const nn::GruEncoder<T>& phonetic_encoder() const { return ep_; }
  const nn::GruEncoder<T>& speaker_encoder() const { return es_; }
  const nn::GruDecoder<T>& decoder() const { return dec_; }
  const nn::Mlp<T>& discriminator() const { return ds_; }

  nn::ParamList<T> phonetic_params() { nn::ParamList<T> p; ep_.collect(p); return p; }
  nn::ParamList<T> speaker_params() {
    nn::ParamList<T> p;
    if (cfg_.disentangle) es_.collect(p);
    return p;
  }
  nn::ParamList<T> decoder_params() { nn::ParamList<T> p; dec_.collect(p); return p; }
  nn::ParamList<T> discriminator_params() { nn::ParamList<T> p; ds_.collect(p); return p; }
  // Encoders and decoder: everything updated by the joint step.
  nn::ParamList<T> autoencoder_params() {
    nn::ParamList<T> p = phonetic_params();
    for (auto* q : speaker_params()) p.push_back(q);
    for (auto* q : decoder_params()) p.push_back(q);
    return p;
  }
  nn::ParamList<T> all_params() {
    nn::ParamList<T> p = autoencoder_params();
    for (auto* q : discriminator_params()) p.push_back(q);
    return p;
  }

 private:
  Stage1Config cfg_;
  int dim_ = 0;
  nn::GruEncoder<T> ep_, es_;
  nn::GruDecoder<T> dec_;
  nn::Mlp<T> ds_;
};

// Time-major padded batch of segment frames.
template <typename T>
nn::SeqBatch<T> make_seq_batch(std::span<const AcousticWordSegment* const> segs,
                               int feature_dim) {
  nn::SeqBatch<T> b;
  b.batch = static_cast<int>(segs.size());
  b.steps = 0;
  for (const auto* s : segs) {
    if (s->dim() != feature_dim)
      throw ShapeError("segment " + s->id + " has " + std::to_string(s->dim()) +
                       "-dim frames, model expects " + std::to_string(feature_dim));
    if (s->num_frames() < 1) throw ShapeError("segment " + s->id + " is empty");
    b.steps = std::max(b.steps, s->num_frames());
    b.lengths.push_back(s->num_frames());
  }
  b.x = Mat<T>::Zero(feature_dim, static_cast<Eigen::Index>(b.steps) * b.batch);
  b.mask = Mat<T>::Zero(1, b.x.cols());
  for (int k = 0; k < b.batch; ++k) {
    const auto& f = segs[k]->frames;
    for (int t = 0; t < f.rows(); ++t) {
      b.x.col(t * b.batch + k) = f.row(t).transpose().template cast<T>();
      b.mask(0, t * b.batch + k) = 1;
    }
  }
  return b;
}

namespace stage1_detail {

template <typename T>
struct Forward {
  nn::SeqBatch<T> seq;
  typename nn::GruEncoder<T>::Tape ep, es;
  Mat<T> vp, vs, cond;
  typename nn::GruDecoder<T>::Tape dec;
  Mat<T> y;
};

template <typename T>
void forward(const Stage1Model<T>& m, std::span<const AcousticWordSegment* const> segs,
             Forward<T>& f, bool decode) {
  f.seq = make_seq_batch<T>(segs, m.feature_dim());
  f.vp = m.phonetic_encoder().forward(f.seq, f.ep);
  if (m.disentangled()) f.vs = m.speaker_encoder().forward(f.seq, f.es);
  if (!decode) return;
  f.cond.resize(m.cond_dim(), f.seq.batch);
  f.cond.topRows(m.phonetic_dim()) = f.vp;
  if (m.disentangled()) f.cond.bottomRows(m.speaker_dim()) = f.vs;
  f.y = m.decoder().forward(f.cond, f.seq.steps, f.dec);
}

// Pushes dL/dvp, dL/dvs and dL/dy through decoder and encoders.
template <typename T>
void backward(Stage1Model<T>& m, const Forward<T>& f, const Mat<T>& dy,
              Mat<T> dvp, Mat<T> dvs) {
  if (dy.size()) {
    const Mat<T> dc = m.decoder().backward(f.cond, f.dec, dy);
    dvp += dc.topRows(m.phonetic_dim());
    if (m.disentangled()) dvs += dc.bottomRows(m.speaker_dim());
  }
  if (dvp.size()) m.phonetic_encoder().backward(f.seq, f.ep, dvp);
  if (m.disentangled() && dvs.size()) m.speaker_encoder().backward(f.seq, f.es, dvs);
}

// Sum of squared reconstruction errors over real frames; writes its gradient
// wrt the decoder output scaled by `scale` into dy.
template <typename T>
T reconstruction_terms(const Forward<T>& f, T scale, Mat<T>* dy) {
  const Mat<T> diff = (f.y - f.seq.x).array().rowwise() * f.seq.mask.row(0).array();
  if (dy != nullptr) *dy = (T(2) * scale) * diff;
  return diff.squaredNorm();
}

template <typename T>
Mat<T> pair_inputs(const Mat<T>& vp, std::span<const SpeakerPair> pairs) {
  const Eigen::Index p = vp.rows();
  Mat<T> u(2 * p, static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    u.col(k).head(p) = vp.col(pairs[k].i);
    u.col(k).tail(p) = vp.col(pairs[k].j);
  }
  return u;
}

}  // namespace stage1_detail

// Speaker loss on given speaker vectors. If `grad` is set, accumulates
// scale * dL/dvs into it.
template <typename T>
T speaker_loss_vectors(const Mat<T>& vs, std::span<const SpeakerPair> pairs,
                       double lambda, T scale = T(1), Mat<T>* grad = nullptr) {
  T loss = 0;
  const T lam = static_cast<T>(lambda);
  for (const auto& pr : pairs) {
    const Vec<T> d = vs.col(pr.i) - vs.col(pr.j);
    const T sq = d.squaredNorm();
    if (pr.same_speaker) {
      loss += sq;
      if (grad) {
        grad->col(pr.i) += T(2) * scale * d;
        grad->col(pr.j) -= T(2) * scale * d;
      }
    } else if (lam - sq > T(0)) {
      loss += lam - sq;
      if (grad) {
        grad->col(pr.i) -= T(2) * scale * d;
        grad->col(pr.j) += T(2) * scale * d;
      }
    }
  }
  return loss;
}

inline void require_pairs(std::span<const SpeakerPair> pairs) {
  if (pairs.empty()) throw ArgumentError("pair list is empty");
}

template <typename T>
Vec<T> encode_phonetic(const Stage1Model<T>& m, const AcousticWordSegment& seg) {
  const AcousticWordSegment* p = &seg;
  const auto b = make_seq_batch<T>(std::span(&p, 1), m.feature_dim());
  return m.phonetic_encoder().forward(b).col(0);
}

template <typename T>
Vec<T> encode_speaker(const Stage1Model<T>& m, const AcousticWordSegment& seg) {
  if (!m.disentangled())
    throw ArgumentError("model was trained without a speaker encoder");
  const AcousticWordSegment* p = &seg;
  const auto b = make_seq_batch<T>(std::span(&p, 1), m.feature_dim());
  return m.speaker_encoder().forward(b).col(0);
}

// T x d reconstruction from given phonetic and speaker vectors.
template <typename T>
RowMat<T> decode(const Stage1Model<T>& m, const Vec<T>& vp, const Vec<T>& vs,
                 int frames) {
  if (vp.size() != m.phonetic_dim() || vs.size() != m.speaker_dim())
    throw ShapeError("decode: vector dimensions do not match the model");
  if (frames < 1) throw ArgumentError("decode: frame count must be >= 1");
  Mat<T> c(m.cond_dim(), 1);
  c.col(0).head(m.phonetic_dim()) = vp;
  if (m.speaker_dim()) c.col(0).tail(m.speaker_dim()) = vs;
  const Mat<T> y = m.decoder().forward(c, frames);  // d x frames
  return y.transpose();
}

template <typename T>
T reconstruction_loss(const Stage1Model<T>& m,
                      std::span<const AcousticWordSegment* const> batch) {
  if (batch.empty()) throw ArgumentError("reconstruction_loss: empty batch");
  stage1_detail::Forward<T> f;
  stage1_detail::forward(m, batch, f, true);
  return stage1_detail::reconstruction_terms<T>(f, T(1), nullptr);
}

// L_r and its gradient wrt encoders and decoder (accumulated into grads).
template <typename T>
T reconstruction_loss_and_grad(Stage1Model<T>& m,
                               std::span<const AcousticWordSegment* const> batch) {
  if (batch.empty()) throw ArgumentError("reconstruction_loss: empty batch");
  stage1_detail::Forward<T> f;
  stage1_detail::forward(m, batch, f, true);
  Mat<T> dy;
  const T loss = stage1_detail::reconstruction_terms<T>(f, T(1), &dy);
  stage1_detail::backward(m, f, dy, Mat<T>(Mat<T>::Zero(m.phonetic_dim(), f.seq.batch)),
                          Mat<T>(Mat<T>::Zero(m.speaker_dim(), f.seq.batch)));
  return loss;
}

// pairs index into `segs`.
template <typename T>
T speaker_loss(const Stage1Model<T>& m, std::span<const AcousticWordSegment* const> segs,
               std::span<const SpeakerPair> pairs, double lambda) {
  require_pairs(pairs);
  if (!(lambda > 0)) throw ArgumentError("speaker_loss: lambda must be > 0");
  if (!m.disentangled()) throw ArgumentError("model has no speaker encoder");
  const auto b = make_seq_batch<T>(segs, m.feature_dim());
  return speaker_loss_vectors<T>(m.speaker_encoder().forward(b), pairs, lambda);
}

template <typename T>
T speaker_loss_and_grad(Stage1Model<T>& m, std::span<const AcousticWordSegment* const> segs,
                        std::span<const SpeakerPair> pairs, double lambda) {
  require_pairs(pairs);
  if (!m.disentangled()) throw ArgumentError("model has no speaker encoder");
  stage1_detail::Forward<T> f;
  stage1_detail::forward(m, segs, f, false);
  Mat<T> g = Mat<T>::Zero(f.vs.rows(), f.vs.cols());
  const T loss = speaker_loss_vectors<T>(f.vs, pairs, lambda, T(1), &g);
  m.speaker_encoder().backward(f.seq, f.es, g);
  return loss;
}

template <typename T>
T discriminator_score(const Stage1Model<T>& m, const Vec<T>& vp_i, const Vec<T>& vp_j) {
  if (vp_i.size() != m.phonetic_dim() || vp_j.size() != m.phonetic_dim())
    throw ShapeError("discriminator_score: vector dimensions do not match");
  Mat<T> u(2 * m.phonetic_dim(), 1);
  u.col(0).head(m.phonetic_dim()) = vp_i;
  u.col(0).tail(m.phonetic_dim()) = vp_j;
  return m.discriminator().forward(u)(0, 0);
}

// L_d from per-pair critic scores.
template <typename T>
T discriminator_objective_from_scores(std::span<const T> scores,
                                      std::span<const SpeakerPair> pairs) {
  require_pairs(pairs);
  T same = 0, diff = 0;
  for (std::size_t k = 0; k < pairs.size(); ++k)
    (pairs[k].same_speaker ? same : diff) += scores[k];
  return same - diff;
}

// L_d on given phonetic vectors (columns of vp, indexed by pairs).
template <typename T>
T discriminator_objective_vectors(const Stage1Model<T>& m, const Mat<T>& vp,
                                  std::span<const SpeakerPair> pairs) {
  require_pairs(pairs);
  const Mat<T> s = m.discriminator().forward(stage1_detail::pair_inputs<T>(vp, pairs));
  std::vector<T> scores(s.data(), s.data() + s.size());
  return discriminator_objective_from_scores<T>(std::span<const T>(scores), pairs);
}

template <typename T>
T discriminator_objective(const Stage1Model<T>& m,
                          std::span<const AcousticWordSegment* const> segs,
                          std::span<const SpeakerPair> pairs) {
  require_pairs(pairs);
  const auto b = make_seq_batch<T>(segs, m.feature_dim());
  return discriminator_objective_vectors(m, m.phonetic_encoder().forward(b), pairs);
}

// L_d with gradients: into the critic when `critic` is set, into E_p when
// `encoder` is set.
template <typename T>
T discriminator_objective_and_grad(Stage1Model<T>& m,
                                   std::span<const AcousticWordSegment* const> segs,
                                   std::span<const SpeakerPair> pairs, bool critic,
                                   bool encoder) {
  require_pairs(pairs);
  stage1_detail::Forward<T> f;
  stage1_detail::forward(m, segs, f, false);
  const Mat<T> u = stage1_detail::pair_inputs<T>(f.vp, pairs);
  typename nn::Mlp<T>::Tape tape;
  const Mat<T> s = m.discriminator().forward(u, tape);
  Mat<T> sign(1, static_cast<Eigen::Index>(pairs.size()));
  T loss = 0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    sign(0, k) = pairs[k].same_speaker ? T(1) : T(-1);
    loss += sign(0, k) * s(0, k);
  }
  if (critic) m.discriminator().backward(tape, sign);
  if (encoder) {
    const Mat<T> du = m.discriminator().input_grad(tape, sign);
    const Eigen::Index p = m.phonetic_dim();
    Mat<T> dvp = Mat<T>::Zero(p, f.seq.batch);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      dvp.col(pairs[k].i) += du.col(k).head(p);
      dvp.col(pairs[k].j) += du.col(k).tail(p);
    }
    m.phonetic_encoder().backward(f.seq, f.ep, dvp);
  }
  return loss;
}

// All unordered within-batch pairs, split by class and capped at `cap` pairs
// per class by uniform subsampling.
inline std::vector<SpeakerPair> draw_pairs(
    std::span<const AcousticWordSegment* const> segs, std::size_t cap, Rng& rng) {
  std::vector<SpeakerPair> same, diff;
  for (std::size_t i = 0; i < segs.size(); ++i)
    for (std::size_t j = i + 1; j < segs.size(); ++j) {
      SpeakerPair p{i, j, segs[i]->speaker == segs[j]->speaker};
      (p.same_speaker ? same : diff).push_back(p);
    }
  auto cap_list = [&](std::vector<SpeakerPair>& v) {
    if (v.size() <= cap) return;
    for (std::size_t k = 0; k < cap; ++k) {
      const std::size_t r = k + uniform_index(rng, v.size() - k);
      std::swap(v[k], v[r]);
    }
    v.resize(cap);
  };
  cap_list(same);
  cap_list(diff);
  same.insert(same.end(), diff.begin(), diff.end());
  return same;
}

struct Stage1EpochStats {
  int epoch = 0;
  double reconstruction = 0;  // mean squared error per frame
  double speaker = 0;         // mean per pair
  double adversarial = 0;     // mean same-pair score minus mean diff-pair score
  double critic = 0;          // critic objective incl. penalty, last step
};

inline void to_json(nlohmann::json& j, const Stage1EpochStats& s) {
  j = {{"epoch", s.epoch}, {"reconstruction", s.reconstruction},
       {"speaker", s.speaker}, {"adversarial", s.adversarial}, {"critic", s.critic}};
}

struct Stage1History {
  std::vector<Stage1EpochStats> epochs;
  bool early_stopped = false;
  bool operator==(const Stage1History& o) const {
    if (epochs.size() != o.epochs.size() || early_stopped != o.early_stopped) return false;
    for (std::size_t k = 0; k < epochs.size(); ++k) {
      const auto &a = epochs[k], &b = o.epochs[k];
      if (a.reconstruction != b.reconstruction || a.speaker != b.speaker ||
          a.adversarial != b.adversarial || a.critic != b.critic)
        return false;
    }
    return true;
  }
};

template <typename T>
struct Stage1Result {
  Stage1Model<T> model;
  Stage1History history;
};

namespace stage1_detail {

template <typename T>
struct ClassWeights {
  T same = 0, diff = 0;
  std::size_t n_same = 0, n_diff = 0;
};

inline ClassWeights<double> class_counts(std::span<const SpeakerPair> pairs) {
  ClassWeights<double> w;
  for (const auto& p : pairs) (p.same_speaker ? w.n_same : w.n_diff)++;
  return w;
}

// One critic update: ascend mean_same D - mean_diff D - gp * penalty.
template <typename T>
double critic_step(Stage1Model<T>& m, const Mat<T>& vp,
                   std::span<const SpeakerPair> pairs, nn::Adam<T>& opt, Rng& rng) {
  const auto cw = class_counts(pairs);
  auto ps = m.discriminator_params();
  nn::zero_grads(ps);
  const Mat<T> u = pair_inputs<T>(vp, pairs);
  typename nn::Mlp<T>::Tape tape;
  const Mat<T> s = m.discriminator().forward(u, tape);
  Mat<T> dy(1, u.cols());
  double objective = 0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const bool same = pairs[k].same_speaker;
    const T w = same ? T(1.0 / cw.n_same) : T(-1.0 / cw.n_diff);
    objective += static_cast<double>(w * s(0, k));
    dy(0, k) = -w;  // minimizing the negated objective
  }
  m.discriminator().backward(tape, dy);
  const double gp = m.config().gp_weight;
  if (gp > 0) {
    // Interpolate same-speaker pair inputs with different-speaker ones.
    std::vector<Eigen::Index> same_cols, diff_cols;
    for (std::size_t k = 0; k < pairs.size(); ++k)
      (pairs[k].same_speaker ? same_cols : diff_cols).push_back(static_cast<Eigen::Index>(k));
    const std::size_t n = std::min(same_cols.size(), diff_cols.size());
    Mat<T> mix(u.rows(), static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k) {
      const T eps = static_cast<T>(uniform01(rng));
      mix.col(k) = eps * u.col(same_cols[k]) + (T(1) - eps) * u.col(diff_cols[k]);
    }
    if (n > 0) objective -= gp * static_cast<double>(
        m.discriminator().gradient_penalty(mix, static_cast<T>(gp)));
  }
  opt.step(ps);
  return objective;
}

}  // namespace stage1_detail

template <typename T = float>
Stage1Result<T> train_stage1(const Corpus& corpus, const Stage1Config& cfg) {
  cfg.validate();
  if (corpus.empty()) throw ArgumentError("train_stage1: empty corpus");
  Stage1Result<T> res{Stage1Model<T>(cfg, corpus.feature_dim), {}};
  Stage1Model<T>& m = res.model;
  const bool adversarial = cfg.disentangle && corpus.speakers().size() >= 2;
  if (cfg.disentangle && !adversarial)
    warn("train_stage1: fewer than two speakers; speaker and adversarial terms skipped");

  Rng rng(mix_seed(cfg.seed, 0x7a1));
  nn::Adam<T> joint_opt({.lr = cfg.lr, .clip_norm = cfg.clip_norm});
  nn::Adam<T> critic_opt({.lr = cfg.critic_lr, .beta1 = 0.5, .beta2 = 0.9});
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t B = static_cast<std::size_t>(cfg.batch_size);

  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order.begin(), order.end(), rng);
    double rec_sum = 0, frames = 0, spk_sum = 0, adv_sum = 0, critic_last = 0;
    std::size_t spk_batches = 0, adv_batches = 0;
    for (std::size_t at = 0; at < order.size(); at += B) {
      std::vector<const AcousticWordSegment*> segs;
      for (std::size_t k = at; k < std::min(order.size(), at + B); ++k)
        segs.push_back(&corpus.segments[order[k]]);
      const std::span<const AcousticWordSegment* const> batch(segs);

      stage1_detail::Forward<T> f;
      stage1_detail::forward(m, batch, f, true);
      std::vector<SpeakerPair> pairs;
      stage1_detail::ClassWeights<double> cw;
      if (adversarial) {
        pairs = draw_pairs(batch, B, rng);
        cw = stage1_detail::class_counts(pairs);
      }
      const bool use_adv = adversarial && cw.n_same > 0 && cw.n_diff > 0;

      // Part (4): critic updates on the current phonetic vectors.
      if (use_adv && cfg.w_d > 0) {
        for (int k = 0; k < cfg.n_disc; ++k) {
          const auto cpairs = k == 0 ? pairs : draw_pairs(batch, B, rng);
          const auto ccw = stage1_detail::class_counts(cpairs);
          if (ccw.n_same == 0 || ccw.n_diff == 0) continue;
          critic_last = stage1_detail::critic_step(m, f.vp, cpairs, critic_opt, rng);
        }
      }

      // Parts (1)-(3): joint update.
      auto ps = m.autoencoder_params();
      nn::zero_grads(ps);
      double n_frames = 0;
      for (int l : f.seq.lengths) n_frames += l;
      Mat<T> dy;
      const double rec = static_cast<double>(stage1_detail::reconstruction_terms<T>(
          f, static_cast<T>(cfg.w_r / n_frames), &dy));
      rec_sum += rec;
      frames += n_frames;
      Mat<T> dvp = Mat<T>::Zero(m.phonetic_dim(), f.seq.batch);
      Mat<T> dvs = Mat<T>::Zero(m.speaker_dim(), f.seq.batch);
      if (adversarial && !pairs.empty()) {
        const double ls = static_cast<double>(speaker_loss_vectors<T>(
            f.vs, pairs, cfg.lambda_margin, static_cast<T>(cfg.w_s / pairs.size()),
            &dvs));
        spk_sum += ls / pairs.size();
        ++spk_batches;
      }
      if (use_adv && cfg.w_d > 0) {
        const Mat<T> u = stage1_detail::pair_inputs<T>(f.vp, pairs);
        typename nn::Mlp<T>::Tape tape;
        const Mat<T> s = m.discriminator().forward(u, tape);
        Mat<T> w(1, u.cols());
        double adv = 0;
        for (std::size_t k = 0; k < pairs.size(); ++k) {
          const double wk = pairs[k].same_speaker ? 1.0 / cw.n_same : -1.0 / cw.n_diff;
          adv += wk * static_cast<double>(s(0, k));
          w(0, k) = static_cast<T>(cfg.w_d * wk);
        }
        adv_sum += adv;
        ++adv_batches;
        const Mat<T> du = m.discriminator().input_grad(tape, w);
        const Eigen::Index p = m.phonetic_dim();
        for (std::size_t k = 0; k < pairs.size(); ++k) {
          dvp.col(pairs[k].i) += du.col(k).head(p);
          dvp.col(pairs[k].j) += du.col(k).tail(p);
        }
      }
      stage1_detail::backward(m, f, dy, dvp, dvs);
      joint_opt.step(ps);
    }
    Stage1EpochStats st;
    st.epoch = epoch;
    st.reconstruction = rec_sum / std::max(frames, 1.0);
    st.speaker = spk_batches ? spk_sum / spk_batches : 0.0;
    st.adversarial = adv_batches ? adv_sum / adv_batches : 0.0;
    st.critic = critic_last;
    res.history.epochs.push_back(st);
    if (cfg.early_stop_patience > 0) {
      if (st.reconstruction < best * (1.0 - cfg.early_stop_tolerance)) {
        best = st.reconstruction;
        stale = 0;
      } else if (++stale >= cfg.early_stop_patience) {
        res.history.early_stopped = true;
        break;
      }
    }
  }
  return res;
}

// Checkpoint: one tensor archive with every named parameter plus a JSON echo
// of the configuration, feature dimension and seed.
template <typename T>
void save_stage1(Stage1Model<T>& m, const std::filesystem::path& path) {
  TensorArchive ar;
  for (auto* p : m.all_params()) ar.put_matrix(p->name, p->value);
  nlohmann::json meta;
  meta["kind"] = "stage1";
  meta["feature_dim"] = m.feature_dim();
  meta["seed"] = m.config().seed;
  meta["config"] = m.config();
  ar.metadata = meta.dump();
  ar.save(path);
}

template <typename T>
Stage1Model<T> load_stage1(const std::filesystem::path& path) {
  const TensorArchive ar = TensorArchive::load(path);
  const auto meta = nlohmann::json::parse(ar.metadata);
  if (meta.value("kind", "") != "stage1")
    throw IoError(path.string() + " is not a stage-1 checkpoint");
  Stage1Model<T> m(meta.at("config").get<Stage1Config>(), meta.at("feature_dim").get<int>());
  for (auto* p : m.all_params()) {
    Mat<T> v = ar.get_matrix<T>(p->name);
    if (v.rows() != p->value.rows() || v.cols() != p->value.cols())
      throw ShapeError("checkpoint tensor " + p->name + " has the wrong shape");
    p->value = std::move(v);
  }
  return m;
}

}  // namespace pasevec

#endif  // PASEVEC_STAGE1_HPP_
