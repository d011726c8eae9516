// pasevec/textref.hpp

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

// Reference text embeddings built from the lexicon and the word-label
// transcript:
//
//   txt-ph     GRU sequence autoencoder over phoneme ids; the entry of a word
//              is the encoder's final state for its phoneme sequence.
//   txt-se-1h  skip-gram over one-hot word inputs.
//   txt-se-ph  skip-gram over txt-ph vectors.
//
// Both skip-gram variants run the same trainer as the audio semantic stage.

#ifndef PASEVEC_TEXTREF_HPP_
#define PASEVEC_TEXTREF_HPP_

#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pasevec/embedding_table.hpp"
#include "pasevec/nn/gru.hpp"
#include "pasevec/stage2.hpp"

namespace pasevec {

struct PhoneticAutoencoderConfig {
  int phoneme_embedding_dim = 16;
  int hidden = 128;
  int layers = 1;
  double lr = 3e-3;
  int epochs = 400;
  int batch_size = 16;
  std::uint64_t seed = 1;

  void validate() const {
    if (phoneme_embedding_dim < 1 || hidden < 1 || layers < 1)
      throw ConfigError("txt-ph: sizes must be >= 1");
    if (epochs < 1 || batch_size < 1) throw ConfigError("txt-ph: epochs/batch must be >= 1");
    if (!(lr > 0)) throw ConfigError("txt-ph: lr must be > 0");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PhoneticAutoencoderConfig,
                                                phoneme_embedding_dim, hidden, layers,
                                                lr, epochs, batch_size, seed)

inline SkipGramConfig default_one_hot_skipgram() {
  SkipGramConfig c;
  c.hidden = {};
  return c;
}

struct TextRefConfig {
  PhoneticAutoencoderConfig phonetic;
  SkipGramConfig one_hot = default_one_hot_skipgram();
  SkipGramConfig phonetic_semantic;

  void validate() const {
    phonetic.validate();
    one_hot.validate();
    phonetic_semantic.validate();
  }
};

inline void to_json(nlohmann::json& j, const TextRefConfig& c) {
  j = {{"phonetic", c.phonetic}, {"one_hot", c.one_hot},
       {"phonetic_semantic", c.phonetic_semantic}};
}

inline void from_json(const nlohmann::json& j, TextRefConfig& c) {
  c = TextRefConfig{};
  if (j.contains("phonetic")) j.at("phonetic").get_to(c.phonetic);
  if (j.contains("one_hot")) {
    // Keep the linear default unless hidden sizes are given explicitly.
    c.one_hot = j.at("one_hot").get<SkipGramConfig>();
    if (!j.at("one_hot").contains("hidden")) c.one_hot.hidden = {};
  }
  if (j.contains("phonetic_semantic")) j.at("phonetic_semantic").get_to(c.phonetic_semantic);
}

// Phoneme-sequence autoencoder. Phoneme ids index a learned embedding that
// feeds a GRU encoder; a GRU decoder conditioned on the final state emits
// per-step phoneme logits for the known length.
template <typename T>
class PhoneticAutoencoder {
 public:
  PhoneticAutoencoder() = default;
  PhoneticAutoencoder(int inventory, const PhoneticAutoencoderConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    if (inventory < 1) throw ArgumentError("txt-ph: empty phoneme inventory");
    Rng rng(mix_seed(cfg.seed, 0xa1));
    embed_ = nn::Param<T>("txtph.embed", cfg.phoneme_embedding_dim, inventory);
    nn::glorot_init(embed_.value, rng);
    enc_ = nn::GruEncoder<T>("txtph.enc", cfg.phoneme_embedding_dim, cfg.hidden,
                             cfg.layers, rng);
    dec_ = nn::GruDecoder<T>("txtph.dec", cfg.hidden, cfg.hidden, cfg.layers, inventory,
                             rng);
  }

  int inventory() const { return static_cast<int>(embed_.value.cols()); }
  int latent_dim() const { return cfg_.hidden; }
  const PhoneticAutoencoderConfig& config() const { return cfg_; }

  nn::ParamList<T> params() {
    nn::ParamList<T> p{&embed_};
    enc_.collect(p);
    dec_.collect(p);
    return p;
  }

  nn::SeqBatch<T> batch(const std::vector<const std::vector<int>*>& seqs) const {
    nn::SeqBatch<T> b;
    b.batch = static_cast<int>(seqs.size());
    for (const auto* s : seqs) {
      if (s->empty()) throw ArgumentError("txt-ph: empty phoneme sequence");
      for (int p : *s)
        if (p < 0 || p >= inventory()) throw ArgumentError("txt-ph: phoneme id out of range");
      b.steps = std::max(b.steps, static_cast<int>(s->size()));
      b.lengths.push_back(static_cast<int>(s->size()));
    }
    b.x = Mat<T>::Zero(embed_.value.rows(), static_cast<Eigen::Index>(b.steps) * b.batch);
    b.mask = Mat<T>::Zero(1, b.x.cols());
    for (int k = 0; k < b.batch; ++k)
      for (int t = 0; t < b.lengths[k]; ++t) {
        b.x.col(t * b.batch + k) = embed_.value.col((*seqs[k])[t]);
        b.mask(0, t * b.batch + k) = 1;
      }
    return b;
  }

  Vec<T> encode(const std::vector<int>& seq) const {
    return enc_.forward(batch({&seq})).col(0);
  }

  // Greedy per-step argmax reconstruction.
  std::vector<int> reconstruct(const std::vector<int>& seq) const {
    const Mat<T> c = encode(seq);
    const Mat<T> logits = dec_.forward(c, static_cast<int>(seq.size()));
    std::vector<int> out;
    for (Eigen::Index t = 0; t < logits.cols(); ++t) {
      Eigen::Index best;
      logits.col(t).maxCoeff(&best);
      out.push_back(static_cast<int>(best));
    }
    return out;
  }

  // Summed cross-entropy over real steps; accumulates gradients if asked.
  T loss(const std::vector<const std::vector<int>*>& seqs, bool grad) {
    const nn::SeqBatch<T> b = batch(seqs);
    typename nn::GruEncoder<T>::Tape et;
    typename nn::GruDecoder<T>::Tape dt;
    const Mat<T> z = enc_.forward(b, et);
    const Mat<T> logits = dec_.forward(z, b.steps, dt);
    Mat<T> dy = Mat<T>::Zero(logits.rows(), logits.cols());
    T total = 0;
    for (int k = 0; k < b.batch; ++k)
      for (int t = 0; t < b.lengths[k]; ++t) {
        const Eigen::Index col = t * b.batch + k;
        const T mx = logits.col(col).maxCoeff();
        const Vec<T> e = (logits.col(col).array() - mx).exp().matrix();
        const T sum = e.sum();
        const int target = (*seqs[k])[t];
        total += std::log(sum) + mx - logits(target, col);
        dy.col(col) = e / sum;
        dy(target, col) -= T(1);
      }
    if (grad) {
      const Mat<T> dz = dec_.backward(z, dt, dy);
      const Mat<T> dx = enc_.backward(b, et, dz, true);
      for (int k = 0; k < b.batch; ++k)
        for (int t = 0; t < b.lengths[k]; ++t)
          embed_.grad.col((*seqs[k])[t]) += dx.col(t * b.batch + k);
    }
    return total;
  }

 private:
  PhoneticAutoencoderConfig cfg_;
  nn::Param<T> embed_;
  nn::GruEncoder<T> enc_;
  nn::GruDecoder<T> dec_;
};

inline int inventory_size(const std::map<std::string, std::vector<int>>& lexicon) {
  int n = 0;
  for (const auto& [w, seq] : lexicon)
    for (int p : seq) n = std::max(n, p + 1);
  return n;
}

template <typename T>
struct PhoneticAutoencoderResult {
  PhoneticAutoencoder<T> model;
  std::vector<double> loss_history;  // mean cross-entropy per phoneme
};

template <typename T = float>
PhoneticAutoencoderResult<T> train_phonetic_autoencoder(
    const std::map<std::string, std::vector<int>>& lexicon,
    const PhoneticAutoencoderConfig& cfg) {
  if (lexicon.empty()) throw ArgumentError("txt-ph: empty lexicon");
  PhoneticAutoencoderResult<T> res{PhoneticAutoencoder<T>(inventory_size(lexicon), cfg), {}};
  auto& m = res.model;
  std::vector<const std::vector<int>*> seqs;
  double tokens = 0;
  for (const auto& [w, s] : lexicon) {
    seqs.push_back(&s);
    tokens += static_cast<double>(s.size());
  }
  Rng rng(mix_seed(cfg.seed, 0xa2));
  nn::Adam<T> opt({.lr = cfg.lr, .clip_norm = 5.0});
  auto ps = m.params();
  const std::size_t B = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(seqs.begin(), seqs.end(), rng);
    double total = 0;
    for (std::size_t at = 0; at < seqs.size(); at += B) {
      std::vector<const std::vector<int>*> batch(
          seqs.begin() + static_cast<std::ptrdiff_t>(at),
          seqs.begin() + static_cast<std::ptrdiff_t>(std::min(seqs.size(), at + B)));
      double n = 0;
      for (const auto* s : batch) n += static_cast<double>(s->size());
      nn::zero_grads(ps);
      total += static_cast<double>(m.loss(batch, true));
      for (auto* p : ps) p->grad /= static_cast<T>(n);
      opt.step(ps);
    }
    res.loss_history.push_back(total / tokens);
  }
  return res;
}

// Fraction of phonemes reproduced by greedy decoding.
template <typename T>
double reconstruction_accuracy(const PhoneticAutoencoder<T>& m,
                               const std::map<std::string, std::vector<int>>& lexicon) {
  std::size_t hit = 0, total = 0;
  for (const auto& [w, s] : lexicon) {
    const auto r = m.reconstruct(s);
    for (std::size_t t = 0; t < s.size(); ++t) hit += r[t] == s[t];
    total += s.size();
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

template <typename T>
EmbeddingTable phonetic_table(const PhoneticAutoencoder<T>& m,
                              const std::map<std::string, std::vector<int>>& lexicon) {
  EmbeddingTable t(m.latent_dim(), "txt-ph");
  for (const auto& [w, s] : lexicon) t.set(w, m.encode(s));
  return t;
}

inline EmbeddingTable train_txt_ph(const std::map<std::string, std::vector<int>>& lexicon,
                                   const PhoneticAutoencoderConfig& cfg) {
  const auto trained = train_phonetic_autoencoder<float>(lexicon, cfg);
  if (const double acc = reconstruction_accuracy(trained.model, lexicon); acc < 0.9)
    warn("txt-ph: phoneme reconstruction accuracy " + std::to_string(acc) + " is below 0.9");
  return phonetic_table(trained.model, lexicon);
}

// Sorted distinct word labels of the transcript.
inline std::vector<std::string> transcript_vocabulary(const Corpus& corpus) {
  std::set<std::string> v;
  for (const auto& s : corpus.segments) v.insert(s.word_label);
  return {v.begin(), v.end()};
}

// One-hot input per segment over the transcript vocabulary.
inline Mat<float> one_hot_inputs(const Corpus& corpus) {
  const auto vocab = transcript_vocabulary(corpus);
  std::map<std::string, Eigen::Index> id;
  for (std::size_t k = 0; k < vocab.size(); ++k) id[vocab[k]] = static_cast<Eigen::Index>(k);
  Mat<float> x = Mat<float>::Zero(static_cast<Eigen::Index>(vocab.size()),
                                  static_cast<Eigen::Index>(corpus.size()));
  for (std::size_t i = 0; i < corpus.size(); ++i)
    x(id.at(corpus.segments[i].word_label), static_cast<Eigen::Index>(i)) = 1;
  return x;
}

// Per-segment copies of a word-level table; CoverageError lists missing words.
inline Mat<float> table_inputs(const Corpus& corpus, const EmbeddingTable& table) {
  std::vector<std::string> missing;
  for (const auto& w : transcript_vocabulary(corpus))
    if (!table.contains(w)) missing.push_back(w);
  if (!missing.empty())
    throw CoverageError(table.tag() + " does not cover transcript words: " +
                        EmbeddingTable::join(missing));
  Mat<float> x(table.dim(), static_cast<Eigen::Index>(corpus.size()));
  for (std::size_t i = 0; i < corpus.size(); ++i)
    x.col(static_cast<Eigen::Index>(i)) = table.at(corpus.segments[i].word_label);
  return x;
}

// Word-level semantic table from a trained skip-gram model and its inputs.
template <typename T>
EmbeddingTable semantic_table(const Corpus& corpus, const SkipGramModel<T>& m,
                              const Mat<float>& inputs, const std::string& tag) {
  const Mat<float> vw = semantic_vectors(m, inputs);
  return word_type_table(
      corpus, [&](std::size_t i) { return Vec<float>(vw.col(static_cast<Eigen::Index>(i))); },
      tag);
}

inline EmbeddingTable train_txt_se_1h(const Corpus& transcript, const SkipGramConfig& cfg) {
  const Mat<float> x = one_hot_inputs(transcript);
  const auto r = train_skipgram<float>(transcript, x, cfg);
  return semantic_table(transcript, r.model, x, "txt-se-1h");
}

inline EmbeddingTable train_txt_se_ph(const Corpus& transcript, const EmbeddingTable& txt_ph,
                                      const SkipGramConfig& cfg) {
  const Mat<float> x = table_inputs(transcript, txt_ph);
  const auto r = train_skipgram<float>(transcript, x, cfg);
  return semantic_table(transcript, r.model, x, "txt-se-ph");
}

}  // namespace pasevec

#endif  // PASEVEC_TEXTREF_HPP_
