// tests/textref_test.cpp

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

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "pasevec/synth.hpp"
#include "pasevec/textref.hpp"

namespace pasevec {
namespace {

using testing::transcript_corpus;

int edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<std::vector<int>> d(a.size() + 1, std::vector<int>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + (a[i - 1] != b[j - 1])});
  return d[a.size()][b.size()];
}

double cosine(const Eigen::VectorXf& a, const Eigen::VectorXf& b) {
  return a.dot(b) / (a.norm() * b.norm());
}

PhoneticAutoencoderConfig quick_ae() {
  PhoneticAutoencoderConfig c;
  c.hidden = 32;
  c.epochs = 10;
  return c;
}

TEST(TxtPh, IdenticalSequencesGiveIdenticalEmbeddings) {
  const std::map<std::string, std::vector<int>> lex{
      {"a", {1, 2, 3}}, {"b", {1, 2, 3}}, {"c", {0, 3}}};
  const EmbeddingTable t = train_txt_ph(lex, quick_ae());
  EXPECT_EQ(t.size(), 3u);
  EXPECT_EQ(t.at("a"), t.at("b"));
  EXPECT_NE(t.at("a"), t.at("c"));
  EXPECT_EQ(t.tag(), "txt-ph");
}

TEST(TxtPh, EmptyLexiconThrows) {
  EXPECT_THROW(train_txt_ph({}, quick_ae()), ArgumentError);
}

TEST(TxtPh, GradientMatchesFiniteDifferences) {
  PhoneticAutoencoderConfig cfg;
  cfg.phoneme_embedding_dim = 2;
  cfg.hidden = 3;
  PhoneticAutoencoder<double> m(4, cfg);
  const std::vector<int> a{0, 3, 1}, b{2, 2};
  const std::vector<const std::vector<int>*> batch{&a, &b};
  auto ps = m.params();
  nn::zero_grads(ps);
  m.loss(batch, true);
  const auto r = testing::finite_difference_check(ps, [&] { return m.loss(batch, false); });
  EXPECT_LT(r.relative_error, 1e-6) << r.worst_param;
}

TEST(TxtPh, TrainedOnSyntheticLexiconReconstructsAndTracksEditDistance) {
  auto lex = generate_synthetic_corpus(SynthConfig{}).corpus.lexicon;
  // Add one-substitution variants so that edit-distance-1 pairs exist.
  Rng rng(3);
  std::vector<std::pair<std::string, std::vector<int>>> extra;
  int k = 0;
  for (const auto& [w, s] : lex) {
    if (k++ % 5) continue;
    auto v = s;
    const std::size_t at = uniform_index(rng, v.size());
    v[at] = (v[at] + 1 + static_cast<int>(uniform_index(rng, 15))) % 16;
    extra.emplace_back(w + "v", v);
  }
  for (auto& [w, s] : extra) lex[w] = s;
  const auto trained = train_phonetic_autoencoder<float>(lex, PhoneticAutoencoderConfig{});
  EXPECT_GT(reconstruction_accuracy(trained.model, lex), 0.9);
  const EmbeddingTable t = phonetic_table(trained.model, lex);
  double near = 0, far = 0;
  int n_near = 0, n_far = 0;
  for (auto a = lex.begin(); a != lex.end(); ++a)
    for (auto b = std::next(a); b != lex.end(); ++b) {
      const int d = edit_distance(a->second, b->second);
      const double dist = (t.at(a->first) - t.at(b->first)).norm();
      if (d == 1) near += dist, ++n_near;
      if (d >= 3) far += dist, ++n_far;
    }
  ASSERT_GT(n_near, 0);
  ASSERT_GT(n_far, 0);
  EXPECT_LT(near / n_near, far / n_far);
}

SkipGramConfig small_sg(std::vector<int> hidden) {
  SkipGramConfig c;
  c.hidden = std::move(hidden);
  c.embedding_dim = 16;
  c.epochs = 40;
  c.batch_size = 32;
  c.window = 1;
  c.negatives = 3;
  c.lr = 1e-2;
  return c;
}

Corpus shared_context_corpus() {
  std::vector<std::vector<std::string>> utts;
  for (int k = 0; k < 30; ++k) {
    utts.push_back({"A", "X"});
    utts.push_back({"B", "X"});
    utts.push_back({"C", "Y"});
    utts.push_back({"D", "Y"});
  }
  return transcript_corpus(utts);
}

TEST(TxtSe1h, SharedContextsGiveHighestSimilarity) {
  const Corpus c = shared_context_corpus();
  const EmbeddingTable t = train_txt_se_1h(c, small_sg({}));
  const double ab = cosine(t.at("A"), t.at("B")), cd = cosine(t.at("C"), t.at("D"));
  for (const auto& [x, y] : std::vector<std::pair<std::string, std::string>>{
           {"A", "C"}, {"A", "D"}, {"B", "C"}, {"B", "D"}}) {
    EXPECT_GT(ab, cosine(t.at(x), t.at(y)));
    EXPECT_GT(cd, cosine(t.at(x), t.at(y)));
  }
}

TEST(TxtSe1h, ZeroWeightsGiveLn2PerTerm) {
  const Corpus c = shared_context_corpus();
  const Mat<float> x = one_hot_inputs(c).cast<float>();
  SkipGramModel<double> m(static_cast<int>(x.rows()), small_sg({}));
  for (auto* p : m.params()) p->value.setZero();
  const auto pairs = enumerate_context_pairs(c, 1);
  const NegativeSampler sampler(c, 0.75);
  Rng rng(1);
  std::vector<std::size_t> pc, px, nc, nx;
  for (const auto& p : pairs) {
    pc.push_back(p.center);
    px.push_back(p.context);
    for (auto n : sample_negatives(sampler, c, p.center, 3, 1, rng)) {
      nc.push_back(p.center);
      nx.push_back(n);
    }
  }
  const Mat<double> xd = x.cast<double>();
  const double loss = semantic_loss_terms<double>(
      m, gather_columns<double>(xd, pc), gather_columns<double>(xd, px),
      gather_columns<double>(xd, nc), gather_columns<double>(xd, nx), false);
  EXPECT_NEAR(loss, (pc.size() + nc.size()) * std::log(2.0), 1e-9);
}

TEST(TxtSe1h, Deterministic) {
  const Corpus c = shared_context_corpus();
  EXPECT_EQ(train_txt_se_1h(c, small_sg({})), train_txt_se_1h(c, small_sg({})));
}

TEST(TxtSePh, OneHotTableReducesToOneHotSkipGram) {
  const Corpus c = shared_context_corpus();
  const auto vocab = transcript_vocabulary(c);
  EmbeddingTable onehot(static_cast<int>(vocab.size()), "one-hot");
  for (std::size_t k = 0; k < vocab.size(); ++k)
    onehot.set(vocab[k], Eigen::VectorXf::Unit(static_cast<Eigen::Index>(vocab.size()),
                                               static_cast<Eigen::Index>(k)));
  EXPECT_EQ(table_inputs(c, onehot), one_hot_inputs(c));
  auto a = train_txt_se_ph(c, onehot, small_sg({8}));
  const auto b = train_txt_se_1h(c, small_sg({8}));
  a.set_tag(b.tag());
  EXPECT_EQ(a, b);
}

TEST(TxtSePh, MissingCoverageListsWords) {
  const Corpus c = shared_context_corpus();
  EmbeddingTable partial(2, "txt-ph");
  partial.set("A", Eigen::Vector2f(1, 0));
  partial.set("X", Eigen::Vector2f(0, 1));
  try {
    train_txt_se_ph(c, partial, small_sg({4}));
    FAIL();
  } catch (const CoverageError& e) {
    const std::string msg = e.what();
    for (const char* w : {"B", "C", "D", "Y"}) EXPECT_NE(msg.find(w), std::string::npos);
  }
}

TEST(TxtSePh, SameTopicWordsAreMoreSimilarAndRunIsDeterministic) {
  SynthConfig sc;
  sc.document_count = 60;
  const auto synth = generate_synthetic_corpus(sc);
  PhoneticAutoencoderConfig ae;
  ae.epochs = 100;
  const EmbeddingTable ph = train_txt_ph(synth.corpus.lexicon, ae);
  SkipGramConfig sg;
  sg.hidden = {64, 64};
  sg.embedding_dim = 32;
  sg.epochs = 15;
  const EmbeddingTable t = train_txt_se_ph(synth.corpus, ph, sg);
  EXPECT_EQ(t, train_txt_se_ph(synth.corpus, ph, sg));
  double same = 0, cross = 0;
  int ns = 0, nc = 0;
  const auto words = t.labels();
  for (std::size_t i = 0; i < words.size(); ++i)
    for (std::size_t j = i + 1; j < words.size(); ++j) {
      const int ti = synth.truth.topic.at(words[i]), tj = synth.truth.topic.at(words[j]);
      if (ti < 0 || tj < 0) continue;
      const double cs = cosine(t.at(words[i]), t.at(words[j]));
      if (ti == tj) same += cs, ++ns;
      else cross += cs, ++nc;
    }
  EXPECT_GT(same / ns, cross / nc);
}

}  // namespace
}  // namespace pasevec
