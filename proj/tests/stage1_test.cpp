// tests/stage1_test.cpp

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
#include "test_util.hpp"
#include "pasevec/stage1.hpp"
#include "pasevec/synth.hpp"

namespace pasevec {
namespace {

using testing::finite_difference_check;
using testing::pointers;
using testing::toy_segments;
using testing::toy_stage1_config;

struct Toy {
  Rng rng{11};
  std::vector<AcousticWordSegment> segs = toy_segments(5, 2, 2, 4, rng);
  std::vector<const AcousticWordSegment*> ptrs = pointers(segs);
  Stage1Model<double> model{toy_stage1_config(), 2};
  Toy() { testing::jitter_params(model.all_params(), 0.1, rng); }
};

TEST(Stage1, ToyModelIsSmall) {
  Toy t;
  EXPECT_LE(nn::param_count(t.model.all_params()), 500u);
}

TEST(Stage1, ReconstructionGradientMatchesFiniteDifferences) {
  Toy t;
  auto ps = t.model.autoencoder_params();
  nn::zero_grads(ps);
  reconstruction_loss_and_grad(t.model, std::span(t.ptrs));
  const auto r = finite_difference_check(
      ps, [&] { return reconstruction_loss(t.model, std::span(t.ptrs)); });
  EXPECT_LT(r.relative_error, 1e-6) << r.worst_param;
  EXPECT_GT(r.analytic_norm, 0);
}

TEST(Stage1, SpeakerGradientMatchesFiniteDifferences) {
  Toy t;
  // Margin large enough that both hinge branches stay active.
  const double lambda = 4.0;
  const std::vector<SpeakerPair> pairs{{0, 1, false}, {0, 2, true}, {1, 3, true},
                                       {2, 3, false}, {3, 4, false}};
  auto ps = t.model.speaker_params();
  nn::zero_grads(ps);
  speaker_loss_and_grad(t.model, std::span(t.ptrs), std::span(pairs), lambda);
  const auto r = finite_difference_check(ps, [&] {
    return speaker_loss(t.model, std::span(t.ptrs), std::span(pairs), lambda);
  });
  EXPECT_LT(r.relative_error, 1e-6) << r.worst_param;
}

TEST(Stage1, AdversarialGradientMatchesFiniteDifferences) {
  Toy t;
  const std::vector<SpeakerPair> pairs{{0, 1, false}, {0, 2, true}, {1, 3, true},
                                       {2, 4, true}, {3, 4, false}};
  auto loss = [&] {
    return discriminator_objective(t.model, std::span(t.ptrs), std::span(pairs));
  };
  for (bool critic : {true, false}) {
    auto ps = critic ? t.model.discriminator_params() : t.model.phonetic_params();
    nn::zero_grads(t.model.all_params());
    discriminator_objective_and_grad(t.model, std::span(t.ptrs), std::span(pairs),
                                     critic, !critic);
    const auto r = finite_difference_check(ps, loss);
    EXPECT_LT(r.relative_error, 1e-6) << r.worst_param;
  }
}

TEST(Stage1, HingeClosedForms) {
  const double lambda = 0.01;
  Mat<double> vs(2, 3);
  vs << 0.3, 0.3, 5.0,
        -1.0, -1.0, 5.0;
  const std::vector<SpeakerPair> diff_same_point{{0, 1, false}};
  const std::vector<SpeakerPair> diff_far{{0, 2, false}};
  const std::vector<SpeakerPair> same_same_point{{0, 1, true}};
  EXPECT_DOUBLE_EQ(speaker_loss_vectors<double>(vs, diff_same_point, lambda), lambda);
  EXPECT_DOUBLE_EQ(speaker_loss_vectors<double>(vs, diff_far, lambda), 0.0);
  EXPECT_DOUBLE_EQ(speaker_loss_vectors<double>(vs, same_same_point, lambda), 0.0);
  const std::vector<SpeakerPair> same_far{{0, 2, true}};
  EXPECT_DOUBLE_EQ(speaker_loss_vectors<double>(vs, same_far, lambda),
                   (vs.col(0) - vs.col(2)).squaredNorm());
}

TEST(Stage1, SpeakerLossOnModelIsZeroForOneRepeatedSegment) {
  Toy t;
  const std::vector<const AcousticWordSegment*> twice{t.ptrs[0], t.ptrs[0]};
  const std::vector<SpeakerPair> same{{0, 1, true}};
  const std::vector<SpeakerPair> diff{{0, 1, false}};
  EXPECT_EQ(speaker_loss(t.model, std::span(twice), std::span(same), 0.01), 0.0);
  EXPECT_DOUBLE_EQ(speaker_loss(t.model, std::span(twice), std::span(diff), 0.01), 0.01);
}

TEST(Stage1, DiscriminatorObjectiveIsSameMinusDiff) {
  const std::vector<double> scores{1.5, -0.5, 2.0};
  const std::vector<SpeakerPair> pairs{{0, 1, true}, {1, 2, false}, {0, 2, true}};
  EXPECT_DOUBLE_EQ(discriminator_objective_from_scores<double>(scores, pairs), 4.0);
  Toy t;
  const Vec<double> a = Vec<double>::Ones(3), b = -Vec<double>::Ones(3);
  const Mat<double> vp = (Mat<double>(3, 2) << a, b).finished();
  const double s = discriminator_score(t.model, a, b);
  const std::vector<SpeakerPair> one{{0, 1, false}};
  EXPECT_DOUBLE_EQ(discriminator_objective_vectors(t.model, vp, std::span(one)), -s);
}

TEST(Stage1, SingleFrameSegmentEncodes) {
  Stage1Model<double> m(Stage1Config{}, 39);
  AcousticWordSegment s;
  s.id = "one";
  s.frames = RowMat<float>::Constant(1, 39, 0.5f);
  const Vec<double> vp = encode_phonetic(m, s);
  EXPECT_EQ(vp.size(), 128);
  EXPECT_TRUE(vp.allFinite());
  EXPECT_EQ(encode_speaker(m, s).size(), 128);
  EXPECT_EQ(vp, encode_phonetic(m, s));
}

TEST(Stage1, UnitFrameAgainstZeroReconstructionIsOne) {
  Toy t;
  for (auto* p : t.model.decoder_params()) p->value.setZero();
  AcousticWordSegment s;
  s.id = "unit";
  s.frames = RowMat<float>::Zero(1, 2);
  s.frames(0, 0) = 1;
  const std::vector<const AcousticWordSegment*> one{&s};
  EXPECT_EQ(reconstruction_loss(t.model, std::span(one)), 1.0);
}

TEST(Stage1, SingleSamePairObjectiveIsItsScore) {
  const std::vector<double> scores{0.7, 0.2};
  const std::vector<SpeakerPair> mixed{{0, 1, true}, {1, 2, false}};
  EXPECT_DOUBLE_EQ(discriminator_objective_from_scores<double>(scores, mixed), 0.5);
  const std::vector<double> c{-1.25};
  const std::vector<SpeakerPair> same{{0, 1, true}};
  EXPECT_EQ(discriminator_objective_from_scores<double>(c, same), -1.25);
}

TEST(Stage1, EmptyPairsAndBadShapesThrow) {
  Toy t;
  const std::vector<SpeakerPair> none;
  EXPECT_THROW(speaker_loss(t.model, std::span(t.ptrs), std::span(none), 0.01),
               ArgumentError);
  EXPECT_THROW(discriminator_objective(t.model, std::span(t.ptrs), std::span(none)),
               ArgumentError);
  AcousticWordSegment wide = t.segs[0];
  wide.frames = RowMat<float>::Zero(4, 3);
  EXPECT_THROW(encode_phonetic(t.model, wide), ShapeError);
  EXPECT_THROW(decode(t.model, Vec<double>(Vec<double>::Zero(2)),
                      Vec<double>(Vec<double>::Zero(2)), 3),
               ShapeError);
}

TEST(Stage1, BatchedLossEqualsSumOfSingles) {
  Toy t;
  double singles = 0;
  for (const auto* s : t.ptrs)
    singles += reconstruction_loss(t.model, std::span(&s, 1));
  EXPECT_NEAR(reconstruction_loss(t.model, std::span(t.ptrs)), singles, 1e-10);
}

TEST(Stage1, DecodeMatchesReconstructionLoss) {
  Toy t;
  const auto& s = t.segs[2];
  const RowMat<double> y = decode(t.model, encode_phonetic(t.model, s),
                                  encode_speaker(t.model, s), s.num_frames());
  const double direct = (y - s.frames.cast<double>()).squaredNorm();
  const AcousticWordSegment* p = &s;
  EXPECT_NEAR(reconstruction_loss(t.model, std::span(&p, 1)), direct, 1e-12);
}

TEST(Stage1, DrawPairsCapsEachClass) {
  Rng rng(3);
  auto segs = toy_segments(12, 2, 3, 3, rng);
  auto ptrs = pointers(segs);
  const auto pairs = draw_pairs(std::span(ptrs), 5, rng);
  int same = 0, diff = 0;
  for (const auto& p : pairs) {
    EXPECT_LT(p.i, p.j);
    EXPECT_EQ(p.same_speaker, segs[p.i].speaker == segs[p.j].speaker);
    (p.same_speaker ? same : diff)++;
  }
  EXPECT_EQ(same, 5);
  EXPECT_EQ(diff, 5);
}

SynthConfig small_synth() {
  SynthConfig c;
  c.vocabulary_size = 10;
  c.phoneme_inventory_size = 6;
  c.speaker_count = 3;
  c.topic_count = 2;
  c.words_per_topic = 4;
  c.keywords_per_topic = 1;
  c.document_count = 8;
  c.feature_dim = 6;
  c.utterance_length_max = 5;
  return c;
}

Stage1Config small_stage1() {
  Stage1Config c;
  c.phonetic_hidden = 8;
  c.speaker_hidden = 4;
  c.decoder_hidden = 12;
  c.discriminator_hidden = 8;
  c.epochs = 6;
  c.batch_size = 8;
  c.n_disc = 2;
  c.early_stop_patience = 0;
  return c;
}

TEST(Stage1, TrainingReducesReconstructionAndIsDeterministic) {
  const Corpus corpus = generate_synthetic_corpus(small_synth()).corpus;
  const auto a = train_stage1<float>(corpus, small_stage1());
  const auto b = train_stage1<float>(corpus, small_stage1());
  ASSERT_EQ(a.history.epochs.size(), 6u);
  EXPECT_LT(a.history.epochs.back().reconstruction,
            a.history.epochs.front().reconstruction);
  EXPECT_TRUE(a.history == b.history);
  const auto va = encode_phonetic(a.model, corpus.segments[0]);
  const auto vb = encode_phonetic(b.model, corpus.segments[0]);
  EXPECT_EQ(va, vb);
  EXPECT_TRUE(va.allFinite());
}

TEST(Stage1, SingleSpeakerWarnsAndTrains) {
  SynthConfig sc = small_synth();
  sc.speaker_count = 1;
  const Corpus corpus = generate_synthetic_corpus(sc).corpus;
  Stage1Config cfg = small_stage1();
  cfg.epochs = 2;
  WarningCollector w;
  const auto r = train_stage1<float>(corpus, cfg);
  EXPECT_TRUE(w.contains("fewer than two speakers"));
  EXPECT_EQ(r.history.epochs.back().speaker, 0.0);
}

TEST(Stage1, MergedEncoderHasNoSpeakerBranch) {
  const Corpus corpus = generate_synthetic_corpus(small_synth()).corpus;
  Stage1Config cfg = small_stage1();
  cfg.disentangle = false;
  cfg.epochs = 2;
  auto r = train_stage1<float>(corpus, cfg);
  EXPECT_EQ(r.model.speaker_dim(), 0);
  EXPECT_TRUE(r.model.speaker_params().empty());
  EXPECT_THROW(encode_speaker(r.model, corpus.segments[0]), ArgumentError);
  EXPECT_EQ(encode_phonetic(r.model, corpus.segments[0]).size(), 8);
}

TEST(Stage1, CheckpointRoundTrip) {
  const Corpus corpus = generate_synthetic_corpus(small_synth()).corpus;
  Stage1Config cfg = small_stage1();
  cfg.epochs = 1;
  auto r = train_stage1<float>(corpus, cfg);
  testing::TempDir dir;
  save_stage1(r.model, dir.path() / "s1.psva");
  const auto m = load_stage1<float>(dir.path() / "s1.psva");
  EXPECT_EQ(m.config().phonetic_hidden, 8);
  for (int k = 0; k < 5; ++k) {
    EXPECT_EQ(encode_phonetic(m, corpus.segments[k]),
              encode_phonetic(r.model, corpus.segments[k]));
    EXPECT_EQ(encode_speaker(m, corpus.segments[k]),
              encode_speaker(r.model, corpus.segments[k]));
  }
}

TEST(Stage1, InvalidConfigThrows) {
  Stage1Config c;
  c.lambda_margin = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = Stage1Config{};
  c.n_disc = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace pasevec
