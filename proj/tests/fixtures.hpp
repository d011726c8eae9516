// tests/fixtures.hpp

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

// Small models and hand-made segments shared by several test binaries.

#ifndef PASEVEC_TESTS_FIXTURES_HPP_
#define PASEVEC_TESTS_FIXTURES_HPP_

#include <map>
#include <string>
#include <vector>

#include "pasevec/corpus.hpp"
#include "pasevec/stage1.hpp"

namespace pasevec::testing {

// Stage-1 configuration small enough for finite-difference checks.
inline Stage1Config toy_stage1_config() {
  Stage1Config c;
  c.phonetic_hidden = 3;
  c.speaker_hidden = 2;
  c.decoder_hidden = 3;
  c.encoder_layers = 2;
  c.decoder_layers = 1;
  c.discriminator_hidden = 3;
  c.discriminator_layers = 1;
  c.seed = 5;
  return c;
}

// Segments with random frames and lengths in [2, max_len], speakers cycling.
inline std::vector<AcousticWordSegment> toy_segments(int n, int dim, int speakers,
                                                     int max_len, Rng& rng) {
  std::vector<AcousticWordSegment> out;
  for (int k = 0; k < n; ++k) {
    AcousticWordSegment s;
    s.id = "s" + std::to_string(k);
    s.word_label = "w" + std::to_string(k % 3);
    s.speaker = "spk" + std::to_string(k % speakers);
    s.utterance_id = "u" + std::to_string(k);
    s.position = 0;
    const int len = 2 + static_cast<int>(uniform_index(rng, max_len - 1));
    s.frames.resize(len, dim);
    for (Eigen::Index i = 0; i < s.frames.size(); ++i)
      s.frames.data()[i] = static_cast<float>(standard_normal(rng));
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<const AcousticWordSegment*> pointers(
    const std::vector<AcousticWordSegment>& v) {
  std::vector<const AcousticWordSegment*> p;
  for (const auto& s : v) p.push_back(&s);
  return p;
}

// Corpus from word-label transcripts: one utterance per inner list, one
// document per utterance unless `utts_per_doc` says otherwise. Frames are a
// single dim-sized row holding the word index, speaker alternates per
// utterance.
inline Corpus transcript_corpus(const std::vector<std::vector<std::string>>& utts,
                                int utts_per_doc = 1, int dim = 2) {
  Corpus c;
  std::map<std::string, int> ids;
  for (std::size_t u = 0; u < utts.size(); ++u) {
    const std::string uid = "u" + std::to_string(u);
    const std::string doc = "d" + std::to_string(u / utts_per_doc);
    for (std::size_t p = 0; p < utts[u].size(); ++p) {
      AcousticWordSegment s;
      s.id = uid + "-w" + std::to_string(p);
      s.word_label = utts[u][p];
      s.speaker = "spk" + std::to_string(u % 2);
      s.utterance_id = uid;
      s.position = static_cast<int>(p);
      const int id = ids.emplace(s.word_label, static_cast<int>(ids.size())).first->second;
      s.frames = RowMat<float>::Constant(1, dim, static_cast<float>(id));
      c.add_segment(std::move(s), doc, "g0");
    }
  }
  for (const auto& [w, id] : ids) c.lexicon[w] = {id};
  c.feature_dim = dim;
  c.finalize();
  return c;
}

// Perturbs all parameters so leaky-ReLU kinks and GRU saturations are not
// hit at the exact initial values.
template <typename T>
void jitter_params(const nn::ParamList<T>& ps, double scale, Rng& rng) {
  for (auto* p : ps)
    for (Eigen::Index i = 0; i < p->value.size(); ++i)
      p->value.data()[i] += static_cast<T>(scale * standard_normal(rng));
}

}  // namespace pasevec::testing

#endif  // PASEVEC_TESTS_FIXTURES_HPP_
