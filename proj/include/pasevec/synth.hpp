// pasevec/synth.hpp

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

// Seeded synthetic corpus with known phonetic, speaker and topical structure.
//
// Every word type owns a unique phoneme sequence; every phoneme owns a fixed
// template trajectory. A spoken realization concatenates the templates,
// applies the speaker's affine distortion (gain * frame + bias) and adds
// i.i.d. Gaussian noise. Documents draw one topic; utterances draw one
// speaker and a word chain from a topic-conditioned bigram sampler.

#ifndef PASEVEC_SYNTH_HPP_
#define PASEVEC_SYNTH_HPP_

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pasevec/corpus.hpp"

namespace pasevec {

struct SynthConfig {
  int vocabulary_size = 50;
  int phoneme_inventory_size = 16;
  int phonemes_per_word_min = 2;
  int phonemes_per_word_max = 6;
  int phoneme_frames_min = 2;  // template length range, frames per phoneme
  int phoneme_frames_max = 3;
  double phoneme_jitter = 0.3;  // within-template frame spread
  int speaker_count = 8;
  double speaker_bias_scale = 0.5;
  double speaker_gain_min = 0.8;
  double speaker_gain_max = 1.2;
  double frame_noise_sigma = 0.1;
  int topic_count = 5;
  int words_per_topic = 10;
  double topic_smoothing = 0.02;  // weight of off-topic words
  double zipf_exponent = 0.5;
  int successors_per_word = 2;
  double bigram_boost = 4.0;
  int keywords_per_topic = 2;
  int utterance_length_min = 3;
  int utterance_length_max = 8;
  int utterances_per_document_min = 2;
  int utterances_per_document_max = 4;
  int document_count = 150;
  int feature_dim = 39;
  std::uint64_t seed = 1;

  void validate() const {
    auto pos = [](int v, const char* n) {
      if (v < 1) throw ConfigError(std::string("synth: ") + n + " must be >= 1");
    };
    pos(vocabulary_size, "vocabulary_size");
    pos(phoneme_inventory_size, "phoneme_inventory_size");
    pos(phonemes_per_word_min, "phonemes_per_word_min");
    pos(phoneme_frames_min, "phoneme_frames_min");
    pos(speaker_count, "speaker_count");
    pos(topic_count, "topic_count");
    pos(words_per_topic, "words_per_topic");
    pos(utterance_length_min, "utterance_length_min");
    pos(utterances_per_document_min, "utterances_per_document_min");
    pos(document_count, "document_count");
    pos(feature_dim, "feature_dim");
    if (phonemes_per_word_max < phonemes_per_word_min ||
        phoneme_frames_max < phoneme_frames_min ||
        utterance_length_max < utterance_length_min ||
        utterances_per_document_max < utterances_per_document_min)
      throw ConfigError("synth: range max below min");
    if (!(frame_noise_sigma >= 0) || !(speaker_bias_scale >= 0))
      throw ConfigError("synth: noise and bias scales must be >= 0");
    if (!(speaker_gain_min > 0) || speaker_gain_max < speaker_gain_min)
      throw ConfigError("synth: bad gain range");
    if (vocabulary_size < topic_count)
      throw ConfigError("synth: vocabulary_size must be >= topic_count");
    if (topic_count * words_per_topic > vocabulary_size)
      throw ConfigError("synth: topic_count * words_per_topic exceeds vocabulary");
    if (keywords_per_topic < 0 || keywords_per_topic > words_per_topic)
      throw ConfigError("synth: keywords_per_topic out of range");
    if (successors_per_word < 0 || topic_smoothing < 0 || bigram_boost < 0)
      throw ConfigError("synth: sampler weights must be >= 0");
    // Count distinct phoneme sequences available.
    double capacity = 0, p = 1;
    for (int k = 1; k <= phonemes_per_word_max; ++k) {
      p *= phoneme_inventory_size;
      if (k >= phonemes_per_word_min) capacity += p;
      if (capacity > 1e12) break;
    }
    if (capacity < vocabulary_size)
      throw ConfigError("synth: not enough distinct phoneme sequences");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    SynthConfig, vocabulary_size, phoneme_inventory_size, phonemes_per_word_min,
    phonemes_per_word_max, phoneme_frames_min, phoneme_frames_max,
    phoneme_jitter, speaker_count, speaker_bias_scale, speaker_gain_min,
    speaker_gain_max, frame_noise_sigma, topic_count, words_per_topic,
    topic_smoothing, zipf_exponent, successors_per_word, bigram_boost,
    keywords_per_topic, utterance_length_min, utterance_length_max,
    utterances_per_document_min, utterances_per_document_max, document_count,
    feature_dim, seed)

struct SpeakerParams {
  std::vector<float> gain;
  std::vector<float> bias;
  bool operator==(const SpeakerParams&) const = default;
};

struct GroundTruth {
  std::vector<RowMat<float>> phoneme_templates;     // frames x dim each
  std::map<std::string, std::vector<int>> phonemes;  // per word
  std::map<std::string, int> topic;                  // per word, -1 = shared
  std::map<std::string, SpeakerParams> speakers;
  std::vector<std::vector<std::string>> topic_keywords;
  std::map<std::string, int> document_topic;

  std::string group_name(int t) const { return "topic" + std::to_string(t); }
};

// Noise-free rendering of `phonemes` spoken by `spk`.
inline RowMat<float> render_word(const GroundTruth& gt,
                                 const std::vector<int>& phonemes,
                                 const SpeakerParams& spk) {
  int frames = 0;
  for (int p : phonemes) frames += static_cast<int>(gt.phoneme_templates.at(p).rows());
  const int dim = static_cast<int>(spk.gain.size());
  RowMat<float> out(frames, dim);
  int row = 0;
  for (int p : phonemes) {
    const auto& tpl = gt.phoneme_templates.at(p);
    for (Eigen::Index r = 0; r < tpl.rows(); ++r, ++row)
      for (int k = 0; k < dim; ++k)
        out(row, k) = spk.gain[k] * tpl(r, k) + spk.bias[k];
  }
  return out;
}

inline std::string synth_word_label(int w) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "w%03d", w);
  return buf;
}

struct SynthResult {
  Corpus corpus;
  GroundTruth truth;
};

inline SynthResult generate_synthetic_corpus(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  GroundTruth gt;
  const int D = cfg.feature_dim;

  auto randint = [&](int lo, int hi) {
    return lo + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(hi - lo + 1)));
  };

  // Phoneme templates.
  for (int p = 0; p < cfg.phoneme_inventory_size; ++p) {
    const int len = randint(cfg.phoneme_frames_min, cfg.phoneme_frames_max);
    std::vector<float> centre(D);
    for (auto& c : centre) c = static_cast<float>(standard_normal(rng));
    RowMat<float> tpl(len, D);
    for (int r = 0; r < len; ++r)
      for (int k = 0; k < D; ++k)
        tpl(r, k) = centre[k] +
                    static_cast<float>(cfg.phoneme_jitter * standard_normal(rng));
    gt.phoneme_templates.push_back(std::move(tpl));
  }

  // Unique phoneme sequences; collisions are rejected and redrawn.
  std::set<std::vector<int>> used;
  std::vector<std::string> labels;
  for (int w = 0; w < cfg.vocabulary_size; ++w) {
    std::vector<int> seq;
    do {
      const int len = randint(cfg.phonemes_per_word_min, cfg.phonemes_per_word_max);
      seq.assign(len, 0);
      for (auto& p : seq) p = randint(0, cfg.phoneme_inventory_size - 1);
    } while (!used.insert(seq).second);
    labels.push_back(synth_word_label(w));
    gt.phonemes[labels.back()] = seq;
    gt.topic[labels.back()] =
        w < cfg.topic_count * cfg.words_per_topic ? w / cfg.words_per_topic : -1;
  }

  // Speakers.
  std::vector<std::string> speaker_ids;
  for (int s = 0; s < cfg.speaker_count; ++s) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "spk%02d", s);
    SpeakerParams sp;
    sp.gain.resize(D);
    sp.bias.resize(D);
    for (int k = 0; k < D; ++k) {
      sp.gain[k] = static_cast<float>(
          cfg.speaker_gain_min +
          (cfg.speaker_gain_max - cfg.speaker_gain_min) * uniform01(rng));
      sp.bias[k] = static_cast<float>(cfg.speaker_bias_scale * standard_normal(rng));
    }
    speaker_ids.push_back(buf);
    gt.speakers[buf] = std::move(sp);
  }

  // Topic unigrams: Zipf-weighted over a random in-topic rank order, small
  // smoothing mass on every other word.
  const int V = cfg.vocabulary_size;
  std::vector<std::vector<double>> unigram(cfg.topic_count, std::vector<double>(V));
  for (int t = 0; t < cfg.topic_count; ++t) {
    std::vector<int> members;
    for (int w = 0; w < V; ++w)
      if (gt.topic[labels[w]] == t) members.push_back(w);
    shuffle(members.begin(), members.end(), rng);
    for (int w = 0; w < V; ++w)
      unigram[t][w] = gt.topic[labels[w]] == -1 ? 0.5 : cfg.topic_smoothing;
    for (std::size_t r = 0; r < members.size(); ++r)
      unigram[t][members[r]] =
          std::pow(static_cast<double>(r + 1), -cfg.zipf_exponent);
    // Titles come from the less frequent half, so that some documents of the
    // topic lack them.
    std::vector<std::string> kw;
    const std::size_t half = members.size() / 2;
    std::vector<int> tail(members.begin() + static_cast<long>(half), members.end());
    shuffle(tail.begin(), tail.end(), rng);
    for (int k = 0; k < cfg.keywords_per_topic && k < static_cast<int>(tail.size()); ++k)
      kw.push_back(labels[tail[k]]);
    std::sort(kw.begin(), kw.end());
    gt.topic_keywords.push_back(kw);
  }

  // Bigram successors, drawn from the word's own topic (shared words: anywhere).
  std::vector<std::set<int>> successors(V);
  for (int w = 0; w < V; ++w) {
    const int t = gt.topic[labels[w]];
    std::vector<int> pool;
    for (int v = 0; v < V; ++v)
      if (v != w && (t < 0 || gt.topic[labels[v]] == t)) pool.push_back(v);
    shuffle(pool.begin(), pool.end(), rng);
    for (int k = 0; k < cfg.successors_per_word && k < static_cast<int>(pool.size()); ++k)
      successors[w].insert(pool[k]);
  }

  auto draw = [&](const std::vector<double>& weights) {
    double total = 0;
    for (double x : weights) total += x;
    double u = uniform01(rng) * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      u -= weights[i];
      if (u < 0) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size() - 1);
  };

  Corpus corpus;
  corpus.feature_dim = D;
  for (int d = 0; d < cfg.document_count; ++d) {
    char doc_id[32];
    std::snprintf(doc_id, sizeof doc_id, "doc%04d", d);
    const int topic = static_cast<int>(uniform_index(rng, cfg.topic_count));
    gt.document_topic[doc_id] = topic;
    const int n_utt = randint(cfg.utterances_per_document_min,
                              cfg.utterances_per_document_max);
    for (int u = 0; u < n_utt; ++u) {
      char utt_id[48];
      std::snprintf(utt_id, sizeof utt_id, "%s-u%02d", doc_id, u);
      const std::string& spk = speaker_ids[uniform_index(rng, speaker_ids.size())];
      const int len = randint(cfg.utterance_length_min, cfg.utterance_length_max);
      int prev = -1;
      for (int pos = 0; pos < len; ++pos) {
        int w;
        if (prev < 0) {
          w = draw(unigram[topic]);
        } else {
          std::vector<double> wts = unigram[topic];
          for (int s : successors[prev]) wts[s] *= 1.0 + cfg.bigram_boost;
          w = draw(wts);
        }
        prev = w;
        AcousticWordSegment seg;
        char seg_id[64];
        std::snprintf(seg_id, sizeof seg_id, "%s-w%02d", utt_id, pos);
        seg.id = seg_id;
        seg.word_label = labels[w];
        seg.speaker = spk;
        seg.utterance_id = utt_id;
        seg.position = pos;
        seg.frames = render_word(gt, gt.phonemes[labels[w]], gt.speakers[spk]);
        if (cfg.frame_noise_sigma > 0)
          for (Eigen::Index i = 0; i < seg.frames.size(); ++i)
            seg.frames.data()[i] += static_cast<float>(
                cfg.frame_noise_sigma * standard_normal(rng));
        corpus.add_segment(std::move(seg), doc_id, gt.group_name(topic));
      }
    }
  }
  for (int w = 0; w < V; ++w) corpus.lexicon[labels[w]] = gt.phonemes[labels[w]];
  for (int t = 0; t < cfg.topic_count; ++t)
    corpus.group_titles[gt.group_name(t)] = gt.topic_keywords[t];
  corpus.finalize();
  return {std::move(corpus), std::move(gt)};
}

inline nlohmann::ordered_json groundtruth_to_json(const GroundTruth& gt) {
  nlohmann::ordered_json j;
  auto& tpl = j["phoneme_templates"] = nlohmann::ordered_json::array();
  for (const auto& t : gt.phoneme_templates) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      std::vector<float> row(t.cols());
      for (Eigen::Index k = 0; k < t.cols(); ++k) row[k] = t(r, k);
      rows.push_back(row);
    }
    tpl.push_back(rows);
  }
  j["phonemes"] = gt.phonemes;
  j["topics"] = gt.topic;
  j["topic_keywords"] = gt.topic_keywords;
  j["document_topic"] = gt.document_topic;
  auto& spk = j["speakers"] = nlohmann::ordered_json::object();
  for (const auto& [id, p] : gt.speakers) spk[id] = {{"gain", p.gain}, {"bias", p.bias}};
  return j;
}

inline GroundTruth groundtruth_from_json(const nlohmann::json& j) {
  GroundTruth gt;
  for (const auto& rows : j.at("phoneme_templates")) {
    RowMat<float> t(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t k = 0; k < rows[r].size(); ++k)
        t(r, k) = rows[r][k].get<float>();
    gt.phoneme_templates.push_back(std::move(t));
  }
  gt.phonemes = j.at("phonemes").get<std::map<std::string, std::vector<int>>>();
  gt.topic = j.at("topics").get<std::map<std::string, int>>();
  gt.topic_keywords =
      j.at("topic_keywords").get<std::vector<std::vector<std::string>>>();
  gt.document_topic = j.at("document_topic").get<std::map<std::string, int>>();
  for (const auto& [id, p] : j.at("speakers").items())
    gt.speakers[id] = {p.at("gain").get<std::vector<float>>(),
                       p.at("bias").get<std::vector<float>>()};
  return gt;
}

inline void write_groundtruth(const GroundTruth& gt,
                              const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << groundtruth_to_json(gt).dump() << '\n';
}

inline GroundTruth load_groundtruth(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  return groundtruth_from_json(nlohmann::json::parse(is));
}

}  // namespace pasevec

#endif  // PASEVEC_SYNTH_HPP_
