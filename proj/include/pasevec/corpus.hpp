// pasevec/corpus.hpp

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

// Segmented spoken-word corpora and their on-disk form.
//
// A corpus directory holds
//   manifest.jsonl   one JSON record per segment, in corpus order:
//                    id, word_label, speaker, utterance_id, document_id,
//                    position, n_frames, dim, blob_offset (bytes)
//   features.f32     concatenated float32 little-endian row-major
//                    n_frames x dim blocks
//   lexicon.tsv      word_label TAB space-separated phoneme ids
//   documents.tsv    document_id TAB group id       (optional)
//   groups.tsv       group id TAB space-separated title words (optional)

#ifndef PASEVEC_CORPUS_HPP_
#define PASEVEC_CORPUS_HPP_

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "pasevec/common.hpp"

namespace pasevec {

struct AcousticWordSegment {
  std::string id;
  RowMat<float> frames;  // n_frames x dim
  std::string word_label;
  std::string speaker;
  std::string utterance_id;
  int position = 0;

  int num_frames() const { return static_cast<int>(frames.rows()); }
  int dim() const { return static_cast<int>(frames.cols()); }

  bool operator==(const AcousticWordSegment& o) const {
    return id == o.id && word_label == o.word_label && speaker == o.speaker &&
           utterance_id == o.utterance_id && position == o.position &&
           frames.rows() == o.frames.rows() &&
           frames.cols() == o.frames.cols() && frames == o.frames;
  }
};

struct Utterance {
  std::string id;
  std::string document_id;
  std::string speaker;
  std::vector<std::size_t> segments;  // indices into Corpus::segments, by position
  bool operator==(const Utterance&) const = default;
};

struct Document {
  std::string id;
  std::string group;  // book / topic label; empty when unknown
  std::vector<std::size_t> utterances;  // indices into Corpus::utterances
  bool operator==(const Document&) const = default;
};

class Corpus {
 public:
  std::vector<AcousticWordSegment> segments;
  std::vector<Utterance> utterances;
  std::vector<Document> documents;
  std::map<std::string, std::vector<int>> lexicon;
  std::map<std::string, std::vector<std::string>> group_titles;
  int feature_dim = 0;

  std::size_t size() const { return segments.size(); }
  bool empty() const { return segments.empty(); }

  // Appends a segment, creating its utterance and document on first sight.
  // Call finalize() after the last segment.
  void add_segment(AcousticWordSegment seg, const std::string& document_id,
                   const std::string& group = {}) {
    if (feature_dim == 0 && seg.dim() > 0) feature_dim = seg.dim();
    auto uit = utt_index_.find(seg.utterance_id);
    std::size_t u;
    if (uit == utt_index_.end()) {
      auto dit = doc_index_.find(document_id);
      std::size_t d;
      if (dit == doc_index_.end()) {
        d = documents.size();
        documents.push_back({document_id, group, {}});
        doc_index_.emplace(document_id, d);
      } else {
        d = dit->second;
      }
      u = utterances.size();
      utterances.push_back({seg.utterance_id, document_id, seg.speaker, {}});
      utt_index_.emplace(seg.utterance_id, u);
      documents[d].utterances.push_back(u);
    } else {
      u = uit->second;
      if (utterances[u].document_id != document_id)
        throw ValidationError("utterance " + seg.utterance_id +
                              " spans documents " +
                              utterances[u].document_id + " and " +
                              document_id);
    }
    utterances[u].segments.push_back(segments.size());
    segments.push_back(std::move(seg));
  }

  // Orders utterance members by position, rebuilds lookup tables and checks
  // every invariant.
  void finalize() {
    for (auto& u : utterances)
      std::stable_sort(u.segments.begin(), u.segments.end(),
                       [&](std::size_t a, std::size_t b) {
                         return segments[a].position < segments[b].position;
                       });
    rebuild_indices();
    validate();
  }

  void validate() const {
    std::set<std::string> ids;
    for (const auto& s : segments) {
      if (!ids.insert(s.id).second)
        throw ValidationError("duplicate segment id " + s.id);
      if (s.num_frames() < 1)
        throw ValidationError("segment " + s.id + " has no frames");
      if (s.dim() != feature_dim)
        throw SchemaError("segment " + s.id + " has " +
                          std::to_string(s.dim()) + "-dim frames in a " +
                          std::to_string(feature_dim) + "-dim corpus");
      if (!lexicon.count(s.word_label))
        throw ValidationError("word '" + s.word_label + "' of segment " +
                              s.id + " missing from lexicon");
    }
    std::vector<int> seen(segments.size(), 0);
    for (const auto& u : utterances) {
      for (std::size_t k = 0; k < u.segments.size(); ++k) {
        const auto& s = segments[u.segments[k]];
        ++seen[u.segments[k]];
        if (s.speaker != u.speaker)
          throw ValidationError("utterance " + u.id +
                                " has inconsistent speakers (" + u.speaker +
                                ", " + s.speaker + ")");
        if (s.position != static_cast<int>(k))
          throw ValidationError("utterance " + u.id +
                                " positions are not 0..n-1 without gaps");
      }
    }
    for (std::size_t i = 0; i < seen.size(); ++i)
      if (seen[i] != 1)
        throw ValidationError("segment " + segments[i].id +
                              " is not in exactly one utterance");
    std::vector<int> useen(utterances.size(), 0);
    for (const auto& d : documents)
      for (auto u : d.utterances) ++useen[u];
    for (std::size_t i = 0; i < useen.size(); ++i)
      if (useen[i] != 1)
        throw ValidationError("utterance " + utterances[i].id +
                              " is not in exactly one document");
  }

  std::vector<std::string> speakers() const {
    std::set<std::string> s;
    for (const auto& seg : segments) s.insert(seg.speaker);
    return {s.begin(), s.end()};
  }

  std::map<std::string, std::size_t> word_counts() const {
    std::map<std::string, std::size_t> c;
    for (const auto& s : segments) ++c[s.word_label];
    return c;
  }

  std::vector<std::string> word_labels() const {
    std::vector<std::string> out;
    for (const auto& [w, n] : word_counts()) out.push_back(w);
    return out;
  }

  // The n most frequent word types; ties broken by label.
  std::vector<std::string> top_words(std::size_t n) const {
    auto counts = word_counts();
    std::vector<std::pair<std::string, std::size_t>> v(counts.begin(),
                                                       counts.end());
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(n, v.size()); ++i)
      out.push_back(v[i].first);
    return out;
  }

  std::size_t segment_index(const std::string& id) const {
    auto it = seg_index_.find(id);
    if (it == seg_index_.end()) throw LookupError("no segment " + id);
    return it->second;
  }
  std::size_t utterance_index(const std::string& id) const {
    auto it = utt_index_.find(id);
    if (it == utt_index_.end()) throw LookupError("no utterance " + id);
    return it->second;
  }
  std::size_t document_index(const std::string& id) const {
    auto it = doc_index_.find(id);
    if (it == doc_index_.end()) throw LookupError("no document " + id);
    return it->second;
  }
  const Utterance& utterance_of(std::size_t segment) const {
    return utterances[utterance_index(segments[segment].utterance_id)];
  }

  bool operator==(const Corpus& o) const {
    return segments == o.segments && utterances == o.utterances &&
           documents == o.documents && lexicon == o.lexicon &&
           group_titles == o.group_titles && feature_dim == o.feature_dim;
  }

  void rebuild_indices() {
    seg_index_.clear();
    utt_index_.clear();
    doc_index_.clear();
    for (std::size_t i = 0; i < segments.size(); ++i)
      seg_index_.emplace(segments[i].id, i);
    for (std::size_t i = 0; i < utterances.size(); ++i)
      utt_index_.emplace(utterances[i].id, i);
    for (std::size_t i = 0; i < documents.size(); ++i)
      doc_index_.emplace(documents[i].id, i);
  }

 private:
  std::unordered_map<std::string, std::size_t> seg_index_, utt_index_,
      doc_index_;
};

namespace detail {

inline std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

inline std::vector<std::pair<std::string, std::string>> read_tsv(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<std::pair<std::string, std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      rows.emplace_back(line, "");
    else
      rows.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return rows;
}

}  // namespace detail

inline std::filesystem::path write_corpus(const Corpus& corpus,
                                          const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const fs::path manifest = dir / "manifest.jsonl";
  std::ofstream mf(manifest, std::ios::trunc);
  std::ofstream ff(dir / "features.f32", std::ios::binary | std::ios::trunc);
  if (!mf || !ff) throw IoError("cannot write corpus into " + dir.string());
  std::uint64_t offset = 0;
  for (const auto& s : corpus.segments) {
    const auto& u = corpus.utterance_of(corpus.segment_index(s.id));
    nlohmann::ordered_json rec;
    rec["id"] = s.id;
    rec["word_label"] = s.word_label;
    rec["speaker"] = s.speaker;
    rec["utterance_id"] = s.utterance_id;
    rec["document_id"] = u.document_id;
    rec["position"] = s.position;
    rec["n_frames"] = s.num_frames();
    rec["dim"] = s.dim();
    rec["blob_offset"] = offset;
    mf << rec.dump() << '\n';
    const std::size_t bytes =
        static_cast<std::size_t>(s.frames.size()) * sizeof(float);
    ff.write(reinterpret_cast<const char*>(s.frames.data()),
             static_cast<std::streamsize>(bytes));
    offset += bytes;
  }
  std::ofstream lf(dir / "lexicon.tsv", std::ios::trunc);
  for (const auto& [w, ph] : corpus.lexicon) {
    lf << w << '\t';
    for (std::size_t i = 0; i < ph.size(); ++i) lf << (i ? " " : "") << ph[i];
    lf << '\n';
  }
  std::ofstream df(dir / "documents.tsv", std::ios::trunc);
  for (const auto& d : corpus.documents) df << d.id << '\t' << d.group << '\n';
  std::ofstream gf(dir / "groups.tsv", std::ios::trunc);
  for (const auto& [g, words] : corpus.group_titles) {
    gf << g << '\t';
    for (std::size_t i = 0; i < words.size(); ++i)
      gf << (i ? " " : "") << words[i];
    gf << '\n';
  }
  if (!mf || !ff || !lf || !df || !gf)
    throw IoError("write failed in " + dir.string());
  return manifest;
}

// Loads a corpus from its manifest. Neighbouring files are looked up in the
// manifest's directory.
inline Corpus load_corpus(const std::filesystem::path& manifest_path) {
  namespace fs = std::filesystem;
  const fs::path dir = manifest_path.parent_path();
  std::ifstream mf(manifest_path);
  if (!mf) throw IoError("cannot open manifest " + manifest_path.string());
  const fs::path blob_path = dir / "features.f32";
  std::ifstream ff(blob_path, std::ios::binary);
  std::uint64_t blob_size = 0;
  {
    std::error_code ec;
    blob_size = ff ? fs::file_size(blob_path, ec) : 0;
    if (ec) blob_size = 0;
  }

  std::map<std::string, std::string> doc_groups;
  if (fs::exists(dir / "documents.tsv"))
    for (auto& [d, g] : detail::read_tsv(dir / "documents.tsv"))
      doc_groups[d] = g;

  Corpus c;
  std::string line;
  std::size_t lineno = 0;
  int dim = 0;
  while (std::getline(mf, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IngestionError(manifest_path.string() + ":" +
                           std::to_string(lineno) + ": " + e.what());
    }
    AcousticWordSegment s;
    std::string doc;
    std::uint64_t offset = 0;
    int n_frames = 0, seg_dim = 0;
    try {
      s.id = rec.at("id").get<std::string>();
      s.word_label = rec.at("word_label").get<std::string>();
      s.speaker = rec.at("speaker").get<std::string>();
      s.utterance_id = rec.at("utterance_id").get<std::string>();
      doc = rec.at("document_id").get<std::string>();
      s.position = rec.at("position").get<int>();
      n_frames = rec.at("n_frames").get<int>();
      offset = rec.at("blob_offset").get<std::uint64_t>();
      seg_dim = rec.contains("dim") ? rec["dim"].get<int>() : 0;
    } catch (const nlohmann::json::exception& e) {
      throw IngestionError(manifest_path.string() + ":" +
                           std::to_string(lineno) + ": " + e.what());
    }
    if (seg_dim == 0) {
      if (dim == 0)
        throw SchemaError("segment " + s.id +
                          " does not declare its feature dimension");
      seg_dim = dim;
    }
    if (dim == 0) dim = seg_dim;
    if (seg_dim != dim)
      throw SchemaError("segment " + s.id + " declares " +
                        std::to_string(seg_dim) + "-dim frames in a " +
                        std::to_string(dim) + "-dim corpus");
    if (n_frames < 1)
      throw IngestionError("segment " + s.id + " has no frames");
    const std::uint64_t bytes =
        static_cast<std::uint64_t>(n_frames) * seg_dim * sizeof(float);
    if (!ff || offset + bytes > blob_size)
      throw IngestionError("feature blob for segment " + s.id +
                           " is missing or truncated");
    s.frames.resize(n_frames, seg_dim);
    ff.seekg(static_cast<std::streamoff>(offset));
    ff.read(reinterpret_cast<char*>(s.frames.data()),
            static_cast<std::streamsize>(bytes));
    if (static_cast<std::uint64_t>(ff.gcount()) != bytes)
      throw IngestionError("feature blob for segment " + s.id +
                           " could not be read");
    if (!s.frames.allFinite())
      throw IngestionError("feature blob for segment " + s.id +
                           " holds non-finite values");
    auto git = doc_groups.find(doc);
    c.add_segment(std::move(s), doc,
                  git == doc_groups.end() ? std::string() : git->second);
  }
  c.feature_dim = dim;

  const fs::path lex = dir / "lexicon.tsv";
  if (fs::exists(lex)) {
    for (auto& [w, phs] : detail::read_tsv(lex)) {
      std::vector<int> ids;
      for (const auto& tok : detail::split_ws(phs)) {
        try {
          ids.push_back(std::stoi(tok));
        } catch (const std::exception&) {
          throw IngestionError(lex.string() + ": bad phoneme id '" + tok +
                               "' for word " + w);
        }
      }
      c.lexicon[w] = std::move(ids);
    }
  }
  if (fs::exists(dir / "groups.tsv"))
    for (auto& [g, words] : detail::read_tsv(dir / "groups.tsv"))
      c.group_titles[g] = detail::split_ws(words);
  c.finalize();
  return c;
}

// Sub-corpus holding the given documents (indices into corpus.documents),
// with segment order preserved.
inline Corpus select_documents(const Corpus& corpus,
                               const std::vector<std::size_t>& docs) {
  std::vector<char> keep(corpus.documents.size(), 0);
  for (auto d : docs) keep.at(d) = 1;
  std::map<std::string, std::size_t> doc_of_utt;
  for (std::size_t d = 0; d < corpus.documents.size(); ++d)
    for (auto u : corpus.documents[d].utterances)
      doc_of_utt[corpus.utterances[u].id] = d;
  Corpus out;
  out.feature_dim = corpus.feature_dim;
  std::set<std::string> words;
  for (const auto& s : corpus.segments) {
    const std::size_t d = doc_of_utt.at(s.utterance_id);
    if (!keep[d]) continue;
    words.insert(s.word_label);
    out.add_segment(s, corpus.documents[d].id, corpus.documents[d].group);
  }
  // Documents with no segments still belong to the part.
  for (std::size_t d = 0; d < corpus.documents.size(); ++d)
    if (keep[d] && corpus.documents[d].utterances.empty())
      out.documents.push_back({corpus.documents[d].id,
                               corpus.documents[d].group, {}});
  out.lexicon = corpus.lexicon;
  out.group_titles = corpus.group_titles;
  out.finalize();
  return out;
}

// Splits at document granularity. Part sizes follow the ratios with
// largest-remainder rounding; documents are assigned after a seeded shuffle.
inline std::vector<Corpus> split_corpus(const Corpus& corpus,
                                        const std::vector<double>& ratios,
                                        std::uint64_t seed) {
  if (ratios.empty()) throw ArgumentError("split needs at least one ratio");
  double sum = 0;
  for (double r : ratios) {
    if (!(r > 0)) throw ArgumentError("split ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ArgumentError("split ratios must sum to 1");
  const std::size_t n = corpus.documents.size();
  if (n < ratios.size())
    throw ArgumentError("cannot split " + std::to_string(n) +
                        " documents into " + std::to_string(ratios.size()) +
                        " parts");
  std::vector<std::size_t> counts(ratios.size());
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    const double exact = ratios[k] * static_cast<double>(n);
    counts[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += counts[k];
    rema.emplace_back(exact - static_cast<double>(counts[k]), k);
  }
  std::stable_sort(rema.begin(), rema.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned)
    ++counts[rema[i % rema.size()].second];
  // Every part gets at least one document.
  for (std::size_t k = 0; k < counts.size(); ++k) {
    while (counts[k] == 0) {
      auto big = std::max_element(counts.begin(), counts.end());
      --*big;
      ++counts[k];
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, 0x5b1u));
  shuffle(order.begin(), order.end(), rng);
  std::vector<Corpus> parts;
  std::size_t at = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    std::vector<std::size_t> docs(order.begin() + static_cast<long>(at),
                                  order.begin() + static_cast<long>(at + counts[k]));
    std::sort(docs.begin(), docs.end());
    parts.push_back(select_documents(corpus, docs));
    at += counts[k];
  }
  return parts;
}

}  // namespace pasevec

#endif  // PASEVEC_CORPUS_HPP_
