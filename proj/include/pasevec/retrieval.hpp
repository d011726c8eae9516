// pasevec/retrieval.hpp

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

// Semantic document retrieval with word embeddings.
//
// A document is the set of word types it contains, each with its embedding
// R(w). For a query q the score of document d is
//
//   S(q, d) = max_{w in d} -||R(w) - R(q)||
//
// Relevance for a query comes in two sets: D1 holds the documents containing
// q; D2 holds the documents that do not contain q but belong to a group whose
// title contains q. Under the "D2" ground truth the documents containing q
// are removed from the ranking before scoring.

#ifndef PASEVEC_RETRIEVAL_HPP_
#define PASEVEC_RETRIEVAL_HPP_

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pasevec/corpus.hpp"
#include "pasevec/embedding_table.hpp"

namespace pasevec {

struct DocumentIndex {
  struct Entry {
    std::vector<std::string> words;  // sorted, distinct
    Mat<double> vectors;             // dim x words
  };
  std::map<std::string, Entry> documents;
  std::string tag;
  int dim = 0;

  const Entry& at(const std::string& doc) const {
    auto it = documents.find(doc);
    if (it == documents.end()) throw LookupError("index has no document '" + doc + "'");
    return it->second;
  }
};

inline DocumentIndex build_index(const Corpus& corpus, const EmbeddingTable& table) {
  if (corpus.empty()) throw ArgumentError("build_index: empty corpus");
  DocumentIndex idx;
  idx.tag = table.tag();
  idx.dim = table.dim();
  std::set<std::string> missing;
  for (const auto& doc : corpus.documents) {
    std::set<std::string> words;
    for (std::size_t u : doc.utterances)
      for (std::size_t s : corpus.utterances[u].segments) {
        const auto& w = corpus.segments[s].word_label;
        if (table.contains(w)) words.insert(w);
        else missing.insert(w);
      }
    if (words.empty()) {
      warn("build_index: document " + doc.id + " has no embedded words; skipped");
      continue;
    }
    DocumentIndex::Entry e;
    e.words.assign(words.begin(), words.end());
    e.vectors = table.matrix(e.words);
    idx.documents.emplace(doc.id, std::move(e));
  }
  if (!missing.empty())
    warn("build_index: words without embeddings skipped: " +
         EmbeddingTable::join({missing.begin(), missing.end()}));
  return idx;
}

inline double relevance_score(const DocumentIndex::Entry& e, const Vec<double>& q) {
  return -std::sqrt((e.vectors.colwise() - q).colwise().squaredNorm().minCoeff());
}

inline double relevance_score(const DocumentIndex& idx, const std::string& doc,
                              const Vec<double>& q) {
  const auto& e = idx.at(doc);
  if (q.size() != e.vectors.rows()) throw ShapeError("relevance_score: query dimension");
  return relevance_score(e, q);
}

using Ranking = std::vector<std::pair<std::string, double>>;

// Descending score, ties by document id. `exclude` drops documents.
inline Ranking rank_documents(const DocumentIndex& idx, const Vec<double>& q,
                              const std::set<std::string>& exclude = {}) {
  if (q.size() != idx.dim) throw ShapeError("rank_documents: query dimension");
  Ranking r;
  for (const auto& [id, e] : idx.documents)
    if (!exclude.count(id)) r.emplace_back(id, relevance_score(e, q));
  std::stable_sort(r.begin(), r.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return r;
}

struct QueryRelevance {
  std::set<std::string> d1, d2;
};

using RelevanceSets = std::map<std::string, QueryRelevance>;

inline RelevanceSets build_relevance_sets(const Corpus& corpus,
                                          const std::vector<std::string>& queries) {
  std::map<std::string, std::set<std::string>> doc_words;
  for (const auto& doc : corpus.documents) {
    auto& w = doc_words[doc.id];
    for (std::size_t u : doc.utterances)
      for (std::size_t s : corpus.utterances[u].segments)
        w.insert(corpus.segments[s].word_label);
  }
  RelevanceSets out;
  for (const auto& q : queries) {
    QueryRelevance rel;
    for (const auto& doc : corpus.documents) {
      if (doc_words[doc.id].count(q)) {
        rel.d1.insert(doc.id);
        continue;
      }
      auto t = corpus.group_titles.find(doc.group);
      if (t != corpus.group_titles.end() &&
          std::find(t->second.begin(), t->second.end(), q) != t->second.end())
        rel.d2.insert(doc.id);
    }
    out[q] = std::move(rel);
  }
  return out;
}

inline double average_precision(const Ranking& ranking, const std::set<std::string>& relevant) {
  if (relevant.empty()) throw ArgumentError("average_precision: no relevant documents");
  double sum = 0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < ranking.size(); ++r)
    if (relevant.count(ranking[r].first)) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  return sum / static_cast<double>(relevant.size());
}

// Queries without relevant documents are skipped with a warning.
inline double mean_average_precision(const std::map<std::string, Ranking>& rankings,
                                     const std::map<std::string, std::set<std::string>>& relevant) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& [q, ranking] : rankings) {
    auto it = relevant.find(q);
    if (it == relevant.end() || it->second.empty()) {
      warn("mean_average_precision: query " + q + " has no relevant documents; skipped");
      continue;
    }
    sum += average_precision(ranking, it->second);
    ++n;
  }
  if (n == 0) throw EvaluationError("mean_average_precision: no query has relevant documents");
  return sum / static_cast<double>(n);
}

struct QueryReport {
  std::string query;
  std::size_t d1 = 0, d2 = 0;
  double ap_all = -1;  // D1 + D2; -1 when undefined
  double ap_d2 = -1;
  std::vector<std::string> top10;       // full ranking
  std::map<std::string, int> d2_ranks;  // 1-based, among documents without q
};

struct RetrievalReport {
  std::string tag;
  std::size_t documents = 0;
  std::map<std::string, double> map;  // "D1+D2", "D2"
  std::vector<QueryReport> queries;
};

inline void to_json(nlohmann::json& j, const QueryReport& q) {
  j = {{"query", q.query}, {"d1", q.d1}, {"d2", q.d2}, {"top10", q.top10},
       {"d2_ranks", q.d2_ranks}};
  j["ap"] = nlohmann::json::object();
  if (q.ap_all >= 0) j["ap"]["D1+D2"] = q.ap_all;
  if (q.ap_d2 >= 0) j["ap"]["D2"] = q.ap_d2;
}

inline void to_json(nlohmann::json& j, const RetrievalReport& r) {
  j = {{"embedding", r.tag}, {"documents", r.documents}, {"map", r.map},
       {"queries", r.queries}};
}

// Queries are word types; their vectors come from the same table.
inline RetrievalReport evaluate_retrieval(const Corpus& corpus, const EmbeddingTable& table,
                                          const std::vector<std::string>& queries) {
  const DocumentIndex idx = build_index(corpus, table);
  const RelevanceSets rel = build_relevance_sets(corpus, queries);
  RetrievalReport rep;
  rep.tag = table.tag();
  rep.documents = idx.documents.size();
  std::map<std::string, Ranking> full, restricted;
  std::map<std::string, std::set<std::string>> rel_all, rel_d2;
  for (const auto& q : queries) {
    if (!table.contains(q)) {
      warn("evaluate_retrieval: query " + q + " has no embedding; skipped");
      continue;
    }
    const Vec<double> qv = table.at(q).cast<double>();
    const auto& r = rel.at(q);
    QueryReport qr;
    qr.query = q;
    qr.d1 = r.d1.size();
    qr.d2 = r.d2.size();
    full[q] = rank_documents(idx, qv);
    restricted[q] = rank_documents(idx, qv, r.d1);
    for (std::size_t k = 0; k < full[q].size() && k < 10; ++k)
      qr.top10.push_back(full[q][k].first);
    for (std::size_t k = 0; k < restricted[q].size(); ++k)
      if (r.d2.count(restricted[q][k].first))
        qr.d2_ranks[restricted[q][k].first] = static_cast<int>(k + 1);
    std::set<std::string> both = r.d1;
    both.insert(r.d2.begin(), r.d2.end());
    if (!both.empty()) qr.ap_all = average_precision(full[q], both);
    if (!r.d2.empty()) qr.ap_d2 = average_precision(restricted[q], r.d2);
    rel_all[q] = std::move(both);
    rel_d2[q] = r.d2;
    rep.queries.push_back(std::move(qr));
  }
  // A mode in which no query has a relevant document has no MAP.
  auto put = [&](const char* mode, const auto& rankings, const auto& relevant) {
    for (const auto& [q, r] : relevant)
      if (!r.empty()) {
        rep.map[mode] = mean_average_precision(rankings, relevant);
        return;
      }
    warn(std::string("evaluate_retrieval: no query has relevant documents under ") + mode);
  };
  put("D1+D2", full, rel_all);
  put("D2", restricted, rel_d2);
  return rep;
}

// Keywords of every group title, sorted and distinct.
inline std::vector<std::string> title_queries(const Corpus& corpus) {
  std::set<std::string> q;
  for (const auto& [g, words] : corpus.group_titles) q.insert(words.begin(), words.end());
  return {q.begin(), q.end()};
}

}  // namespace pasevec

#endif  // PASEVEC_RETRIEVAL_HPP_
