// pasevec/embedding_table.hpp

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

// One vector per word type, plus a tag naming the producer.
//
// File layout (little-endian):
//
//   char[4]  magic "PSVT"
//   uint32   version (1)
//   uint32   dim, uint32 count
//   uint32   tag length, tag bytes
//   count x  { uint32 label length, label bytes, dim x float32 }
//
// Records are stored in label order.

#ifndef PASEVEC_EMBEDDING_TABLE_HPP_
#define PASEVEC_EMBEDDING_TABLE_HPP_

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "pasevec/corpus.hpp"
#include "pasevec/tensor_archive.hpp"

namespace pasevec {

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(int dim, std::string tag) : dim_(dim), tag_(std::move(tag)) {
    if (dim < 1) throw ArgumentError("embedding dimension must be >= 1");
  }

  int dim() const { return dim_; }
  const std::string& tag() const { return tag_; }
  void set_tag(std::string t) { tag_ = std::move(t); }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  bool contains(const std::string& label) const { return entries_.count(label) != 0; }

  template <typename Derived>
  void set(const std::string& label, const Eigen::MatrixBase<Derived>& v) {
    if (v.size() != dim_)
      throw ShapeError("vector for '" + label + "' has dimension " +
                       std::to_string(v.size()) + ", table has " + std::to_string(dim_));
    entries_[label] = v.template cast<float>();
  }

  const Eigen::VectorXf& at(const std::string& label) const {
    auto it = entries_.find(label);
    if (it == entries_.end()) throw LookupError("no embedding for '" + label + "'");
    return it->second;
  }

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (const auto& [l, v] : entries_) out.push_back(l);
    return out;
  }

  const std::map<std::string, Eigen::VectorXf>& entries() const { return entries_; }

  // Rows of the result follow `labels`; columns are vectors.
  Mat<double> matrix(const std::vector<std::string>& labels) const {
    Mat<double> m(dim_, static_cast<Eigen::Index>(labels.size()));
    for (std::size_t k = 0; k < labels.size(); ++k)
      m.col(static_cast<Eigen::Index>(k)) = at(labels[k]).cast<double>();
    return m;
  }

  // Sub-table over `labels`; every label must be present.
  EmbeddingTable subset(const std::vector<std::string>& labels) const {
    std::vector<std::string> missing;
    for (const auto& l : labels)
      if (!contains(l)) missing.push_back(l);
    if (!missing.empty()) throw CoverageError(tag_ + " lacks " + join(missing));
    EmbeddingTable t(dim_, tag_);
    for (const auto& l : labels) t.entries_[l] = entries_.at(l);
    return t;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write("PSVT", 4);
    io::put_u32(os, 1);
    io::put_u32(os, static_cast<std::uint32_t>(dim_));
    io::put_u32(os, static_cast<std::uint32_t>(entries_.size()));
    io::put_str(os, tag_);
    for (const auto& [l, v] : entries_) {
      io::put_str(os, l);
      os.write(reinterpret_cast<const char*>(v.data()),
               static_cast<std::streamsize>(sizeof(float) * dim_));
    }
    if (!os) throw IoError("write failed for " + path.string());
  }

  static EmbeddingTable load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    io::Reader rd(is, path.string());
    char magic[4];
    rd.read(magic, 4);
    if (std::memcmp(magic, "PSVT", 4) != 0)
      throw IoError(path.string() + ": not an embedding table");
    if (rd.u32() != 1) throw IoError(path.string() + ": unsupported table version");
    const int dim = static_cast<int>(rd.u32());
    const std::uint32_t count = rd.u32();
    EmbeddingTable t(dim, rd.str());
    for (std::uint32_t k = 0; k < count; ++k) {
      const std::string label = rd.str();
      Eigen::VectorXf v(dim);
      rd.read(v.data(), sizeof(float) * dim);
      if (!t.entries_.emplace(label, std::move(v)).second)
        throw IoError(path.string() + ": duplicate label " + label);
    }
    return t;
  }

  bool operator==(const EmbeddingTable& o) const {
    return dim_ == o.dim_ && tag_ == o.tag_ && entries_ == o.entries_;
  }

  static std::string join(const std::vector<std::string>& v, std::size_t limit = 20) {
    std::string s;
    for (std::size_t k = 0; k < v.size() && k < limit; ++k) s += (k ? ", " : "") + v[k];
    if (v.size() > limit) s += ", ... (" + std::to_string(v.size()) + " total)";
    return s;
  }

 private:
  int dim_ = 0;
  std::string tag_;
  std::map<std::string, Eigen::VectorXf> entries_;
};

// Mean of embed(segment) over the realizations of each word type.
template <typename Fn>
EmbeddingTable word_type_table(const Corpus& corpus, Fn&& embed, std::string tag) {
  std::map<std::string, std::pair<Vec<double>, int>> acc;
  int dim = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Vec<double> v = embed(i).template cast<double>();
    if (dim == 0) dim = static_cast<int>(v.size());
    auto& [sum, n] = acc[corpus.segments[i].word_label];
    if (n == 0) sum = Vec<double>::Zero(dim);
    sum += v;
    ++n;
  }
  if (acc.empty()) throw ArgumentError("word_type_table: empty corpus");
  EmbeddingTable t(dim, std::move(tag));
  for (const auto& [label, sn] : acc) t.set(label, sn.first / sn.second);
  return t;
}

}  // namespace pasevec

#endif  // PASEVEC_EMBEDDING_TABLE_HPP_
