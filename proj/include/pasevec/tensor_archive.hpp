// pasevec/tensor_archive.hpp

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

// Named float32 tensor archive used for model checkpoints and vector caches.
//
// Layout (all integers little-endian):
//
//   char[4]   magic "PSVA"
//   uint32    version (1)
//   uint32    metadata length L, then L bytes of UTF-8 JSON
//   uint32    tensor count N
//   N times:  uint32 name length, name bytes,
//             uint32 rank R, R x uint64 dims,
//             prod(dims) x float32 values, row-major
//
// Tensors are written in name order so equal archives are byte-identical.

#ifndef PASEVEC_TENSOR_ARCHIVE_HPP_
#define PASEVEC_TENSOR_ARCHIVE_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "pasevec/common.hpp"

namespace pasevec {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace io {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), 8);
}
inline void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}
  void read(void* dst, std::size_t n) {
    is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n)
      throw IoError(what_ + ": truncated file");
  }
  std::uint32_t u32() {
    std::uint32_t v;
    read(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    read(&v, 8);
    return v;
  }
  std::string str(std::size_t limit = 1 << 26) {
    const std::uint32_t n = u32();
    if (n > limit) throw IoError(what_ + ": implausible string length");
    std::string s(n, '\0');
    if (n) read(s.data(), n);
    return s;
  }

 private:
  std::istream& is_;
  std::string what_;
};

}  // namespace io

struct Tensor {
  std::vector<std::uint64_t> shape;
  std::vector<float> data;

  std::uint64_t numel() const {
    std::uint64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  bool operator==(const Tensor&) const = default;
};

class TensorArchive {
 public:
  std::string metadata = "{}";

  void put(const std::string& name, Tensor t) {
    if (t.numel() != t.data.size())
      throw ShapeError("tensor '" + name + "' shape does not match data");
    tensors_[name] = std::move(t);
  }

  // Stores a column-major Eigen matrix as a row-major rows x cols tensor.
  template <typename Derived>
  void put_matrix(const std::string& name,
                  const Eigen::MatrixBase<Derived>& m) {
    Tensor t;
    t.shape = {static_cast<std::uint64_t>(m.rows()),
               static_cast<std::uint64_t>(m.cols())};
    t.data.resize(static_cast<std::size_t>(m.size()));
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        t.data[k++] = static_cast<float>(m(i, j));
    put(name, std::move(t));
  }

  template <typename Derived>
  void put_vector(const std::string& name,
                  const Eigen::MatrixBase<Derived>& v) {
    Tensor t;
    t.shape = {static_cast<std::uint64_t>(v.size())};
    t.data.resize(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i)
      t.data[static_cast<std::size_t>(i)] = static_cast<float>(v(i));
    put(name, std::move(t));
  }

  bool contains(const std::string& name) const {
    return tensors_.count(name) != 0;
  }

  const Tensor& get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end())
      throw LookupError("tensor archive has no entry '" + name + "'");
    return it->second;
  }

  template <typename T>
  Mat<T> get_matrix(const std::string& name) const {
    const Tensor& t = get(name);
    if (t.shape.size() != 2)
      throw ShapeError("tensor '" + name + "' is not a matrix");
    Mat<T> m(static_cast<Eigen::Index>(t.shape[0]),
             static_cast<Eigen::Index>(t.shape[1]));
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        m(i, j) = static_cast<T>(t.data[k++]);
    return m;
  }

  template <typename T>
  Vec<T> get_vector(const std::string& name) const {
    const Tensor& t = get(name);
    if (t.shape.size() != 1)
      throw ShapeError("tensor '" + name + "' is not a vector");
    Vec<T> v(static_cast<Eigen::Index>(t.shape[0]));
    for (Eigen::Index i = 0; i < v.size(); ++i)
      v(i) = static_cast<T>(t.data[static_cast<std::size_t>(i)]);
    return v;
  }

  const std::map<std::string, Tensor>& tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }

  void save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write("PSVA", 4);
    io::put_u32(os, kVersion);
    io::put_str(os, metadata);
    io::put_u32(os, static_cast<std::uint32_t>(tensors_.size()));
    for (const auto& [name, t] : tensors_) {
      io::put_str(os, name);
      io::put_u32(os, static_cast<std::uint32_t>(t.shape.size()));
      for (auto d : t.shape) io::put_u64(os, d);
      os.write(reinterpret_cast<const char*>(t.data.data()),
               static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    if (!os) throw IoError("write failed for " + path.string());
  }

  static TensorArchive load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    io::Reader rd(is, path.string());
    char magic[4];
    rd.read(magic, 4);
    if (std::memcmp(magic, "PSVA", 4) != 0)
      throw IoError(path.string() + ": not a tensor archive");
    const std::uint32_t version = rd.u32();
    if (version != kVersion)
      throw IoError(path.string() + ": unsupported archive version " +
                    std::to_string(version));
    TensorArchive ar;
    ar.metadata = rd.str();
    const std::uint32_t n = rd.u32();
    for (std::uint32_t k = 0; k < n; ++k) {
      std::string name = rd.str();
      Tensor t;
      const std::uint32_t rank = rd.u32();
      if (rank > 8) throw IoError(path.string() + ": implausible rank");
      t.shape.resize(rank);
      for (auto& d : t.shape) d = rd.u64();
      const std::uint64_t numel = t.numel();
      if (numel > (std::uint64_t{1} << 34))
        throw IoError(path.string() + ": implausible tensor size");
      t.data.resize(static_cast<std::size_t>(numel));
      if (numel) rd.read(t.data.data(), t.data.size() * sizeof(float));
      ar.tensors_.emplace(std::move(name), std::move(t));
    }
    return ar;
  }

  bool operator==(const TensorArchive&) const = default;

 private:
  static constexpr std::uint32_t kVersion = 1;
  std::map<std::string, Tensor> tensors_;
};

}  // namespace pasevec

#endif  // PASEVEC_TENSOR_ARCHIVE_HPP_
