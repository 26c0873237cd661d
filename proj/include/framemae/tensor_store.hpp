#pragma once

// Named-tensor container: a plain-text manifest (name, dtype, shape, byte
// offset, payload checksum) followed by raw little-endian IEEE-754 / integer
// payloads. Language-neutral and bit-exact.
//
//   framemae-tensors v1
//   meta <key> <value>
//   tensor <name> <f64|i64> <rows> <cols> @<offset>
//   ...
//   checksum fnv1a64 <16 hex digits>
//   end
//   <binary payload>

#include <Eigen/Dense>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "framemae/errors.hpp"

namespace framemae {

using Mat = Eigen::MatrixXd;
using IMat = Eigen::Matrix<int64_t, Eigen::Dynamic, Eigen::Dynamic>;

class TensorStore {
 public:
  void put(const std::string& name, const Mat& m) { f64_[name] = m; order_.push_back(name); }
  void put(const std::string& name, const IMat& m) { i64_[name] = m; order_.push_back(name); }
  void set_meta(const std::string& key, const std::string& value) { meta_[key] = value; }

  bool has(const std::string& name) const {
    return f64_.count(name) > 0 || i64_.count(name) > 0;
  }

  const Mat& get_f64(const std::string& name) const {
    auto it = f64_.find(name);
    if (it == f64_.end()) throw FormatError("tensor not found: " + name);
    return it->second;
  }

  const IMat& get_i64(const std::string& name) const {
    auto it = i64_.find(name);
    if (it == i64_.end()) throw FormatError("tensor not found: " + name);
    return it->second;
  }

  std::string meta(const std::string& key) const {
    auto it = meta_.find(key);
    if (it == meta_.end()) throw FormatError("meta key not found: " + key);
    return it->second;
  }

  bool has_meta(const std::string& key) const { return meta_.count(key) > 0; }

  const std::vector<std::string>& names() const { return order_; }

  void save(const std::string& path) const {
    std::vector<char> payload;
    std::ostringstream manifest;
    manifest << "framemae-tensors v1\n";
    for (const auto& [k, v] : meta_) manifest << "meta " << k << " " << v << "\n";
    for (const auto& name : order_) {
      const size_t offset = payload.size();
      if (auto it = f64_.find(name); it != f64_.end()) {
        append_mat(payload, it->second);
        manifest << "tensor " << name << " f64 " << it->second.rows() << " "
                 << it->second.cols() << " @" << offset << "\n";
      } else {
        const IMat& m = i64_.at(name);
        append_imat(payload, m);
        manifest << "tensor " << name << " i64 " << m.rows() << " " << m.cols()
                 << " @" << offset << "\n";
      }
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(payload)));
    manifest << "checksum fnv1a64 " << hex << "\n";
    manifest << "end\n";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path);
    const std::string header = manifest.str();
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw FormatError("short write: " + path);
  }

  static TensorStore load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path);
    TensorStore store;
    std::string line;
    if (!std::getline(in, line) || line != "framemae-tensors v1")
      throw FormatError("bad container magic in " + path);
    struct Entry {
      std::string name, dtype;
      int64_t rows, cols;
      size_t offset;
    };
    std::vector<Entry> entries;
    uint64_t expected_checksum = 0;
    bool have_checksum = false;
    while (std::getline(in, line)) {
      if (line == "end") break;
      std::istringstream ls(line);
      std::string tag;
      ls >> tag;
      if (tag == "meta") {
        std::string k, v;
        ls >> k >> v;
        store.meta_[k] = v;
      } else if (tag == "tensor") {
        Entry e;
        std::string off;
        ls >> e.name >> e.dtype >> e.rows >> e.cols >> off;
        if (!ls || off.empty() || off[0] != '@')
          throw FormatError("malformed tensor line: " + line);
        e.offset = std::stoull(off.substr(1));
        entries.push_back(e);
      } else if (tag == "checksum") {
        std::string algo, hex;
        ls >> algo >> hex;
        if (algo != "fnv1a64") throw FormatError("unknown checksum algo: " + algo);
        expected_checksum = std::stoull(hex, nullptr, 16);
        have_checksum = true;
      } else {
        throw FormatError("unknown manifest line: " + line);
      }
    }
    if (line != "end") throw FormatError("truncated manifest in " + path);
    std::vector<char> payload((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
    if (have_checksum && fnv1a64(payload) != expected_checksum)
      throw FormatError("payload checksum mismatch in " + path);
    for (const auto& e : entries) {
      const size_t count = static_cast<size_t>(e.rows) * static_cast<size_t>(e.cols);
      if (e.offset + count * 8 > payload.size())
        throw FormatError("tensor payload out of range: " + e.name);
      if (e.dtype == "f64") {
        Mat m(e.rows, e.cols);
        read_mat(payload, e.offset, m);
        store.f64_[e.name] = std::move(m);
      } else if (e.dtype == "i64") {
        IMat m(e.rows, e.cols);
        read_imat(payload, e.offset, m);
        store.i64_[e.name] = std::move(m);
      } else {
        throw FormatError("unknown dtype: " + e.dtype);
      }
      store.order_.push_back(e.name);
    }
    return store;
  }

  static uint64_t fnv1a64(const std::vector<char>& data) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : data) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    return h;
  }

 private:
  // Row-major element order, little-endian 8-byte words.
  static void append_mat(std::vector<char>& out, const Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) append_word(out, bits_of(m(r, c)));
  }
  static void append_imat(std::vector<char>& out, const IMat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        append_word(out, static_cast<uint64_t>(m(r, c)));
  }
  static void read_mat(const std::vector<char>& in, size_t offset, Mat& m) {
    size_t p = offset;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c, p += 8)
        m(r, c) = double_of(read_word(in, p));
  }
  static void read_imat(const std::vector<char>& in, size_t offset, IMat& m) {
    size_t p = offset;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c, p += 8)
        m(r, c) = static_cast<int64_t>(read_word(in, p));
  }
  static void append_word(std::vector<char>& out, uint64_t w) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((w >> (8 * i)) & 0xff));
  }
  static uint64_t read_word(const std::vector<char>& in, size_t p) {
    uint64_t w = 0;
    for (int i = 0; i < 8; ++i)
      w |= static_cast<uint64_t>(static_cast<unsigned char>(in[p + i])) << (8 * i);
    return w;
  }
  static uint64_t bits_of(double d) {
    uint64_t u;
    std::memcpy(&u, &d, 8);
    return u;
  }
  static double double_of(uint64_t u) {
    double d;
    std::memcpy(&d, &u, 8);
    return d;
  }

  std::map<std::string, Mat> f64_;
  std::map<std::string, IMat> i64_;
  std::map<std::string, std::string> meta_;
  std::vector<std::string> order_;
};

}  // namespace framemae
