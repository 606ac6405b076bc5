#pragma once

// Binary containers: flat parameter blobs and single-tensor blobs. All
// integers and reals are little-endian.
//
//   parameter blob: "SDPW" | u32 version | u64 count | count x f64
//   tensor blob:    "SDPT" | u32 version | u32 dtype (1 = f64) | u32 rank |
//                   rank x u64 dims | elements x f64

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "splitdp/error.hpp"
#include "splitdp/tensor.hpp"

namespace splitdp {

static_assert(std::endian::native == std::endian::little, "blob I/O assumes a little-endian host");

inline constexpr std::uint32_t kBlobVersion = 1;
inline constexpr std::uint32_t kDtypeFloat64 = 1;

namespace detail {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw IoError(origin_ + ": truncated blob");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  void expect_magic(const char* magic) {
    if (bytes_.size() < 4 || std::memcmp(bytes_.data(), magic, 4) != 0) {
      throw IoError(origin_ + ": bad magic, expected " + std::string(magic, 4));
    }
    pos_ = 4;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace detail

inline std::string encode_parameter_blob(const std::vector<double>& values) {
  std::string out = "SDPW";
  detail::put(out, kBlobVersion);
  detail::put(out, static_cast<std::uint64_t>(values.size()));
  for (double v : values) detail::put(out, v);
  return out;
}

inline std::vector<double> decode_parameter_blob(const std::string& bytes, const std::string& origin = "blob") {
  detail::Reader r(bytes, origin);
  r.expect_magic("SDPW");
  if (const auto version = r.get<std::uint32_t>(); version != kBlobVersion) {
    throw IoError(origin + ": unsupported blob version " + std::to_string(version));
  }
  const auto count = r.get<std::uint64_t>();
  std::vector<double> values;
  values.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) values.push_back(r.get<double>());
  if (!r.at_end()) throw IoError(origin + ": trailing bytes after parameters");
  return values;
}

inline std::string encode_tensor_blob(const Tensor& t) {
  std::string out = "SDPT";
  detail::put(out, kBlobVersion);
  detail::put(out, kDtypeFloat64);
  detail::put(out, static_cast<std::uint32_t>(t.shape().rank()));
  for (std::size_t d : t.shape().dims()) detail::put(out, static_cast<std::uint64_t>(d));
  for (double v : t.values()) detail::put(out, v);
  return out;
}

inline Tensor decode_tensor_blob(const std::string& bytes, const std::string& origin = "tensor") {
  detail::Reader r(bytes, origin);
  r.expect_magic("SDPT");
  if (const auto version = r.get<std::uint32_t>(); version != kBlobVersion) {
    throw IoError(origin + ": unsupported tensor version " + std::to_string(version));
  }
  if (const auto dtype = r.get<std::uint32_t>(); dtype != kDtypeFloat64) {
    throw IoError(origin + ": unsupported dtype tag " + std::to_string(dtype));
  }
  const auto rank = r.get<std::uint32_t>();
  std::vector<std::size_t> dims;
  for (std::uint32_t i = 0; i < rank; ++i) dims.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
  Shape shape(std::move(dims));
  std::vector<double> data;
  data.reserve(shape.elements());
  for (std::size_t i = 0; i < shape.elements(); ++i) data.push_back(r.get<double>());
  if (!r.at_end()) throw IoError(origin + ": trailing bytes after tensor data");
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace splitdp
