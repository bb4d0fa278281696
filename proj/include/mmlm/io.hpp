#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace mmlm {

std::string read_file(const std::filesystem::path& path);

// Writes to `<path>.tmp` and renames over `path`; creates parent directories.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string sha1_hex(std::string_view bytes);
// Git blob id: sha1("blob <len>\0" + bytes).
std::string git_blob_sha1(std::string_view bytes);
std::string git_blob_sha1_file(const std::filesystem::path& path);

// Little-endian binary encoding shared by the feature and checkpoint formats.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void raw(std::string_view bytes) { out_.append(bytes); }
  // u32 length prefix followed by the bytes.
  void str(std::string_view s);

  const std::string& bytes() const { return out_; }

 private:
  std::string out_;
};

class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string origin)
      : bytes_(bytes), origin_(std::move(origin)) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string_view raw(std::size_t n);
  std::string str();

  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }
  const std::string& origin() const { return origin_; }

 private:
  void need(std::size_t n, const char* what);

  std::string_view bytes_;
  std::size_t pos_ = 0;
  std::string origin_;
};

}  // namespace mmlm
