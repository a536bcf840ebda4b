#pragma once

// Little-endian-host binary helpers shared by the checkpoint formats.

#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "stseg/error.hpp"

namespace stseg {

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
    if (!out_) throw IoError("cannot open for writing: " + path);
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  template <typename T>
  void put_vector(const std::vector<T>& v) {
    put<std::uint64_t>(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
  }
  void put_string(std::string_view s) {
    put<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void put_magic(std::string_view magic) { out_.write(magic.data(), static_cast<std::streamsize>(magic.size())); }

  void close() {
    out_.flush();
    if (!out_) throw IoError("write failed: " + path_);
    out_.close();
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw IoError("cannot open for reading: " + path);
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  template <typename T>
  std::vector<T> get_vector(std::uint64_t max_len = (1ULL << 32)) {
    const auto n = get<std::uint64_t>();
    if (n > max_len) throw IoError("corrupt length field in " + path_);
    std::vector<T> v(n);
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    check();
    return v;
  }
  std::string get_string(std::uint64_t max_len = (1ULL << 30)) {
    const auto n = get<std::uint64_t>();
    if (n > max_len) throw IoError("corrupt string length in " + path_);
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  void expect_magic(std::string_view magic) {
    std::string got(magic.size(), '\0');
    in_.read(got.data(), static_cast<std::streamsize>(got.size()));
    if (!in_ || got != magic) {
      throw IoError(path_ + ": not a " + std::string(magic) + " file");
    }
  }

 private:
  void check() {
    if (!in_) throw IoError("truncated file: " + path_);
  }
  std::ifstream in_;
  std::string path_;
};

}  // namespace stseg
