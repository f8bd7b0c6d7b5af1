#pragma once

// File and number-text helpers shared by every on-disk format.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <unistd.h>

#include "reid/error.hpp"

namespace reid {

// Shortest text that parses back to the identical double.
inline std::string format_double(double value) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

inline std::optional<double> parse_double(std::string_view text) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  const auto result = std::from_chars(first, last, value);
  if (result.ec != std::errc() || result.ptr != last || first == last) return std::nullopt;
  return value;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) fail(ErrorKind::io, "read failed for '" + path.string() + "'");
  return buffer.str();
}

inline std::filesystem::path staging_path(const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  return tmp;
}

inline void write_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
}

// Writes to a sibling temp file, then renames over the destination, so a
// reader never observes a half-written file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  const auto tmp = staging_path(path);
  try {
    write_bytes(tmp, bytes);
  } catch (...) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw;
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorKind::io, "cannot move output into place at '" + path.string() + "'");
  }
}

// Stages several outputs and publishes them together: nothing reaches its
// destination unless every file was staged successfully.
class OutputBatch {
 public:
  OutputBatch() = default;
  OutputBatch(const OutputBatch&) = delete;
  OutputBatch& operator=(const OutputBatch&) = delete;
  ~OutputBatch() { discard(); }

  void add(const std::filesystem::path& path, std::string bytes) {
    const auto tmp = staging_path(path);
    staged_.push_back({path, tmp});
    write_bytes(tmp, bytes);
  }

  void commit() {
    for (const auto& entry : staged_) {
      std::error_code ec;
      std::filesystem::rename(entry.tmp, entry.dest, ec);
      if (ec) fail(ErrorKind::io, "cannot move output into place at '" + entry.dest.string() + "'");
    }
    staged_.clear();
  }

  void discard() noexcept {
    for (const auto& entry : staged_) {
      std::error_code ignored;
      std::filesystem::remove(entry.tmp, ignored);
    }
    staged_.clear();
  }

 private:
  struct Entry {
    std::filesystem::path dest;
    std::filesystem::path tmp;
  };
  std::vector<Entry> staged_;
};

}  // namespace reid
