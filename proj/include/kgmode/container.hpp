#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace kgmode {

// Binary artifact container.
//
// Layout (all integers u64 little-endian, all reals IEEE-754 binary64
// little-endian):
//   magic "KGMODE01"
//   n_meta, then n_meta x { key_len, key bytes, value_len, value bytes }
//   n_arrays, then n_arrays x { key_len, key bytes, count, count x f64 }
//   FNV-1a 64 digest of every preceding byte
//
// Metadata carries text (grid descriptors, hashes, lambda as %.17g); arrays
// carry every numeric payload. Reading back is bit-exact.
struct Container {
  std::map<std::string, std::string> meta;
  std::map<std::string, std::vector<double>> arrays;

  const std::vector<double>& array(const std::string& key) const;
  const std::string& text(const std::string& key) const;
  double number(const std::string& key) const;
  void set_number(const std::string& key, double value);
};

std::vector<unsigned char> encode(const Container& c);
// Throws CheckpointCorrupt on a malformed or truncated buffer.
Container decode(const std::vector<unsigned char>& bytes);

// Atomic: writes to a sibling temp file, then renames over the target.
void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path);

// Shared helper for all artifact writers.
void write_file_atomic(const std::filesystem::path& path, const std::string& data);
std::string read_file(const std::filesystem::path& path);

}  // namespace kgmode
