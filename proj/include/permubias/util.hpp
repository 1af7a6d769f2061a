#pragma once

#include <cstdint>
#include <cstring>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace permubias {

// FNV-1a over raw bytes; used for weight-determinism checks.
inline uint64_t fnv1a(const void* bytes, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <class T>
uint64_t fnv1a_values(std::span<const T> values, uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a(values.data(), values.size() * sizeof(T), h);
}

// Writes content to path atomically (temp file + rename).
void atomic_write_file(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

// Escapes a CSV field if it contains a comma, quote, or newline.
std::string csv_escape(const std::string& field);

std::string csv_row(const std::vector<std::string>& fields);

// Fixed-format float for reports: shortest round-trip representation.
std::string format_double(double v);

// Maps fn over [0, n) with at most PERMUBIAS_THREADS workers (hardware
// concurrency if unset). Results are collected by index, so the output is
// identical to a sequential run.
void parallel_for_indexed(size_t n, const std::function<void(size_t)>& fn);

// Thread cap currently in effect (>= 1).
size_t max_threads();

}  // namespace permubias
