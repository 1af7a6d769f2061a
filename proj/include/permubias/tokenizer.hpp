#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "permubias/error.hpp"

namespace permubias {

// Deterministic, fully invertible tokenizer with a fixed built-in vocabulary.
//
// Layout:
//   0          padding (decodes to nothing)
//   1..8       the digits "1".."8", always standalone tokens so that option
//              labels occupy exactly one position and one vocabulary slot
//   9, 10      newline, space
//   11..266    raw bytes 0..255, the fallback for anything unlisted
//   267..      built-in word list (runs of ASCII letters)
//
// Letters group into maximal runs; a run either matches a listed word exactly
// or falls back to its bytes. Everything else is one token per byte. Encoding
// is therefore local to each character class boundary, which makes
// encode(a) + encode(b) == encode(a + b) whenever a ends at such a boundary.
class Tokenizer {
 public:
  Tokenizer();

  std::vector<int> encode(std::string_view text) const;
  std::string decode(const std::vector<int>& ids) const;

  int vocab_size() const { return static_cast<int>(kWordBase + words_.size()); }
  static constexpr int pad_id() { return 0; }
  static constexpr int newline_id() { return 9; }
  static constexpr int space_id() { return 10; }

  // Token id of the option label for 1-based display position `label`.
  static int label_id(int label) {
    if (label < 1 || label > 8) throw RangeError("label_id: label must be in 1..8");
    return label;
  }

  static constexpr int kByteBase = 11;
  static constexpr int kWordBase = 267;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> word_ids_;
};

}  // namespace permubias
