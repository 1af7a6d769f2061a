#include "permubias/tokenizer.hpp"

#include <cctype>

namespace permubias {

namespace {

// Fixed word list. Appending is safe; reordering or removing entries would
// silently re-map existing checkpoints' token ids, so never do that.
const char* const kWords[] = {
    // template vocabulary
    "Question", "Options", "Output", "Answer", "option", "options", "question", "answer",
    // function words
    "the", "The", "a", "A", "an", "An", "is", "are", "was", "were", "of", "to", "and",
    "or", "in", "on", "at", "by", "for", "with", "from", "as", "it", "its", "this",
    "that", "these", "those", "not", "no", "yes", "all", "any", "each", "most", "more",
    "some", "such", "than", "then", "which", "what", "What", "who", "Who", "when",
    "When", "where", "Where", "why", "Why", "how", "How", "does", "do", "did", "can",
    "could", "will", "would", "should", "has", "have", "had", "be", "been", "being",
    "if", "but", "so", "because", "about", "into", "over", "under", "between", "after",
    "before", "during", "only", "very", "much", "many", "few", "both", "other",
    "another", "same", "different", "true", "false", "True", "False",
    // nouns and adjectives that keep synthetic questions one token per word
    "color", "colour", "number", "letter", "word", "name", "kind", "type", "part",
    "thing", "object", "animal", "plant", "fruit", "food", "water", "fire", "earth",
    "air", "sky", "sun", "moon", "star", "grass", "tree", "leaf", "flower", "stone",
    "river", "sea", "ocean", "mountain", "city", "country", "world", "house", "door",
    "window", "table", "chair", "book", "page", "line", "point", "side", "end",
    "start", "first", "second", "third", "fourth", "last", "next", "best", "largest",
    "smallest", "biggest", "longest", "shortest", "highest", "lowest", "red", "green",
    "blue", "yellow", "purple", "orange", "black", "white", "brown", "pink", "gray",
    "cat", "dog", "bird", "fish", "horse", "mouse", "lion", "bear", "wolf", "fox",
    "cow", "sheep", "day", "night", "year", "month", "week", "hour", "time", "place",
    "person", "people", "man", "woman", "child", "one", "two", "three", "four",
    "five", "six", "seven", "eight", "nine", "ten", "zero", "north", "south", "east",
    "west", "left", "right", "up", "down", "big", "small", "long", "short", "high",
    "low", "hot", "cold", "new", "old", "good", "bad", "fast", "slow", "light",
    "dark", "correct", "wrong", "capital", "planet", "following",
};

bool is_letter(unsigned char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z'); }
bool is_reserved_digit(unsigned char c) { return c >= '1' && c <= '8'; }

}  // namespace

Tokenizer::Tokenizer() {
  words_.assign(std::begin(kWords), std::end(kWords));
  for (size_t i = 0; i < words_.size(); ++i) {
    word_ids_.emplace(words_[i], kWordBase + static_cast<int>(i));
  }
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  ids.reserve(text.size());
  size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (c == '\n') {
      ids.push_back(newline_id());
      ++i;
    } else if (c == ' ') {
      ids.push_back(space_id());
      ++i;
    } else if (is_reserved_digit(c)) {
      ids.push_back(c - '0');
      ++i;
    } else if (is_letter(c)) {
      size_t j = i + 1;
      while (j < text.size() && is_letter(static_cast<unsigned char>(text[j]))) ++j;
      const std::string run(text.substr(i, j - i));
      auto it = word_ids_.find(run);
      if (it != word_ids_.end()) {
        ids.push_back(it->second);
      } else {
        for (size_t k = i; k < j; ++k) {
          ids.push_back(kByteBase + static_cast<unsigned char>(text[k]));
        }
      }
      i = j;
    } else {
      ids.push_back(kByteBase + c);
      ++i;
    }
  }
  return ids;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  std::string out;
  out.reserve(ids.size() * 2);
  for (int id : ids) {
    if (id == pad_id()) continue;
    if (id >= 1 && id <= 8) {
      out.push_back(static_cast<char>('0' + id));
    } else if (id == newline_id()) {
      out.push_back('\n');
    } else if (id == space_id()) {
      out.push_back(' ');
    } else if (id >= kByteBase && id < kWordBase) {
      out.push_back(static_cast<char>(id - kByteBase));
    } else if (id >= kWordBase && id < vocab_size()) {
      out += words_[static_cast<size_t>(id - kWordBase)];
    } else {
      throw RangeError("decode: token id " + std::to_string(id) + " outside vocabulary");
    }
  }
  return out;
}

}  // namespace permubias
