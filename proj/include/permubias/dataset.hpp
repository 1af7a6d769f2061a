#pragma once

#include <optional>
#include <string>
#include <vector>

#include "permubias/error.hpp"

namespace permubias {

constexpr int kMinOptions = 2;
constexpr int kMaxOptions = 8;

struct McqInstance {
  std::string id;
  std::string question;
  std::vector<std::string> options;      // content order as authored
  std::optional<int> answer;             // content index of the correct option

  int n_options() const { return static_cast<int>(options.size()); }
};

struct Dataset {
  std::vector<McqInstance> instances;

  bool labeled() const;
  size_t size() const { return instances.size(); }
};

// One JSON object per line:
//   {"id": "...", "question": "...", "options": ["...", ...], "answer": 0}
// `id` defaults to the 1-based line number; `answer` may be absent. Errors
// carry the offending line number.
Dataset load_dataset(const std::string& path);
Dataset parse_dataset(const std::string& jsonl, const std::string& origin);

}  // namespace permubias
