#pragma once

#include <string>
#include <vector>

#include "permubias/dataset.hpp"
#include "permubias/permute.hpp"
#include "permubias/tokenizer.hpp"

namespace permubias {

// Prompt layout. The header renders once per instance and is identical under
// every ordering of the options; the option block and footer form the part
// that changes with the ordering. Placeholders: {question} in the header,
// {label} and {option} in each option line.
struct PromptTemplate {
  std::string header = "Question: {question}\nOptions:\n";
  std::string option_line = "{label}. {option}\n";
  std::string footer = "Output: option ";

  void validate() const;

  // JSON file with "header", "option_line", and optional "footer".
  static PromptTemplate load(const std::string& path);
};

struct RenderedPrompt {
  std::string prefix;  // header with the question substituted
  std::string suffix;  // option lines in display order, then the footer
};

// Renders under sigma: display position j (label j+1) shows content
// options[sigma[j]].
RenderedPrompt render_prompt(const PromptTemplate& tmpl, const McqInstance& inst,
                             const Permutation& sigma);

struct TokenizedPrompt {
  std::vector<int> prefix_ids;
  std::vector<int> suffix_ids;
};

// Tokenizes both halves and verifies the seam: encoding the halves separately
// must reproduce the encoding of the whole, or caching the prefix would
// change the model's input.
TokenizedPrompt tokenize_prompt(const Tokenizer& tok, const RenderedPrompt& rendered);

}  // namespace permubias
