#include "permubias/prompt.hpp"

#include <json.hpp>

#include "permubias/util.hpp"

namespace permubias {

namespace {

std::string replace_all(std::string text, const std::string& needle, const std::string& value) {
  size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    text.replace(pos, needle.size(), value);
    pos += value.size();
  }
  return text;
}

}  // namespace

void PromptTemplate::validate() const {
  if (header.find("{question}") == std::string::npos) {
    throw TemplateError("template header must contain {question}");
  }
  if (option_line.find("{label}") == std::string::npos) {
    throw TemplateError("template option_line must contain {label}");
  }
  if (option_line.find("{option}") == std::string::npos) {
    throw TemplateError("template option_line must contain {option}");
  }
}

PromptTemplate PromptTemplate::load(const std::string& path) {
  const auto obj = nlohmann::json::parse(read_file(path), nullptr, false);
  if (obj.is_discarded() || !obj.is_object()) {
    throw ParseError(path + ": template file is not a JSON object");
  }
  PromptTemplate tmpl;
  if (auto it = obj.find("header"); it != obj.end() && it->is_string()) {
    tmpl.header = it->get<std::string>();
  } else {
    throw TemplateError(path + ": missing or non-string \"header\"");
  }
  if (auto it = obj.find("option_line"); it != obj.end() && it->is_string()) {
    tmpl.option_line = it->get<std::string>();
  } else {
    throw TemplateError(path + ": missing or non-string \"option_line\"");
  }
  if (auto it = obj.find("footer"); it != obj.end()) {
    if (!it->is_string()) throw TemplateError(path + ": \"footer\" must be a string");
    tmpl.footer = it->get<std::string>();
  } else {
    tmpl.footer.clear();
  }
  tmpl.validate();
  return tmpl;
}

RenderedPrompt render_prompt(const PromptTemplate& tmpl, const McqInstance& inst,
                             const Permutation& sigma) {
  tmpl.validate();
  if (static_cast<int>(sigma.size()) != inst.n_options() || !is_permutation(sigma)) {
    throw ContractError("render_prompt: ordering does not match the instance's options");
  }
  RenderedPrompt out;
  out.prefix = replace_all(tmpl.header, "{question}", inst.question);
  for (size_t j = 0; j < sigma.size(); ++j) {
    std::string line = replace_all(tmpl.option_line, "{label}", std::to_string(j + 1));
    line = replace_all(line, "{option}", inst.options[static_cast<size_t>(sigma[j])]);
    out.suffix += line;
  }
  out.suffix += tmpl.footer;
  return out;
}

TokenizedPrompt tokenize_prompt(const Tokenizer& tok, const RenderedPrompt& rendered) {
  TokenizedPrompt out;
  out.prefix_ids = tok.encode(rendered.prefix);
  out.suffix_ids = tok.encode(rendered.suffix);
  auto whole = tok.encode(rendered.prefix + rendered.suffix);
  if (whole.size() != out.prefix_ids.size() + out.suffix_ids.size() ||
      !std::equal(out.prefix_ids.begin(), out.prefix_ids.end(), whole.begin())) {
    throw TemplateError(
        "tokenize_prompt: the prefix/suffix seam merges tokens; end the header at a "
        "whitespace or punctuation boundary");
  }
  return out;
}

}  // namespace permubias
