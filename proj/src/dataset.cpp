#include "permubias/dataset.hpp"

#include <json.hpp>
#include <sstream>

#include "permubias/util.hpp"

namespace permubias {

using nlohmann::json;

bool Dataset::labeled() const {
  for (const auto& inst : instances) {
    if (!inst.answer.has_value()) return false;
  }
  return !instances.empty();
}

namespace {

[[noreturn]] void fail(const std::string& origin, size_t line_no, const std::string& what) {
  throw ParseError(origin + ", line " + std::to_string(line_no) + ": " + what);
}

McqInstance parse_instance(const json& obj, const std::string& origin, size_t line_no) {
  if (!obj.is_object()) fail(origin, line_no, "expected a JSON object");
  McqInstance inst;

  if (auto it = obj.find("question"); it != obj.end() && it->is_string()) {
    inst.question = it->get<std::string>();
  } else {
    fail(origin, line_no, "missing or non-string \"question\"");
  }

  if (auto it = obj.find("options"); it != obj.end() && it->is_array()) {
    for (const auto& opt : *it) {
      if (!opt.is_string()) fail(origin, line_no, "\"options\" entries must be strings");
      inst.options.push_back(opt.get<std::string>());
    }
  } else {
    fail(origin, line_no, "missing or non-array \"options\"");
  }
  const int n = inst.n_options();
  if (n < kMinOptions || n > kMaxOptions) {
    fail(origin, line_no,
         "instances need between " + std::to_string(kMinOptions) + " and " +
             std::to_string(kMaxOptions) + " options, got " + std::to_string(n));
  }

  if (auto it = obj.find("answer"); it != obj.end() && !it->is_null()) {
    if (!it->is_number_integer()) fail(origin, line_no, "\"answer\" must be an integer");
    const int a = it->get<int>();
    if (a < 0 || a >= n) {
      throw ValidationError(origin + ", line " + std::to_string(line_no) + ": \"answer\" " +
                            std::to_string(a) + " outside options range 0.." + std::to_string(n - 1));
    }
    inst.answer = a;
  }

  if (auto it = obj.find("id"); it != obj.end() && it->is_string()) {
    inst.id = it->get<std::string>();
  } else {
    inst.id = std::to_string(line_no);
  }
  return inst;
}

}  // namespace

Dataset parse_dataset(const std::string& jsonl, const std::string& origin) {
  Dataset ds;
  std::istringstream in(jsonl);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // Skip blank lines so trailing newlines and spacing are harmless.
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded()) fail(origin, line_no, "invalid JSON");
    ds.instances.push_back(parse_instance(obj, origin, line_no));
  }
  if (ds.instances.empty()) {
    throw ValidationError(origin + ": dataset contains no instances");
  }
  return ds;
}

Dataset load_dataset(const std::string& path) {
  return parse_dataset(read_file(path), path);
}

}  // namespace permubias
