#include "gdig/dataio.hpp"

#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "gdig/error.hpp"

namespace gdig::dataio {

using toylm::Example;

std::vector<Example> load_examples(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open " + path);
  std::vector<Example> examples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw io_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    Example ex;
    try {
      ex.id = rec.at("id").get<std::string>();
      if (rec.contains("src")) {
        const auto src = rec.at("src").get<std::string>();
        const auto tgt = rec.at("tgt").get<std::string>();
        const auto lang = rec.at("trg_lang").get<std::string>();
        ex.prompt_tokens = toylm::vocab::tokenize(toylm::render_prompt(src, lang));
        ex.response_tokens = toylm::vocab::tokenize(tgt);
        ex.response_tokens.push_back(toylm::vocab::kEos);
      } else {
        ex.prompt_tokens = rec.at("prompt_tokens").get<toylm::TokenList>();
        ex.response_tokens = rec.at("response_tokens").get<toylm::TokenList>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw io_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    examples.push_back(std::move(ex));
  }
  return examples;
}

void save_examples(const std::vector<Example>& examples, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot open " + path + " for writing");
  for (const Example& ex : examples) {
    nlohmann::json rec = {{"id", ex.id},
                          {"prompt_tokens", ex.prompt_tokens},
                          {"response_tokens", ex.response_tokens}};
    os << rec.dump() << "\n";
  }
  if (!os) throw io_error("write failed for " + path);
}

void filter_jsonl_by_id(const std::string& in_path, const std::vector<std::string>& ids,
                        const std::string& out_path) {
  std::ifstream is(in_path);
  if (!is) throw io_error("cannot open " + in_path);
  std::unordered_map<std::string, std::string> lines_by_id;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw io_error(in_path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    lines_by_id[rec.at("id").get<std::string>()] = line;
  }
  std::ofstream os(out_path);
  if (!os) throw io_error("cannot open " + out_path + " for writing");
  for (const std::string& id : ids) {
    auto it = lines_by_id.find(id);
    if (it == lines_by_id.end()) throw input_error("id '" + id + "' not found in " + in_path);
    os << it->second << "\n";
  }
  if (!os) throw io_error("write failed for " + out_path);
}

}  // namespace gdig::dataio
