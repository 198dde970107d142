#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "gdig/dataio.hpp"
#include "gdig/error.hpp"

using namespace gdig;
using namespace gdig::toylm;

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path);
  os << content;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("text records render the prompt and append EOS") {
  const std::string path = "test_dataio_text.jsonl";
  write_file(path,
             R"({"id":"t1","src":"hallo","tgt":"hello","trg_lang":"English"})" "\n");
  auto examples = dataio::load_examples(path);
  REQUIRE(examples.size() == 1);
  CHECK(examples[0].id == "t1");
  CHECK(vocab::detokenize(examples[0].prompt_tokens) ==
        "Translate the following text into English.\n\nText:\n\"hallo\"");
  TokenList expected = vocab::tokenize("hello");
  expected.push_back(vocab::kEos);
  CHECK(examples[0].response_tokens == expected);
  std::remove(path.c_str());
}

TEST_CASE("pre-tokenized records load verbatim") {
  const std::string path = "test_dataio_tok.jsonl";
  write_file(path, R"({"id":"p1","prompt_tokens":[1,2,3],"response_tokens":[4,257]})" "\n");
  auto examples = dataio::load_examples(path);
  REQUIRE(examples.size() == 1);
  CHECK(examples[0].prompt_tokens == TokenList{1, 2, 3});
  CHECK(examples[0].response_tokens == TokenList{4, 257});
  std::remove(path.c_str());
}

TEST_CASE("save_examples round-trips through load_examples") {
  std::vector<Example> original(3);
  for (int i = 0; i < 3; ++i) {
    original[i].id = "ex" + std::to_string(i);
    original[i].prompt_tokens = {10 + i, 20 + i};
    original[i].response_tokens = {30 + i, 257};
  }
  const std::string path = "test_dataio_roundtrip.jsonl";
  dataio::save_examples(original, path);
  auto loaded = dataio::load_examples(path);
  REQUIRE(loaded.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(loaded[i].id == original[i].id);
    CHECK(loaded[i].prompt_tokens == original[i].prompt_tokens);
    CHECK(loaded[i].response_tokens == original[i].response_tokens);
  }
  std::remove(path.c_str());
}

TEST_CASE("parse errors carry the path and line number") {
  const std::string path = "test_dataio_bad.jsonl";
  write_file(path, "{\"id\":\"ok\",\"prompt_tokens\":[],\"response_tokens\":[]}\nnot json\n");
  try {
    dataio::load_examples(path);
    FAIL("expected an exception");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(path + ":2") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("missing fields are reported as io errors") {
  const std::string path = "test_dataio_missing.jsonl";
  write_file(path, R"({"id":"x","src":"a"})" "\n");
  CHECK_THROWS_AS(dataio::load_examples(path), Error);
  std::remove(path.c_str());
  CHECK_THROWS_AS(dataio::load_examples("no_such_file.jsonl"), Error);
}

TEST_CASE("filter_jsonl_by_id keeps the original bytes in list order") {
  const std::string in = "test_dataio_filter_in.jsonl";
  const std::string out = "test_dataio_filter_out.jsonl";
  const std::string line_a = R"({"id":"a","src":"1","tgt":"x","trg_lang":"L"})";
  const std::string line_b = R"({"id":"b","src":"2",   "tgt":"y","trg_lang":"L"})";
  const std::string line_c = R"({"id":"c","src":"3","tgt":"z","trg_lang":"L"})";
  write_file(in, line_a + "\n" + line_b + "\n" + line_c + "\n");
  dataio::filter_jsonl_by_id(in, {"c", "b"}, out);
  // Output preserves the exact bytes (including the odd spacing in b).
  CHECK(read_file(out) == line_c + "\n" + line_b + "\n");
  CHECK_THROWS_AS(dataio::filter_jsonl_by_id(in, {"zzz"}, out), Error);
  std::remove(in.c_str());
  std::remove(out.c_str());
}
