#pragma once

#include <string>
#include <vector>

#include "gdig/toylm.hpp"

namespace gdig::dataio {

// JSONL datasets; each record is either text form
//   {"id", "src", "tgt", "trg_lang"}
// (prompt rendered with the instruction template, response = tgt bytes +
// EOS) or pre-tokenized form {"id", "prompt_tokens", "response_tokens"}.
std::vector<toylm::Example> load_examples(const std::string& path);

// Writes the pre-tokenized form, one record per line, in order.
void save_examples(const std::vector<toylm::Example>& examples, const std::string& path);

// Copies the records whose ids are listed, in list order, preserving the
// original line bytes.
void filter_jsonl_by_id(const std::string& in_path, const std::vector<std::string>& ids,
                        const std::string& out_path);

}  // namespace gdig::dataio
